#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/corpus.hpp"
#include "hsd/labels.hpp"
#include "hsd/models.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/pretrained.hpp"
#include "hsd/vocab.hpp"

namespace hsd {

struct TrainConfig {
    int batch_size = 32;
    double learning_rate = 1e-3;
    int max_epochs = 50;
    int patience = 5;
    std::uint64_t seed = 42;
    /// Global gradient-norm clip; 0 disables clipping.
    double clip_norm = 5.0;

    /// Recurrent families: lr 1e-3, 50 epochs, patience 5, clip 5.0.
    /// Fine-tuning: lr 2e-5, 3 epochs, patience 2, no clipping.
    static TrainConfig for_family(Family family);

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_macro_f1 = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    bool stopped_early = false;
    double wall_time = 0.0; // seconds

    double best_val_macro_f1() const;
    /// epoch,train_loss,val_loss,val_macro_f1
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

/// Tracks the best validation score; the first epoch that reaches a maximum wins ties.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience);

    /// Records an epoch's score; returns true when training should stop.
    bool observe(int epoch, double score);
    bool improved() const { return improved_; }
    int best_epoch() const { return best_epoch_; }
    double best_score() const { return best_; }

private:
    int patience_;
    int best_epoch_ = 0;
    double best_ = 0.0;
    int since_best_ = 0;
    bool improved_ = false;
};

/// Encoded inputs with their class indices.
struct Examples {
    std::vector<ModelInput> inputs;
    std::vector<int> labels;

    std::size_t size() const { return inputs.size(); }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// The optimisation loop on already-encoded data. Shuffles with
/// mix_seed(seed, epoch), keeps the weights of the best validation macro-F1
/// epoch and restores them before returning.
TrainHistory fit(Model& model, const Examples& train, const Examples& val, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------

enum class EncoderKind { kStub, kTransformer };

/// Which encoder produces features (feature family) or token ids (fine-tuning).
struct EncoderBinding {
    EncoderKind kind = EncoderKind::kStub;
    int width = 16;
    std::uint64_t seed = 0;        // stub only
    EncoderSize size = EncoderSize::kBase; // transformer only
    int max_tokens = 128;
    FeatureMode mode = FeatureMode::kTokens;

    static EncoderBinding stub(int width, std::uint64_t seed, int max_tokens = 128);
    static EncoderBinding transformer(EncoderSize size, int max_tokens = 128);

    EncoderHandle handle() const;
    nlohmann::json to_json() const;
    static EncoderBinding from_json(const nlohmann::json& j);
};

/// Everything between a raw text and a model input, recorded in checkpoints so
/// prediction repeats the training-time pipeline.
struct Pipeline {
    TaskMode task_mode = TaskMode::kBinary1A;
    std::optional<PreprocessConfig> preprocess; // nullopt: raw text
    std::optional<Vocab> vocab;                 // char and word families
    int max_len = 0;
    std::optional<EncoderBinding> encoder;      // feature family

    nlohmann::json to_json() const; // vocab excluded
};

/// Dataset rows that carry a target for the mode, with their class indices.
/// Conditional 1B keeps only HATE/OFFN/PRFN rows.
struct TaskTargets {
    std::vector<std::size_t> indices;
    std::vector<int> labels;
};

TaskTargets task_targets(const Dataset& ds, TaskMode mode);

struct TrainedModel {
    std::unique_ptr<Model> model;
    Pipeline pipeline;
    std::shared_ptr<const Preprocessor> preprocessor;
    std::shared_ptr<const FeatureExtractor> features;

    /// Builds the runtime pieces (preprocessor, feature extractor) for `pipeline`.
    /// A given `shared_features` extractor is reused instead of creating one.
    TrainedModel(std::unique_ptr<Model> model, Pipeline pipeline,
                 std::optional<std::filesystem::path> feature_cache = default_feature_cache(),
                 std::shared_ptr<const FeatureExtractor> shared_features = nullptr);

    std::string prepare(std::string_view text) const;
    ModelInput input(std::string_view text) const;
    /// Inputs for the given rows (all rows when `indices` is empty).
    std::vector<ModelInput> inputs(const Dataset& ds, std::span<const std::size_t> indices = {}) const;
    Examples examples(const Dataset& ds) const;
    /// Class indices in the mode's taxonomy for the given rows (all when empty).
    std::vector<int> predict(const Dataset& ds, std::span<const std::size_t> indices = {},
                             int batch_size = 64) const;
};

struct PrepareOptions {
    std::uint64_t seed = 42;
    int max_len = 0;  // 0: family default (280 chars / 64 words)
    int min_freq = 0; // 0: family default
    std::optional<std::filesystem::path> pretrained_vectors; // word family with pretrained embeddings
    std::optional<EncoderBinding> encoder; // feature family; default transformer of hp.encoder
    std::shared_ptr<const TransformerEncoder> finetune_encoder; // fine-tuning; default loads hp.encoder
    std::optional<std::filesystem::path> feature_cache = default_feature_cache();
    /// Extractor shared between runs that use the same encoder binding.
    std::shared_ptr<const FeatureExtractor> shared_features;
};

/// Builds the pipeline (vocabulary from the preprocessed training texts) and a
/// freshly initialised model for `hp`.
TrainedModel prepare_model(const HyperParams& hp, TaskMode mode,
                           std::optional<PreprocessConfig> preprocess, const Dataset& train,
                           const PrepareOptions& opts);

/// Encodes both datasets through the model's pipeline and runs fit().
TrainHistory train(TrainedModel& tm, const Dataset& train_ds, const Dataset& val_ds,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

inline constexpr int kCheckpointFormatVersion = 1;

/// Writes manifest.json, weights.bin (float64), vocab.json, preprocess.json
/// and, for fine-tuned models, encoder/config.json + encoder/vocab.txt.
nlohmann::json save_checkpoint(const TrainedModel& tm, const std::filesystem::path& dir);
TrainedModel load_checkpoint(const std::filesystem::path& dir,
                             std::optional<std::filesystem::path> feature_cache = default_feature_cache());

} // namespace hsd
