#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/nn.hpp"
#include "hsd/random.hpp"
#include "hsd/vocab.hpp"

namespace hsd {

enum class Family { kCharLstm, kWordLstm, kBertFeatureGru, kBertFinetune };

std::string_view to_string(Family family);
/// Accepts the snake_case names: char_lstm, word_lstm, bert_feature_gru, bert_finetune.
Family parse_family(std::string_view text);
/// Display name used in result tables ("Char_LSTM", "BERT feature extraction", ...).
std::string_view display_name(Family family);

enum class EncoderSize { kBase, kLarge };

std::string_view to_string(EncoderSize size);
EncoderSize parse_encoder_size(std::string_view text);

/// One point of a hyperparameter grid.
struct HyperParams {
    Family family = Family::kCharLstm;
    int embedding_dim = 0; // E; for the feature family the encoder width
    int hidden_dim = 0;    // H
    double dropout = 0.0;  // p
    std::optional<EncoderSize> encoder;
    bool pretrained_embeddings = false; // word family only
    int num_classes = 1;                // output units: 1 (sigmoid) or K (softmax)
    int layers = 1;

    /// Structural checks, plus membership in the published grids when `grid_constrained`.
    void validate(bool grid_constrained) const;
    nlohmann::json to_json() const;
    static HyperParams from_json(const nlohmann::json& j);
    bool operator==(const HyperParams&) const = default;
};

struct ModelSpec {
    HyperParams hyper;
    int vocab_size = 0;  // recurrent families (and the encoder vocab when fine-tuning)
    int input_width = 0; // feature family: encoder hidden width W
    bool grid_constrained = false;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);
};

/// Closed-form parameter count of the recurrent families:
///   LSTM: V*E + 4*((E+H)*H + H) + (H*C + C)
///   GRU:  3*((W+H)*H + H) + (H*C + C)
/// Extra stacked layers add 4*((2H)*H + H) (resp. 3*...) each.
std::size_t param_count(const ModelSpec& spec);

/// One example. Token families read `ids[0..length)`; the feature family reads
/// the first `length` rows of `features` (tokens x width).
struct ModelInput {
    std::vector<std::int32_t> ids;
    std::int32_t length = 0;
    nn::Matrix features;

    static ModelInput from(const IdSequence& seq) { return {seq.ids, seq.length, {}}; }
};

/// A classifier with a hand-written backward pass. Logit matrices are
/// batch x output_units.
///
/// logits() is const and keeps no state, so concurrent evaluation is safe;
/// forward_train()/backward() mutate cached activations and gradients.
class Model {
public:
    virtual ~Model() = default;

    virtual const ModelSpec& spec() const = 0;
    virtual nn::Matrix logits(std::span<const ModelInput> batch) const = 0;
    /// Training-mode forward (dropout active) that caches activations for backward().
    virtual nn::Matrix forward_train(std::span<const ModelInput> batch, Rng& rng) = 0;
    /// Accumulates dL/dparam for the last forward_train() call.
    virtual void backward(const nn::Matrix& dlogits) = 0;
    virtual std::vector<nn::Parameter*> parameters() = 0;
    virtual std::unique_ptr<Model> clone() const = 0;

    std::vector<const nn::Parameter*> parameters() const;
    std::size_t parameter_count() const;
    void zero_grad();
};

/// Embedding (or raw feature rows) -> stacked LSTM/GRU -> dropout on the
/// final state -> linear head. Covers the char, word and feature families.
class SequenceClassifier final : public Model {
public:
    SequenceClassifier(ModelSpec spec, std::uint64_t seed, const EmbeddingMatrix* pretrained);
    SequenceClassifier(const SequenceClassifier& other);

    const ModelSpec& spec() const override { return spec_; }
    nn::Matrix logits(std::span<const ModelInput> batch) const override;
    nn::Matrix forward_train(std::span<const ModelInput> batch, Rng& rng) override;
    void backward(const nn::Matrix& dlogits) override;
    std::vector<nn::Parameter*> parameters() override;
    std::unique_ptr<Model> clone() const override;

    const nn::Embedding* embedding() const { return embedding_ ? &*embedding_ : nullptr; }

private:
    nn::SequenceBatch make_batch(std::span<const ModelInput> batch) const;

    ModelSpec spec_;
    std::optional<nn::Embedding> embedding_;
    std::vector<std::unique_ptr<nn::RecurrentLayer>> layers_;
    nn::Linear head_;

    // training cache
    std::vector<std::vector<std::int32_t>> cached_ids_;
    std::vector<nn::Mask> cached_masks_;
    nn::Matrix cached_dropout_;
    nn::Matrix cached_pooled_;
};

/// Builds a seeded classifier. `pretrained` must be given iff the spec asks for
/// pretrained embeddings, with matching vocab size and dimension.
std::unique_ptr<Model> build_model(const ModelSpec& spec, const EmbeddingMatrix* pretrained,
                                   std::uint64_t seed);

/// Decision rule: sigmoid >= 0.5 for a single logit, otherwise argmax with the
/// lowest index winning ties.
std::vector<int> decide(const nn::Matrix& logits);

} // namespace hsd
