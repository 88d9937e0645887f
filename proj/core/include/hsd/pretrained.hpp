#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hsd/encoder.hpp"
#include "hsd/models.hpp"
#include "hsd/transformer.hpp"

namespace hsd {

struct EncoderVariant {
    EncoderSize size = EncoderSize::kBase;
    int width = 768;
    int max_tokens = 128;

    /// BASE = 768, LARGE = 1024.
    static EncoderVariant of(EncoderSize size, int max_tokens = 128);
};

/// Deterministic stand-in encoder. Token ids come from a hash of each
/// lowercased whitespace token; token vectors are N(0, 1) draws seeded by
/// (seed, token id), so equal tokens map to equal vectors.
std::unique_ptr<Encoder> encoder_stub(int width, std::uint64_t seed, int max_tokens = 128);

/// Token-level last-layer states, or their mean as a single row.
enum class FeatureMode { kTokens, kPooled };

std::string_view to_string(FeatureMode mode);
FeatureMode parse_feature_mode(std::string_view text);

struct FeatureMatrix {
    Eigen::MatrixXd states; // tokens x W, or 1 x W when pooled
    std::string cache_key;  // sha256 over (text, encoder namespace, mode)
};

/// Lazily loadable encoder. `identity` names the weights without loading
/// them (the weight file checksum for on-disk encoders); when absent, cached
/// features are accepted on namespace alone.
struct EncoderHandle {
    std::string cache_namespace;
    std::optional<std::string> identity;
    std::function<std::shared_ptr<const Encoder>()> loader;

    static EncoderHandle from(std::shared_ptr<const Encoder> encoder);
};

/// Directory holding the weights of a variant: $HSD_ENCODER_DIR/<base|large>,
/// defaulting to ./encoders/<base|large>.
std::filesystem::path resolve_encoder_dir(EncoderSize size);

/// Handle for the converted transformer weights of a variant. Loading fails
/// with EncoderUnavailable (including fetch instructions) when the directory
/// is incomplete, and with ConfigError when the width disagrees with the variant.
EncoderHandle transformer_handle(const EncoderVariant& variant);

/// Feature cache root: $HSD_FEATURE_CACHE, else nullopt (no caching).
std::optional<std::filesystem::path> default_feature_cache();

/// Frozen-encoder feature extraction with an on-disk cache laid out as
/// <cache_dir>/<namespace>/<sha256(text)>.bin plus a .json sidecar
/// (pooled features use <sha256(text)>.pooled.*). Files are published by
/// rename, so one writer and many readers can share a directory.
/// extract() may be called from several threads.
class FeatureExtractor {
public:
    FeatureExtractor(EncoderHandle handle, std::optional<std::filesystem::path> cache_dir,
                     FeatureMode mode = FeatureMode::kTokens);

    FeatureMatrix extract(std::string_view text) const;
    std::vector<FeatureMatrix> extract(std::span<const std::string> texts) const;

    /// Loads the encoder if needed.
    const Encoder& encoder() const;
    bool encoder_loaded() const;

    FeatureMode mode() const { return mode_; }
    const std::string& cache_namespace() const { return handle_.cache_namespace; }
    const std::optional<std::filesystem::path>& cache_dir() const { return cache_dir_; }

    std::size_t cache_hits() const { return hits_; }
    std::size_t cache_misses() const { return misses_; }

private:
    std::optional<Eigen::MatrixXd> read_cache(const std::filesystem::path& stem,
                                              const std::string& key) const;
    void write_cache(const std::filesystem::path& stem, const std::string& key,
                     const Eigen::MatrixXd& states, const std::string& identity) const;
    std::string identity() const;

    EncoderHandle handle_;
    std::optional<std::filesystem::path> cache_dir_;
    FeatureMode mode_;
    mutable std::mutex load_mutex_;
    mutable std::shared_ptr<const Encoder> encoder_;
    mutable std::optional<std::string> identity_;
    mutable std::atomic<std::size_t> hits_{0};
    mutable std::atomic<std::size_t> misses_{0};
};

/// Encodes texts with the variant's transformer, using the cache when given.
std::vector<FeatureMatrix> encode_features(std::span<const std::string> texts,
                                           const EncoderVariant& variant,
                                           const std::optional<std::filesystem::path>& cache_dir);

/// Encoder -> dropout -> linear head on the pooled first-token state, every
/// weight trainable. Inputs are encoder token ids (ModelInput::ids/length).
///
/// Training keeps only ids and dropout masks from forward_train(); backward()
/// re-runs each example's forward pass to rebuild its activations, so memory
/// stays at one sequence's activations regardless of batch size.
class FinetuneClassifier final : public Model {
public:
    FinetuneClassifier(std::unique_ptr<TransformerEncoder> encoder, int num_classes,
                       double dropout, std::uint64_t seed);
    FinetuneClassifier(const FinetuneClassifier& other);

    const ModelSpec& spec() const override { return spec_; }
    nn::Matrix logits(std::span<const ModelInput> batch) const override;
    nn::Matrix forward_train(std::span<const ModelInput> batch, Rng& rng) override;
    void backward(const nn::Matrix& dlogits) override;
    std::vector<nn::Parameter*> parameters() override;
    std::unique_ptr<Model> clone() const override;

    const TransformerEncoder& encoder() const { return *encoder_; }
    std::size_t head_parameter_count() const;

private:
    std::span<const std::int32_t> ids_of(const ModelInput& in) const;

    ModelSpec spec_;
    std::unique_ptr<TransformerEncoder> encoder_;
    nn::Linear head_;

    std::vector<std::vector<std::int32_t>> cached_ids_;
    nn::Matrix cached_dropout_; // W x B
    nn::Matrix cached_pooled_;  // W x B, after dropout
};

inline constexpr double kFinetuneDropout = 0.1;

std::unique_ptr<FinetuneClassifier> build_finetune_classifier(
    std::unique_ptr<TransformerEncoder> encoder, int num_classes, std::uint64_t seed,
    double dropout = kFinetuneDropout);

/// Loads the variant's weights and attaches a fresh head.
std::unique_ptr<FinetuneClassifier> build_finetune_classifier(const EncoderVariant& variant,
                                                              int num_classes, std::uint64_t seed,
                                                              double dropout = kFinetuneDropout);

} // namespace hsd
