#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/encoder.hpp"
#include "hsd/nn.hpp"
#include "hsd/wordpiece.hpp"

namespace hsd {

/// BERT-style encoder hyperparameters (the subset of a Hugging Face config.json we use).
struct TransformerConfig {
    int vocab_size = 0;
    int hidden_size = 768;
    int num_layers = 12;
    int num_heads = 12;
    int intermediate_size = 3072;
    int max_positions = 512;
    int type_vocab_size = 2;
    double layer_norm_eps = 1e-12;

    void validate() const;
    static TransformerConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Post-LayerNorm transformer encoder (embeddings -> N x [self-attention,
/// feed-forward with exact GELU] -> tanh pooler on the first token) with a
/// hand-written backward pass for fine-tuning.
///
/// A weights directory holds config.json, vocab.txt and weights.bin; the
/// latter is produced from a Hugging Face checkpoint by tools/convert_bert_weights.py.
class TransformerEncoder final : public Encoder {
public:
    TransformerEncoder(TransformerConfig config, WordPieceTokenizer tokenizer, int max_tokens,
                       std::string cache_namespace);

    /// Random initialisation, N(0, 0.02) weights and unit LayerNorm gains.
    static std::unique_ptr<TransformerEncoder> random(const TransformerConfig& config,
                                                      WordPieceTokenizer tokenizer,
                                                      std::uint64_t seed, int max_tokens = 128,
                                                      std::string cache_namespace = "random");
    static std::unique_ptr<TransformerEncoder> load(const std::filesystem::path& dir,
                                                    int max_tokens = 128,
                                                    std::string cache_namespace = "");
    void save(const std::filesystem::path& dir) const;

    int width() const override { return config_.hidden_size; }
    int max_tokens() const override { return max_tokens_; }
    std::vector<std::int32_t> tokenize(std::string_view text) const override;
    Eigen::MatrixXd token_states(std::span<const std::int32_t> ids) const override;
    std::string checksum() const override;
    std::string cache_namespace() const override { return cache_namespace_; }

    const TransformerConfig& config() const { return config_; }
    const WordPieceTokenizer& tokenizer() const { return tokenizer_; }

    /// Activations of one sequence recorded for backward().
    struct Trace;

    /// Hidden states (width x tokens); fills `trace` when non-null.
    nn::Matrix forward(std::span<const std::int32_t> ids, Trace* trace) const;
    /// tanh(W h_0 + b) on the first token's state.
    nn::Vector pool(const nn::Matrix& hidden) const;

    /// Accumulates gradients given dL/d(pooled) for a traced sequence.
    void backward_pooled(const Trace& trace, const nn::Vector& dpooled);

    /// Allocates gradient buffers; frozen encoders skip this.
    void enable_gradients();
    std::vector<nn::Parameter*> parameters();
    std::vector<const nn::Parameter*> parameters() const;
    std::size_t parameter_count() const;

    std::unique_ptr<TransformerEncoder> clone() const;

private:
    struct LayerNorm {
        nn::Parameter gamma, beta;
    };
    struct Block {
        nn::Linear query, key, value, attn_out;
        LayerNorm attn_norm;
        nn::Linear intermediate, output;
        LayerNorm out_norm;
    };

    void allocate();

    TransformerConfig config_;
    WordPieceTokenizer tokenizer_;
    int max_tokens_;
    std::string cache_namespace_;

    nn::Parameter word_embeddings_, position_embeddings_, type_embeddings_;
    LayerNorm embed_norm_;
    std::vector<Block> blocks_;
    nn::Linear pooler_;
};

/// Activation record, public so fine-tuning code can hold it.
struct TransformerEncoder::Trace {
    struct NormCache {
        nn::Matrix xhat;
        Eigen::RowVectorXd inv_std;
    };
    struct BlockCache {
        nn::Matrix input, q, k, v;
        std::vector<nn::Matrix> probs; // per head, tokens x tokens
        nn::Matrix context, attn_sum;
        NormCache attn_norm;
        nn::Matrix hidden1, pre_gelu, gelu, ffn_sum;
        NormCache out_norm;
    };
    std::vector<std::int32_t> ids;
    nn::Matrix embed_sum;
    NormCache embed_norm;
    std::vector<BlockCache> blocks;
    nn::Matrix hidden;
    nn::Vector pooled;
};

} // namespace hsd
