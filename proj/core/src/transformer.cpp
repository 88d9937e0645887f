#include "hsd/transformer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "hsd/digest.hpp"
#include "hsd/error.hpp"
#include "hsd/random.hpp"
#include "hsd/tensor_io.hpp"

namespace hsd {
namespace {

using nn::Matrix;
using Trace = TransformerEncoder::Trace;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

Matrix layer_norm(const Matrix& x, const nn::Parameter& gamma, const nn::Parameter& beta,
                  double eps, Trace::NormCache* cache) {
    const double n = static_cast<double>(x.rows());
    Eigen::RowVectorXd mean = x.colwise().sum() / n;
    Matrix centered = x.rowwise() - mean;
    Eigen::RowVectorXd var = centered.cwiseProduct(centered).colwise().sum() / n;
    Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt().matrix();
    Matrix xhat = centered * inv_std.asDiagonal();
    Matrix y = (xhat.array().colwise() * gamma.value.col(0).array()).matrix();
    y.colwise() += beta.value.col(0);
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Trace::NormCache& cache, nn::Parameter& gamma,
                           nn::Parameter& beta) {
    const double n = static_cast<double>(dy.rows());
    gamma.grad.col(0) += dy.cwiseProduct(cache.xhat).rowwise().sum();
    beta.grad.col(0) += dy.rowwise().sum();
    Matrix dxhat = (dy.array().colwise() * gamma.value.col(0).array()).matrix();
    Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
    Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).colwise().sum();
    Matrix dx = n * dxhat;
    dx.rowwise() -= sum_dxhat;
    dx -= cache.xhat * sum_dxhat_xhat.asDiagonal();
    return dx * (cache.inv_std / n).asDiagonal();
}

// Row-wise softmax of a tokens x tokens score matrix.
Matrix softmax_rows(const Matrix& s) {
    Matrix p(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        p.row(i) = (s.row(i).array() - mx).exp().matrix();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

nn::Parameter make_param(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    nn::Parameter p;
    p.name = name;
    p.value = Matrix::Zero(rows, cols);
    return p;
}

nn::Linear make_linear(const std::string& name, int in, int out) {
    nn::Linear l;
    l.weight = make_param(name + ".weight", out, in);
    l.bias = make_param(name + ".bias", out, 1);
    return l;
}

} // namespace

void TransformerConfig::validate() const {
    if (vocab_size < 1 || hidden_size < 1 || num_layers < 0 || num_heads < 1 ||
        intermediate_size < 1 || max_positions < 1 || type_vocab_size < 1)
        throw ConfigError("transformer config: sizes must be positive");
    if (hidden_size % num_heads != 0)
        throw ConfigError("transformer config: hidden_size must be divisible by num_heads");
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
    TransformerConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.num_layers = j.value("num_hidden_layers", c.num_layers);
    c.num_heads = j.value("num_attention_heads", c.num_heads);
    c.intermediate_size = j.value("intermediate_size", c.intermediate_size);
    c.max_positions = j.value("max_position_embeddings", c.max_positions);
    c.type_vocab_size = j.value("type_vocab_size", c.type_vocab_size);
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    const auto act = j.value("hidden_act", std::string("gelu"));
    if (act != "gelu") throw ConfigError("transformer config: unsupported activation '" + act + "'");
    c.validate();
    return c;
}

nlohmann::json TransformerConfig::to_json() const {
    return {{"model_type", "bert"},
            {"vocab_size", vocab_size},
            {"hidden_size", hidden_size},
            {"num_hidden_layers", num_layers},
            {"num_attention_heads", num_heads},
            {"intermediate_size", intermediate_size},
            {"max_position_embeddings", max_positions},
            {"type_vocab_size", type_vocab_size},
            {"layer_norm_eps", layer_norm_eps},
            {"hidden_act", "gelu"}};
}

TransformerEncoder::TransformerEncoder(TransformerConfig config, WordPieceTokenizer tokenizer,
                                       int max_tokens, std::string cache_namespace)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)), max_tokens_(max_tokens),
      cache_namespace_(std::move(cache_namespace)) {
    config_.validate();
    if (static_cast<int>(tokenizer_.size()) != config_.vocab_size)
        throw ConfigError("transformer: tokenizer has " + std::to_string(tokenizer_.size()) +
                          " entries, config declares vocab_size " + std::to_string(config_.vocab_size));
    if (max_tokens_ < 2 || max_tokens_ > config_.max_positions)
        throw ConfigError("transformer: max_tokens must lie in [2, " +
                          std::to_string(config_.max_positions) + "]");
    allocate();
}

void TransformerEncoder::allocate() {
    const int w = config_.hidden_size;
    word_embeddings_ = make_param("embeddings.word_embeddings.weight", config_.vocab_size, w);
    position_embeddings_ = make_param("embeddings.position_embeddings.weight", config_.max_positions, w);
    type_embeddings_ = make_param("embeddings.token_type_embeddings.weight", config_.type_vocab_size, w);
    embed_norm_ = {make_param("embeddings.LayerNorm.weight", w, 1),
                   make_param("embeddings.LayerNorm.bias", w, 1)};
    embed_norm_.gamma.value.setOnes();
    blocks_.clear();
    for (int l = 0; l < config_.num_layers; ++l) {
        const std::string p = "encoder.layer." + std::to_string(l) + ".";
        Block b{make_linear(p + "attention.self.query", w, w),
                make_linear(p + "attention.self.key", w, w),
                make_linear(p + "attention.self.value", w, w),
                make_linear(p + "attention.output.dense", w, w),
                {make_param(p + "attention.output.LayerNorm.weight", w, 1),
                 make_param(p + "attention.output.LayerNorm.bias", w, 1)},
                make_linear(p + "intermediate.dense", w, config_.intermediate_size),
                make_linear(p + "output.dense", config_.intermediate_size, w),
                {make_param(p + "output.LayerNorm.weight", w, 1),
                 make_param(p + "output.LayerNorm.bias", w, 1)}};
        b.attn_norm.gamma.value.setOnes();
        b.out_norm.gamma.value.setOnes();
        blocks_.push_back(std::move(b));
    }
    pooler_ = make_linear("pooler.dense", w, w);
}

std::vector<nn::Parameter*> TransformerEncoder::parameters() {
    std::vector<nn::Parameter*> out{&word_embeddings_, &position_embeddings_, &type_embeddings_,
                                    &embed_norm_.gamma, &embed_norm_.beta};
    for (auto& b : blocks_) {
        for (auto* l : {&b.query, &b.key, &b.value, &b.attn_out}) {
            out.push_back(&l->weight);
            out.push_back(&l->bias);
        }
        out.push_back(&b.attn_norm.gamma);
        out.push_back(&b.attn_norm.beta);
        for (auto* l : {&b.intermediate, &b.output}) {
            out.push_back(&l->weight);
            out.push_back(&l->bias);
        }
        out.push_back(&b.out_norm.gamma);
        out.push_back(&b.out_norm.beta);
    }
    out.push_back(&pooler_.weight);
    out.push_back(&pooler_.bias);
    return out;
}

std::vector<const nn::Parameter*> TransformerEncoder::parameters() const {
    auto params = const_cast<TransformerEncoder*>(this)->parameters();
    return {params.begin(), params.end()};
}

std::size_t TransformerEncoder::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += static_cast<std::size_t>(p->size());
    return n;
}

void TransformerEncoder::enable_gradients() {
    for (auto* p : parameters())
        if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
            p->grad = Matrix::Zero(p->value.rows(), p->value.cols());
}

std::unique_ptr<TransformerEncoder> TransformerEncoder::clone() const {
    return std::make_unique<TransformerEncoder>(*this);
}

std::unique_ptr<TransformerEncoder> TransformerEncoder::random(const TransformerConfig& config,
                                                               WordPieceTokenizer tokenizer,
                                                               std::uint64_t seed, int max_tokens,
                                                               std::string cache_namespace) {
    auto enc = std::make_unique<TransformerEncoder>(config, std::move(tokenizer), max_tokens,
                                                    std::move(cache_namespace));
    Rng rng(seed);
    for (auto* p : enc->parameters()) {
        const bool is_norm = p->name.find("LayerNorm") != std::string::npos;
        const bool is_bias = p->name.size() >= 5 && p->name.compare(p->name.size() - 5, 5, ".bias") == 0;
        if (!is_norm && !is_bias) nn::init_normal(p->value, 0.02, rng);
    }
    return enc;
}

std::unique_ptr<TransformerEncoder> TransformerEncoder::load(const std::filesystem::path& dir,
                                                             int max_tokens,
                                                             std::string cache_namespace) {
    const auto config_path = dir / "config.json";
    std::ifstream in(config_path);
    if (!in) throw EncoderUnavailable("encoder config '" + config_path.string() + "' not found");
    const auto config = TransformerConfig::from_json(nlohmann::json::parse(in));
    auto tokenizer = WordPieceTokenizer::load(dir / "vocab.txt");
    if (cache_namespace.empty()) cache_namespace = dir.filename().string();
    auto enc = std::make_unique<TransformerEncoder>(config, std::move(tokenizer), max_tokens,
                                                    std::move(cache_namespace));
    auto tensors = read_tensors(dir / "weights.bin");
    for (auto* p : enc->parameters()) {
        auto it = tensors.find(p->name);
        if (it == tensors.end())
            throw CheckpointError("encoder weights lack tensor '" + p->name + "'");
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw CheckpointError("encoder tensor '" + p->name + "' has shape " +
                                  std::to_string(it->second.rows()) + "x" +
                                  std::to_string(it->second.cols()) + ", expected " +
                                  std::to_string(p->value.rows()) + "x" +
                                  std::to_string(p->value.cols()));
        p->value = std::move(it->second);
    }
    return enc;
}

void TransformerEncoder::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "config.json", config_.to_json().dump(2) + "\n");
    tokenizer_.save(dir / "vocab.txt");
    std::vector<TensorRef> refs;
    for (const auto* p : parameters()) refs.push_back({p->name, &p->value});
    write_tensors(dir / "weights.bin", refs, TensorDType::kF64);
}

std::vector<std::int32_t> TransformerEncoder::tokenize(std::string_view text) const {
    return tokenizer_.encode(text, max_tokens_);
}

std::string TransformerEncoder::checksum() const {
    Sha256 hasher;
    hasher.update(config_.to_json().dump());
    for (const auto* p : parameters()) {
        hasher.update(p->name);
        for (Eigen::Index c = 0; c < p->value.cols(); ++c)
            hasher.update(p->value.col(c).data(), static_cast<std::size_t>(p->value.rows()) * sizeof(double));
    }
    return hasher.hex_digest();
}

Matrix TransformerEncoder::forward(std::span<const std::int32_t> ids, Trace* trace) const {
    const auto tokens = static_cast<Eigen::Index>(ids.size());
    if (tokens > config_.max_positions)
        throw ConfigError("transformer: sequence longer than max_position_embeddings");
    const int w = config_.hidden_size;
    Matrix x(w, tokens);
    for (Eigen::Index t = 0; t < tokens; ++t) {
        const auto id = ids[static_cast<std::size_t>(t)];
        if (id < 0 || id >= config_.vocab_size)
            throw ConfigError("transformer: token id " + std::to_string(id) + " out of range");
        x.col(t) = (word_embeddings_.value.row(id) + position_embeddings_.value.row(t) +
                    type_embeddings_.value.row(0)).transpose();
    }
    if (trace != nullptr) {
        trace->ids.assign(ids.begin(), ids.end());
        trace->embed_sum = x;
        trace->blocks.clear();
    }
    Matrix h = layer_norm(x, embed_norm_.gamma, embed_norm_.beta, config_.layer_norm_eps,
                          trace ? &trace->embed_norm : nullptr);

    const int heads = config_.num_heads;
    const int head_dim = w / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (const auto& b : blocks_) {
        Trace::BlockCache cache;
        Matrix q = b.query.forward(h);
        Matrix k = b.key.forward(h);
        Matrix v = b.value.forward(h);
        Matrix context(w, tokens);
        for (int hd = 0; hd < heads; ++hd) {
            const auto rows = Eigen::seqN(hd * head_dim, head_dim);
            Matrix scores = (q(rows, Eigen::all).transpose() * k(rows, Eigen::all)) * scale;
            Matrix probs = softmax_rows(scores);
            context(rows, Eigen::all) = v(rows, Eigen::all) * probs.transpose();
            if (trace != nullptr) cache.probs.push_back(std::move(probs));
        }
        Matrix attn_sum = h + b.attn_out.forward(context);
        Matrix hidden1 = layer_norm(attn_sum, b.attn_norm.gamma, b.attn_norm.beta,
                                    config_.layer_norm_eps, trace ? &cache.attn_norm : nullptr);
        Matrix pre = b.intermediate.forward(hidden1);
        Matrix act = pre.unaryExpr([](double z) { return gelu(z); });
        Matrix ffn_sum = hidden1 + b.output.forward(act);
        Matrix out = layer_norm(ffn_sum, b.out_norm.gamma, b.out_norm.beta, config_.layer_norm_eps,
                                trace ? &cache.out_norm : nullptr);
        if (trace != nullptr) {
            cache.input = std::move(h);
            cache.q = std::move(q);
            cache.k = std::move(k);
            cache.v = std::move(v);
            cache.context = std::move(context);
            cache.hidden1 = std::move(hidden1);
            cache.pre_gelu = std::move(pre);
            cache.gelu = std::move(act);
            trace->blocks.push_back(std::move(cache));
        }
        h = std::move(out);
    }
    if (trace != nullptr) {
        trace->hidden = h;
        trace->pooled = pool(h);
    }
    return h;
}

nn::Vector TransformerEncoder::pool(const Matrix& hidden) const {
    return pooler_.forward(hidden.col(0)).col(0).array().tanh().matrix();
}

Eigen::MatrixXd TransformerEncoder::token_states(std::span<const std::int32_t> ids) const {
    return forward(ids, nullptr).transpose();
}

void TransformerEncoder::backward_pooled(const Trace& trace, const nn::Vector& dpooled) {
    const int w = config_.hidden_size;
    const auto tokens = trace.hidden.cols();
    nn::Vector dz = dpooled.cwiseProduct((1.0 - trace.pooled.array().square()).matrix());
    Matrix dh = Matrix::Zero(w, tokens);
    dh.col(0) = pooler_.backward(trace.hidden.col(0), dz).col(0);

    const int heads = config_.num_heads;
    const int head_dim = w / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    for (std::size_t l = blocks_.size(); l-- > 0;) {
        auto& b = blocks_[l];
        const auto& c = trace.blocks[l];
        Matrix d_ffn = layer_norm_backward(dh, c.out_norm, b.out_norm.gamma, b.out_norm.beta);
        Matrix d_act = b.output.backward(c.gelu, d_ffn);
        Matrix d_pre = d_act.cwiseProduct(c.pre_gelu.unaryExpr([](double z) { return gelu_grad(z); }));
        Matrix d_hidden1 = d_ffn + b.intermediate.backward(c.hidden1, d_pre);
        Matrix d_attn = layer_norm_backward(d_hidden1, c.attn_norm, b.attn_norm.gamma, b.attn_norm.beta);
        Matrix d_context = b.attn_out.backward(c.context, d_attn);

        Matrix dq(w, tokens), dk(w, tokens), dv(w, tokens);
        for (int hd = 0; hd < heads; ++hd) {
            const auto rows = Eigen::seqN(hd * head_dim, head_dim);
            const Matrix& probs = c.probs[static_cast<std::size_t>(hd)];
            Matrix dctx = d_context(rows, Eigen::all);
            dv(rows, Eigen::all) = dctx * probs;
            Matrix dprobs = dctx.transpose() * c.v(rows, Eigen::all);
            Eigen::VectorXd row_dot = dprobs.cwiseProduct(probs).rowwise().sum();
            Matrix dscores = probs.cwiseProduct(dprobs.colwise() - row_dot);
            dq(rows, Eigen::all) = c.k(rows, Eigen::all) * dscores.transpose() * scale;
            dk(rows, Eigen::all) = c.q(rows, Eigen::all) * dscores * scale;
        }
        dh = d_attn + b.query.backward(c.input, dq) + b.key.backward(c.input, dk) +
             b.value.backward(c.input, dv);
    }

    Matrix d_embed = layer_norm_backward(dh, trace.embed_norm, embed_norm_.gamma, embed_norm_.beta);
    for (Eigen::Index t = 0; t < tokens; ++t) {
        const auto row = d_embed.col(t).transpose();
        word_embeddings_.grad.row(trace.ids[static_cast<std::size_t>(t)]) += row;
        position_embeddings_.grad.row(t) += row;
        type_embeddings_.grad.row(0) += row;
    }
}

} // namespace hsd
