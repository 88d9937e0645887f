#include "hsd/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "hsd/error.hpp"

namespace hsd {
namespace {

constexpr std::array kCharEmbedding{50, 100, 200};
constexpr std::array kCharHidden{16, 32, 64, 128};
constexpr std::array kWordEmbedding{100, 300};
constexpr std::array kWordHidden{32, 64, 128, 256, 512};
constexpr std::array kFeatureHidden{32, 64, 128, 256, 512};
constexpr std::array kDropout{0.25, 0.5, 0.75};

template <typename Container, typename T>
bool contains(const Container& values, T v) {
    return std::find(values.begin(), values.end(), v) != values.end();
}

std::string grid_error(const HyperParams& hp, std::string_view axis) {
    return std::string(to_string(hp.family)) + ": " + std::string(axis) +
           " outside the published grid (grid-constrained mode)";
}

} // namespace

std::string_view to_string(Family family) {
    switch (family) {
    case Family::kCharLstm: return "char_lstm";
    case Family::kWordLstm: return "word_lstm";
    case Family::kBertFeatureGru: return "bert_feature_gru";
    case Family::kBertFinetune: return "bert_finetune";
    }
    return "?";
}

Family parse_family(std::string_view text) {
    for (auto f : {Family::kCharLstm, Family::kWordLstm, Family::kBertFeatureGru, Family::kBertFinetune})
        if (text == to_string(f)) return f;
    throw ConfigError("unknown model family '" + std::string(text) +
                      "' (expected char_lstm, word_lstm, bert_feature_gru or bert_finetune)");
}

std::string_view display_name(Family family) {
    switch (family) {
    case Family::kCharLstm: return "Char_LSTM";
    case Family::kWordLstm: return "Word_LSTM";
    case Family::kBertFeatureGru: return "BERT feature extraction";
    case Family::kBertFinetune: return "BERT fine-tuning";
    }
    return "?";
}

std::string_view to_string(EncoderSize size) { return size == EncoderSize::kBase ? "base" : "large"; }

EncoderSize parse_encoder_size(std::string_view text) {
    if (text == "base") return EncoderSize::kBase;
    if (text == "large") return EncoderSize::kLarge;
    throw ConfigError("unknown encoder variant '" + std::string(text) + "' (expected base or large)");
}

void HyperParams::validate(bool grid_constrained) const {
    const bool recurrent = family == Family::kCharLstm || family == Family::kWordLstm;
    if (hidden_dim < 1 && family != Family::kBertFinetune)
        throw ConfigError("hidden_dim must be >= 1");
    if (recurrent && embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
    if (!(dropout >= 0.0 && dropout <= 1.0)) throw ConfigError("dropout must lie in [0, 1]");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (pretrained_embeddings && family != Family::kWordLstm)
        throw ConfigError("pretrained embeddings apply to word_lstm only");
    if ((family == Family::kBertFeatureGru || family == Family::kBertFinetune) && !encoder)
        throw ConfigError(std::string(to_string(family)) + " requires an encoder variant");
    if (!grid_constrained) return;
    switch (family) {
    case Family::kCharLstm:
        if (!contains(kCharEmbedding, embedding_dim)) throw ConfigError(grid_error(*this, "embedding_dim"));
        if (!contains(kCharHidden, hidden_dim)) throw ConfigError(grid_error(*this, "hidden_dim"));
        if (!contains(kDropout, dropout)) throw ConfigError(grid_error(*this, "dropout"));
        break;
    case Family::kWordLstm:
        if (!contains(kWordEmbedding, embedding_dim)) throw ConfigError(grid_error(*this, "embedding_dim"));
        if (!contains(kWordHidden, hidden_dim)) throw ConfigError(grid_error(*this, "hidden_dim"));
        if (!contains(kDropout, dropout)) throw ConfigError(grid_error(*this, "dropout"));
        break;
    case Family::kBertFeatureGru:
        if (!contains(kFeatureHidden, hidden_dim)) throw ConfigError(grid_error(*this, "hidden_dim"));
        if (!contains(kDropout, dropout)) throw ConfigError(grid_error(*this, "dropout"));
        break;
    case Family::kBertFinetune:
        break;
    }
}

nlohmann::json HyperParams::to_json() const {
    nlohmann::json j{{"family", std::string(to_string(family))},
                     {"embedding_dim", embedding_dim},
                     {"hidden_dim", hidden_dim},
                     {"dropout", dropout},
                     {"pretrained_embeddings", pretrained_embeddings},
                     {"num_classes", num_classes},
                     {"layers", layers}};
    j["encoder_variant"] = encoder ? nlohmann::json(std::string(to_string(*encoder))) : nlohmann::json();
    return j;
}

HyperParams HyperParams::from_json(const nlohmann::json& j) {
    HyperParams hp;
    hp.family = parse_family(j.at("family").get<std::string>());
    hp.embedding_dim = j.value("embedding_dim", 0);
    hp.hidden_dim = j.value("hidden_dim", 0);
    hp.dropout = j.value("dropout", 0.0);
    hp.pretrained_embeddings = j.value("pretrained_embeddings", false);
    hp.num_classes = j.value("num_classes", 1);
    hp.layers = j.value("layers", 1);
    if (j.contains("encoder_variant") && !j["encoder_variant"].is_null())
        hp.encoder = parse_encoder_size(j["encoder_variant"].get<std::string>());
    return hp;
}

void ModelSpec::validate() const {
    hyper.validate(grid_constrained);
    switch (hyper.family) {
    case Family::kCharLstm:
    case Family::kWordLstm:
        if (vocab_size < 2) throw ConfigError("vocab_size must cover pad and unk");
        break;
    case Family::kBertFeatureGru:
        if (input_width < 1) throw ConfigError("input_width must be >= 1 for the feature family");
        break;
    case Family::kBertFinetune:
        if (input_width < 1) throw ConfigError("input_width must be >= 1 for fine-tuning");
        break;
    }
}

nlohmann::json ModelSpec::to_json() const {
    return {{"hyperparams", hyper.to_json()},
            {"vocab_size", vocab_size},
            {"input_width", input_width},
            {"grid_constrained", grid_constrained}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
    ModelSpec spec;
    spec.hyper = HyperParams::from_json(j.at("hyperparams"));
    spec.vocab_size = j.value("vocab_size", 0);
    spec.input_width = j.value("input_width", 0);
    spec.grid_constrained = j.value("grid_constrained", false);
    return spec;
}

std::size_t param_count(const ModelSpec& spec) {
    const auto& hp = spec.hyper;
    if (hp.hidden_dim < 1) throw ConfigError("param_count: hidden_dim must be >= 1");
    const std::size_t h = static_cast<std::size_t>(hp.hidden_dim);
    const std::size_t c = static_cast<std::size_t>(hp.num_classes);
    const std::size_t extra_layers = static_cast<std::size_t>(hp.layers - 1);
    const std::size_t head = h * c + c;
    switch (hp.family) {
    case Family::kCharLstm:
    case Family::kWordLstm: {
        const std::size_t v = static_cast<std::size_t>(spec.vocab_size);
        const std::size_t e = static_cast<std::size_t>(hp.embedding_dim);
        return v * e + 4 * ((e + h) * h + h) + extra_layers * 4 * (2 * h * h + h) + head;
    }
    case Family::kBertFeatureGru: {
        const std::size_t w = static_cast<std::size_t>(spec.input_width);
        return 3 * ((w + h) * h + h) + extra_layers * 3 * (2 * h * h + h) + head;
    }
    case Family::kBertFinetune:
        break;
    }
    throw ConfigError("param_count: the fine-tuning family depends on the encoder configuration");
}

std::vector<const nn::Parameter*> Model::parameters() const {
    auto params = const_cast<Model*>(this)->parameters();
    return {params.begin(), params.end()};
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += static_cast<std::size_t>(p->size());
    return n;
}

void Model::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

// --- SequenceClassifier ----------------------------------------------------

SequenceClassifier::SequenceClassifier(ModelSpec spec, std::uint64_t seed,
                                       const EmbeddingMatrix* pretrained)
    : spec_(std::move(spec)) {
    spec_.validate();
    const auto& hp = spec_.hyper;
    if (hp.family == Family::kBertFinetune)
        throw ConfigError("build_model: use build_finetune_classifier for the fine-tuning family");
    if (hp.pretrained_embeddings != (pretrained != nullptr))
        throw ConfigError(pretrained ? "build_model: embeddings given but spec does not use them"
                                     : "build_model: spec requires pretrained embeddings");
    Rng rng(seed);
    int input = spec_.input_width;
    const bool feature = hp.family == Family::kBertFeatureGru;
    if (!feature) {
        embedding_.emplace("embedding", spec_.vocab_size, hp.embedding_dim);
        if (pretrained) {
            if (pretrained->rows.rows() != spec_.vocab_size ||
                pretrained->rows.cols() != hp.embedding_dim)
                throw ConfigError("build_model: embedding matrix is " +
                                  std::to_string(pretrained->rows.rows()) + "x" +
                                  std::to_string(pretrained->rows.cols()) + ", spec expects " +
                                  std::to_string(spec_.vocab_size) + "x" +
                                  std::to_string(hp.embedding_dim));
            embedding_->weight.value = pretrained->rows;
        } else {
            embedding_->init(rng, Vocab::kPad);
        }
        input = hp.embedding_dim;
    }
    for (int l = 0; l < hp.layers; ++l) {
        const std::string name = "rnn" + std::to_string(l);
        const int in = l == 0 ? input : hp.hidden_dim;
        if (feature)
            layers_.push_back(std::make_unique<nn::GruLayer>(name, in, hp.hidden_dim));
        else
            layers_.push_back(std::make_unique<nn::LstmLayer>(name, in, hp.hidden_dim));
        layers_.back()->init(rng);
    }
    head_ = nn::Linear("head", hp.hidden_dim, hp.num_classes);
    head_.init(rng);
}

SequenceClassifier::SequenceClassifier(const SequenceClassifier& other)
    : spec_(other.spec_), embedding_(other.embedding_), head_(other.head_) {
    for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

std::unique_ptr<Model> SequenceClassifier::clone() const {
    return std::make_unique<SequenceClassifier>(*this);
}

std::vector<nn::Parameter*> SequenceClassifier::parameters() {
    std::vector<nn::Parameter*> out;
    if (embedding_) out.push_back(&embedding_->weight);
    for (auto& layer : layers_)
        for (auto* p : layer->parameters()) out.push_back(p);
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
}

nn::SequenceBatch SequenceClassifier::make_batch(std::span<const ModelInput> batch) const {
    nn::SequenceBatch seq;
    seq.batch = static_cast<Eigen::Index>(batch.size());
    std::int32_t steps = 0;
    for (const auto& ex : batch) {
        if (ex.length < 0) throw ConfigError("forward: negative sequence length");
        if (embedding_) {
            if (static_cast<std::size_t>(ex.length) > ex.ids.size())
                throw ConfigError("forward: length exceeds the id sequence");
        } else if (ex.length > ex.features.rows()) {
            throw ConfigError("forward: length exceeds the feature rows");
        }
        steps = std::max(steps, ex.length);
    }
    const int width = embedding_ ? embedding_->dim() : spec_.input_width;
    for (const auto& ex : batch) {
        if (embedding_) {
            for (std::int32_t t = 0; t < ex.length; ++t) {
                const auto id = ex.ids[static_cast<std::size_t>(t)];
                if (id < 0 || id >= embedding_->vocab_size())
                    throw ConfigError("forward: token id " + std::to_string(id) +
                                      " out of range for vocab size " +
                                      std::to_string(embedding_->vocab_size()));
            }
        } else if (ex.length > 0 && ex.features.cols() != width) {
            throw ConfigError("forward: feature width " + std::to_string(ex.features.cols()) +
                              " does not match model input width " + std::to_string(width));
        }
    }
    seq.xs.assign(static_cast<std::size_t>(steps), nn::Matrix::Zero(width, seq.batch));
    seq.masks.assign(static_cast<std::size_t>(steps), nn::Mask::Constant(seq.batch, false));
    for (Eigen::Index b = 0; b < seq.batch; ++b) {
        const auto& ex = batch[static_cast<std::size_t>(b)];
        for (std::int32_t t = 0; t < ex.length; ++t) {
            auto& x = seq.xs[static_cast<std::size_t>(t)];
            if (embedding_)
                x.col(b) = embedding_->weight.value.row(ex.ids[static_cast<std::size_t>(t)]).transpose();
            else
                x.col(b) = ex.features.row(t).transpose();
            seq.masks[static_cast<std::size_t>(t)](b) = true;
        }
    }
    return seq;
}

nn::Matrix SequenceClassifier::logits(std::span<const ModelInput> batch) const {
    auto seq = make_batch(batch);
    nn::Matrix h;
    std::vector<nn::Matrix> outputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const bool last = l + 1 == layers_.size();
        h = layers_[l]->forward(seq, last ? nullptr : &outputs);
        if (!last) seq.xs = std::move(outputs);
    }
    return head_.forward(h).transpose();
}

nn::Matrix SequenceClassifier::forward_train(std::span<const ModelInput> batch, Rng& rng) {
    auto seq = make_batch(batch);
    cached_ids_.clear();
    if (embedding_)
        for (const auto& ex : batch)
            cached_ids_.emplace_back(ex.ids.begin(), ex.ids.begin() + ex.length);
    cached_masks_ = seq.masks;
    nn::Matrix h;
    std::vector<nn::Matrix> outputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const bool last = l + 1 == layers_.size();
        h = layers_[l]->forward_cached(seq, last ? nullptr : &outputs);
        if (!last) seq.xs = std::move(outputs);
    }
    if (spec_.hyper.dropout > 0.0) {
        cached_dropout_ = nn::dropout_mask(h.rows(), h.cols(), spec_.hyper.dropout, rng);
        cached_pooled_ = h.cwiseProduct(cached_dropout_);
    } else {
        cached_dropout_.resize(0, 0);
        cached_pooled_ = h;
    }
    return head_.forward(cached_pooled_).transpose();
}

void SequenceClassifier::backward(const nn::Matrix& dlogits) {
    nn::Matrix dpooled = head_.backward(cached_pooled_, dlogits.transpose());
    nn::Matrix dh = cached_dropout_.size() > 0 ? dpooled.cwiseProduct(cached_dropout_) : dpooled;
    std::vector<nn::Matrix> dsteps;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        dsteps = layers_[l]->backward(dh, dsteps);
        dh = nn::Matrix::Zero(dh.rows(), dh.cols());
    }
    if (!embedding_) return;
    for (std::size_t t = 0; t < dsteps.size(); ++t)
        for (std::size_t b = 0; b < cached_ids_.size(); ++b)
            if (t < cached_ids_[b].size())
                embedding_->weight.grad.row(cached_ids_[b][t]) +=
                    dsteps[t].col(static_cast<Eigen::Index>(b)).transpose();
}

std::unique_ptr<Model> build_model(const ModelSpec& spec, const EmbeddingMatrix* pretrained,
                                   std::uint64_t seed) {
    return std::make_unique<SequenceClassifier>(spec, seed, pretrained);
}

std::vector<int> decide(const nn::Matrix& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
        if (logits.cols() == 1) {
            out[static_cast<std::size_t>(b)] = nn::sigmoid(logits(b, 0)) >= 0.5 ? 1 : 0;
        } else {
            Eigen::Index best = 0;
            for (Eigen::Index c = 1; c < logits.cols(); ++c)
                if (logits(b, c) > logits(b, best)) best = c;
            out[static_cast<std::size_t>(b)] = static_cast<int>(best);
        }
    }
    return out;
}

} // namespace hsd
