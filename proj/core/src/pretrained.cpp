#include "hsd/pretrained.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hsd/digest.hpp"
#include "hsd/error.hpp"
#include "hsd/random.hpp"
#include "hsd/tensor_io.hpp"
#include "hsd/utf8.hpp"
#include "hsd/vocab.hpp"

namespace hsd {
namespace {

// Features depend on truncation, so a non-default budget gets its own namespace.
std::string budget_suffix(int max_tokens) {
    return max_tokens == 128 ? std::string() : "-t" + std::to_string(max_tokens);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class HashEncoder final : public Encoder {
public:
    static constexpr std::int32_t kCls = 1;
    static constexpr std::int32_t kSep = 2;
    static constexpr std::int32_t kFirstToken = 3;

    HashEncoder(int width, std::uint64_t seed, int max_tokens)
        : width_(width), seed_(seed), max_tokens_(max_tokens) {}

    int width() const override { return width_; }
    int max_tokens() const override { return max_tokens_; }

    std::vector<std::int32_t> tokenize(std::string_view text) const override {
        std::vector<std::int32_t> ids{kCls};
        for (const auto& word : utf8::split_whitespace(text)) {
            if (static_cast<int>(ids.size()) + 1 >= max_tokens_) break;
            std::string lower = word;
            for (auto& c : lower)
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            ids.push_back(kFirstToken + static_cast<std::int32_t>(fnv1a(lower) % 0x7ffffff0ULL));
        }
        ids.push_back(kSep);
        return ids;
    }

    Eigen::MatrixXd token_states(std::span<const std::int32_t> ids) const override {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), width_);
        for (std::size_t t = 0; t < ids.size(); ++t) {
            Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(ids[t])));
            for (int c = 0; c < width_; ++c) out(static_cast<Eigen::Index>(t), c) = rng.normal(0.0, 1.0);
        }
        return out;
    }

    std::string checksum() const override {
        return sha256_hex("hash-encoder:" + std::to_string(width_) + ":" + std::to_string(seed_));
    }

    std::string cache_namespace() const override {
        return "stub-w" + std::to_string(width_) + "-s" + std::to_string(seed_) + budget_suffix(max_tokens_);
    }

private:
    int width_;
    std::uint64_t seed_;
    int max_tokens_;
};

std::string fetch_instructions(const std::filesystem::path& dir, EncoderSize size) {
    const std::string hf = size == EncoderSize::kBase ? "bert-base-uncased" : "bert-large-uncased";
    return "encoder weights not found in '" + dir.string() +
           "'. Convert a checkpoint with\n  python3 tools/convert_bert_weights.py --model " + hf +
           " --out " + dir.string() +
           "\nor point HSD_ENCODER_DIR at a directory containing base/ and large/ "
           "(each with config.json, vocab.txt, weights.bin).";
}

} // namespace

EncoderVariant EncoderVariant::of(EncoderSize size, int max_tokens) {
    return {size, size == EncoderSize::kBase ? 768 : 1024, max_tokens};
}

std::unique_ptr<Encoder> encoder_stub(int width, std::uint64_t seed, int max_tokens) {
    if (width < 1) throw ConfigError("encoder_stub: width must be >= 1");
    if (max_tokens < 2) throw ConfigError("encoder_stub: max_tokens must be >= 2");
    return std::make_unique<HashEncoder>(width, seed, max_tokens);
}

std::string_view to_string(FeatureMode mode) {
    return mode == FeatureMode::kTokens ? "tokens" : "pooled";
}

FeatureMode parse_feature_mode(std::string_view text) {
    if (text == "tokens") return FeatureMode::kTokens;
    if (text == "pooled") return FeatureMode::kPooled;
    throw ConfigError("unknown feature mode '" + std::string(text) + "' (expected tokens or pooled)");
}

EncoderHandle EncoderHandle::from(std::shared_ptr<const Encoder> encoder) {
    EncoderHandle h;
    h.cache_namespace = encoder->cache_namespace();
    h.loader = [encoder] { return encoder; };
    return h;
}

std::filesystem::path resolve_encoder_dir(EncoderSize size) {
    std::filesystem::path root = "encoders";
    if (const char* env = std::getenv("HSD_ENCODER_DIR"); env != nullptr && *env != '\0') root = env;
    return root / std::string(to_string(size));
}

EncoderHandle transformer_handle(const EncoderVariant& variant) {
    const auto dir = resolve_encoder_dir(variant.size);
    EncoderHandle h;
    h.cache_namespace = std::string(to_string(variant.size)) + budget_suffix(variant.max_tokens);
    const auto weights = dir / "weights.bin";
    if (std::filesystem::exists(weights)) h.identity = tensor_file_checksum(weights);
    h.loader = [dir, variant]() -> std::shared_ptr<const Encoder> {
        for (const char* f : {"config.json", "vocab.txt", "weights.bin"})
            if (!std::filesystem::exists(dir / f))
                throw EncoderUnavailable(fetch_instructions(dir, variant.size));
        auto enc = TransformerEncoder::load(dir, variant.max_tokens, std::string(to_string(variant.size)));
        if (enc->width() != variant.width)
            throw ConfigError("encoder in '" + dir.string() + "' has width " +
                              std::to_string(enc->width()) + ", variant " +
                              std::string(to_string(variant.size)) + " expects " +
                              std::to_string(variant.width));
        return enc;
    };
    return h;
}

std::optional<std::filesystem::path> default_feature_cache() {
    if (const char* env = std::getenv("HSD_FEATURE_CACHE"); env != nullptr && *env != '\0')
        return std::filesystem::path(env);
    return std::nullopt;
}

// --- FeatureExtractor ------------------------------------------------------

FeatureExtractor::FeatureExtractor(EncoderHandle handle,
                                   std::optional<std::filesystem::path> cache_dir, FeatureMode mode)
    : handle_(std::move(handle)), cache_dir_(std::move(cache_dir)), mode_(mode) {
    if (!handle_.loader) throw ConfigError("FeatureExtractor: encoder handle has no loader");
    if (handle_.cache_namespace.empty())
        throw ConfigError("FeatureExtractor: encoder handle has an empty cache namespace");
}

const Encoder& FeatureExtractor::encoder() const {
    std::lock_guard lock(load_mutex_);
    if (!encoder_) encoder_ = handle_.loader();
    return *encoder_;
}

bool FeatureExtractor::encoder_loaded() const {
    std::lock_guard lock(load_mutex_);
    return encoder_ != nullptr;
}

std::string FeatureExtractor::identity() const {
    if (handle_.identity) return *handle_.identity;
    const Encoder& enc = encoder();
    std::lock_guard lock(load_mutex_);
    if (!identity_) identity_ = enc.checksum();
    return *identity_;
}

std::optional<Eigen::MatrixXd> FeatureExtractor::read_cache(const std::filesystem::path& stem,
                                                            const std::string& key) const {
    auto sidecar = stem;
    sidecar += ".json";
    auto blob = stem;
    blob += ".bin";
    std::ifstream in(sidecar);
    if (!in) return std::nullopt;
    try {
        const auto meta = nlohmann::json::parse(in);
        if (meta.at("cache_key").get<std::string>() != key) return std::nullopt;
        if (meta.at("mode").get<std::string>() != to_string(mode_)) return std::nullopt;
        if (handle_.identity && meta.at("encoder_checksum").get<std::string>() != *handle_.identity)
            return std::nullopt;
        auto tensors = read_tensors(blob);
        auto it = tensors.find("states");
        if (it == tensors.end()) return std::nullopt;
        if (it->second.rows() != meta.at("tokens").get<Eigen::Index>() ||
            it->second.cols() != meta.at("width").get<Eigen::Index>())
            return std::nullopt;
        return std::move(it->second);
    } catch (const std::exception&) {
        return std::nullopt; // unreadable entries are recomputed and overwritten
    }
}

void FeatureExtractor::write_cache(const std::filesystem::path& stem, const std::string& key,
                                   const Eigen::MatrixXd& states, const std::string& identity) const {
    std::filesystem::create_directories(stem.parent_path());
    auto blob = stem;
    blob += ".bin";
    auto sidecar = stem;
    sidecar += ".json";
    write_tensors(blob, {{"states", &states}}, TensorDType::kF64);
    const nlohmann::json meta{{"width", states.cols()},
                              {"tokens", states.rows()},
                              {"encoder_checksum", identity},
                              {"mode", std::string(to_string(mode_))},
                              {"cache_key", key}};
    write_file_atomic(sidecar, meta.dump(2) + "\n");
}

FeatureMatrix FeatureExtractor::extract(std::string_view text) const {
    const std::string text_hash = sha256_hex(text);
    std::string material(text);
    material += '\0';
    material += handle_.cache_namespace;
    material += '\0';
    material += to_string(mode_);
    FeatureMatrix out;
    out.cache_key = sha256_hex(material);

    std::filesystem::path stem;
    if (cache_dir_) {
        stem = *cache_dir_ / handle_.cache_namespace / text_hash;
        if (mode_ == FeatureMode::kPooled) stem += ".pooled";
        if (auto cached = read_cache(stem, out.cache_key)) {
            ++hits_;
            out.states = std::move(*cached);
            return out;
        }
    }
    ++misses_;
    Eigen::MatrixXd states = encoder().encode(text);
    if (mode_ == FeatureMode::kPooled) states = states.colwise().mean().eval();
    if (!states.allFinite()) throw Error("encoder produced non-finite features");
    if (cache_dir_) write_cache(stem, out.cache_key, states, identity());
    out.states = std::move(states);
    return out;
}

std::vector<FeatureMatrix> FeatureExtractor::extract(std::span<const std::string> texts) const {
    std::vector<FeatureMatrix> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(extract(t));
    return out;
}

std::vector<FeatureMatrix> encode_features(std::span<const std::string> texts,
                                           const EncoderVariant& variant,
                                           const std::optional<std::filesystem::path>& cache_dir) {
    FeatureExtractor fx(transformer_handle(variant), cache_dir, FeatureMode::kTokens);
    return fx.extract(texts);
}

// --- FinetuneClassifier ----------------------------------------------------

FinetuneClassifier::FinetuneClassifier(std::unique_ptr<TransformerEncoder> encoder,
                                       int num_classes, double dropout, std::uint64_t seed)
    : encoder_(std::move(encoder)) {
    if (!encoder_) throw ConfigError("FinetuneClassifier: encoder is null");
    const int w = encoder_->width();
    spec_.hyper.family = Family::kBertFinetune;
    spec_.hyper.embedding_dim = w;
    spec_.hyper.dropout = dropout;
    spec_.hyper.encoder = w == 1024 ? EncoderSize::kLarge : EncoderSize::kBase;
    spec_.hyper.num_classes = num_classes;
    spec_.vocab_size = encoder_->config().vocab_size;
    spec_.input_width = w;
    spec_.validate();
    encoder_->enable_gradients();
    head_ = nn::Linear("classifier", w, num_classes);
    Rng rng(seed);
    nn::init_normal(head_.weight.value, 0.02, rng);
}

FinetuneClassifier::FinetuneClassifier(const FinetuneClassifier& other)
    : Model(other), spec_(other.spec_), encoder_(other.encoder_->clone()), head_(other.head_) {}

std::unique_ptr<Model> FinetuneClassifier::clone() const {
    return std::make_unique<FinetuneClassifier>(*this);
}

std::size_t FinetuneClassifier::head_parameter_count() const {
    return static_cast<std::size_t>(head_.weight.size() + head_.bias.size());
}

std::vector<nn::Parameter*> FinetuneClassifier::parameters() {
    auto out = encoder_->parameters();
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
}

std::span<const std::int32_t> FinetuneClassifier::ids_of(const ModelInput& in) const {
    if (in.length < 2 || static_cast<std::size_t>(in.length) > in.ids.size())
        throw ConfigError("fine-tuning input needs at least the two special tokens");
    return {in.ids.data(), static_cast<std::size_t>(in.length)};
}

nn::Matrix FinetuneClassifier::logits(std::span<const ModelInput> batch) const {
    nn::Matrix pooled(encoder_->width(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b)
        pooled.col(static_cast<Eigen::Index>(b)) = encoder_->pool(encoder_->forward(ids_of(batch[b]), nullptr));
    return head_.forward(pooled).transpose();
}

nn::Matrix FinetuneClassifier::forward_train(std::span<const ModelInput> batch, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(batch.size());
    nn::Matrix pooled(encoder_->width(), n);
    cached_ids_.clear();
    for (std::size_t b = 0; b < batch.size(); ++b) {
        auto ids = ids_of(batch[b]);
        cached_ids_.emplace_back(ids.begin(), ids.end());
        pooled.col(static_cast<Eigen::Index>(b)) = encoder_->pool(encoder_->forward(ids, nullptr));
    }
    cached_dropout_ = nn::dropout_mask(pooled.rows(), n, spec_.hyper.dropout, rng);
    cached_pooled_ = pooled.cwiseProduct(cached_dropout_);
    return head_.forward(cached_pooled_).transpose();
}

void FinetuneClassifier::backward(const nn::Matrix& dlogits) {
    nn::Matrix dpooled = head_.backward(cached_pooled_, dlogits.transpose()).cwiseProduct(cached_dropout_);
    TransformerEncoder::Trace trace;
    for (std::size_t b = 0; b < cached_ids_.size(); ++b) {
        encoder_->forward(cached_ids_[b], &trace);
        encoder_->backward_pooled(trace, dpooled.col(static_cast<Eigen::Index>(b)));
    }
}

std::unique_ptr<FinetuneClassifier> build_finetune_classifier(
    std::unique_ptr<TransformerEncoder> encoder, int num_classes, std::uint64_t seed, double dropout) {
    return std::make_unique<FinetuneClassifier>(std::move(encoder), num_classes, dropout, seed);
}

std::unique_ptr<FinetuneClassifier> build_finetune_classifier(const EncoderVariant& variant,
                                                              int num_classes, std::uint64_t seed,
                                                              double dropout) {
    auto shared = transformer_handle(variant).loader();
    const auto& loaded = dynamic_cast<const TransformerEncoder&>(*shared);
    return build_finetune_classifier(loaded.clone(), num_classes, seed, dropout);
}

} // namespace hsd
