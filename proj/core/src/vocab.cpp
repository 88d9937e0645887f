#include "hsd/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "hsd/error.hpp"
#include "hsd/random.hpp"
#include "hsd/utf8.hpp"

namespace hsd {

std::string_view to_string(VocabLevel level) { return level == VocabLevel::kChar ? "char" : "word"; }

VocabLevel parse_vocab_level(std::string_view text) {
    if (text == "char") return VocabLevel::kChar;
    if (text == "word") return VocabLevel::kWord;
    throw ConfigError("unknown vocab level '" + std::string(text) + "'");
}

std::vector<std::string> tokenize(std::string_view text, VocabLevel level) {
    if (level == VocabLevel::kWord) return utf8::split_whitespace(text);
    std::vector<std::string> out;
    for (const auto& ch : utf8::decode(text)) out.emplace_back(text.substr(ch.offset, ch.size));
    return out;
}

Vocab Vocab::build(std::span<const std::string> texts, VocabLevel level, int min_freq) {
    if (texts.empty()) throw DataError("build_vocab: empty corpus");
    if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");
    std::map<std::string, std::size_t> freq;
    for (const auto& text : texts)
        for (auto& token : tokenize(text, level)) ++freq[std::move(token)];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [token, count] : freq)
        if (count >= static_cast<std::size_t>(min_freq)) kept.emplace_back(token, count);
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [token, count] : kept) tokens.push_back(std::move(token));
    return from_tokens(level, min_freq, std::move(tokens));
}

Vocab Vocab::from_tokens(VocabLevel level, int min_freq, std::vector<std::string> tokens) {
    Vocab v;
    v.level_ = level;
    v.min_freq_ = min_freq;
    v.tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i + 2)).second)
            throw DataError("vocab: duplicate token '" + v.tokens_[i] + "'");
    }
    return v;
}

std::int32_t Vocab::id(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::string_view Vocab::token(std::int32_t id) const {
    if (id == kPad) return kPadToken;
    if (id == kUnk) return kUnkToken;
    if (id < 0 || static_cast<std::size_t>(id) >= size())
        throw std::out_of_range("vocab id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id - 2)];
}

nlohmann::json Vocab::to_json() const {
    std::vector<std::string> all;
    all.reserve(size());
    all.emplace_back(kPadToken);
    all.emplace_back(kUnkToken);
    all.insert(all.end(), tokens_.begin(), tokens_.end());
    return {{"level", std::string(to_string(level_))}, {"min_freq", min_freq_}, {"tokens", all}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
    auto all = j.at("tokens").get<std::vector<std::string>>();
    if (all.size() < 2 || all[0] != kPadToken || all[1] != kUnkToken)
        throw DataError("vocab json: tokens must start with <pad>, <unk>");
    all.erase(all.begin(), all.begin() + 2);
    return from_tokens(parse_vocab_level(j.at("level").get<std::string>()),
                       j.at("min_freq").get<int>(), std::move(all));
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocab '" + path.string() + "'");
    out << to_json().dump() << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read vocab '" + path.string() + "'");
    return from_json(nlohmann::json::parse(in));
}

IdSequence encode(std::string_view text, const Vocab& vocab, int max_len) {
    if (max_len < 1) throw ConfigError("encode: max_len must be >= 1");
    IdSequence seq;
    seq.ids.assign(static_cast<std::size_t>(max_len), Vocab::kPad);
    const auto tokens = tokenize(text, vocab.level());
    const auto n = std::min(tokens.size(), static_cast<std::size_t>(max_len));
    for (std::size_t i = 0; i < n; ++i) seq.ids[i] = vocab.id(tokens[i]);
    seq.length = static_cast<std::int32_t>(n);
    return seq;
}

std::vector<std::string> decode(const IdSequence& seq, const Vocab& vocab) {
    std::vector<std::string> out;
    for (std::int32_t i = 0; i < seq.length; ++i) out.emplace_back(vocab.token(seq.ids[static_cast<std::size_t>(i)]));
    return out;
}

EmbeddingMatrix load_pretrained_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                                           int dim, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("embeddings: dim must be >= 1");
    std::ifstream in(path);
    if (!in) throw DataError("cannot read word vectors '" + path.string() + "'");

    const auto n = static_cast<Eigen::Index>(vocab.size());
    EmbeddingMatrix emb;
    emb.source = EmbeddingSource::kPretrained;
    emb.rows = Eigen::MatrixXd::Zero(n, dim);
    std::vector<bool> found(vocab.size(), false);

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream fields(line);
        std::string token;
        if (!(fields >> token)) continue;
        std::vector<double> values;
        double v = 0.0;
        while (fields >> v) values.push_back(v);
        if (line_no == 1 && values.size() == 1) continue; // "count dim" header
        if (values.size() != static_cast<std::size_t>(dim))
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": vector has " +
                            std::to_string(values.size()) + " values, expected dim " +
                            std::to_string(dim));
        const auto id = vocab.id(token);
        if (id == Vocab::kUnk || !vocab.contains(token) || found[static_cast<std::size_t>(id)]) continue;
        found[static_cast<std::size_t>(id)] = true;
        for (int c = 0; c < dim; ++c) emb.rows(id, c) = values[static_cast<std::size_t>(c)];
    }

    Rng rng(seed);
    std::size_t hits = 0;
    for (Eigen::Index r = 2; r < n; ++r) {
        if (found[static_cast<std::size_t>(r)]) {
            ++hits;
            continue;
        }
        for (int c = 0; c < dim; ++c) emb.rows(r, c) = rng.normal(0.0, 0.1);
    }
    // Reserved unk row is trainable like any unfound token; pad stays zero.
    for (int c = 0; c < dim; ++c) emb.rows(Vocab::kUnk, c) = rng.normal(0.0, 0.1);
    const auto real = vocab.size() - 2;
    emb.coverage = real == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(real);
    return emb;
}

} // namespace hsd
