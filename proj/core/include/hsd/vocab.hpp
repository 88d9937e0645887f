#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace hsd {

enum class VocabLevel { kChar, kWord };

std::string_view to_string(VocabLevel level);
VocabLevel parse_vocab_level(std::string_view text);

/// Characters are Unicode code points (UTF-8 substrings); words are
/// whitespace-delimited tokens.
std::vector<std::string> tokenize(std::string_view text, VocabLevel level);

/// Token <-> id mapping with reserved pad (0) and unk (1) ids.
class Vocab {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;
    static constexpr std::string_view kPadToken = "<pad>";
    static constexpr std::string_view kUnkToken = "<unk>";

    /// Tokens with frequency >= min_freq, ordered by frequency (desc) then lexicographically.
    static Vocab build(std::span<const std::string> texts, VocabLevel level, int min_freq);

    /// Explicit tokens receive ids 2, 3, ... in the given order.
    static Vocab from_tokens(VocabLevel level, int min_freq, std::vector<std::string> tokens);

    VocabLevel level() const { return level_; }
    int min_freq() const { return min_freq_; }
    std::size_t size() const { return tokens_.size() + 2; }

    /// unk for out-of-vocabulary tokens.
    std::int32_t id(std::string_view token) const;
    bool contains(std::string_view token) const;
    /// "<pad>" / "<unk>" for the reserved ids.
    std::string_view token(std::int32_t id) const;

    /// {level, min_freq, tokens} with tokens listed in id order, reserved ids included.
    nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    bool operator==(const Vocab& other) const {
        return level_ == other.level_ && min_freq_ == other.min_freq_ && tokens_ == other.tokens_;
    }

private:
    VocabLevel level_ = VocabLevel::kChar;
    int min_freq_ = 1;
    std::vector<std::string> tokens_; // tokens_[i] has id i + 2
    std::unordered_map<std::string, std::int32_t> index_;
};

/// Fixed-length id sequence: ids.size() == max_len, length = number of real tokens.
struct IdSequence {
    std::vector<std::int32_t> ids;
    std::int32_t length = 0;
};

/// Tail-truncates to max_len and right-pads with Vocab::kPad.
IdSequence encode(std::string_view text, const Vocab& vocab, int max_len);

/// Tokens of the first `length` ids.
std::vector<std::string> decode(const IdSequence& seq, const Vocab& vocab);

inline constexpr int kDefaultCharMaxLen = 280;
inline constexpr int kDefaultWordMaxLen = 64;
inline constexpr int kDefaultCharMinFreq = 1;
inline constexpr int kDefaultWordMinFreq = 2;

enum class EmbeddingSource { kRandom, kPretrained };

/// |vocab| x dim, pad row zero.
struct EmbeddingMatrix {
    Eigen::MatrixXd rows;
    EmbeddingSource source = EmbeddingSource::kRandom;
    /// Fraction of non-reserved vocab tokens found in the vector file.
    double coverage = 0.0;
};

/// Reads whitespace-separated "token v1 ... vdim" lines (a leading
/// "count dim" header line is skipped). Tokens missing from the file are drawn
/// from N(0, 0.1^2) using `seed`.
EmbeddingMatrix load_pretrained_embeddings(const std::filesystem::path& path, const Vocab& vocab,
                                           int dim, std::uint64_t seed);

} // namespace hsd
