#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hsd {

/// Uncased BERT tokenisation: text cleanup, lowercasing, accent stripping
/// (Latin-1 and Latin Extended-A), punctuation and CJK splitting, then greedy
/// longest-match-first WordPiece with "##" continuation pieces.
class WordPieceTokenizer {
public:
    /// One token per line; the id is the zero-based line number.
    static WordPieceTokenizer load(const std::filesystem::path& vocab_txt);
    static WordPieceTokenizer from_tokens(std::vector<std::string> tokens);

    void save(const std::filesystem::path& vocab_txt) const;

    /// Basic tokenisation only (before WordPiece).
    std::vector<std::string> basic_tokens(std::string_view text) const;
    std::vector<std::string> wordpieces(std::string_view text) const;

    /// [CLS] pieces... [SEP], truncated so the result has at most max_tokens ids.
    std::vector<std::int32_t> encode(std::string_view text, int max_tokens) const;

    std::int32_t id(std::string_view token) const;
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::int32_t cls_id() const { return cls_; }
    std::int32_t sep_id() const { return sep_; }
    std::int32_t unk_id() const { return unk_; }
    std::int32_t pad_id() const { return pad_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
    std::int32_t cls_ = -1, sep_ = -1, unk_ = -1, pad_ = -1;
};

} // namespace hsd
