#include "hsd/wordpiece.hpp"

#include <fstream>
#include <iterator>

#include "hsd/error.hpp"
#include "hsd/utf8.hpp"

namespace hsd {
namespace {

constexpr std::size_t kMaxCharsPerWord = 100;

bool is_control(char32_t cp) {
    if (cp == '\t' || cp == '\n' || cp == '\r') return false;
    return cp < 0x20 || (cp >= 0x7F && cp < 0xA0) || cp == 0x200B || cp == 0xFEFF;
}

bool is_punctuation(char32_t cp) {
    if ((cp >= 33 && cp <= 47) || (cp >= 58 && cp <= 64) || (cp >= 91 && cp <= 96) ||
        (cp >= 123 && cp <= 126))
        return true;
    switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
        return true;
    default:
        break;
    }
    return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
           (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011);
}

bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0x2A700 && cp <= 0x2B73F) ||
           (cp >= 0x2B740 && cp <= 0x2B81F) || (cp >= 0x2B820 && cp <= 0x2CEAF) ||
           (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x2F800 && cp <= 0x2FA1F);
}

// Lowercase and strip diacritics for U+00C0..U+017F (lowercase, NFD, drop
// nonspacing marks); other code points are only ASCII-lowercased.
char32_t fold(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    static constexpr char32_t kLatin[] = {
        0x0061, 0x0061, 0x0061, 0x0061, 0x0061, 0x0061, 0x00E6, 0x0063,
        0x0065, 0x0065, 0x0065, 0x0065, 0x0069, 0x0069, 0x0069, 0x0069,
        0x00F0, 0x006E, 0x006F, 0x006F, 0x006F, 0x006F, 0x006F, 0x00D7,
        0x00F8, 0x0075, 0x0075, 0x0075, 0x0075, 0x0079, 0x00FE, 0x00DF,
        0x0061, 0x0061, 0x0061, 0x0061, 0x0061, 0x0061, 0x00E6, 0x0063,
        0x0065, 0x0065, 0x0065, 0x0065, 0x0069, 0x0069, 0x0069, 0x0069,
        0x00F0, 0x006E, 0x006F, 0x006F, 0x006F, 0x006F, 0x006F, 0x00F7,
        0x00F8, 0x0075, 0x0075, 0x0075, 0x0075, 0x0079, 0x00FE, 0x0079,
        0x0061, 0x0061, 0x0061, 0x0061, 0x0061, 0x0061, 0x0063, 0x0063,
        0x0063, 0x0063, 0x0063, 0x0063, 0x0063, 0x0063, 0x0064, 0x0064,
        0x0111, 0x0111, 0x0065, 0x0065, 0x0065, 0x0065, 0x0065, 0x0065,
        0x0065, 0x0065, 0x0065, 0x0065, 0x0067, 0x0067, 0x0067, 0x0067,
        0x0067, 0x0067, 0x0067, 0x0067, 0x0068, 0x0068, 0x0127, 0x0127,
        0x0069, 0x0069, 0x0069, 0x0069, 0x0069, 0x0069, 0x0069, 0x0069,
        0x0069, 0x0131, 0x0133, 0x0133, 0x006A, 0x006A, 0x006B, 0x006B,
        0x0138, 0x006C, 0x006C, 0x006C, 0x006C, 0x006C, 0x006C, 0x0140,
        0x0140, 0x0142, 0x0142, 0x006E, 0x006E, 0x006E, 0x006E, 0x006E,
        0x006E, 0x0149, 0x014B, 0x014B, 0x006F, 0x006F, 0x006F, 0x006F,
        0x006F, 0x006F, 0x0153, 0x0153, 0x0072, 0x0072, 0x0072, 0x0072,
        0x0072, 0x0072, 0x0073, 0x0073, 0x0073, 0x0073, 0x0073, 0x0073,
        0x0073, 0x0073, 0x0074, 0x0074, 0x0074, 0x0074, 0x0167, 0x0167,
        0x0075, 0x0075, 0x0075, 0x0075, 0x0075, 0x0075, 0x0075, 0x0075,
        0x0075, 0x0075, 0x0075, 0x0075, 0x0077, 0x0077, 0x0079, 0x0079,
        0x0079, 0x007A, 0x007A, 0x007A, 0x007A, 0x007A, 0x007A, 0x017F,
    };
    if (cp >= 0xC0 && cp < 0xC0 + std::size(kLatin)) return kLatin[cp - 0xC0];
    return cp;
}

} // namespace

WordPieceTokenizer WordPieceTokenizer::from_tokens(std::vector<std::string> tokens) {
    WordPieceTokenizer t;
    t.tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < t.tokens_.size(); ++i)
        t.index_.emplace(t.tokens_[i], static_cast<std::int32_t>(i));
    auto special = [&](const char* name) {
        const auto it = t.index_.find(name);
        if (it == t.index_.end())
            throw DataError(std::string("wordpiece vocab lacks special token ") + name);
        return it->second;
    };
    t.cls_ = special("[CLS]");
    t.sep_ = special("[SEP]");
    t.unk_ = special("[UNK]");
    t.pad_ = special("[PAD]");
    return t;
}

WordPieceTokenizer WordPieceTokenizer::load(const std::filesystem::path& vocab_txt) {
    std::ifstream in(vocab_txt);
    if (!in) throw DataError("cannot read wordpiece vocab '" + vocab_txt.string() + "'");
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

void WordPieceTokenizer::save(const std::filesystem::path& vocab_txt) const {
    std::ofstream out(vocab_txt);
    if (!out) throw DataError("cannot write wordpiece vocab '" + vocab_txt.string() + "'");
    for (const auto& token : tokens_) out << token << '\n';
}

std::int32_t WordPieceTokenizer::id(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? unk_ : it->second;
}

std::vector<std::string> WordPieceTokenizer::basic_tokens(std::string_view text) const {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (const auto& ch : utf8::decode(text)) {
        if (!ch.valid || ch.cp == 0 || is_control(ch.cp)) continue;
        if (utf8::is_space(ch.cp)) {
            flush();
            continue;
        }
        // Combining diacritical marks are dropped along with the accents folded above.
        if (ch.cp >= 0x300 && ch.cp <= 0x36F) continue;
        const char32_t cp = fold(ch.cp);
        if (is_punctuation(cp) || is_cjk(cp)) {
            flush();
            std::string single;
            utf8::append(single, cp);
            out.push_back(std::move(single));
            continue;
        }
        utf8::append(current, cp);
    }
    flush();
    return out;
}

std::vector<std::string> WordPieceTokenizer::wordpieces(std::string_view text) const {
    std::vector<std::string> out;
    for (const auto& word : basic_tokens(text)) {
        const auto chars = utf8::decode(word);
        if (chars.size() > kMaxCharsPerWord) {
            out.push_back(tokens_[static_cast<std::size_t>(unk_)]);
            continue;
        }
        std::vector<std::string> pieces;
        std::size_t start = 0;
        bool bad = false;
        while (start < chars.size()) {
            std::size_t end = chars.size();
            std::string found;
            while (end > start) {
                const auto from = chars[start].offset;
                const auto to = end == chars.size() ? word.size() : chars[end].offset;
                std::string candidate = (start > 0 ? "##" : "") + word.substr(from, to - from);
                if (index_.count(candidate)) {
                    found = std::move(candidate);
                    break;
                }
                --end;
            }
            if (found.empty()) {
                bad = true;
                break;
            }
            pieces.push_back(std::move(found));
            start = end;
        }
        if (bad)
            out.push_back(tokens_[static_cast<std::size_t>(unk_)]);
        else
            out.insert(out.end(), pieces.begin(), pieces.end());
    }
    return out;
}

std::vector<std::int32_t> WordPieceTokenizer::encode(std::string_view text, int max_tokens) const {
    if (max_tokens < 2) throw ConfigError("wordpiece: max_tokens must leave room for [CLS] and [SEP]");
    std::vector<std::int32_t> ids{cls_};
    for (const auto& piece : wordpieces(text)) {
        if (static_cast<int>(ids.size()) + 1 >= max_tokens) break;
        ids.push_back(id(piece));
    }
    ids.push_back(sep_);
    return ids;
}

} // namespace hsd
