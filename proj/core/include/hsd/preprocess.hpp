#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace hsd {

/// Version string of the emoji table shipped in data/emoji/.
inline constexpr std::string_view kDefaultEmojiTableVersion = "emoji-2.16.0";

struct PreprocessConfig {
    bool replace_mentions = true;
    bool replace_links = true;
    bool replace_emojis = true;
    bool collapse_whitespace = true;
    bool lowercase = false;
    std::string emoji_table_version{kDefaultEmojiTableVersion};

    void validate() const;
    nlohmann::json to_json() const;
    static PreprocessConfig from_json(const nlohmann::json& j);
    bool operator==(const PreprocessConfig&) const = default;
};

/// Immutable codepoint-sequence -> short-name table with longest-match lookup.
class EmojiTable {
public:
    /// Loads the versioned JSON table: {"version": ..., "entries": {"1F525": "fire", ...}}.
    static EmojiTable load(const std::filesystem::path& path);
    static EmojiTable from_json(const nlohmann::json& j);

    const std::string& version() const { return version_; }
    std::size_t size() const { return size_; }

    /// Longest entry matching codepoints starting at `pos`: (length, name), length 0 if none.
    std::pair<std::size_t, const std::string*> match(const std::vector<char32_t>& cps,
                                                     std::size_t pos) const;
    /// Exact lookup of a full sequence.
    const std::string* find(const std::u32string& sequence) const;

private:
    struct Node {
        std::map<char32_t, std::size_t> next;
        std::string name;
        bool terminal = false;
    };
    std::string version_;
    std::vector<Node> nodes_{Node{}};
    std::size_t size_ = 0;
};

/// Path of the bundled emoji table; HSD_EMOJI_TABLE overrides the
/// source-tree copy, which in turn takes precedence over the installed one.
std::filesystem::path default_emoji_table_path();

/// `@handle` -> `username`. A handle is `@` plus one or more [A-Za-z0-9_],
/// not preceded by a word character.
std::string replace_mentions(std::string_view text);

/// `http://...` / `https://...` up to the next whitespace -> `link`.
std::string replace_links(std::string_view text);

/// Known emoji sequences -> their short names, separated from neighbours by single spaces.
std::string replace_emojis(std::string_view text, const EmojiTable& table);

/// Whitespace runs -> one ASCII space; leading/trailing whitespace removed.
std::string collapse_whitespace(std::string_view text);

std::string lowercase_ascii(std::string_view text);

/// The normalisation pipeline. Rules run in the fixed order
/// mentions, links, emojis, whitespace, then the optional lowercasing.
/// Instances are immutable and can be shared between threads.
class Preprocessor {
public:
    /// Loads the emoji table when the emoji rule is enabled; throws DataError if
    /// the file is missing and ConfigError if its version differs from the config.
    explicit Preprocessor(PreprocessConfig config,
                          const std::filesystem::path& emoji_table = default_emoji_table_path());
    Preprocessor(PreprocessConfig config, std::shared_ptr<const EmojiTable> table);

    std::string operator()(std::string_view text) const;
    const PreprocessConfig& config() const { return config_; }

private:
    PreprocessConfig config_;
    std::shared_ptr<const EmojiTable> table_;
};

std::string preprocess(std::string_view text, const PreprocessConfig& config,
                       const EmojiTable* table);

} // namespace hsd
