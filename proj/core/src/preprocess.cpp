#include "hsd/preprocess.hpp"

#include <cstdlib>
#include <fstream>

#include "hsd/error.hpp"
#include "hsd/utf8.hpp"

#ifndef HSD_SOURCE_EMOJI_TABLE
#define HSD_SOURCE_EMOJI_TABLE "data/emoji/emoji_shortnames-2.16.0.json"
#endif
#ifndef HSD_INSTALLED_EMOJI_TABLE
#define HSD_INSTALLED_EMOJI_TABLE "share/hsd/emoji/emoji_shortnames-2.16.0.json"
#endif

namespace hsd {
namespace {

bool is_word_byte(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

bool starts_with_ci(std::string_view text, std::size_t pos, std::string_view prefix) {
    if (text.size() - pos < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        char c = text[pos + i];
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        if (c != prefix[i]) return false;
    }
    return true;
}

} // namespace

void PreprocessConfig::validate() const {
    if (replace_emojis && emoji_table_version.empty())
        throw ConfigError("preprocess: emoji_table_version must be set when replace_emojis is on");
}

nlohmann::json PreprocessConfig::to_json() const {
    return {{"replace_mentions", replace_mentions},
            {"replace_links", replace_links},
            {"replace_emojis", replace_emojis},
            {"collapse_whitespace", collapse_whitespace},
            {"lowercase", lowercase},
            {"emoji_table_version", emoji_table_version}};
}

PreprocessConfig PreprocessConfig::from_json(const nlohmann::json& j) {
    PreprocessConfig cfg;
    cfg.replace_mentions = j.value("replace_mentions", cfg.replace_mentions);
    cfg.replace_links = j.value("replace_links", cfg.replace_links);
    cfg.replace_emojis = j.value("replace_emojis", cfg.replace_emojis);
    cfg.collapse_whitespace = j.value("collapse_whitespace", cfg.collapse_whitespace);
    cfg.lowercase = j.value("lowercase", cfg.lowercase);
    cfg.emoji_table_version = j.value("emoji_table_version", cfg.emoji_table_version);
    return cfg;
}

EmojiTable EmojiTable::from_json(const nlohmann::json& j) {
    EmojiTable table;
    table.version_ = j.at("version").get<std::string>();
    if (table.version_.empty()) throw DataError("emoji table: empty version");
    for (const auto& [key, value] : j.at("entries").items()) {
        std::size_t node = 0;
        std::size_t pos = 0;
        bool any = false;
        while (pos < key.size()) {
            const auto space = key.find(' ', pos);
            const auto hex = key.substr(pos, space == std::string::npos ? std::string::npos : space - pos);
            pos = space == std::string::npos ? key.size() : space + 1;
            if (hex.empty()) continue;
            char* end = nullptr;
            const auto cp = static_cast<char32_t>(std::strtoul(hex.c_str(), &end, 16));
            if (end == nullptr || *end != '\0') throw DataError("emoji table: bad key '" + key + "'");
            auto it = table.nodes_[node].next.find(cp);
            if (it == table.nodes_[node].next.end()) {
                table.nodes_.push_back(Node{});
                it = table.nodes_[node].next.emplace(cp, table.nodes_.size() - 1).first;
            }
            node = it->second;
            any = true;
        }
        if (!any) throw DataError("emoji table: empty key");
        if (!table.nodes_[node].terminal) ++table.size_;
        table.nodes_[node].terminal = true;
        table.nodes_[node].name = value.get<std::string>();
    }
    return table;
}

EmojiTable EmojiTable::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("emoji table not found at '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("emoji table '" + path.string() + "': " + e.what());
    }
    return from_json(j);
}

std::pair<std::size_t, const std::string*> EmojiTable::match(const std::vector<char32_t>& cps,
                                                             std::size_t pos) const {
    std::size_t node = 0;
    std::size_t best_len = 0;
    const std::string* best = nullptr;
    for (std::size_t i = pos; i < cps.size(); ++i) {
        const auto it = nodes_[node].next.find(cps[i]);
        if (it == nodes_[node].next.end()) break;
        node = it->second;
        if (nodes_[node].terminal) {
            best_len = i - pos + 1;
            best = &nodes_[node].name;
        }
    }
    return {best_len, best};
}

const std::string* EmojiTable::find(const std::u32string& sequence) const {
    std::vector<char32_t> cps(sequence.begin(), sequence.end());
    const auto [len, name] = match(cps, 0);
    return len == cps.size() ? name : nullptr;
}

std::filesystem::path default_emoji_table_path() {
    if (const char* env = std::getenv("HSD_EMOJI_TABLE"); env != nullptr && *env != '\0')
        return env;
    std::error_code ec;
    if (std::filesystem::exists(HSD_SOURCE_EMOJI_TABLE, ec)) return HSD_SOURCE_EMOJI_TABLE;
    return HSD_INSTALLED_EMOJI_TABLE;
}

std::string replace_mentions(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '@' && (i == 0 || !is_word_byte(text[i - 1])) && i + 1 < text.size() &&
            is_word_byte(text[i + 1])) {
            std::size_t j = i + 1;
            while (j < text.size() && is_word_byte(text[j])) ++j;
            out += "username";
            i = j;
        } else {
            out.push_back(text[i++]);
        }
    }
    return out;
}

std::string replace_links(std::string_view text) {
    const auto chars = utf8::decode(text);
    std::string out;
    out.reserve(text.size());
    std::size_t index = 0;
    while (index < chars.size()) {
        const auto offset = chars[index].offset;
        std::size_t scheme = 0;
        if (starts_with_ci(text, offset, "https://")) scheme = 8;
        else if (starts_with_ci(text, offset, "http://")) scheme = 7;
        if (scheme != 0) {
            // Scheme bytes are ASCII, so they map one-to-one onto decoded chars.
            std::size_t after = index + scheme;
            const bool has_body =
                after < chars.size() && !(chars[after].valid && utf8::is_space(chars[after].cp));
            if (has_body) {
                while (after < chars.size() && !(chars[after].valid && utf8::is_space(chars[after].cp)))
                    ++after;
                out += "link";
                index = after;
                continue;
            }
        }
        out.append(text.substr(offset, chars[index].size));
        ++index;
    }
    return out;
}

std::string replace_emojis(std::string_view text, const EmojiTable& table) {
    const auto chars = utf8::decode(text);
    std::vector<char32_t> cps;
    cps.reserve(chars.size());
    for (const auto& ch : chars) cps.push_back(ch.valid ? ch.cp : 0xFFFFFFFF);

    std::string out;
    out.reserve(text.size());
    bool last_space = true; // start of string counts as a boundary
    bool need_space = false;
    std::size_t i = 0;
    while (i < chars.size()) {
        const auto [len, name] = table.match(cps, i);
        if (len > 0) {
            if (!last_space) out.push_back(' ');
            out += *name;
            last_space = false;
            need_space = true;
            i += len;
            continue;
        }
        const bool space = chars[i].valid && utf8::is_space(chars[i].cp);
        if (need_space && !space) out.push_back(' ');
        need_space = false;
        out.append(text.substr(chars[i].offset, chars[i].size));
        last_space = space;
        ++i;
    }
    return out;
}

std::string collapse_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending = false;
    for (const auto& ch : utf8::decode(text)) {
        if (ch.valid && utf8::is_space(ch.cp)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.append(text.substr(ch.offset, ch.size));
    }
    return out;
}

std::string lowercase_ascii(std::string_view text) {
    std::string out(text);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

Preprocessor::Preprocessor(PreprocessConfig config, const std::filesystem::path& emoji_table)
    : config_(std::move(config)) {
    config_.validate();
    if (config_.replace_emojis) {
        table_ = std::make_shared<const EmojiTable>(EmojiTable::load(emoji_table));
        if (table_->version() != config_.emoji_table_version)
            throw ConfigError("emoji table '" + emoji_table.string() + "' has version '" +
                              table_->version() + "', config pins '" +
                              config_.emoji_table_version + "'");
    }
}

Preprocessor::Preprocessor(PreprocessConfig config, std::shared_ptr<const EmojiTable> table)
    : config_(std::move(config)), table_(std::move(table)) {
    config_.validate();
    if (config_.replace_emojis) {
        if (!table_) throw ConfigError("preprocess: emoji rule enabled without an emoji table");
        if (table_->version() != config_.emoji_table_version)
            throw ConfigError("emoji table version '" + table_->version() + "' does not match '" +
                              config_.emoji_table_version + "'");
    }
}

std::string Preprocessor::operator()(std::string_view text) const {
    return preprocess(text, config_, table_.get());
}

std::string preprocess(std::string_view text, const PreprocessConfig& config,
                       const EmojiTable* table) {
    std::string out(text);
    if (config.replace_mentions) out = replace_mentions(out);
    if (config.replace_links) out = replace_links(out);
    if (config.replace_emojis) {
        if (table == nullptr) throw ConfigError("preprocess: emoji rule enabled without a table");
        out = replace_emojis(out, *table);
    }
    if (config.collapse_whitespace) out = collapse_whitespace(out);
    if (config.lowercase) out = lowercase_ascii(out);
    return out;
}

} // namespace hsd
