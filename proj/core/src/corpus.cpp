#include "hsd/corpus.hpp"

#include <algorithm>
#include <cstdint>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "hsd/error.hpp"
#include "hsd/random.hpp"
#include "hsd/utf8.hpp"

namespace hsd {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::string lower_ascii(std::string_view text) {
    std::string out(text);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

bool blank(std::string_view text) {
    for (const auto& ch : utf8::decode(text))
        if (!(ch.valid && utf8::is_space(ch.cp))) return false;
    return true;
}

std::string trim_ascii(std::string_view text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(first, last - first + 1));
}

bool has_label(const LabeledText& item, Task task) {
    return task == Task::k1A ? item.label_1a.has_value() : item.label_1b.has_value();
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices, std::string name,
               std::uint64_t seed) {
    Dataset out;
    out.task = ds.task;
    out.provenance = ds.provenance;
    out.provenance.split = std::move(name);
    out.provenance.seed = seed;
    out.items.reserve(indices.size());
    for (auto i : indices) out.items.push_back(ds.items[i]);
    return out;
}

// Picks per-class split counts, each within floor/ceil of the proportional
// quota, whose column sums match the split sizes exactly. Such a rounding
// always exists for a matrix with integral row and column sums; a depth-first
// search over the floor/ceil choices finds the first one in class order.
using Counts = std::array<std::size_t, 3>;

std::vector<Counts> apportion(const std::vector<std::size_t>& class_counts, const Counts& sizes,
                              std::size_t total) {
    const std::size_t k = class_counts.size();
    std::vector<std::vector<Counts>> options(k);
    for (std::size_t c = 0; c < k; ++c) {
        Counts lo{}, hi{};
        for (std::size_t s = 0; s < 3; ++s) {
            const auto num = class_counts[c] * sizes[s];
            lo[s] = total == 0 ? 0 : num / total;
            hi[s] = lo[s] + (total != 0 && num % total != 0 ? 1 : 0);
        }
        for (auto a = lo[0]; a <= hi[0]; ++a)
            for (auto b = lo[1]; b <= hi[1]; ++b) {
                if (a + b > class_counts[c]) continue;
                const auto rest = class_counts[c] - a - b;
                if (rest >= lo[2] && rest <= hi[2]) options[c].push_back({a, b, rest});
            }
    }

    // Per-split totals reachable by classes c..k-1, for pruning.
    std::vector<Counts> min_tail(k + 1, Counts{}), max_tail(k + 1, Counts{});
    for (std::size_t c = k; c-- > 0;) {
        for (std::size_t s = 0; s < 3; ++s) {
            std::size_t mn = options[c].empty() ? 0 : SIZE_MAX, mx = 0;
            for (const auto& opt : options[c]) {
                mn = std::min(mn, opt[s]);
                mx = std::max(mx, opt[s]);
            }
            min_tail[c][s] = min_tail[c + 1][s] + mn;
            max_tail[c][s] = max_tail[c + 1][s] + mx;
        }
    }

    std::vector<Counts> chosen(k);
    Counts used{0, 0, 0};
    std::function<bool(std::size_t)> search = [&](std::size_t c) -> bool {
        for (std::size_t s = 0; s < 3; ++s) {
            if (used[s] > sizes[s]) return false;
            const auto need = sizes[s] - used[s];
            if (need < min_tail[c][s] || need > max_tail[c][s]) return false;
        }
        if (c == k) return true;
        for (const auto& opt : options[c]) {
            for (std::size_t s = 0; s < 3; ++s) used[s] += opt[s];
            chosen[c] = opt;
            if (search(c + 1)) return true;
            for (std::size_t s = 0; s < 3; ++s) used[s] -= opt[s];
        }
        return false;
    };
    if (!search(0)) throw Error("stratified_split: no consistent per-class allocation found");
    return chosen;
}

} // namespace

bool Dataset::labeled() const {
    return std::all_of(items.begin(), items.end(),
                       [this](const LabeledText& item) { return has_label(item, task); });
}

Dataset parse_tsv(std::istream& in, Task task, LabelPolicy policy, const std::string& source) {
    Dataset ds;
    ds.task = task;
    ds.provenance.source = source;
    ds.provenance.ingested_at = utc_timestamp();

    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    bool warned_extra = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (line_no == 1 && fields.size() >= 2 && lower_ascii(trim_ascii(fields[0])) == "id" &&
            lower_ascii(trim_ascii(fields[1])) == "text")
            continue;
        const std::string where = source + ":" + std::to_string(line_no);
        if (fields.size() < 2)
            throw DataError(where + ": expected at least 2 tab-separated fields (id, text), got " +
                            std::to_string(fields.size()));
        if (fields.size() > 4 && !warned_extra) {
            ds.warnings.push_back(where + ": " + std::to_string(fields.size() - 4) +
                                  " extra column(s) ignored");
            warned_extra = true;
        }

        LabeledText item;
        item.id = trim_ascii(fields[0]);
        item.text = fields[1];
        if (item.id.empty()) throw DataError(where + ": empty id");
        if (blank(item.text)) throw DataError(where + ": empty text for id '" + item.id + "'");
        if (fields.size() > 2) {
            const auto raw = trim_ascii(fields[2]);
            if (!raw.empty()) {
                item.label_1a = parse_label_1a(raw);
                if (!item.label_1a)
                    throw DataError(where + ": unknown subtask 1A label '" + raw +
                                    "' (expected NOT or HOF)");
            }
        }
        if (fields.size() > 3) {
            const auto raw = trim_ascii(fields[3]);
            if (!raw.empty()) {
                item.label_1b = parse_label_1b(raw);
                if (!item.label_1b)
                    throw DataError(where + ": unknown subtask 1B label '" + raw +
                                    "' (expected HATE, OFFN, PRFN or NONE)");
            }
        }
        if (policy == LabelPolicy::kRequired && !has_label(item, task))
            throw DataError(where + ": missing subtask " + std::string(to_string(task)) +
                            " label for id '" + item.id + "'");
        if (item.label_1a && item.label_1b) {
            const bool hof_b = *item.label_1b != Label1B::kNone;
            const bool hof_a = *item.label_1a == Label1A::kHof;
            if (hof_a != hof_b)
                ds.warnings.push_back(where + ": inconsistent labels " +
                                      std::string(to_string(*item.label_1a)) + "/" +
                                      std::string(to_string(*item.label_1b)) + " for id '" +
                                      item.id + "'");
        }
        if (!seen.insert(item.id).second)
            throw DataError(where + ": duplicate id '" + item.id + "'");
        ds.items.push_back(std::move(item));
    }
    return ds;
}

Dataset load_tsv(const std::filesystem::path& path, Task task, LabelPolicy policy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return parse_tsv(in, task, policy, path.string());
}

void write_tsv(const Dataset& ds, std::ostream& out) {
    out << "id\ttext\tlabel_1a\tlabel_1b\n";
    for (const auto& item : ds.items) {
        if (item.text.find_first_of("\t\n\r") != std::string::npos)
            throw DataError("row '" + item.id + "': text contains a tab or line break and cannot be written as TSV");
        out << item.id << '\t' << item.text << '\t';
        if (item.label_1a) out << to_string(*item.label_1a);
        out << '\t';
        if (item.label_1b) out << to_string(*item.label_1b);
        out << '\n';
    }
}

void write_tsv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    write_tsv(ds, out);
}

int task_label_index(const LabeledText& item, Task task) {
    if (task == Task::k1A) {
        if (!item.label_1a) throw DataError("item '" + item.id + "' has no 1A label");
        return static_cast<int>(*item.label_1a);
    }
    if (!item.label_1b) throw DataError("item '" + item.id + "' has no 1B label");
    return static_cast<int>(*item.label_1b);
}

std::size_t LabelHistogram::at(std::string_view label) const {
    for (const auto& [name, count] : counts)
        if (name == label) return count;
    throw std::out_of_range("label '" + std::string(label) + "' not in histogram");
}

nlohmann::json LabelHistogram::to_json() const {
    nlohmann::json j;
    j["total"] = total;
    auto& c = j["counts"] = nlohmann::json::object();
    for (const auto& [name, count] : counts) c[name] = count;
    return j;
}

LabelHistogram class_stats(const Dataset& ds) {
    if (ds.empty()) throw DataError("class_stats: dataset is empty");
    if (!ds.labeled()) throw DataError("class_stats: dataset is not labeled for its task");
    LabelHistogram hist;
    for (auto name : label_names(ds.task)) hist.counts.emplace_back(std::string(name), 0);
    for (const auto& item : ds.items) {
        ++hist.counts[static_cast<std::size_t>(task_label_index(item, ds.task))].second;
        ++hist.total;
    }
    return hist;
}

void SplitSpec::validate() const {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0 && r < 1.0))
            throw ConfigError("split ratios must each lie in (0, 1)");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
    // The epsilon absorbs representation error such as 100 * 0.29 = 28.999...
    const auto floor_of = [n](double r) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
    };
    const auto train = std::min(n, floor_of(ratios[0]));
    const auto val = std::min(n - train, floor_of(ratios[1]));
    return {train, val, n - train - val};
}

DatasetSplit stratified_split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    if (!ds.labeled()) throw DataError("stratified_split: dataset is not labeled for its task");
    const auto sizes = split_sizes(ds.size(), spec.ratios);
    Rng rng(spec.seed);
    std::array<std::vector<std::size_t>, 3> members;

    if (spec.stratified) {
        const auto num_labels = label_names(ds.task).size();
        std::vector<std::vector<std::size_t>> by_class(num_labels);
        for (std::size_t i = 0; i < ds.size(); ++i)
            by_class[static_cast<std::size_t>(task_label_index(ds.items[i], ds.task))].push_back(i);
        for (std::size_t c = 0; c < num_labels; ++c) {
            const auto n = by_class[c].size();
            if (n > 0 && n < 3)
                throw DataError("stratified_split: class " +
                                std::string(label_names(ds.task)[c]) + " has only " +
                                std::to_string(n) +
                                " member(s), fewer than the 3 splits; use stratified=false");
        }
        std::vector<std::size_t> counts(num_labels);
        for (std::size_t c = 0; c < num_labels; ++c) counts[c] = by_class[c].size();
        const auto alloc = apportion(counts, sizes, ds.size());
        for (std::size_t c = 0; c < num_labels; ++c) {
            rng.shuffle(by_class[c]);
            std::size_t pos = 0;
            for (std::size_t s = 0; s < 3; ++s)
                for (std::size_t j = 0; j < alloc[c][s]; ++j) members[s].push_back(by_class[c][pos++]);
        }
    } else {
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t j = 0; j < sizes[s]; ++j) members[s].push_back(order[pos++]);
    }
    for (auto& m : members) std::sort(m.begin(), m.end());

    DatasetSplit out;
    out.spec = spec;
    out.train = subset(ds, members[0], "train", spec.seed);
    out.val = subset(ds, members[1], "val", spec.seed);
    out.test = subset(ds, members[2], "test", spec.seed);
    return out;
}

nlohmann::json DatasetSplit::manifest() const {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["ratios"] = spec.ratios;
    j["stratified"] = spec.stratified;
    j["task"] = std::string(to_string(train.task));
    j["source"] = train.provenance.source;
    auto ids = [](const Dataset& ds) {
        std::vector<std::string> out;
        out.reserve(ds.size());
        for (const auto& item : ds.items) out.push_back(item.id);
        return out;
    };
    j["ids_per_split"] = {{"train", ids(train)}, {"val", ids(val)}, {"test", ids(test)}};
    return j;
}

DatasetSplit apply_split_manifest(const Dataset& ds, const nlohmann::json& manifest) {
    DatasetSplit out;
    out.spec.seed = manifest.at("seed").get<std::uint64_t>();
    out.spec.ratios = manifest.at("ratios").get<std::array<double, 3>>();
    out.spec.stratified = manifest.value("stratified", true);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ds.size(); ++i) index.emplace(ds.items[i].id, i);
    const auto& ids = manifest.at("ids_per_split");
    auto build = [&](const char* name) {
        std::vector<std::size_t> members;
        for (const auto& id : ids.at(name)) {
            const auto it = index.find(id.get<std::string>());
            if (it == index.end())
                throw DataError("split manifest references unknown id '" + id.get<std::string>() + "'");
            members.push_back(it->second);
        }
        return subset(ds, members, name, out.spec.seed);
    };
    out.train = build("train");
    out.val = build("val");
    out.test = build("test");
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

} // namespace hsd
