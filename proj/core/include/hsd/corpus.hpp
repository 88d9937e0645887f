#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/labels.hpp"

namespace hsd {

struct LabeledText {
    std::string id;
    std::string text;
    std::optional<Label1A> label_1a;
    std::optional<Label1B> label_1b;
};

struct Provenance {
    std::string source;
    std::string ingested_at; // ISO-8601 UTC
    std::string split;       // "", "train", "val" or "test"
    std::optional<std::uint64_t> seed;
};

/// Whether rows must carry the label for the dataset's task.
/// Prediction-mode datasets (e.g. the unlabeled test release) use kOptional.
enum class LabelPolicy { kRequired, kOptional };

struct Dataset {
    std::vector<LabeledText> items;
    Task task = Task::k1A;
    Provenance provenance;
    /// Non-fatal findings from ingestion: extra columns, label inconsistencies.
    std::vector<std::string> warnings;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
    /// True when every item carries the label required by `task`.
    bool labeled() const;
};

/// Reads the (id, text, label_1a, label_1b) TSV schema. A first line whose
/// first two fields are "id" and "text" (any case) is treated as a header.
Dataset load_tsv(const std::filesystem::path& path, Task task,
                 LabelPolicy policy = LabelPolicy::kRequired);
Dataset parse_tsv(std::istream& in, Task task, LabelPolicy policy, const std::string& source);

/// Writes the four-column schema with a header line.
void write_tsv(const Dataset& ds, const std::filesystem::path& path);
void write_tsv(const Dataset& ds, std::ostream& out);

struct LabelHistogram {
    /// One entry per label of the task, in declaration order.
    std::vector<std::pair<std::string, std::size_t>> counts;
    std::size_t total = 0;

    std::size_t at(std::string_view label) const;
    nlohmann::json to_json() const;
};

LabelHistogram class_stats(const Dataset& ds);

/// Index of the item's label for `ds.task` (declaration order).
int task_label_index(const LabeledText& item, Task task);

struct SplitSpec {
    std::array<double, 3> ratios{0.70, 0.10, 0.20};
    std::uint64_t seed = 42;
    bool stratified = true;

    void validate() const;
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
    SplitSpec spec;

    /// {seed, ratios, stratified, ids_per_split: {train, val, test}}
    nlohmann::json manifest() const;
};

/// Split sizes under the floor-then-remainder policy: floor(N*r0), floor(N*r1), rest.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios);

DatasetSplit stratified_split(const Dataset& ds, const SplitSpec& spec);

/// Rebuilds a split from a manifest without re-running the sampler.
DatasetSplit apply_split_manifest(const Dataset& ds, const nlohmann::json& manifest);

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

} // namespace hsd
