#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/corpus.hpp"
#include "hsd/models.hpp"
#include "hsd/train.hpp"

namespace hsd {

/// Axes of a grid. Enumeration order: encoder, embedding_dim, hidden_dim,
/// dropout, pretrained; within an axis values keep their listed order.
/// Axes that do not apply to the family hold a single placeholder value.
struct GridSpace {
    Family family = Family::kCharLstm;
    std::vector<EncoderSize> encoders{EncoderSize::kBase};
    std::vector<int> embedding_dims;
    std::vector<int> hidden_dims;
    std::vector<double> dropouts;
    std::vector<bool> pretrained{false};
    std::vector<bool> preprocessed{true, false};

    /// char 3x4x3 = 36, word 2x5x3 = 30, feature 5x3 = 15 per variant,
    /// fine-tuning one point per variant.
    static GridSpace preset(Family family, std::vector<EncoderSize> encoders = {EncoderSize::kBase});

    void validate() const;
    std::size_t points() const;
    nlohmann::json to_json() const;
    static GridSpace from_json(const nlohmann::json& j);
};

/// Cartesian product of the axes (preprocessing excluded), num_classes = 1.
std::vector<HyperParams> enumerate_grid(const GridSpace& space);

struct ResultRow {
    std::string key;
    Family family = Family::kCharLstm;
    bool preprocessed = true;
    HyperParams hyper;
    std::string status = "ok"; // ok | failed
    std::string error;
    double test_f1 = 0.0;          // macro
    double test_weighted_f1 = 0.0;
    double val_f1 = 0.0;           // macro, best epoch
    std::size_t params = 0;
    int best_epoch = 0;
    std::uint64_t seed = 0;
    std::string checkpoint;
    double wall_time = 0.0;
    bool best = false;

    nlohmann::json to_json() const;
    static ResultRow from_json(const nlohmann::json& j);
};

/// Stable identity of a (hyperparameters, preprocessing) point.
std::string row_key(const HyperParams& hp, bool preprocessed);

struct ResultsTable {
    std::vector<ResultRow> rows;

    /// Flags the row with the highest test F1 per family among ok rows;
    /// ties go to fewer parameters, then to the earlier row.
    void mark_best();
    std::string to_csv() const;
    /// One table per family with the layout: Model name, Pre-processed,
    /// the family's hyperparameter columns, F1 (best in bold), then Val F1.
    /// `reference_only` keeps the configurations listed in reference_rows()
    /// and adds their reported F1 for comparison.
    std::string to_markdown(bool reference_only = false) const;

    /// Reads rows.jsonl, results.csv, or a results directory containing either.
    static ResultsTable load(const std::filesystem::path& path);
};

/// Configurations and F1 values of the published result tables.
struct ReferenceRow {
    Family family;
    bool preprocessed;
    int embedding_dim;
    int hidden_dim;
    double dropout;
    std::optional<EncoderSize> encoder;
    double f1;
};
const std::vector<ReferenceRow>& reference_rows();

struct GridPoint {
    HyperParams hyper;
    bool preprocessed = true;
    std::string key;
    std::filesystem::path checkpoint_dir;
};

/// Trains and scores one point. Exceptions are turned into failed rows.
using PointRunner = std::function<ResultRow(const GridPoint&)>;

struct GridOptions {
    std::filesystem::path out;
    int jobs = 1;
    /// Called after each row commits; `resumed` marks rows read back from the log.
    std::function<void(const ResultRow&, bool resumed)> on_row;
};

/// Runs every (point x preprocessed) pair not already present in
/// <out>/rows.jsonl, appending one JSON line per finished row, then writes
/// results.csv, results.md and results.json sorted in enumeration order.
ResultsTable run_grid(const GridSpace& space, const PointRunner& runner, const GridOptions& opts);

struct RunnerOptions {
    TaskMode mode = TaskMode::kBinary1A;
    TrainConfig train;
    PreprocessConfig preprocess;
    PrepareOptions prepare;
    bool save_checkpoints = true;
    // Applied to the per-point transformer binding when prepare.encoder is unset.
    FeatureMode feature_mode = FeatureMode::kTokens;
    int max_tokens = 128;
};

/// Default runner: one shared split, encoded once per (preprocessing, family)
/// and reused across points; saves a checkpoint per run.
PointRunner make_point_runner(const DatasetSplit& split, RunnerOptions opts);

} // namespace hsd
