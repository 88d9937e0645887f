#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsd/corpus.hpp"

namespace hsd {

/// K x K counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int k = 2);

    int classes() const { return k_; }
    std::int64_t at(int truth, int predicted) const;
    std::int64_t& at(int truth, int predicted);
    std::int64_t total() const;
    std::int64_t support(int c) const;   // row sum
    std::int64_t predicted(int c) const; // column sum

    /// "true\pred,<names...>" header then one row per true class.
    std::string to_csv(std::span<const std::string> names) const;
    nlohmann::json to_json() const;
    bool operator==(const ConfusionMatrix&) const = default;

private:
    int k_;
    std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int k);

struct EvalReport {
    std::vector<std::string> classes;
    std::vector<double> precision, recall, f1;
    std::vector<std::int64_t> support;
    double macro_f1 = 0.0;
    double weighted_f1 = 0.0;
    double accuracy = 0.0;
    /// Metrics that hit 0/0 and were set to 0, e.g. "precision[HOF]".
    std::vector<std::string> degenerate;
    ConfusionMatrix confusion;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Per-class F1 = 2TP / (2TP + FP + FN), 0/0 -> 0; macro = mean over classes,
/// weighted = support-weighted mean. `names` defaults to "0", "1", ...
EvalReport f1_scores(const ConfusionMatrix& cm, std::vector<std::string> names = {});

struct TrainedModel;
struct Examples;
class Model;

/// Runs the model on a labeled dataset in eval mode. Throws DataError for
/// unlabeled data. In conditional 1B mode only HOF items are scored.
EvalReport evaluate(const TrainedModel& tm, const Dataset& ds);

/// Eval-mode report on already-encoded examples.
EvalReport evaluate(const Model& model, const Examples& data, TaskMode mode, int batch_size = 64);

} // namespace hsd
