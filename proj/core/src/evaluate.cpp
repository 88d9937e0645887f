#include "hsd/evaluate.hpp"

#include <iomanip>
#include <sstream>

#include "hsd/error.hpp"
#include "hsd/train.hpp"

namespace hsd {

ConfusionMatrix::ConfusionMatrix(int k) : k_(k) {
    if (k < 1) throw ConfigError("confusion matrix needs at least one class");
    counts_.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0);
}

std::int64_t ConfusionMatrix::at(int truth, int predicted) const {
    return counts_.at(static_cast<std::size_t>(truth * k_ + predicted));
}

std::int64_t& ConfusionMatrix::at(int truth, int predicted) {
    return counts_.at(static_cast<std::size_t>(truth * k_ + predicted));
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t n = 0;
    for (auto c : counts_) n += c;
    return n;
}

std::int64_t ConfusionMatrix::support(int c) const {
    std::int64_t n = 0;
    for (int j = 0; j < k_; ++j) n += at(c, j);
    return n;
}

std::int64_t ConfusionMatrix::predicted(int c) const {
    std::int64_t n = 0;
    for (int i = 0; i < k_; ++i) n += at(i, c);
    return n;
}

std::string ConfusionMatrix::to_csv(std::span<const std::string> names) const {
    std::ostringstream out;
    out << "true\\pred";
    for (int j = 0; j < k_; ++j)
        out << ',' << (static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)] : std::to_string(j));
    out << '\n';
    for (int i = 0; i < k_; ++i) {
        out << (static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)] : std::to_string(i));
        for (int j = 0; j < k_; ++j) out << ',' << at(i, j);
        out << '\n';
    }
    return out.str();
}

nlohmann::json ConfusionMatrix::to_json() const {
    auto rows = nlohmann::json::array();
    for (int i = 0; i < k_; ++i) {
        auto row = nlohmann::json::array();
        for (int j = 0; j < k_; ++j) row.push_back(at(i, j));
        rows.push_back(row);
    }
    return rows;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int k) {
    if (y_true.size() != y_pred.size())
        throw DataError("confusion_matrix: " + std::to_string(y_true.size()) + " true labels but " +
                        std::to_string(y_pred.size()) + " predictions");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || t >= k || p < 0 || p >= k)
            throw DataError("confusion_matrix: label out of range [0, " + std::to_string(k) +
                            ") at index " + std::to_string(i));
        ++cm.at(t, p);
    }
    return cm;
}

EvalReport f1_scores(const ConfusionMatrix& cm, std::vector<std::string> names) {
    const int k = cm.classes();
    if (names.empty())
        for (int c = 0; c < k; ++c) names.push_back(std::to_string(c));
    if (static_cast<int>(names.size()) != k)
        throw ConfigError("f1_scores: " + std::to_string(names.size()) + " class names for " +
                          std::to_string(k) + " classes");
    EvalReport r;
    r.classes = std::move(names);
    r.confusion = cm;
    const std::int64_t total = cm.total();
    std::int64_t diagonal = 0;
    double weighted = 0.0, macro = 0.0;
    for (int c = 0; c < k; ++c) {
        const std::int64_t tp = cm.at(c, c);
        const std::int64_t fp = cm.predicted(c) - tp;
        const std::int64_t fn = cm.support(c) - tp;
        const auto& name = r.classes[static_cast<std::size_t>(c)];
        auto ratio = [&](std::int64_t num, std::int64_t den, const char* metric) {
            if (den == 0) {
                r.degenerate.push_back(std::string(metric) + "[" + name + "]");
                return 0.0;
            }
            return static_cast<double>(num) / static_cast<double>(den);
        };
        r.precision.push_back(ratio(tp, tp + fp, "precision"));
        r.recall.push_back(ratio(tp, tp + fn, "recall"));
        r.f1.push_back(ratio(2 * tp, 2 * tp + fp + fn, "f1"));
        r.support.push_back(tp + fn);
        diagonal += tp;
        macro += r.f1.back();
        weighted += static_cast<double>(tp + fn) * r.f1.back();
    }
    r.macro_f1 = macro / k;
    r.weighted_f1 = total > 0 ? weighted / static_cast<double>(total) : 0.0;
    r.accuracy = total > 0 ? static_cast<double>(diagonal) / static_cast<double>(total) : 0.0;
    return r;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t c = 0; c < classes.size(); ++c)
        per_class.push_back({{"class", classes[c]},
                             {"precision", precision[c]},
                             {"recall", recall[c]},
                             {"f1", f1[c]},
                             {"support", support[c]}});
    return {{"per_class", per_class},
            {"macro_f1", macro_f1},
            {"weighted_f1", weighted_f1},
            {"accuracy", accuracy},
            {"total", confusion.total()},
            {"degenerate", degenerate},
            {"classes", classes},
            {"confusion_matrix", confusion.to_json()}};
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(10) << "class" << std::right << std::setw(11) << "precision"
        << std::setw(9) << "recall" << std::setw(9) << "f1" << std::setw(10) << "support" << '\n';
    for (std::size_t c = 0; c < classes.size(); ++c)
        out << std::left << std::setw(10) << classes[c] << std::right << std::setw(11) << precision[c]
            << std::setw(9) << recall[c] << std::setw(9) << f1[c] << std::setw(10) << support[c] << '\n';
    out << '\n'
        << "macro F1     " << macro_f1 << '\n'
        << "weighted F1  " << weighted_f1 << '\n'
        << "accuracy     " << accuracy << '\n'
        << "examples     " << confusion.total() << '\n';
    if (!degenerate.empty()) {
        out << "zero-division (reported as 0):";
        for (const auto& d : degenerate) out << ' ' << d;
        out << '\n';
    }
    return out.str();
}

EvalReport evaluate(const TrainedModel& tm, const Dataset& ds) {
    if (!ds.labeled())
        throw DataError("evaluate: dataset '" + ds.provenance.source +
                        "' is unlabeled; use `predict` to label it");
    const auto targets = task_targets(ds, tm.pipeline.task_mode);
    const auto predictions = tm.predict(ds, targets.indices);
    const auto names = class_names(tm.pipeline.task_mode);
    return f1_scores(confusion_matrix(targets.labels, predictions, num_classes(tm.pipeline.task_mode)),
                     {names.begin(), names.end()});
}

EvalReport evaluate(const Model& model, const Examples& data, TaskMode mode, int batch_size) {
    std::vector<int> predicted;
    predicted.reserve(data.size());
    const auto chunk = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
        const std::size_t end = std::min(data.size(), begin + chunk);
        for (int p : decide(model.logits({data.inputs.data() + begin, end - begin}))) predicted.push_back(p);
    }
    const auto names = class_names(mode);
    return f1_scores(confusion_matrix(data.labels, predicted, num_classes(mode)), {names.begin(), names.end()});
}

} // namespace hsd
