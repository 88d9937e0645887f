#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hsd/models.hpp"

namespace hsd::fixtures {

struct GradCheckResult {
    double worst = 0.0; // largest relative error seen
    std::size_t checked = 0;
    std::vector<std::string> failures;
};

/// Analytic gradients against central differences, sampling at most
/// `max_entries` entries per parameter. Entries where both values are below
/// 1e-7 are skipped; dropout must be 0 so training and eval forwards agree.
inline GradCheckResult gradient_check(Model& m, std::span<const ModelInput> batch, std::span<const int> labels,
                                      double tolerance = 1e-3, Eigen::Index max_entries = 1 << 30) {
    m.zero_grad();
    Rng rng(1);
    const auto logits = m.forward_train(batch, rng);
    m.backward(nn::classification_loss(logits, labels).grad);
    const auto loss = [&] { return nn::classification_loss(m.logits(batch), labels).loss; };
    GradCheckResult res;
    const double h = 1e-5;
    for (auto* p : m.parameters()) {
        const Eigen::Index n = p->value.size();
        const Eigen::Index stride = std::max<Eigen::Index>(1, n / max_entries);
        for (Eigen::Index i = 0; i < n; i += stride) {
            double& w = p->value.data()[i];
            const double orig = w;
            w = orig + h;
            const double up = loss();
            w = orig - h;
            const double down = loss();
            w = orig;
            const double numeric = (up - down) / (2 * h);
            const double analytic = p->grad.data()[i];
            const double scale = std::max(std::abs(numeric), std::abs(analytic));
            if (scale < 1e-7) continue;
            const double rel = std::abs(numeric - analytic) / scale;
            ++res.checked;
            res.worst = std::max(res.worst, rel);
            if (!(rel < tolerance))
                res.failures.push_back(p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) +
                                       " numeric " + std::to_string(numeric));
        }
    }
    return res;
}

} // namespace hsd::fixtures
