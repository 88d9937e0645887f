#include <gtest/gtest.h>

#include <vector>

#include "hsd/error.hpp"
#include "hsd/evaluate.hpp"
#include "hsd/random.hpp"

using namespace hsd;

namespace {

// Independent reference written from the precision/recall definitions.
struct Oracle {
    std::vector<double> f1;
    double macro = 0, weighted = 0;
};

Oracle brute_force(const std::vector<std::vector<long>>& m) {
    const std::size_t k = m.size();
    Oracle o;
    long total = 0;
    for (const auto& row : m)
        for (long v : row) total += v;
    for (std::size_t c = 0; c < k; ++c) {
        long tp = m[c][c], fp = 0, fn = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == c) continue;
            fp += m[j][c];
            fn += m[c][j];
        }
        const long denom = 2 * tp + fp + fn;
        const double f = denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
        o.f1.push_back(f);
        o.macro += f;
        o.weighted += f * static_cast<double>(tp + fn);
    }
    o.macro /= static_cast<double>(k);
    o.weighted = total == 0 ? 0.0 : o.weighted / static_cast<double>(total);
    return o;
}

ConfusionMatrix to_cm(const std::vector<std::vector<long>>& m) {
    ConfusionMatrix cm(static_cast<int>(m.size()));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size(); ++j) cm.at(static_cast<int>(i), static_cast<int>(j)) = m[i][j];
    return cm;
}

void expect_equal(const std::vector<std::vector<long>>& m) {
    const auto o = brute_force(m);
    const auto r = f1_scores(to_cm(m));
    ASSERT_EQ(r.f1.size(), o.f1.size());
    for (std::size_t c = 0; c < o.f1.size(); ++c) EXPECT_EQ(r.f1[c], o.f1[c]);
    EXPECT_EQ(r.macro_f1, o.macro);
    EXPECT_EQ(r.weighted_f1, o.weighted);
}

} // namespace

TEST(F1Oracle, AllTwoClassMatricesUpToFour) {
    int cases = 0;
    for (long a = 0; a <= 4; ++a)
        for (long b = 0; b <= 4; ++b)
            for (long c = 0; c <= 4; ++c)
                for (long d = 0; d <= 4; ++d) {
                    expect_equal({{a, b}, {c, d}});
                    ++cases;
                }
    EXPECT_EQ(cases, 625);
}

TEST(F1Oracle, RandomFourClassMatrices) {
    Rng rng(2024);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::vector<long>> m(4, std::vector<long>(4));
        for (auto& row : m)
            for (auto& v : row) v = static_cast<long>(rng.below(rng.below(2) ? 6 : 200));
        expect_equal(m);
    }
}

TEST(F1, AlwaysHofBaseline) {
    // 2501 HOF / 1342 NOT, classifier always answers HOF.
    ConfusionMatrix cm(2);
    cm.at(1, 1) = 2501;
    cm.at(0, 1) = 1342;
    const auto r = f1_scores(cm, {"NOT", "HOF"});
    EXPECT_EQ(r.f1[0], 0.0);
    EXPECT_NEAR(r.f1[1], 2.0 * 2501 / (2.0 * 2501 + 1342), 1e-15);
    EXPECT_NEAR(r.macro_f1, r.f1[1] / 2, 1e-15);
    EXPECT_FALSE(r.degenerate.empty());
}

TEST(F1, EmptyClassFlaggedDegenerate) {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 5;
    const auto r = f1_scores(cm, {"NOT", "HOF"});
    EXPECT_EQ(r.f1[1], 0.0);
    bool flagged = false;
    for (const auto& d : r.degenerate) flagged |= d == "f1[HOF]";
    EXPECT_TRUE(flagged);
}

TEST(Confusion, BuildAndCsv) {
    const std::vector<int> t{0, 1, 1, 2}, p{0, 1, 2, 2};
    const auto cm = confusion_matrix(t, p, 3);
    EXPECT_EQ(cm.at(1, 2), 1);
    EXPECT_EQ(cm.support(1), 2);
    EXPECT_EQ(cm.predicted(2), 2);
    const std::vector<std::string> names{"A", "B", "C"};
    EXPECT_EQ(cm.to_csv(names), "true\\pred,A,B,C\nA,1,0,0\nB,0,1,1\nC,0,0,1\n");
    const std::vector<int> bad{0, 3};
    EXPECT_THROW(confusion_matrix(bad, bad, 3), DataError);
    EXPECT_THROW(confusion_matrix(t, bad, 3), DataError);
}
