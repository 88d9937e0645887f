#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hsd/corpus.hpp"
#include "hsd/error.hpp"
#include "support/synthetic.hpp"

using namespace hsd;

namespace {

Dataset imbalanced(std::size_t n) {
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        LabeledText t;
        t.id = "r" + std::to_string(i);
        t.text = "text " + std::to_string(i);
        t.label_1a = (i * 7919) % 3843 < 1342 ? Label1A::kHof : Label1A::kNot;
        ds.items.push_back(t);
    }
    return ds;
}

std::map<int, std::size_t> counts(const Dataset& ds) {
    std::map<int, std::size_t> c;
    for (const auto& it : ds.items) ++c[task_label_index(it, ds.task)];
    return c;
}

std::vector<std::string> ids(const Dataset& ds) {
    std::vector<std::string> out;
    for (const auto& it : ds.items) out.push_back(it.id);
    return out;
}

} // namespace

TEST(Split, SizesFloorRemainder) {
    const auto s = split_sizes(3843, {0.7, 0.1, 0.2});
    EXPECT_EQ(s[0], 2690u);
    EXPECT_EQ(s[1], 384u);
    EXPECT_EQ(s[2], 769u);
}

TEST(Split, StratifiedCountsAndProportions) {
    const auto ds = imbalanced(3843);
    const auto split = stratified_split(ds, SplitSpec{});
    EXPECT_EQ(split.train.size(), 2690u);
    EXPECT_EQ(split.val.size(), 384u);
    EXPECT_EQ(split.test.size(), 769u);
    const auto total = counts(ds);
    const Dataset* parts[] = {&split.train, &split.val, &split.test};
    for (const auto* part : parts) {
        const auto c = counts(*part);
        for (const auto& [label, n] : total) {
            const double expected = static_cast<double>(n) * part->size() / ds.size();
            EXPECT_LE(std::abs(static_cast<double>(c.count(label) ? c.at(label) : 0) - expected), 1.0);
        }
    }
    std::set<std::string> seen;
    for (const auto* part : parts)
        for (const auto& id : ids(*part)) EXPECT_TRUE(seen.insert(id).second) << "duplicate " << id;
    EXPECT_EQ(seen.size(), ds.size());
}

TEST(Split, DeterministicAcrossReruns) {
    const auto ds = imbalanced(3843);
    const auto a = stratified_split(ds, SplitSpec{});
    for (int i = 0; i < 2; ++i) {
        const auto b = stratified_split(ds, SplitSpec{});
        EXPECT_EQ(ids(a.train), ids(b.train));
        EXPECT_EQ(ids(a.val), ids(b.val));
        EXPECT_EQ(ids(a.test), ids(b.test));
    }
    SplitSpec other;
    other.seed = 7;
    EXPECT_NE(ids(a.train), ids(stratified_split(ds, other).train));
}

TEST(Split, ManifestRebuildsSplit) {
    const auto ds = imbalanced(500);
    const auto a = stratified_split(ds, SplitSpec{});
    const auto b = apply_split_manifest(ds, a.manifest());
    EXPECT_EQ(ids(a.test), ids(b.test));
    EXPECT_EQ(a.manifest()["seed"], 42);
}

TEST(Split, UnstratifiedSizes) {
    SplitSpec spec;
    spec.stratified = false;
    const auto s = stratified_split(imbalanced(101), spec);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), 101u);
    EXPECT_EQ(s.train.size(), 70u);
}

TEST(Split, BadRatiosRejected) {
    SplitSpec spec;
    spec.ratios = {0.5, 0.5, 0.5};
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Tsv, RoundTrip) {
    const auto ds = fixtures::separable_dataset(20);
    std::stringstream buf;
    write_tsv(ds, buf);
    const auto back = parse_tsv(buf, Task::k1B, LabelPolicy::kRequired, "mem");
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(back.items[i].text, ds.items[i].text);
        EXPECT_EQ(back.items[i].label_1b, ds.items[i].label_1b);
    }
}

TEST(Tsv, HeaderOptionalAndUnlabeledAllowed) {
    std::stringstream in("a\thello\n b\tworld\n");
    const auto ds = parse_tsv(in, Task::k1A, LabelPolicy::kOptional, "mem");
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_FALSE(ds.labeled());
}

TEST(Tsv, MissingLabelIsDataError) {
    std::stringstream in("id\ttext\tlabel_1a\tlabel_1b\na\thello\t\t\n");
    EXPECT_THROW(parse_tsv(in, Task::k1A, LabelPolicy::kRequired, "mem"), DataError);
}

TEST(Tsv, UnknownLabelIsDataError) {
    std::stringstream in("a\thello\tMAYBE\tNONE\n");
    EXPECT_THROW(parse_tsv(in, Task::k1A, LabelPolicy::kRequired, "mem"), DataError);
}

TEST(Tsv, WriteRejectsTabsInText) {
    Dataset ds;
    ds.items.push_back({"x", "a\tb", Label1A::kNot, Label1B::kNone});
    std::stringstream out;
    EXPECT_THROW(write_tsv(ds, out), DataError);
}

TEST(Stats, Histogram) {
    const auto ds = fixtures::separable_dataset(30);
    const auto h = class_stats(ds);
    EXPECT_EQ(h.total, 30u);
    EXPECT_EQ(h.at("HOF"), 10u);
    EXPECT_EQ(h.at("NOT"), 20u);
}
