#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

#include "hsd/error.hpp"
#include "hsd/search.hpp"
#include "support/synthetic.hpp"

using namespace hsd;
namespace fs = std::filesystem;

namespace {

/// Runner that fabricates a score from the hyperparameters and counts calls.
PointRunner fake_runner(std::atomic<int>& calls) {
    return [&calls](const GridPoint& p) {
        ++calls;
        ResultRow r;
        r.key = p.key;
        r.family = p.hyper.family;
        r.preprocessed = p.preprocessed;
        r.hyper = p.hyper;
        r.test_f1 = 0.5 + 0.001 * p.hyper.hidden_dim + (p.preprocessed ? 0.01 : 0.0);
        r.val_f1 = r.test_f1;
        r.params = static_cast<std::size_t>(p.hyper.hidden_dim);
        return r;
    };
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

} // namespace

TEST(Grid, PresetSizes) {
    EXPECT_EQ(enumerate_grid(GridSpace::preset(Family::kCharLstm)).size(), 36u);
    EXPECT_EQ(enumerate_grid(GridSpace::preset(Family::kWordLstm)).size(), 30u);
    EXPECT_EQ(enumerate_grid(GridSpace::preset(Family::kBertFeatureGru)).size(), 15u);
    EXPECT_EQ(enumerate_grid(GridSpace::preset(Family::kBertFeatureGru, {EncoderSize::kBase, EncoderSize::kLarge})).size(), 30u);
    EXPECT_EQ(enumerate_grid(GridSpace::preset(Family::kBertFinetune, {EncoderSize::kBase, EncoderSize::kLarge})).size(), 2u);
}

TEST(Grid, PointsAreDistinctAndInPublishedGrids) {
    for (auto f : {Family::kCharLstm, Family::kWordLstm, Family::kBertFeatureGru}) {
        std::set<std::string> keys;
        for (const auto& hp : enumerate_grid(GridSpace::preset(f))) {
            EXPECT_NO_THROW(hp.validate(true));
            EXPECT_TRUE(keys.insert(row_key(hp, true)).second);
        }
    }
}

TEST(Grid, JsonRoundTrip) {
    auto g = GridSpace::preset(Family::kWordLstm);
    g.hidden_dims = {32, 64};
    const auto back = GridSpace::from_json(g.to_json());
    EXPECT_EQ(back.hidden_dims, g.hidden_dims);
    EXPECT_EQ(back.points(), g.points());
}

TEST(Grid, EmptyAxisRejected) {
    auto g = GridSpace::preset(Family::kCharLstm);
    g.dropouts.clear();
    EXPECT_THROW(g.validate(), ConfigError);
}

TEST(RunGrid, WritesEveryPointWithAndWithoutPreprocessing) {
    const auto dir = fixtures::temp_dir("grid_full");
    std::atomic<int> calls{0};
    GridOptions go;
    go.out = dir;
    const auto table = run_grid(GridSpace::preset(Family::kCharLstm), fake_runner(calls), go);
    EXPECT_EQ(calls.load(), 72);
    EXPECT_EQ(table.rows.size(), 72u);
    EXPECT_EQ(read_lines(dir / "rows.jsonl").size(), 72u);
    for (const char* f : {"results.csv", "results.md", "results.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;

    // Every hyperparameter setting has a preprocessed and a raw row.
    std::map<std::string, std::set<bool>> seen;
    for (const auto& r : table.rows) seen[r.hyper.to_json().dump()].insert(r.preprocessed);
    EXPECT_EQ(seen.size(), 36u);
    for (const auto& [k, flags] : seen) EXPECT_EQ(flags.size(), 2u) << k;

    int best = 0;
    for (const auto& r : table.rows) best += r.best;
    EXPECT_EQ(best, 1);
}

TEST(RunGrid, ResumeAfterCrashRecomputesNothing) {
    const auto dir = fixtures::temp_dir("grid_resume");
    const auto space = GridSpace::preset(Family::kWordLstm);
    std::atomic<int> calls{0};
    GridOptions go;
    go.out = dir;
    run_grid(space, fake_runner(calls), go);
    ASSERT_EQ(calls.load(), 60);

    // Simulate a crash after 23 committed rows with a half-written 24th.
    auto lines = read_lines(dir / "rows.jsonl");
    {
        std::ofstream out(dir / "rows.jsonl", std::ios::trunc);
        for (int i = 0; i < 23; ++i) out << lines[static_cast<std::size_t>(i)] << '\n';
        out << lines[23].substr(0, lines[23].size() / 2);
    }
    calls = 0;
    int resumed = 0;
    go.on_row = [&](const ResultRow&, bool was_resumed) { resumed += was_resumed; };
    const auto table = run_grid(space, fake_runner(calls), go);
    EXPECT_EQ(calls.load(), 60 - 23);
    EXPECT_EQ(resumed, 23);
    EXPECT_EQ(table.rows.size(), 60u);
    EXPECT_EQ(read_lines(dir / "rows.jsonl").size(), 60u);

    // A complete log means a rerun trains nothing.
    calls = 0;
    run_grid(space, fake_runner(calls), go);
    EXPECT_EQ(calls.load(), 0);
}

TEST(RunGrid, ParallelJobsProduceSameTable) {
    std::atomic<int> c1{0}, c2{0};
    GridOptions a, b;
    a.out = fixtures::temp_dir("grid_serial");
    b.out = fixtures::temp_dir("grid_parallel");
    b.jobs = 3;
    const auto space = GridSpace::preset(Family::kBertFeatureGru);
    const auto t1 = run_grid(space, fake_runner(c1), a);
    const auto t2 = run_grid(space, fake_runner(c2), b);
    ASSERT_EQ(t1.rows.size(), t2.rows.size());
    for (std::size_t i = 0; i < t1.rows.size(); ++i) EXPECT_EQ(t1.rows[i].key, t2.rows[i].key);
}

TEST(RunGrid, FailuresBecomeRows) {
    const auto dir = fixtures::temp_dir("grid_fail");
    GridOptions go;
    go.out = dir;
    auto space = GridSpace::preset(Family::kCharLstm);
    space.hidden_dims = {16};
    space.dropouts = {0.5};
    space.embedding_dims = {50};
    const auto table = run_grid(space, [](const GridPoint&) -> ResultRow { throw TrainingError("boom"); }, go);
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_EQ(table.rows[0].status, "failed");
    EXPECT_NE(table.rows[0].error.find("boom"), std::string::npos);
}

TEST(Results, BestTieBreaksOnFewerParams) {
    ResultsTable t;
    for (int i = 0; i < 3; ++i) {
        ResultRow r;
        r.family = Family::kCharLstm;
        r.hyper.family = Family::kCharLstm;
        r.hyper.hidden_dim = 16 * (i + 1);
        r.key = row_key(r.hyper, true);
        r.test_f1 = i == 0 ? 0.7 : 0.8;
        r.params = i == 1 ? 100 : 50;
        t.rows.push_back(r);
    }
    t.mark_best();
    EXPECT_FALSE(t.rows[0].best);
    EXPECT_FALSE(t.rows[1].best);
    EXPECT_TRUE(t.rows[2].best);
}

TEST(Results, CsvAndJsonlLoadAgree) {
    const auto dir = fixtures::temp_dir("grid_load");
    std::atomic<int> calls{0};
    GridOptions go;
    go.out = dir;
    const auto table = run_grid(GridSpace::preset(Family::kBertFeatureGru), fake_runner(calls), go);
    const auto from_csv = ResultsTable::load(dir / "results.csv");
    const auto from_jsonl = ResultsTable::load(dir / "rows.jsonl");
    const auto from_dir = ResultsTable::load(dir);
    ASSERT_EQ(from_csv.rows.size(), table.rows.size());
    ASSERT_EQ(from_jsonl.rows.size(), table.rows.size());
    ASSERT_EQ(from_dir.rows.size(), table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        EXPECT_EQ(from_csv.rows[i].key, table.rows[i].key);
        EXPECT_EQ(from_csv.rows[i].test_f1, table.rows[i].test_f1);
        EXPECT_EQ(from_jsonl.rows[i].hyper, table.rows[i].hyper);
    }
    EXPECT_EQ(from_csv.to_markdown(), table.to_markdown());
}

TEST(Results, MarkdownLayout) {
    const auto dir = fixtures::temp_dir("grid_md");
    std::atomic<int> calls{0};
    GridOptions go;
    go.out = dir;
    const auto table = run_grid(GridSpace::preset(Family::kWordLstm), fake_runner(calls), go);
    const auto md = table.to_markdown();
    EXPECT_NE(md.find("| Model name | Pre-processed | Embedding dimension |"), std::string::npos) << md;
    EXPECT_NE(md.find("Word_LSTM"), std::string::npos);
    EXPECT_NE(md.find("**"), std::string::npos);
    const auto ref = table.to_markdown(true);
    EXPECT_NE(ref.find("Reported F1"), std::string::npos) << ref;
}

TEST(Results, ReferenceRowsCoverPublishedTables) {
    std::map<Family, int> per_family;
    for (const auto& r : reference_rows()) ++per_family[r.family];
    EXPECT_GT(per_family[Family::kCharLstm], 0);
    EXPECT_GT(per_family[Family::kWordLstm], 0);
    EXPECT_GT(per_family[Family::kBertFeatureGru], 0);
    EXPECT_GT(per_family[Family::kBertFinetune], 0);
}

TEST(Runner, RealTrainingProducesAblationPairs) {
    const auto ds = fixtures::separable_dataset(60);
    const auto split = stratified_split(ds, SplitSpec{});
    RunnerOptions ro;
    ro.train.max_epochs = 2;
    ro.train.patience = 1;
    ro.prepare.feature_cache = std::nullopt;
    ro.save_checkpoints = true;
    auto space = GridSpace::preset(Family::kCharLstm);
    space.embedding_dims = {50};
    space.hidden_dims = {16};
    space.dropouts = {0.25, 0.5};
    GridOptions go;
    go.out = fixtures::temp_dir("grid_real");
    const auto table = run_grid(space, make_point_runner(split, ro), go);
    ASSERT_EQ(table.rows.size(), 4u);
    for (const auto& r : table.rows) {
        EXPECT_EQ(r.status, "ok") << r.error;
        EXPECT_TRUE(fs::exists(fs::path(r.checkpoint) / "manifest.json")) << r.checkpoint;
        EXPECT_GT(r.params, 0u);
    }
    EXPECT_TRUE(table.rows[0].hyper == table.rows[2].hyper || table.rows[0].hyper == table.rows[1].hyper);
}
