// Acceptance checks 1-9. Prints one PASS / FAIL / SKIP line per criterion and
// exits non-zero when any criterion fails.

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "hsd/corpus.hpp"
#include "hsd/error.hpp"
#include "hsd/evaluate.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/search.hpp"
#include "hsd/train.hpp"
#include "support/gradcheck.hpp"
#include "support/samples.hpp"
#include "support/synthetic.hpp"

using namespace hsd;
namespace fs = std::filesystem;

namespace {

enum class Outcome { kPass, kFail, kSkip };

struct Verdict {
    Outcome outcome = Outcome::kPass;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            outcome = Outcome::kFail;
            notes.push_back("failed: " + what);
        }
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// --- 1 ---------------------------------------------------------------------

Verdict preprocessing_fixtures() {
    Verdict v;
    const Preprocessor pre{PreprocessConfig{}};
    for (const auto& g : fixtures::kSampleTweets) {
        const auto out = pre(g.input);
        v.check(out == g.expected, "golden for \"" + std::string(g.input).substr(0, 30) + "...\" got \"" + out + "\"");
    }
    v.note("4 sample tweets match their goldens");
    return v;
}

// --- 2 ---------------------------------------------------------------------

Verdict split_arithmetic() {
    Verdict v;
    Dataset ds;
    for (std::size_t i = 0; i < 3843; ++i)
        ds.items.push_back({"r" + std::to_string(i), "t", (i * 7919) % 3843 < 1342 ? Label1A::kHof : Label1A::kNot,
                            std::nullopt});
    const auto first = stratified_split(ds, SplitSpec{});
    v.check(first.train.size() == 2690 && first.val.size() == 384 && first.test.size() == 769, "sizes 2690/384/769");
    std::map<int, std::size_t> total;
    for (const auto& it : ds.items) ++total[task_label_index(it, Task::k1A)];
    for (const Dataset* part : {&first.train, &first.val, &first.test}) {
        std::map<int, std::size_t> c;
        for (const auto& it : part->items) ++c[task_label_index(it, Task::k1A)];
        for (const auto& [label, n] : total) {
            const double expected = static_cast<double>(n) * part->size() / ds.size();
            v.check(std::abs(static_cast<double>(c[label]) - expected) <= 1.0, "class proportion within 1 item");
        }
    }
    const auto ids = [](const Dataset& d) {
        std::vector<std::string> out;
        for (const auto& it : d.items) out.push_back(it.id);
        return out;
    };
    for (int run = 0; run < 3; ++run) {
        const auto again = stratified_split(ds, SplitSpec{});
        v.check(ids(again.train) == ids(first.train) && ids(again.val) == ids(first.val) &&
                    ids(again.test) == ids(first.test),
                "rerun " + std::to_string(run + 1) + " identical");
    }
    v.note("2690/384/769, stratified within 1, 3 identical reruns");
    return v;
}

// --- 3 ---------------------------------------------------------------------

bool matches_oracle(const std::vector<std::vector<long>>& m) {
    const std::size_t k = m.size();
    ConfusionMatrix cm(static_cast<int>(k));
    long total = 0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            cm.at(static_cast<int>(i), static_cast<int>(j)) = m[i][j];
            total += m[i][j];
        }
    const auto r = f1_scores(cm);
    double macro = 0, weighted = 0;
    for (std::size_t c = 0; c < k; ++c) {
        long tp = m[c][c], fp = 0, fn = 0;
        for (std::size_t j = 0; j < k; ++j)
            if (j != c) {
                fp += m[j][c];
                fn += m[c][j];
            }
        const long d = 2 * tp + fp + fn;
        const double f = d == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(d);
        if (r.f1[c] != f) return false;
        macro += f;
        weighted += f * static_cast<double>(tp + fn);
    }
    macro /= static_cast<double>(k);
    weighted = total == 0 ? 0.0 : weighted / static_cast<double>(total);
    return r.macro_f1 == macro && r.weighted_f1 == weighted;
}

Verdict metric_oracle() {
    Verdict v;
    int two = 0, four = 0;
    for (long a = 0; a <= 4; ++a)
        for (long b = 0; b <= 4; ++b)
            for (long c = 0; c <= 4; ++c)
                for (long d = 0; d <= 4; ++d) two += matches_oracle({{a, b}, {c, d}});
    Rng rng(2024);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::vector<long>> m(4, std::vector<long>(4));
        for (auto& row : m)
            for (auto& x : row) x = static_cast<long>(rng.below(rng.below(2) ? 6 : 200));
        four += matches_oracle(m);
    }
    v.check(two == 625, std::to_string(two) + "/625 two-class matrices equal");
    v.check(four == 200, std::to_string(four) + "/200 four-class matrices equal");
    v.note(std::to_string(two) + "/625 two-class and " + std::to_string(four) + "/200 four-class exact");
    return v;
}

// --- 4 ---------------------------------------------------------------------

PointRunner counting_runner(std::atomic<int>& calls) {
    return [&calls](const GridPoint& p) {
        ++calls;
        ResultRow r;
        r.key = p.key;
        r.family = p.hyper.family;
        r.preprocessed = p.preprocessed;
        r.hyper = p.hyper;
        r.test_f1 = 0.5;
        return r;
    };
}

Verdict grid_completeness() {
    Verdict v;
    const auto n = [](Family f, std::vector<EncoderSize> e = {EncoderSize::kBase}) {
        return enumerate_grid(GridSpace::preset(f, std::move(e))).size();
    };
    v.check(n(Family::kCharLstm) == 36, "char grid 36");
    v.check(n(Family::kWordLstm) == 30, "word grid 30");
    v.check(n(Family::kBertFeatureGru) == 15, "feature grid 15 for base");
    v.check(n(Family::kBertFeatureGru, {EncoderSize::kLarge}) == 15, "feature grid 15 for large");

    const auto dir = fixtures::temp_dir("accept_resume");
    const auto space = GridSpace::preset(Family::kCharLstm);
    std::atomic<int> calls{0};
    GridOptions go;
    go.out = dir;
    run_grid(space, counting_runner(calls), go);
    std::vector<std::string> lines;
    {
        std::ifstream in(dir / "rows.jsonl");
        for (std::string l; std::getline(in, l);) lines.push_back(l);
    }
    const std::size_t kept = 29;
    {
        std::ofstream out(dir / "rows.jsonl", std::ios::trunc);
        for (std::size_t i = 0; i < kept; ++i) out << lines[i] << '\n';
        out << lines[kept].substr(0, 17); // torn write at the crash
    }
    calls = 0;
    const auto table = run_grid(space, counting_runner(calls), go);
    v.check(calls.load() == static_cast<int>(lines.size() - kept), "resume trained only the missing rows");
    v.check(table.rows.size() == lines.size(), "resumed table complete");
    calls = 0;
    run_grid(space, counting_runner(calls), go);
    v.check(calls.load() == 0, "complete grid recomputes nothing");
    v.note("36/30/15 points; resume after a crash at row " + std::to_string(kept) + " trained " +
           std::to_string(lines.size() - kept) + " of " + std::to_string(lines.size()) + " rows");
    return v;
}

// --- 5 ---------------------------------------------------------------------

Verdict overfit_smoke() {
    Verdict v;
    const auto ds = fixtures::separable_dataset(64);
    struct Case {
        const char* name;
        HyperParams hp;
        PrepareOptions po;
    };
    std::vector<Case> cases;
    {
        Case c{"Char_LSTM E=50 H=16", {}, {}};
        c.hp.family = Family::kCharLstm;
        c.hp.embedding_dim = 50;
        c.hp.hidden_dim = 16;
        cases.push_back(c);
    }
    {
        Case c{"Word_LSTM E=100 H=32", {}, {}};
        c.hp.family = Family::kWordLstm;
        c.hp.embedding_dim = 100;
        c.hp.hidden_dim = 32;
        c.po.min_freq = 1;
        cases.push_back(c);
    }
    {
        Case c{"feature-GRU stub W=16 H=16", {}, {}};
        c.hp.family = Family::kBertFeatureGru;
        c.hp.encoder = EncoderSize::kBase;
        c.hp.hidden_dim = 16;
        c.po.encoder = EncoderBinding::stub(16, 5);
        cases.push_back(c);
    }
    for (auto& c : cases) {
        c.po.feature_cache = std::nullopt;
        auto tm = prepare_model(c.hp, TaskMode::kBinary1A, PreprocessConfig{}, ds, c.po);
        TrainConfig cfg;
        cfg.max_epochs = 50;
        cfg.patience = 10;
        cfg.batch_size = 8;
        const auto h = train(tm, ds, ds, cfg);
        const double f1 = evaluate(tm, ds).macro_f1;
        v.check(f1 >= 0.95 && h.epochs.size() <= 50, std::string(c.name) + " train F1 " + fmt(f1));
        v.note(std::string(c.name) + ": train F1 " + fmt(f1) + " after " + std::to_string(h.epochs.size()) +
               " epochs (" + fmt(h.wall_time, 2) + " s)");
    }
    return v;
}

// --- 6 ---------------------------------------------------------------------

Verdict numerical_checks() {
    Verdict v;
    ModelSpec tiny;
    tiny.hyper.family = Family::kCharLstm;
    tiny.hyper.embedding_dim = 4;
    tiny.hyper.hidden_dim = 3;
    tiny.vocab_size = 10;
    auto m = build_model(tiny, nullptr, 5);
    const std::vector<ModelInput> batch{{{2, 3, 4, 0, 0}, 3, {}}, {{5, 6, 7, 8, 9}, 5, {}}, {{1, 0, 0, 0, 0}, 1, {}}};
    const std::vector<int> labels{1, 0, 1};
    const auto g = fixtures::gradient_check(*m, batch, labels);
    v.check(g.failures.empty() && g.checked > 0, "gradient check (" + std::to_string(g.failures.size()) + " entries off)");
    v.note("gradients: " + std::to_string(g.checked) + " entries, worst relative error " + fmt(g.worst * 1e6, 3) + "e-6");

    const std::vector<ModelInput> short_in{{{2, 3, 4}, 3, {}}};
    const std::vector<ModelInput> padded{{{2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 3, {}}, {{5, 6, 7, 8, 9, 1, 2, 3, 4, 5, 6, 7}, 12, {}}};
    const double diff = std::abs(m->logits(short_in)(0, 0) - m->logits(padded)(0, 0));
    std::ostringstream d;
    d << std::scientific << std::setprecision(2) << diff;
    v.check(diff < 1e-6, "pad invariance (diff " + d.str() + ")");
    v.note("pad invariance diff " + d.str());

    int matched = 0, total = 0;
    for (auto f : {Family::kCharLstm, Family::kWordLstm})
        for (const auto& hp : enumerate_grid(GridSpace::preset(f))) {
            ModelSpec s;
            s.hyper = hp;
            s.vocab_size = f == Family::kCharLstm ? 97 : 1500;
            ++total;
            matched += build_model(s, nullptr, 1)->parameter_count() == param_count(s);
        }
    v.check(total == 66 && matched == 66, "param_count on grid points " + std::to_string(matched) + "/" + std::to_string(total));
    v.note("param_count matches " + std::to_string(matched) + "/" + std::to_string(total) + " grid points");
    return v;
}

// --- 7 ---------------------------------------------------------------------

Verdict checkpoint_round_trip() {
    Verdict v;
    const auto ds = fixtures::separable_dataset(24);
    std::vector<std::pair<std::string, HyperParams>> cases;
    PrepareOptions po;
    po.feature_cache = std::nullopt;
    po.min_freq = 1;
    po.encoder = EncoderBinding::stub(8, 1);
    for (auto f : {Family::kCharLstm, Family::kWordLstm, Family::kBertFeatureGru}) {
        HyperParams hp;
        hp.family = f;
        hp.embedding_dim = 8;
        hp.hidden_dim = 4;
        hp.dropout = 0.25;
        if (f == Family::kBertFeatureGru) hp.encoder = EncoderSize::kBase;
        cases.emplace_back(std::string(to_string(f)), hp);
    }
    for (const auto& [name, hp] : cases) {
        auto tm = prepare_model(hp, TaskMode::kBinary1A, PreprocessConfig{}, ds, po);
        TrainConfig cfg;
        cfg.max_epochs = 2;
        cfg.patience = 1;
        train(tm, ds, ds, cfg);
        const auto dir = fixtures::temp_dir("accept_ckpt_" + name);
        save_checkpoint(tm, dir);
        const auto back = load_checkpoint(dir, std::nullopt);
        const bool same = tm.model->logits(tm.inputs(ds)) == back.model->logits(back.inputs(ds));
        v.check(same, name + " logits bit-exact after reload");
    }
    v.note("char, word and feature checkpoints reproduce logits bit-exactly");
    return v;
}

// --- 8 ---------------------------------------------------------------------

Verdict published_numbers() {
    Verdict v;
    const char* data = std::getenv("HSD_HASOC_DATA");
    if (!data || !fs::exists(data)) {
        v.outcome = Outcome::kSkip;
        v.note("HSD_HASOC_DATA not set: the HASOC 2021 English training TSV is not available here");
        return v;
    }
    const auto ds = load_tsv(data, Task::k1A);
    const auto split = stratified_split(ds, SplitSpec{});
    struct Target {
        const char* name;
        HyperParams hp;
        double reported;
    };
    HyperParams word;
    word.family = Family::kWordLstm;
    word.embedding_dim = 300;
    word.hidden_dim = 256;
    word.dropout = 0.25;
    HyperParams feature;
    feature.family = Family::kBertFeatureGru;
    feature.encoder = EncoderSize::kBase;
    feature.hidden_dim = 256;
    feature.dropout = 0.25;
    for (const Target& t : {Target{"Word_LSTM E=300 H=256 p=0.25", word, 0.83},
                            Target{"BERT-base feature GRU H=256 p=0.25", feature, 0.86}}) {
        PrepareOptions po;
        if (const char* glove = std::getenv("HSD_GLOVE"); glove && t.hp.family == Family::kWordLstm) {
            po.pretrained_vectors = fs::path(glove);
        }
        HyperParams hp = t.hp;
        hp.pretrained_embeddings = po.pretrained_vectors.has_value();
        try {
            auto tm = prepare_model(hp, TaskMode::kBinary1A, PreprocessConfig{}, split.train, po);
            train(tm, split.train, split.val, TrainConfig{});
            const double f1 = evaluate(tm, split.test).macro_f1;
            v.check(std::abs(f1 - t.reported) <= 0.05, std::string(t.name) + " macro-F1 " + fmt(f1) +
                                                           " vs reported " + fmt(t.reported, 2));
            v.note(std::string(t.name) + ": macro-F1 " + fmt(f1) + " (reported " + fmt(t.reported, 2) + ")");
        } catch (const EncoderUnavailable& e) {
            v.outcome = v.outcome == Outcome::kFail ? Outcome::kFail : Outcome::kSkip;
            v.note(std::string(t.name) + ": encoder weights unavailable");
        }
    }
    return v;
}

// --- 9 ---------------------------------------------------------------------

Verdict ablation_harness() {
    Verdict v;
    // Every preset grid pairs each hyperparameter setting with both preprocessing states.
    for (auto f : {Family::kCharLstm, Family::kWordLstm, Family::kBertFeatureGru, Family::kBertFinetune}) {
        std::atomic<int> calls{0};
        GridOptions go;
        go.out = fixtures::temp_dir("accept_pairs_" + std::string(to_string(f)));
        const auto table = run_grid(GridSpace::preset(f), counting_runner(calls), go);
        std::map<std::string, std::set<bool>> seen;
        for (const auto& r : table.rows) seen[r.hyper.to_json().dump()].insert(r.preprocessed);
        bool paired = !seen.empty();
        for (const auto& [k, flags] : seen) paired &= flags.size() == 2;
        v.check(paired, std::string(to_string(f)) + " rows paired");
    }
    // And with real training through the default runner.
    const auto ds = fixtures::separable_dataset(60);
    RunnerOptions ro;
    ro.train.max_epochs = 2;
    ro.train.patience = 1;
    ro.prepare.feature_cache = std::nullopt;
    ro.prepare.encoder = EncoderBinding::stub(8, 1);
    ro.save_checkpoints = false;
    const auto split = stratified_split(ds, SplitSpec{});
    auto space = GridSpace::preset(Family::kBertFeatureGru);
    space.hidden_dims = {32};
    space.dropouts = {0.25};
    GridOptions go;
    go.out = fixtures::temp_dir("accept_ablation_real");
    const auto table = run_grid(space, make_point_runner(split, ro), go);
    v.check(table.rows.size() == 2 && table.rows[0].hyper == table.rows[1].hyper &&
                table.rows[0].preprocessed != table.rows[1].preprocessed && table.rows[0].status == "ok" &&
                table.rows[1].status == "ok",
            "trained pair for identical hyperparameters");
    const auto md = table.to_markdown();
    v.check(md.find("| yes |") != std::string::npos && md.find("| no |") != std::string::npos,
            "markdown shows both rows");
    v.note("all four preset grids pair pre/raw rows; trained pair F1 pre " + fmt(table.rows[0].test_f1) + " raw " +
           fmt(table.rows[1].test_f1));
    return v;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"preprocessing fixtures", preprocessing_fixtures},
        {"split arithmetic", split_arithmetic},
        {"metric oracle equivalence", metric_oracle},
        {"grid completeness and resume", grid_completeness},
        {"overfit smoke tests", overfit_smoke},
        {"numerical checks", numerical_checks},
        {"checkpoint round-trip", checkpoint_round_trip},
        {"published F1 reproduction", published_numbers},
        {"preprocessing ablation harness", ablation_harness},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.outcome = Outcome::kFail;
            v.notes.push_back(std::string("exception: ") + e.what());
        }
        const char* tag = v.outcome == Outcome::kPass ? "PASS" : v.outcome == Outcome::kFail ? "FAIL" : "SKIP";
        failed += v.outcome == Outcome::kFail;
        std::cout << tag << " " << (i + 1) << " " << criteria[i].first;
        for (const auto& n : v.notes) std::cout << " | " << n;
        std::cout << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
