#include "hsd_cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hsd/corpus.hpp"
#include "hsd/error.hpp"
#include "hsd/evaluate.hpp"
#include "hsd/labels.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/pretrained.hpp"
#include "hsd/search.hpp"
#include "hsd/tensor_io.hpp"
#include "hsd/train.hpp"

namespace hsd::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::vector<std::string> argv;
    bool quiet = false;

    void log(const std::string& msg) const {
        if (!quiet) err << "[hsd] " << msg << '\n';
    }
};

/// run.json for a directory artifact, <stem>.run.json next to a file artifact.
fs::path run_json_path(const fs::path& artifact, bool is_directory) {
    if (is_directory) return artifact / "run.json";
    auto p = artifact;
    p.replace_extension();
    p += ".run.json";
    return p;
}

void write_run_json(const Context& ctx, const fs::path& path, const std::string& command, json resolved) {
    json j{{"command", command},
           {"argv", ctx.argv},
           {"resolved", std::move(resolved)},
           {"version", kVersion},
           {"created_at", utc_timestamp()}};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, j.dump(2) + "\n");
}

void log_resolved(const Context& ctx, const json& resolved) {
    for (const auto& [key, value] : resolved.items()) ctx.log("  " + key + " = " + value.dump());
}

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

// --- shared option groups --------------------------------------------------

struct PreprocessFlags {
    bool no_mentions = false, no_links = false, no_emojis = false, no_whitespace = false;
    bool lowercase = false;
    std::string emoji_table;

    void add(CLI::App* app) {
        app->add_flag("--no-mentions", no_mentions, "Keep @handles");
        app->add_flag("--no-links", no_links, "Keep URLs");
        app->add_flag("--no-emojis", no_emojis, "Keep emoji characters");
        app->add_flag("--no-whitespace", no_whitespace, "Keep whitespace runs");
        app->add_flag("--lowercase", lowercase, "Lowercase ASCII letters after the other rules");
        app->add_option("--emoji-table", emoji_table, "Emoji table JSON (default: bundled table)")
            ->check(CLI::ExistingFile);
    }

    PreprocessConfig config() const {
        if (!emoji_table.empty()) ::setenv("HSD_EMOJI_TABLE", emoji_table.c_str(), 1);
        PreprocessConfig c;
        c.replace_mentions = !no_mentions;
        c.replace_links = !no_links;
        c.replace_emojis = !no_emojis;
        c.collapse_whitespace = !no_whitespace;
        c.lowercase = lowercase;
        if (c.replace_emojis) c.emoji_table_version = EmojiTable::load(default_emoji_table_path()).version();
        c.validate();
        return c;
    }
};

struct TrainFlags {
    std::optional<int> epochs, batch_size, patience;
    std::optional<double> lr, clip;

    void add(CLI::App* app) {
        app->add_option("--epochs", epochs, "Maximum epochs (default 50; fine-tuning 3)");
        app->add_option("--batch-size", batch_size, "Mini-batch size (default 32)");
        app->add_option("--patience", patience, "Early-stopping patience on validation macro-F1");
        app->add_option("--lr", lr, "Adam learning rate (default 1e-3; fine-tuning 2e-5)");
        app->add_option("--clip", clip, "Gradient-norm clip, 0 disables (default 5; fine-tuning 0)");
    }

    TrainConfig config(Family family, std::uint64_t seed) const {
        auto cfg = TrainConfig::for_family(family);
        cfg.seed = seed;
        if (epochs) cfg.max_epochs = *epochs;
        if (batch_size) cfg.batch_size = *batch_size;
        if (patience) cfg.patience = *patience;
        else if (cfg.patience >= cfg.max_epochs) cfg.patience = std::max(1, cfg.max_epochs - 1);
        if (lr) cfg.learning_rate = *lr;
        if (clip) cfg.clip_norm = *clip;
        cfg.validate();
        return cfg;
    }
};

struct EncoderFlags {
    std::string encoder_dir;
    std::string feature_cache;
    int stub_width = 0;
    std::uint64_t stub_seed = 0;
    std::string feature_mode = "tokens";
    int max_tokens = 128;

    void add(CLI::App* app) {
        app->add_option("--encoder-dir", encoder_dir, "Root holding base/ and large/ encoder weights (env HSD_ENCODER_DIR)");
        app->add_option("--feature-cache", feature_cache, "Feature cache directory (env HSD_FEATURE_CACHE)");
        app->add_option("--stub-width", stub_width, "Use the deterministic stub encoder with this width");
        app->add_option("--stub-seed", stub_seed, "Seed of the stub encoder");
        app->add_option("--feature-mode", feature_mode, "tokens (sequence into the GRU) or pooled")
            ->check(CLI::IsMember({"tokens", "pooled"}));
        app->add_option("--max-tokens", max_tokens, "Encoder token budget including special tokens");
    }

    void apply_env() const {
        if (!encoder_dir.empty()) ::setenv("HSD_ENCODER_DIR", encoder_dir.c_str(), 1);
    }

    std::optional<fs::path> cache() const {
        if (!feature_cache.empty()) return fs::path(feature_cache);
        return default_feature_cache();
    }

    std::optional<EncoderBinding> binding(EncoderSize size) const {
        EncoderBinding b = stub_width > 0 ? EncoderBinding::stub(stub_width, stub_seed, max_tokens)
                                          : EncoderBinding::transformer(size, max_tokens);
        b.mode = parse_feature_mode(feature_mode);
        return b;
    }
};

Dataset load_labeled(const fs::path& path, TaskMode mode) {
    return load_tsv(path, dataset_task(mode), LabelPolicy::kRequired);
}

std::array<double, 3> ratio_triple(const std::vector<double>& r) {
    if (r.size() != 3) throw ConfigError("--ratios needs three comma-separated values");
    return {r[0], r[1], r[2]};
}

void report_warnings(const Context& ctx, const Dataset& ds) {
    for (const auto& w : ds.warnings) ctx.log("warning: " + w);
}

// --- ingest ----------------------------------------------------------------

struct IngestCmd {
    std::string in, out, task = "1a";
    bool allow_unlabeled = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("ingest", "Validate a TSV dataset and report class statistics");
        app->add_option("--in", in, "Input TSV (id, text, label_1a, label_1b)")->required()->check(CLI::ExistingFile);
        app->add_option("--task", task, "Label column to require: 1a or 1b")->check(CLI::IsMember({"1a", "1b", "1A", "1B"}));
        app->add_option("--out", out, "Output directory")->required();
        app->add_flag("--allow-unlabeled", allow_unlabeled, "Accept rows without labels (prediction input)");
        app->callback([this] { selected = true; });
    }
    bool selected = false;

    void run(const Context& ctx) const {
        const auto policy = allow_unlabeled ? LabelPolicy::kOptional : LabelPolicy::kRequired;
        const auto ds = load_tsv(in, parse_task(task), policy);
        report_warnings(ctx, ds);
        fs::create_directories(out);
        write_tsv(ds, fs::path(out) / "dataset.tsv");
        json stats{{"rows", ds.size()}, {"task", std::string(to_string(ds.task))}, {"warnings", ds.warnings},
                   {"labeled", ds.labeled()}};
        if (ds.labeled()) stats["classes"] = class_stats(ds).to_json();
        write_file_atomic(fs::path(out) / "stats.json", stats.dump(2) + "\n");
        ctx.out << stats.dump(2) << '\n';
        write_run_json(ctx, run_json_path(out, true), "ingest",
                       {{"in", in}, {"task", task}, {"allow_unlabeled", allow_unlabeled}, {"out", out}});
    }
};

// --- preprocess ------------------------------------------------------------

struct PreprocessCmd {
    std::string in, out;
    PreprocessFlags flags;
    bool selected = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("preprocess", "Normalise mentions, links, emojis and whitespace");
        app->add_option("--in", in, "Input TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--out", out, "Output TSV")->required();
        flags.add(app);
        app->callback([this] { selected = true; });
    }

    void run(const Context& ctx) const {
        const auto cfg = flags.config();
        log_resolved(ctx, cfg.to_json());
        auto ds = load_tsv(in, Task::k1A, LabelPolicy::kOptional);
        report_warnings(ctx, ds);
        const Preprocessor pre(cfg);
        for (auto& item : ds.items) item.text = pre(item.text);
        ensure_parent(out);
        write_tsv(ds, fs::path(out));
        ctx.log("wrote " + std::to_string(ds.size()) + " rows to " + out);
        write_run_json(ctx, run_json_path(out, false), "preprocess",
                       {{"in", in}, {"out", out}, {"preprocess", cfg.to_json()}});
    }
};

// --- split -----------------------------------------------------------------

struct SplitCmd {
    std::string in, out = "splits", task = "1a";
    std::vector<double> ratios{0.7, 0.1, 0.2};
    std::uint64_t seed = 42;
    bool no_stratify = false;
    bool selected = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("split", "Seeded stratified train/validation/test split");
        app->add_option("--in", in, "Labeled input TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--out", out, "Output directory (default: splits)");
        app->add_option("--task", task, "Label column used for stratification")->check(CLI::IsMember({"1a", "1b", "1A", "1B"}));
        app->add_option("--ratios", ratios, "train,val,test ratios")->delimiter(',')->expected(3);
        app->add_option("--seed", seed, "Split seed");
        app->add_flag("--no-stratify", no_stratify, "Plain shuffled split");
        app->callback([this] { selected = true; });
    }

    void run(const Context& ctx) const {
        const auto ds = load_tsv(in, parse_task(task), LabelPolicy::kRequired);
        report_warnings(ctx, ds);
        SplitSpec spec;
        spec.ratios = ratio_triple(ratios);
        spec.seed = seed;
        spec.stratified = !no_stratify;
        const auto split = stratified_split(ds, spec);
        const fs::path dir(out);
        fs::create_directories(dir);
        write_tsv(split.train, dir / "train.tsv");
        write_tsv(split.val, dir / "val.tsv");
        write_tsv(split.test, dir / "test.tsv");
        auto manifest = split.manifest();
        manifest["source"] = in;
        write_file_atomic(dir / "split.json", manifest.dump(2) + "\n");
        ctx.out << "train " << split.train.size() << ", val " << split.val.size() << ", test "
                << split.test.size() << '\n';
        write_run_json(ctx, run_json_path(dir, true), "split",
                       {{"in", in}, {"task", task}, {"ratios", ratios}, {"seed", seed},
                        {"stratified", spec.stratified}, {"out", out}});
    }
};

// --- train -----------------------------------------------------------------

struct ModelFlags {
    std::string family;
    std::string task = "1a";
    std::optional<int> embedding_dim, hidden_dim;
    std::optional<double> dropout;
    int layers = 1;
    std::string encoder = "base";
    std::string glove;
    int max_len = 0, min_freq = 0;
    bool grid_constrained = false;

    void add(CLI::App* app) {
        app->add_option("--family", family, "char_lstm | word_lstm | bert_feature_gru | bert_finetune")
            ->required()
            ->check(CLI::IsMember({"char_lstm", "word_lstm", "bert_feature_gru", "bert_finetune"}));
        app->add_option("--task", task, "1a | 1b-flat | 1b-conditional")
            ->check(CLI::IsMember({"1a", "1b", "1b-flat", "1b-conditional"}));
        app->add_option("--embedding-dim", embedding_dim, "Embedding dimension E");
        app->add_option("--hidden-dim", hidden_dim, "Recurrent hidden dimension H");
        app->add_option("--dropout", dropout, "Dropout on the final state");
        app->add_option("--layers", layers, "Stacked recurrent layers");
        app->add_option("--encoder", encoder, "Encoder variant: base or large")->check(CLI::IsMember({"base", "large"}));
        app->add_option("--glove", glove, "Pretrained word vectors (word_lstm)")->check(CLI::ExistingFile);
        app->add_option("--max-len", max_len, "Sequence length (default 280 chars / 64 words)");
        app->add_option("--min-freq", min_freq, "Vocabulary frequency cut-off (default 1 chars / 2 words)");
        app->add_flag("--grid-constrained", grid_constrained, "Reject values outside the published grids");
    }

    HyperParams hyper() const {
        HyperParams hp;
        hp.family = parse_family(family);
        hp.layers = layers;
        switch (hp.family) {
        case Family::kCharLstm:
            hp.embedding_dim = embedding_dim.value_or(200);
            hp.hidden_dim = hidden_dim.value_or(16);
            hp.dropout = dropout.value_or(0.5);
            break;
        case Family::kWordLstm:
            hp.embedding_dim = embedding_dim.value_or(300);
            hp.hidden_dim = hidden_dim.value_or(256);
            hp.dropout = dropout.value_or(0.25);
            hp.pretrained_embeddings = !glove.empty();
            break;
        case Family::kBertFeatureGru:
            hp.encoder = parse_encoder_size(encoder);
            hp.hidden_dim = hidden_dim.value_or(256);
            hp.dropout = dropout.value_or(0.25);
            break;
        case Family::kBertFinetune:
            hp.encoder = parse_encoder_size(encoder);
            hp.dropout = dropout.value_or(kFinetuneDropout);
            break;
        }
        return hp;
    }
};

struct TrainCmd {
    ModelFlags model;
    TrainFlags train_flags;
    EncoderFlags enc;
    PreprocessFlags pre_flags;
    bool no_preprocess = false;
    std::string train_path, val_path, test_path, data_path, out;
    std::vector<double> ratios{0.7, 0.1, 0.2};
    std::uint64_t seed = 42;
    bool selected = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("train", "Train one model and write a checkpoint");
        model.add(app);
        train_flags.add(app);
        enc.add(app);
        pre_flags.add(app);
        app->add_flag("--no-preprocess", no_preprocess, "Train on raw text");
        app->add_option("--train", train_path, "Training TSV")->check(CLI::ExistingFile);
        app->add_option("--val", val_path, "Validation TSV")->check(CLI::ExistingFile);
        app->add_option("--test", test_path, "Optional test TSV, scored after training")->check(CLI::ExistingFile);
        app->add_option("--data", data_path, "Single labeled TSV split internally (instead of --train/--val)")
            ->check(CLI::ExistingFile);
        app->add_option("--ratios", ratios, "Split ratios used with --data")->delimiter(',')->expected(3);
        app->add_option("--seed", seed, "Seed for initialisation, shuffling and the --data split");
        app->add_option("--out", out, "Checkpoint directory")->required();
        app->callback([this] { selected = true; });
    }

    void run(const Context& ctx) const {
        enc.apply_env();
        const auto mode = parse_task_mode(model.task);
        const auto hp = model.hyper();
        const auto cfg = train_flags.config(hp.family, seed);

        Dataset train_ds, val_ds;
        std::optional<Dataset> test_ds;
        if (!data_path.empty()) {
            if (!train_path.empty() || !val_path.empty())
                throw ConfigError("use either --data or --train/--val");
            SplitSpec spec;
            spec.ratios = ratio_triple(ratios);
            spec.seed = seed;
            auto split = stratified_split(load_labeled(data_path, mode), spec);
            train_ds = std::move(split.train);
            val_ds = std::move(split.val);
            test_ds = std::move(split.test);
        } else {
            if (train_path.empty() || val_path.empty()) throw ConfigError("train needs --train and --val, or --data");
            train_ds = load_labeled(train_path, mode);
            val_ds = load_labeled(val_path, mode);
            if (!test_path.empty()) test_ds = load_labeled(test_path, mode);
        }
        report_warnings(ctx, train_ds);

        std::optional<PreprocessConfig> pre;
        if (!no_preprocess) pre = pre_flags.config();

        HyperParams checked = hp;
        checked.num_classes = output_units(mode);
        checked.validate(model.grid_constrained);

        PrepareOptions po;
        po.seed = seed;
        po.max_len = model.max_len;
        po.min_freq = model.min_freq;
        if (!model.glove.empty()) po.pretrained_vectors = fs::path(model.glove);
        po.feature_cache = enc.cache();
        if (hp.family == Family::kBertFeatureGru) po.encoder = enc.binding(*hp.encoder);

        json resolved{{"family", model.family},     {"task", std::string(to_string(mode))},
                      {"hyperparams", checked.to_json()}, {"train_config", cfg.to_json()},
                      {"preprocess", pre ? pre->to_json() : json()}, {"seed", seed},
                      {"train", data_path.empty() ? train_path : data_path},
                      {"val", val_path}, {"test", test_path}, {"out", out}};
        if (po.encoder) resolved["encoder"] = po.encoder->to_json();
        ctx.log("train: resolved configuration");
        log_resolved(ctx, resolved);

        auto tm = prepare_model(hp, mode, pre, train_ds, po);
        ctx.log("model parameters: " + std::to_string(tm.model->parameter_count()));
        const auto history = train(tm, train_ds, val_ds, cfg, [&](const EpochRecord& e) {
            std::ostringstream line;
            line << "epoch " << e.epoch << "  train_loss " << e.train_loss << "  val_loss " << e.val_loss
                 << "  val_macro_f1 " << e.val_macro_f1;
            ctx.log(line.str());
        });
        ctx.log("best epoch " + std::to_string(history.best_epoch));

        const fs::path dir(out);
        save_checkpoint(tm, dir);
        write_file_atomic(dir / "history.csv", history.to_csv());
        write_file_atomic(dir / "history.json", history.to_json().dump(2) + "\n");
        const auto val_report = evaluate(tm, val_ds);
        write_file_atomic(dir / "eval_val.json", val_report.to_json().dump(2) + "\n");
        ctx.out << "validation\n" << val_report.to_text();
        if (test_ds) {
            const auto test_report = evaluate(tm, *test_ds);
            write_file_atomic(dir / "eval_test.json", test_report.to_json().dump(2) + "\n");
            ctx.out << "test\n" << test_report.to_text();
        }
        write_run_json(ctx, run_json_path(dir, true), "train", resolved);
    }
};

// --- gridsearch ------------------------------------------------------------

struct GridCmd {
    std::string family, task = "1a", data, out, grid_file, glove;
    std::vector<std::string> encoders{"base"};
    std::string preprocessed = "both";
    std::vector<double> ratios{0.7, 0.1, 0.2};
    std::uint64_t seed = 42;
    int jobs = 1;
    bool no_checkpoints = false, reference_rows_only = false;
    TrainFlags train_flags;
    EncoderFlags enc;
    PreprocessFlags pre_flags;
    bool selected = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("gridsearch", "Run a hyperparameter grid with and without preprocessing");
        app->add_option("--family", family, "Model family")
            ->required()
            ->check(CLI::IsMember({"char_lstm", "word_lstm", "bert_feature_gru", "bert_finetune"}));
        app->add_option("--task", task, "1a | 1b-flat | 1b-conditional")
            ->check(CLI::IsMember({"1a", "1b", "1b-flat", "1b-conditional"}));
        app->add_option("--data", data, "Labeled TSV of raw text; split once and preprocessed per row")
            ->required()
            ->check(CLI::ExistingFile);
        app->add_option("--out", out, "Results directory")->required();
        app->add_option("--grid", grid_file, "JSON grid overriding the preset axes")->check(CLI::ExistingFile);
        app->add_option("--encoder", encoders, "Encoder variants for the encoder families")
            ->delimiter(',')
            ->check(CLI::IsMember({"base", "large"}));
        app->add_option("--glove", glove, "Word vectors; switches the word grid to pretrained embeddings")
            ->check(CLI::ExistingFile);
        app->add_option("--preprocessed", preprocessed, "both | yes | no")->check(CLI::IsMember({"both", "yes", "no"}));
        app->add_option("--ratios", ratios, "Split ratios")->delimiter(',')->expected(3);
        app->add_option("--seed", seed, "Seed for the split and every run");
        app->add_option("--jobs", jobs, "Grid points trained concurrently");
        app->add_flag("--no-checkpoints", no_checkpoints, "Skip per-run checkpoint directories");
        app->add_flag("--reference-rows", reference_rows_only, "Also write results_reference.md with the published configurations");
        train_flags.add(app);
        enc.add(app);
        pre_flags.add(app);
        app->callback([this] { selected = true; });
    }

    void run(const Context& ctx) const {
        enc.apply_env();
        const auto mode = parse_task_mode(task);
        const auto fam = parse_family(family);
        std::vector<EncoderSize> sizes;
        for (const auto& e : encoders) sizes.push_back(parse_encoder_size(e));

        GridSpace space = GridSpace::preset(fam, sizes);
        if (!grid_file.empty()) {
            std::ifstream in(grid_file);
            auto j = json::parse(in);
            if (!j.contains("family")) j["family"] = family;
            if (!j.contains("encoder")) j["encoder"] = encoders;
            space = GridSpace::from_json(j);
            if (space.family != fam) throw ConfigError("--grid family differs from --family");
        }
        if (!glove.empty()) {
            if (fam != Family::kWordLstm) throw ConfigError("--glove applies to word_lstm only");
            space.pretrained = {true};
        }
        if (preprocessed == "yes") space.preprocessed = {true};
        if (preprocessed == "no") space.preprocessed = {false};
        space.validate();

        const fs::path dir(out);
        fs::create_directories(dir);
        const auto ds = load_labeled(data, mode);
        report_warnings(ctx, ds);
        DatasetSplit split;
        const auto manifest_path = dir / "split.json";
        SplitSpec spec;
        spec.ratios = ratio_triple(ratios);
        spec.seed = seed;
        if (fs::exists(manifest_path)) {
            std::ifstream in(manifest_path);
            const auto manifest = json::parse(in);
            if (manifest.at("seed").get<std::uint64_t>() != seed)
                throw ConfigError("'" + manifest_path.string() + "' was made with seed " +
                                  std::to_string(manifest.at("seed").get<std::uint64_t>()) +
                                  "; use that seed or a fresh --out");
            split = apply_split_manifest(ds, manifest);
            ctx.log("resuming with the split recorded in " + manifest_path.string());
        } else {
            split = stratified_split(ds, spec);
            write_file_atomic(manifest_path, split.manifest().dump(2) + "\n");
        }

        RunnerOptions ro;
        ro.mode = mode;
        ro.train = train_flags.config(fam, seed);
        ro.preprocess = pre_flags.config();
        ro.prepare.seed = seed;
        ro.prepare.feature_cache = enc.cache();
        if (!glove.empty()) ro.prepare.pretrained_vectors = fs::path(glove);
        if (fam == Family::kBertFeatureGru && enc.stub_width > 0) ro.prepare.encoder = enc.binding(EncoderSize::kBase);
        else if (fam == Family::kBertFeatureGru) {
            const EncoderBinding b = *enc.binding(EncoderSize::kBase);
            ro.feature_mode = b.mode;
            ro.max_tokens = b.max_tokens;
        }
        ro.save_checkpoints = !no_checkpoints;

        json resolved{{"family", family}, {"task", std::string(to_string(mode))}, {"data", data},
                      {"grid", space.to_json()}, {"points", space.points() * space.preprocessed.size()},
                      {"train_config", ro.train.to_json()}, {"preprocess", ro.preprocess.to_json()},
                      {"split", {{"seed", seed}, {"ratios", ratios}}}, {"jobs", jobs}, {"out", out}};
        if (ro.prepare.encoder) resolved["encoder"] = ro.prepare.encoder->to_json();
        ctx.log("gridsearch: resolved configuration");
        log_resolved(ctx, resolved);
        write_run_json(ctx, run_json_path(dir, true), "gridsearch", resolved);

        GridOptions go;
        go.out = dir;
        go.jobs = jobs;
        go.on_row = [&ctx](const ResultRow& row, bool resumed) {
            std::ostringstream line;
            line << (resumed ? "kept  " : "done  ") << row.key << "  " << row.status;
            if (row.status == "ok") line << "  test_f1 " << row.test_f1 << "  val_f1 " << row.val_f1;
            else line << "  " << row.error;
            ctx.log(line.str());
        };
        const auto table = run_grid(space, make_point_runner(split, ro), go);
        if (reference_rows_only) write_file_atomic(dir / "results_reference.md", table.to_markdown(true));
        ctx.out << table.to_markdown(reference_rows_only);
    }
};

// --- evaluate --------------------------------------------------------------

struct EvaluateCmd {
    std::string checkpoint, data, out, feature_cache;
    bool selected = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("evaluate", "Score a checkpoint on a labeled TSV");
        app->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
        app->add_option("--data", data, "Labeled TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--out", out, "Report directory")->required();
        app->add_option("--feature-cache", feature_cache, "Feature cache directory");
        app->callback([this] { selected = true; });
    }

    void run(const Context& ctx) const {
        const auto cache = feature_cache.empty() ? default_feature_cache() : std::optional<fs::path>(feature_cache);
        const auto tm = load_checkpoint(checkpoint, cache);
        const auto ds = load_tsv(data, dataset_task(tm.pipeline.task_mode), LabelPolicy::kOptional);
        report_warnings(ctx, ds);
        const auto report = evaluate(tm, ds);
        const fs::path dir(out);
        fs::create_directories(dir);
        write_file_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
        write_file_atomic(dir / "report.txt", report.to_text());
        write_file_atomic(dir / "confusion.csv", report.confusion.to_csv(report.classes));
        ctx.out << report.to_text();
        write_run_json(ctx, run_json_path(dir, true), "evaluate",
                       {{"checkpoint", checkpoint}, {"data", data}, {"out", out},
                        {"task", std::string(to_string(tm.pipeline.task_mode))}});
    }
};

// --- predict ---------------------------------------------------------------

struct PredictCmd {
    std::string checkpoint, in, out, gate, feature_cache;
    bool selected = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("predict", "Label an unlabeled TSV with a checkpoint");
        app->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
        app->add_option("--in", in, "TSV with id and text columns")->required()->check(CLI::ExistingFile);
        app->add_option("--out", out, "Output CSV (id,label)")->required();
        app->add_option("--gate", gate, "1A checkpoint gating a conditional 1B model: NOT rows become NONE")
            ->check(CLI::ExistingDirectory);
        app->add_option("--feature-cache", feature_cache, "Feature cache directory");
        app->callback([this] { selected = true; });
    }

    void run(const Context& ctx) const {
        const auto cache = feature_cache.empty() ? default_feature_cache() : std::optional<fs::path>(feature_cache);
        const auto tm = load_checkpoint(checkpoint, cache);
        const auto mode = tm.pipeline.task_mode;
        const auto ds = load_tsv(in, dataset_task(mode), LabelPolicy::kOptional);
        report_warnings(ctx, ds);
        const auto names = class_names(mode);
        const auto predicted = tm.predict(ds);

        std::optional<std::vector<int>> gated;
        if (!gate.empty()) {
            if (mode != TaskMode::kConditional1B) throw ConfigError("--gate applies to 1b-conditional checkpoints");
            const auto gate_model = load_checkpoint(gate, cache);
            if (gate_model.pipeline.task_mode != TaskMode::kBinary1A)
                throw ConfigError("--gate must point at a 1a checkpoint");
            gated = gate_model.predict(ds);
        } else if (mode == TaskMode::kConditional1B) {
            ctx.log("warning: conditional 1B model without --gate labels every row as HATE, OFFN or PRFN");
        }

        std::ostringstream csv;
        csv << "id,label\n";
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::string label(names[static_cast<std::size_t>(predicted[i])]);
            if (gated && (*gated)[i] == static_cast<int>(Label1A::kNot)) label = to_string(Label1B::kNone);
            csv << ds.items[i].id << ',' << label << '\n';
        }
        ensure_parent(out);
        write_file_atomic(out, csv.str());
        ctx.log("wrote " + std::to_string(ds.size()) + " predictions to " + out);
        write_run_json(ctx, run_json_path(out, false), "predict",
                       {{"checkpoint", checkpoint}, {"in", in}, {"out", out}, {"gate", gate},
                        {"task", std::string(to_string(mode))}, {"rows", ds.size()}});
    }
};

// --- report ----------------------------------------------------------------

struct ReportCmd {
    std::string results, out;
    bool reference_rows_only = false;
    bool selected = false;

    void add(CLI::App& root) {
        auto* app = root.add_subcommand("report", "Render a results table as markdown");
        app->add_option("--results", results, "Results directory, rows.jsonl or results.csv")
            ->required()
            ->check(CLI::ExistingPath);
        app->add_option("--out", out, "Markdown file (default: stdout)");
        app->add_flag("--reference-rows", reference_rows_only, "Only the published configurations, with their reported F1");
        app->callback([this] { selected = true; });
    }

    void run(const Context& ctx) const {
        const auto table = ResultsTable::load(results);
        const auto md = table.to_markdown(reference_rows_only);
        if (out.empty()) {
            ctx.out << md;
            return;
        }
        ensure_parent(out);
        write_file_atomic(out, md);
        write_run_json(ctx, run_json_path(out, false), "report",
                       {{"results", results}, {"out", out}, {"reference_rows_only", reference_rows_only}});
    }
};

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hate-speech detection experiments: preprocessing, training, grid search and evaluation", "hsd"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "TOML config; flags given on the command line take precedence");
    app.require_subcommand(1, 1);
    app.fallthrough();

    Context ctx{out, err, args};
    app.add_flag("--quiet", ctx.quiet, "Suppress progress logging");

    IngestCmd ingest;
    PreprocessCmd preprocess;
    SplitCmd split;
    TrainCmd train_cmd;
    GridCmd grid;
    EvaluateCmd evaluate_cmd;
    PredictCmd predict;
    ReportCmd report;
    ingest.add(app);
    preprocess.add(app);
    split.add(app);
    train_cmd.add(app);
    grid.add(app);
    evaluate_cmd.add(app);
    predict.add(app);
    report.add(app);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (ingest.selected) ingest.run(ctx);
        else if (preprocess.selected) preprocess.run(ctx);
        else if (split.selected) split.run(ctx);
        else if (train_cmd.selected) train_cmd.run(ctx);
        else if (grid.selected) grid.run(ctx);
        else if (evaluate_cmd.selected) evaluate_cmd.run(ctx);
        else if (predict.selected) predict.run(ctx);
        else if (report.selected) report.run(ctx);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

} // namespace hsd::cli
