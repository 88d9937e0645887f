#include "hsd/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "hsd/error.hpp"
#include "hsd/evaluate.hpp"
#include "hsd/tensor_io.hpp"

namespace hsd {
namespace {

bool uses_encoder(Family f) { return f == Family::kBertFeatureGru || f == Family::kBertFinetune; }
bool uses_embedding(Family f) { return f == Family::kCharLstm || f == Family::kWordLstm; }
bool uses_hidden(Family f) { return f != Family::kBertFinetune; }

std::string format_number(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

std::string format_f1(double v) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4) << v;
    return out.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get(c);
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string slug(const HyperParams& hp, bool preprocessed) {
    std::ostringstream out;
    out << to_string(hp.family) << (preprocessed ? "-pre" : "-raw");
    if (hp.encoder && uses_encoder(hp.family)) out << '-' << to_string(*hp.encoder);
    if (uses_embedding(hp.family)) out << "-e" << hp.embedding_dim;
    if (uses_hidden(hp.family)) out << "-h" << hp.hidden_dim;
    out << "-p" << static_cast<int>(std::lround(hp.dropout * 100));
    if (hp.pretrained_embeddings) out << "-glove";
    return out.str();
}

bool matches(const ReferenceRow& ref, const ResultRow& row) {
    if (ref.family != row.family || ref.preprocessed != row.preprocessed) return false;
    const auto& hp = row.hyper;
    if (uses_embedding(ref.family) && ref.embedding_dim != hp.embedding_dim) return false;
    if (uses_hidden(ref.family) && ref.hidden_dim != hp.hidden_dim) return false;
    if (ref.family != Family::kBertFinetune && std::abs(ref.dropout - hp.dropout) > 1e-9) return false;
    if (uses_encoder(ref.family) && ref.encoder != hp.encoder) return false;
    return true;
}

} // namespace

// --- GridSpace -------------------------------------------------------------

GridSpace GridSpace::preset(Family family, std::vector<EncoderSize> encoders) {
    GridSpace g;
    g.family = family;
    g.encoders = std::move(encoders);
    switch (family) {
    case Family::kCharLstm:
        g.embedding_dims = {50, 100, 200};
        g.hidden_dims = {16, 32, 64, 128};
        g.dropouts = {0.25, 0.5, 0.75};
        break;
    case Family::kWordLstm:
        g.embedding_dims = {100, 300};
        g.hidden_dims = {32, 64, 128, 256, 512};
        g.dropouts = {0.25, 0.5, 0.75};
        break;
    case Family::kBertFeatureGru:
        g.hidden_dims = {32, 64, 128, 256, 512};
        g.dropouts = {0.25, 0.5, 0.75};
        break;
    case Family::kBertFinetune:
        g.dropouts = {kFinetuneDropout};
        break;
    }
    return g;
}

void GridSpace::validate() const {
    auto require = [](bool ok, const char* axis) {
        if (!ok) throw ConfigError(std::string("grid axis '") + axis + "' is empty");
    };
    if (uses_encoder(family)) require(!encoders.empty(), "encoder");
    if (uses_embedding(family)) require(!embedding_dims.empty(), "embedding_dim");
    if (uses_hidden(family)) require(!hidden_dims.empty(), "hidden_dim");
    require(!dropouts.empty(), "dropout");
    require(!pretrained.empty(), "pretrained");
    require(!preprocessed.empty(), "preprocessed");
    if (family != Family::kWordLstm && std::any_of(pretrained.begin(), pretrained.end(), [](bool b) { return b; }))
        throw ConfigError("the pretrained axis applies to word_lstm only");
}

std::size_t GridSpace::points() const {
    std::size_t n = dropouts.size() * pretrained.size();
    if (uses_encoder(family)) n *= encoders.size();
    if (uses_embedding(family)) n *= embedding_dims.size();
    if (uses_hidden(family)) n *= hidden_dims.size();
    return n;
}

nlohmann::json GridSpace::to_json() const {
    nlohmann::json enc = nlohmann::json::array();
    for (auto e : encoders) enc.push_back(std::string(to_string(e)));
    return {{"family", std::string(to_string(family))},
            {"encoder", enc},
            {"embedding_dim", embedding_dims},
            {"hidden_dim", hidden_dims},
            {"dropout", dropouts},
            {"pretrained", pretrained},
            {"preprocessed", preprocessed}};
}

GridSpace GridSpace::from_json(const nlohmann::json& j) {
    const auto family = parse_family(j.at("family").get<std::string>());
    std::vector<EncoderSize> encoders;
    for (const auto& e : j.value("encoder", nlohmann::json::array({"base"})))
        encoders.push_back(parse_encoder_size(e.get<std::string>()));
    GridSpace g = preset(family, encoders);
    if (j.contains("embedding_dim")) g.embedding_dims = j["embedding_dim"].get<std::vector<int>>();
    if (j.contains("hidden_dim")) g.hidden_dims = j["hidden_dim"].get<std::vector<int>>();
    if (j.contains("dropout")) g.dropouts = j["dropout"].get<std::vector<double>>();
    if (j.contains("pretrained")) g.pretrained = j["pretrained"].get<std::vector<bool>>();
    if (j.contains("preprocessed")) g.preprocessed = j["preprocessed"].get<std::vector<bool>>();
    g.validate();
    return g;
}

std::vector<HyperParams> enumerate_grid(const GridSpace& space) {
    space.validate();
    const auto one = [](auto&& axis, bool applies) {
        using T = typename std::decay_t<decltype(axis)>::value_type;
        return applies ? std::vector<T>(axis.begin(), axis.end()) : std::vector<T>{T{}};
    };
    const auto encoders = one(space.encoders, uses_encoder(space.family));
    const auto embeddings = one(space.embedding_dims, uses_embedding(space.family));
    const auto hiddens = one(space.hidden_dims, uses_hidden(space.family));
    std::vector<HyperParams> out;
    for (auto enc : encoders)
        for (int e : embeddings)
            for (int h : hiddens)
                for (double p : space.dropouts)
                    for (bool pre : space.pretrained) {
                        HyperParams hp;
                        hp.family = space.family;
                        if (uses_encoder(space.family)) hp.encoder = enc;
                        hp.embedding_dim = e;
                        hp.hidden_dim = h;
                        hp.dropout = p;
                        hp.pretrained_embeddings = pre;
                        hp.num_classes = 1;
                        hp.validate(false);
                        out.push_back(hp);
                    }
    return out;
}

// --- rows and tables -------------------------------------------------------

std::string row_key(const HyperParams& hp, bool preprocessed) {
    return std::string(to_string(hp.family)) + (preprocessed ? "|pre|" : "|raw|") + hp.to_json().dump();
}

nlohmann::json ResultRow::to_json() const {
    return {{"key", key},
            {"family", std::string(to_string(family))},
            {"preprocessed", preprocessed},
            {"hyperparams", hyper.to_json()},
            {"status", status},
            {"error", error},
            {"test_macro_f1", test_f1},
            {"test_weighted_f1", test_weighted_f1},
            {"val_macro_f1", val_f1},
            {"params", params},
            {"best_epoch", best_epoch},
            {"seed", seed},
            {"checkpoint", checkpoint},
            {"wall_time", wall_time}};
}

ResultRow ResultRow::from_json(const nlohmann::json& j) {
    ResultRow r;
    r.family = parse_family(j.at("family").get<std::string>());
    r.preprocessed = j.at("preprocessed").get<bool>();
    r.hyper = HyperParams::from_json(j.at("hyperparams"));
    r.key = j.value("key", row_key(r.hyper, r.preprocessed));
    r.status = j.value("status", std::string("ok"));
    r.error = j.value("error", std::string());
    r.test_f1 = j.value("test_macro_f1", 0.0);
    r.test_weighted_f1 = j.value("test_weighted_f1", 0.0);
    r.val_f1 = j.value("val_macro_f1", 0.0);
    r.params = j.value("params", std::size_t{0});
    r.best_epoch = j.value("best_epoch", 0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.checkpoint = j.value("checkpoint", std::string());
    r.wall_time = j.value("wall_time", 0.0);
    return r;
}

void ResultsTable::mark_best() {
    std::map<Family, std::size_t> best;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& row = rows[i];
        row.best = false;
        if (row.status != "ok") continue;
        auto it = best.find(row.family);
        if (it == best.end()) {
            best.emplace(row.family, i);
            continue;
        }
        const auto& cur = rows[it->second];
        if (row.test_f1 > cur.test_f1 || (row.test_f1 == cur.test_f1 && row.params < cur.params))
            it->second = i;
    }
    for (const auto& [family, i] : best) rows[i].best = true;
}

std::string ResultsTable::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "family,preprocessed,encoder,embedding_dim,hidden_dim,dropout,pretrained_embeddings,"
           "test_macro_f1,test_weighted_f1,val_macro_f1,params,best_epoch,seed,status,best,checkpoint,error\n";
    for (const auto& r : rows) {
        out << to_string(r.family) << ',' << (r.preprocessed ? "true" : "false") << ','
            << (r.hyper.encoder ? std::string(to_string(*r.hyper.encoder)) : std::string()) << ','
            << r.hyper.embedding_dim << ',' << r.hyper.hidden_dim << ',' << r.hyper.dropout << ','
            << (r.hyper.pretrained_embeddings ? "true" : "false") << ',' << r.test_f1 << ','
            << r.test_weighted_f1 << ',' << r.val_f1 << ',' << r.params << ',' << r.best_epoch << ','
            << r.seed << ',' << r.status << ',' << (r.best ? "true" : "false") << ','
            << csv_field(r.checkpoint) << ',' << csv_field(r.error) << '\n';
    }
    return out.str();
}

std::string ResultsTable::to_markdown(bool reference_only) const {
    std::vector<Family> order;
    for (const auto& r : rows)
        if (std::find(order.begin(), order.end(), r.family) == order.end()) order.push_back(r.family);

    std::ostringstream out;
    for (auto family : order) {
        const bool glove_column =
            family == Family::kWordLstm &&
            std::any_of(rows.begin(), rows.end(),
                        [&](const ResultRow& r) { return r.family == family && r.hyper.pretrained_embeddings; });
        std::vector<std::string> header{"Model name", "Pre-processed"};
        if (uses_encoder(family)) header.push_back("Bert model");
        if (uses_embedding(family)) header.push_back("Embedding dimension");
        if (glove_column) header.push_back("Embeddings");
        if (uses_hidden(family)) header.push_back("Hidden dimension");
        if (family != Family::kBertFinetune) header.push_back("dropout");
        header.push_back("F1");
        header.push_back("Val F1");
        if (reference_only) header.push_back("Reported F1");

        if (out.tellp() > 0) out << '\n';
        out << '|';
        for (const auto& h : header) out << ' ' << h << " |";
        out << "\n|";
        for (std::size_t i = 0; i < header.size(); ++i) out << (i == 0 ? ":---|" : "---:|");
        out << '\n';

        bool first = true;
        for (const auto& r : rows) {
            if (r.family != family) continue;
            std::optional<double> reported;
            if (reference_only) {
                for (const auto& ref : reference_rows())
                    if (matches(ref, r)) reported = ref.f1;
                if (!reported) continue;
            }
            out << "| " << (first ? std::string(display_name(family)) : std::string()) << " | "
                << (r.preprocessed ? "yes" : "no") << " |";
            first = false;
            if (uses_encoder(family)) out << ' ' << (r.hyper.encoder ? to_string(*r.hyper.encoder) : "") << " |";
            if (uses_embedding(family)) out << ' ' << r.hyper.embedding_dim << " |";
            if (glove_column) out << ' ' << (r.hyper.pretrained_embeddings ? "pretrained" : "scratch") << " |";
            if (uses_hidden(family)) out << ' ' << r.hyper.hidden_dim << " |";
            if (family != Family::kBertFinetune) out << ' ' << format_number(r.hyper.dropout) << " |";
            if (r.status != "ok") {
                out << " failed | |";
            } else {
                const auto f1 = format_f1(r.test_f1);
                out << ' ' << (r.best ? "**" + f1 + "**" : f1) << " | " << format_f1(r.val_f1) << " |";
            }
            if (reference_only) out << ' ' << format_number(*reported) << " |";
            out << '\n';
        }
    }
    return out.str();
}

ResultsTable ResultsTable::load(const std::filesystem::path& path) {
    auto file = path;
    if (std::filesystem::is_directory(path)) {
        file = path / "rows.jsonl";
        if (!std::filesystem::exists(file)) file = path / "results.csv";
    }
    std::ifstream in(file);
    if (!in) throw DataError("results file '" + file.string() + "' not found");
    ResultsTable table;
    if (file.extension() == ".csv") {
        const auto rows = parse_csv(in);
        if (rows.empty()) throw DataError("'" + file.string() + "' is empty");
        const auto& header = rows.front();
        auto col = [&](const std::vector<std::string>& row, const std::string& name) -> const std::string& {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end() || static_cast<std::size_t>(it - header.begin()) >= row.size())
                throw DataError("'" + file.string() + "' lacks column '" + name + "'");
            return row[static_cast<std::size_t>(it - header.begin())];
        };
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const auto& row = rows[i];
            ResultRow r;
            r.family = parse_family(col(row, "family"));
            r.preprocessed = col(row, "preprocessed") == "true";
            r.hyper.family = r.family;
            if (!col(row, "encoder").empty()) r.hyper.encoder = parse_encoder_size(col(row, "encoder"));
            r.hyper.embedding_dim = std::stoi(col(row, "embedding_dim"));
            r.hyper.hidden_dim = std::stoi(col(row, "hidden_dim"));
            r.hyper.dropout = std::stod(col(row, "dropout"));
            r.hyper.pretrained_embeddings = col(row, "pretrained_embeddings") == "true";
            r.test_f1 = std::stod(col(row, "test_macro_f1"));
            r.test_weighted_f1 = std::stod(col(row, "test_weighted_f1"));
            r.val_f1 = std::stod(col(row, "val_macro_f1"));
            r.params = std::stoull(col(row, "params"));
            r.best_epoch = std::stoi(col(row, "best_epoch"));
            r.seed = std::stoull(col(row, "seed"));
            r.status = col(row, "status");
            r.checkpoint = col(row, "checkpoint");
            r.error = col(row, "error");
            r.key = row_key(r.hyper, r.preprocessed);
            table.rows.push_back(std::move(r));
        }
    } else {
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                table.rows.push_back(ResultRow::from_json(nlohmann::json::parse(line)));
            } catch (const std::exception& e) {
                if (in.peek() == EOF) break; // torn final line of an interrupted run
                throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }
    table.mark_best();
    return table;
}

const std::vector<ReferenceRow>& reference_rows() {
    using F = Family;
    constexpr auto base = EncoderSize::kBase;
    constexpr auto large = EncoderSize::kLarge;
    static const std::vector<ReferenceRow> rows{
        {F::kCharLstm, true, 50, 256, 0.5, std::nullopt, 0.75},
        {F::kCharLstm, true, 50, 128, 0.75, std::nullopt, 0.78},
        {F::kCharLstm, true, 100, 64, 0.5, std::nullopt, 0.76},
        {F::kCharLstm, true, 200, 16, 0.5, std::nullopt, 0.79},
        {F::kCharLstm, false, 200, 16, 0.75, std::nullopt, 0.75},
        {F::kCharLstm, false, 100, 128, 0.75, std::nullopt, 0.77},
        {F::kWordLstm, true, 100, 512, 0.25, std::nullopt, 0.81},
        {F::kWordLstm, true, 300, 256, 0.25, std::nullopt, 0.83},
        {F::kWordLstm, true, 300, 256, 0.75, std::nullopt, 0.80},
        {F::kWordLstm, false, 300, 256, 0.25, std::nullopt, 0.79},
        {F::kBertFeatureGru, true, 0, 256, 0.25, base, 0.86},
        {F::kBertFeatureGru, true, 0, 128, 0.25, base, 0.83},
        {F::kBertFeatureGru, true, 0, 256, 0.5, large, 0.84},
        {F::kBertFeatureGru, true, 0, 128, 0.25, large, 0.80},
        {F::kBertFeatureGru, false, 0, 128, 0.25, base, 0.79},
        {F::kBertFinetune, true, 0, 0, kFinetuneDropout, base, 0.81},
        {F::kBertFinetune, false, 0, 0, kFinetuneDropout, base, 0.83},
    };
    return rows;
}

// --- run_grid --------------------------------------------------------------

ResultsTable run_grid(const GridSpace& space, const PointRunner& runner, const GridOptions& opts) {
    const auto grid = enumerate_grid(space);
    std::vector<GridPoint> points;
    for (bool pre : space.preprocessed)
        for (const auto& hp : grid)
            points.push_back({hp, pre, row_key(hp, pre), opts.out / "runs" / slug(hp, pre)});

    std::filesystem::create_directories(opts.out);
    const auto log_path = opts.out / "rows.jsonl";
    std::map<std::string, ResultRow> done;
    if (std::filesystem::exists(log_path)) {
        for (auto& row : ResultsTable::load(log_path).rows) done.emplace(row.key, std::move(row));
        // drop a torn last line so the next append starts on a fresh line
        std::ifstream check(log_path, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(check)), std::istreambuf_iterator<char>());
        if (!content.empty() && content.back() != '\n') {
            const auto cut = content.rfind('\n');
            write_file_atomic(log_path, cut == std::string::npos ? std::string() : content.substr(0, cut + 1));
        }
    }

    std::vector<const GridPoint*> pending;
    for (const auto& p : points) {
        if (auto it = done.find(p.key); it != done.end()) {
            if (opts.on_row) opts.on_row(it->second, true);
        } else {
            pending.push_back(&p);
        }
    }

    std::mutex commit_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < pending.size(); i = next++) {
            const auto& point = *pending[i];
            ResultRow row;
            try {
                row = runner(point);
            } catch (const std::exception& e) {
                row = ResultRow{};
                row.status = "failed";
                row.error = e.what();
            }
            row.key = point.key;
            row.family = point.hyper.family;
            row.preprocessed = point.preprocessed;
            row.hyper = point.hyper;
            std::lock_guard lock(commit_mutex);
            {
                std::ofstream log(log_path, std::ios::app);
                log << row.to_json().dump() << '\n';
                log.flush();
                if (!log) throw Error("cannot append to '" + log_path.string() + "'");
            }
            if (opts.on_row) opts.on_row(row, false);
            done.emplace(row.key, std::move(row));
        }
    };
    const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(pending.size())));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    ResultsTable table;
    for (const auto& p : points) table.rows.push_back(done.at(p.key));
    table.mark_best();
    write_file_atomic(opts.out / "results.csv", table.to_csv());
    write_file_atomic(opts.out / "results.md", table.to_markdown());
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows) {
        auto j = r.to_json();
        j["best"] = r.best;
        rows.push_back(j);
    }
    write_file_atomic(opts.out / "results.json", nlohmann::json{{"grid", space.to_json()}, {"rows", rows}}.dump(2) + "\n");
    return table;
}

// --- default runner --------------------------------------------------------

namespace {

struct Encoded {
    Examples train, val, test;
};

struct RunnerState {
    DatasetSplit split;
    RunnerOptions opts;
    std::mutex mutex;
    std::string cached_key;
    std::shared_ptr<const Encoded> cached;
    std::map<std::string, std::shared_ptr<const FeatureExtractor>> extractors;
};

} // namespace

PointRunner make_point_runner(const DatasetSplit& split, RunnerOptions opts) {
    opts.train.validate();
    auto state = std::make_shared<RunnerState>();
    state->split = split;
    state->opts = std::move(opts);
    return [state](const GridPoint& point) {
        const auto& o = state->opts;
        const auto& hp = point.hyper;
        PrepareOptions po = o.prepare;
        po.seed = o.train.seed;
        std::string binding_key;
        if (hp.family == Family::kBertFeatureGru) {
            EncoderBinding binding;
            if (po.encoder) {
                binding = *po.encoder;
            } else {
                binding = EncoderBinding::transformer(hp.encoder.value_or(EncoderSize::kBase), o.max_tokens);
                binding.mode = o.feature_mode;
            }
            po.encoder = binding;
            binding_key = binding.to_json().dump();
            std::lock_guard lock(state->mutex);
            auto& fx = state->extractors[binding_key];
            if (!fx) fx = std::make_shared<const FeatureExtractor>(binding.handle(), po.feature_cache, binding.mode);
            po.shared_features = fx;
        } else if (hp.family == Family::kBertFinetune && !po.finetune_encoder) {
            binding_key = std::string(to_string(hp.encoder.value_or(EncoderSize::kBase)));
        }

        auto tm = prepare_model(hp, o.mode, point.preprocessed ? std::optional(o.preprocess) : std::nullopt,
                                state->split.train, po);

        const std::string data_key = std::string(to_string(hp.family)) + (point.preprocessed ? "|pre|" : "|raw|") + binding_key;
        std::shared_ptr<const Encoded> data;
        {
            std::lock_guard lock(state->mutex);
            if (state->cached_key == data_key) data = state->cached;
        }
        if (!data) {
            auto fresh = std::make_shared<Encoded>();
            fresh->train = tm.examples(state->split.train);
            fresh->val = tm.examples(state->split.val);
            fresh->test = tm.examples(state->split.test);
            data = fresh;
            std::lock_guard lock(state->mutex);
            state->cached_key = data_key;
            state->cached = data;
        }

        const auto history = fit(*tm.model, data->train, data->val, o.train);
        const auto report = evaluate(*tm.model, data->test, o.mode);

        ResultRow row;
        row.status = "ok";
        row.test_f1 = report.macro_f1;
        row.test_weighted_f1 = report.weighted_f1;
        row.val_f1 = history.best_val_macro_f1();
        row.params = tm.model->parameter_count();
        row.best_epoch = history.best_epoch;
        row.seed = o.train.seed;
        row.wall_time = history.wall_time;
        if (o.save_checkpoints) {
            save_checkpoint(tm, point.checkpoint_dir);
            write_file_atomic(point.checkpoint_dir / "history.csv", history.to_csv());
            write_file_atomic(point.checkpoint_dir / "eval.json", report.to_json().dump(2) + "\n");
            row.checkpoint = point.checkpoint_dir.string();
        }
        return row;
    };
}

} // namespace hsd
