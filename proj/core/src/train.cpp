#include "hsd/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hsd/error.hpp"
#include "hsd/evaluate.hpp"
#include "hsd/tensor_io.hpp"

namespace hsd {
namespace {

std::vector<nn::Matrix> snapshot(Model& model) {
    std::vector<nn::Matrix> values;
    for (auto* p : model.parameters()) values.push_back(p->value);
    return values;
}

void restore(Model& model, const std::vector<nn::Matrix>& values) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

std::vector<ModelInput> gather(const std::vector<ModelInput>& inputs, std::span<const std::size_t> order,
                               std::size_t begin, std::size_t end) {
    std::vector<ModelInput> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(inputs[order[i]]);
    return out;
}

/// Eval-mode loss and macro-F1 over `data`, in chunks.
std::pair<double, double> validate(const Model& model, const Examples& data, int batch_size, int classes) {
    double loss = 0.0;
    std::vector<int> predicted;
    predicted.reserve(data.size());
    const auto chunk = static_cast<std::size_t>(batch_size);
    for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
        const std::size_t end = std::min(data.size(), begin + chunk);
        std::span<const ModelInput> batch(data.inputs.data() + begin, end - begin);
        const auto logits = model.logits(batch);
        std::span<const int> labels(data.labels.data() + begin, end - begin);
        loss += nn::classification_loss(logits, labels).loss * static_cast<double>(end - begin);
        for (int p : decide(logits)) predicted.push_back(p);
    }
    loss /= static_cast<double>(data.size());
    const auto report = f1_scores(confusion_matrix(data.labels, predicted, classes));
    return {loss, report.macro_f1};
}

std::string format_lr(double lr) {
    std::ostringstream out;
    out << lr;
    return out.str();
}

EmbeddingMatrix placeholder_embeddings(const ModelSpec& spec) {
    EmbeddingMatrix m;
    m.rows = Eigen::MatrixXd::Zero(spec.vocab_size, spec.hyper.embedding_dim);
    m.source = EmbeddingSource::kPretrained;
    return m;
}

} // namespace

// --- TrainConfig -----------------------------------------------------------

TrainConfig TrainConfig::for_family(Family family) {
    TrainConfig cfg;
    if (family == Family::kBertFinetune) {
        cfg.learning_rate = 2e-5;
        cfg.max_epochs = 3;
        cfg.patience = 2;
        cfg.clip_norm = 0.0;
    }
    return cfg;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning rate must be a finite value >= 0");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs)
        throw ConfigError("patience must lie in [1, max_epochs)");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"batch_size", batch_size}, {"learning_rate", learning_rate}, {"max_epochs", max_epochs},
            {"patience", patience},     {"seed", seed},                   {"clip_norm", clip_norm},
            {"optimizer", "adam"}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
    return cfg;
}

// --- TrainHistory / EarlyStopping ------------------------------------------

double TrainHistory::best_val_macro_f1() const {
    if (best_epoch < 1 || best_epoch > static_cast<int>(epochs.size())) return 0.0;
    return epochs[static_cast<std::size_t>(best_epoch - 1)].val_macro_f1;
}

std::string TrainHistory::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,val_loss,val_macro_f1\n";
    for (const auto& e : epochs)
        out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_macro_f1 << '\n';
    return out.str();
}

nlohmann::json TrainHistory::to_json() const {
    auto rows = nlohmann::json::array();
    for (const auto& e : epochs)
        rows.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss},
                        {"val_macro_f1", e.val_macro_f1}});
    return {{"epochs", rows},
            {"best_epoch", best_epoch},
            {"best_val_macro_f1", best_val_macro_f1()},
            {"stopped_early", stopped_early},
            {"wall_time", wall_time}};
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("early stopping patience must be >= 1");
}

bool EarlyStopping::observe(int epoch, double score) {
    improved_ = best_epoch_ == 0 || score > best_;
    if (improved_) {
        best_ = score;
        best_epoch_ = epoch;
        since_best_ = 0;
        return false;
    }
    return ++since_best_ >= patience_;
}

// --- fit -------------------------------------------------------------------

TrainHistory fit(Model& model, const Examples& train, const Examples& val, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
    cfg.validate();
    if (train.size() == 0) throw TrainingError("training set is empty");
    if (val.size() == 0) throw TrainingError("validation set is empty");
    if (train.inputs.size() != train.labels.size() || val.inputs.size() != val.labels.size())
        throw TrainingError("inputs and labels differ in length");
    const int units = model.spec().hyper.num_classes;
    const int classes = units == 1 ? 2 : units;

    const auto start = std::chrono::steady_clock::now();
    auto params = model.parameters();
    nn::Adam adam(params, cfg.learning_rate);
    EarlyStopping stopper(cfg.patience);
    TrainHistory history;
    std::vector<nn::Matrix> best_weights;

    std::vector<std::size_t> order(train.size());
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        Rng dropout_rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)), 1));

        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += batch, ++batch_index) {
            const std::size_t end = std::min(order.size(), begin + batch);
            const auto inputs = gather(train.inputs, order, begin, end);
            std::vector<int> labels;
            for (std::size_t i = begin; i < end; ++i) labels.push_back(train.labels[order[i]]);

            adam.zero_grad();
            const auto logits = model.forward_train(inputs, dropout_rng);
            const auto loss = nn::classification_loss(logits, labels);
            if (!std::isfinite(loss.loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index) + " (lr=" + format_lr(cfg.learning_rate) +
                                    "); try a lower learning rate");
            model.backward(loss.grad);
            if (cfg.clip_norm > 0.0) nn::clip_grad_norm(params, cfg.clip_norm);
            adam.step();
            loss_sum += loss.loss * static_cast<double>(end - begin);
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(train.size());
        std::tie(record.val_loss, record.val_macro_f1) = validate(model, val, cfg.batch_size, classes);
        history.epochs.push_back(record);
        if (on_epoch) on_epoch(record);

        const bool stop = stopper.observe(epoch, record.val_macro_f1);
        if (stopper.improved()) best_weights = snapshot(model);
        if (stop) {
            history.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    restore(model, best_weights);
    history.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return history;
}

// --- EncoderBinding / Pipeline ---------------------------------------------

EncoderBinding EncoderBinding::stub(int width, std::uint64_t seed, int max_tokens) {
    EncoderBinding b;
    b.kind = EncoderKind::kStub;
    b.width = width;
    b.seed = seed;
    b.max_tokens = max_tokens;
    return b;
}

EncoderBinding EncoderBinding::transformer(EncoderSize size, int max_tokens) {
    EncoderBinding b;
    b.kind = EncoderKind::kTransformer;
    b.size = size;
    b.width = EncoderVariant::of(size).width;
    b.max_tokens = max_tokens;
    return b;
}

EncoderHandle EncoderBinding::handle() const {
    if (kind == EncoderKind::kStub)
        return EncoderHandle::from(std::shared_ptr<const Encoder>(encoder_stub(width, seed, max_tokens)));
    return transformer_handle(EncoderVariant::of(size, max_tokens));
}

nlohmann::json EncoderBinding::to_json() const {
    nlohmann::json j{{"kind", kind == EncoderKind::kStub ? "stub" : "transformer"},
                     {"width", width},
                     {"max_tokens", max_tokens},
                     {"mode", std::string(to_string(mode))}};
    if (kind == EncoderKind::kStub)
        j["seed"] = seed;
    else
        j["variant"] = std::string(to_string(size));
    return j;
}

EncoderBinding EncoderBinding::from_json(const nlohmann::json& j) {
    EncoderBinding b;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "stub") {
        b = stub(j.at("width").get<int>(), j.at("seed").get<std::uint64_t>(), j.value("max_tokens", 128));
    } else if (kind == "transformer") {
        b = transformer(parse_encoder_size(j.at("variant").get<std::string>()), j.value("max_tokens", 128));
    } else {
        throw ConfigError("unknown encoder kind '" + kind + "'");
    }
    b.mode = parse_feature_mode(j.value("mode", std::string("tokens")));
    return b;
}

nlohmann::json Pipeline::to_json() const {
    return {{"task_mode", std::string(to_string(task_mode))},
            {"preprocess", preprocess ? preprocess->to_json() : nlohmann::json()},
            {"vocab_level", vocab ? nlohmann::json(std::string(to_string(vocab->level()))) : nlohmann::json()},
            {"max_len", max_len},
            {"encoder", encoder ? encoder->to_json() : nlohmann::json()}};
}

TaskTargets task_targets(const Dataset& ds, TaskMode mode) {
    TaskTargets t;
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const auto& item = ds.items[i];
        int label = -1;
        switch (mode) {
        case TaskMode::kBinary1A:
            if (item.label_1a)
                label = static_cast<int>(*item.label_1a);
            else if (item.label_1b)
                label = *item.label_1b == Label1B::kNone ? 0 : 1;
            break;
        case TaskMode::kFlat1B:
            if (item.label_1b) label = static_cast<int>(*item.label_1b);
            break;
        case TaskMode::kConditional1B:
            if (item.label_1b && *item.label_1b != Label1B::kNone) label = static_cast<int>(*item.label_1b);
            else if (!item.label_1b) label = -2;
            break;
        }
        if (label == -1 && mode != TaskMode::kConditional1B)
            throw DataError("row '" + item.id + "' has no label for task " + std::string(to_string(mode)));
        if (label == -2)
            throw DataError("row '" + item.id + "' has no 1B label for task " + std::string(to_string(mode)));
        if (label < 0) continue;
        t.indices.push_back(i);
        t.labels.push_back(label);
    }
    return t;
}

// --- TrainedModel ----------------------------------------------------------

TrainedModel::TrainedModel(std::unique_ptr<Model> m, Pipeline p,
                           std::optional<std::filesystem::path> feature_cache,
                           std::shared_ptr<const FeatureExtractor> shared_features)
    : model(std::move(m)), pipeline(std::move(p)) {
    if (!model) throw ConfigError("TrainedModel: model is null");
    if (pipeline.preprocess) preprocessor = std::make_shared<const Preprocessor>(*pipeline.preprocess);
    const auto family = model->spec().hyper.family;
    if (family == Family::kBertFeatureGru) {
        if (!pipeline.encoder) throw ConfigError("feature family requires an encoder binding");
        if (pipeline.encoder->width != model->spec().input_width)
            throw ConfigError("encoder width " + std::to_string(pipeline.encoder->width) +
                              " does not match model input width " +
                              std::to_string(model->spec().input_width));
        if (shared_features) {
            if (shared_features->mode() != pipeline.encoder->mode)
                throw ConfigError("shared feature extractor uses a different feature mode");
            features = std::move(shared_features);
        } else {
            features = std::make_shared<const FeatureExtractor>(pipeline.encoder->handle(), feature_cache,
                                                                pipeline.encoder->mode);
        }
    } else if (family == Family::kCharLstm || family == Family::kWordLstm) {
        if (!pipeline.vocab) throw ConfigError("recurrent token families require a vocabulary");
        if (pipeline.max_len < 1) throw ConfigError("max_len must be >= 1");
    } else if (dynamic_cast<const FinetuneClassifier*>(model.get()) == nullptr) {
        throw ConfigError("fine-tuning family requires a FinetuneClassifier");
    }
}

std::string TrainedModel::prepare(std::string_view text) const {
    return preprocessor ? (*preprocessor)(text) : std::string(text);
}

ModelInput TrainedModel::input(std::string_view raw) const {
    const std::string text = prepare(raw);
    switch (model->spec().hyper.family) {
    case Family::kCharLstm:
    case Family::kWordLstm:
        return ModelInput::from(encode(text, *pipeline.vocab, pipeline.max_len));
    case Family::kBertFeatureGru: {
        ModelInput in;
        in.features = features->extract(text).states;
        in.length = static_cast<std::int32_t>(in.features.rows());
        return in;
    }
    case Family::kBertFinetune: {
        const auto& enc = static_cast<const FinetuneClassifier&>(*model).encoder();
        ModelInput in;
        in.ids = enc.tokenize(text);
        in.length = static_cast<std::int32_t>(in.ids.size());
        return in;
    }
    }
    throw ConfigError("unknown model family");
}

std::vector<ModelInput> TrainedModel::inputs(const Dataset& ds, std::span<const std::size_t> indices) const {
    std::vector<ModelInput> out;
    if (indices.empty()) {
        out.reserve(ds.size());
        for (const auto& item : ds.items) out.push_back(input(item.text));
    } else {
        out.reserve(indices.size());
        for (auto i : indices) out.push_back(input(ds.items.at(i).text));
    }
    return out;
}

Examples TrainedModel::examples(const Dataset& ds) const {
    auto targets = task_targets(ds, pipeline.task_mode);
    return {inputs(ds, targets.indices), std::move(targets.labels)};
}

std::vector<int> TrainedModel::predict(const Dataset& ds, std::span<const std::size_t> indices,
                                       int batch_size) const {
    std::vector<std::size_t> all;
    if (indices.empty()) {
        all.resize(ds.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        indices = all;
    }
    std::vector<int> out;
    out.reserve(indices.size());
    const auto chunk = static_cast<std::size_t>(std::max(1, batch_size));
    for (std::size_t begin = 0; begin < indices.size(); begin += chunk) {
        const std::size_t end = std::min(indices.size(), begin + chunk);
        const auto batch = inputs(ds, indices.subspan(begin, end - begin));
        for (int p : decide(model->logits(batch))) out.push_back(p);
    }
    return out;
}

// --- preparation and training ----------------------------------------------

TrainedModel prepare_model(const HyperParams& hp_in, TaskMode mode,
                           std::optional<PreprocessConfig> preprocess, const Dataset& train_ds,
                           const PrepareOptions& opts) {
    HyperParams hp = hp_in;
    hp.num_classes = output_units(mode);
    Pipeline pipeline;
    pipeline.task_mode = mode;
    pipeline.preprocess = preprocess;
    std::optional<Preprocessor> pre;
    if (preprocess) pre.emplace(*preprocess);

    switch (hp.family) {
    case Family::kCharLstm:
    case Family::kWordLstm: {
        const bool chars = hp.family == Family::kCharLstm;
        const auto level = chars ? VocabLevel::kChar : VocabLevel::kWord;
        std::vector<std::string> texts;
        texts.reserve(train_ds.size());
        for (const auto& item : train_ds.items) texts.push_back(pre ? (*pre)(item.text) : item.text);
        const int min_freq = opts.min_freq > 0 ? opts.min_freq : (chars ? kDefaultCharMinFreq : kDefaultWordMinFreq);
        pipeline.vocab = Vocab::build(texts, level, min_freq);
        pipeline.max_len = opts.max_len > 0 ? opts.max_len : (chars ? kDefaultCharMaxLen : kDefaultWordMaxLen);
        ModelSpec spec{hp, static_cast<int>(pipeline.vocab->size()), 0, false};
        std::optional<EmbeddingMatrix> vectors;
        if (hp.pretrained_embeddings) {
            if (!opts.pretrained_vectors)
                throw ConfigError("word_lstm with pretrained embeddings needs a vector file");
            vectors = load_pretrained_embeddings(*opts.pretrained_vectors, *pipeline.vocab,
                                                 hp.embedding_dim, mix_seed(opts.seed, 7));
        }
        auto model = build_model(spec, vectors ? &*vectors : nullptr, opts.seed);
        return TrainedModel(std::move(model), std::move(pipeline), opts.feature_cache);
    }
    case Family::kBertFeatureGru: {
        pipeline.encoder = opts.encoder ? *opts.encoder
                                        : EncoderBinding::transformer(hp.encoder.value_or(EncoderSize::kBase));
        hp.embedding_dim = pipeline.encoder->width;
        ModelSpec spec{hp, 0, pipeline.encoder->width, false};
        auto model = build_model(spec, nullptr, opts.seed);
        return TrainedModel(std::move(model), std::move(pipeline), opts.feature_cache, opts.shared_features);
    }
    case Family::kBertFinetune: {
        std::unique_ptr<FinetuneClassifier> model;
        if (opts.finetune_encoder)
            model = build_finetune_classifier(opts.finetune_encoder->clone(), hp.num_classes, opts.seed,
                                              hp.dropout);
        else
            model = build_finetune_classifier(EncoderVariant::of(hp.encoder.value_or(EncoderSize::kBase)),
                                              hp.num_classes, opts.seed, hp.dropout);
        return TrainedModel(std::move(model), std::move(pipeline), opts.feature_cache);
    }
    }
    throw ConfigError("unknown model family");
}

TrainHistory train(TrainedModel& tm, const Dataset& train_ds, const Dataset& val_ds,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
    const auto train_examples = tm.examples(train_ds);
    const auto val_examples = tm.examples(val_ds);
    return fit(*tm.model, train_examples, val_examples, cfg, on_epoch);
}

// --- checkpoints -----------------------------------------------------------

nlohmann::json save_checkpoint(const TrainedModel& tm, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<TensorRef> refs;
    for (const auto* p : static_cast<const Model&>(*tm.model).parameters()) refs.push_back({p->name, &p->value});
    write_tensors(dir / "weights.bin", refs, TensorDType::kF64);

    nlohmann::json files{{"weights", "weights.bin"}};
    if (tm.pipeline.vocab) {
        tm.pipeline.vocab->save(dir / "vocab.json");
        files["vocab"] = "vocab.json";
    }
    if (tm.pipeline.preprocess) {
        write_file_atomic(dir / "preprocess.json", tm.pipeline.preprocess->to_json().dump(2) + "\n");
        files["preprocess"] = "preprocess.json";
    }
    if (const auto* ft = dynamic_cast<const FinetuneClassifier*>(tm.model.get())) {
        std::filesystem::create_directories(dir / "encoder");
        write_file_atomic(dir / "encoder" / "config.json", ft->encoder().config().to_json().dump(2) + "\n");
        ft->encoder().tokenizer().save(dir / "encoder" / "vocab.txt");
        files["encoder_config"] = "encoder/config.json";
        files["encoder_vocab"] = "encoder/vocab.txt";
        files["encoder_max_tokens"] = ft->encoder().max_tokens();
    }
    nlohmann::json manifest{{"format", "hsd-checkpoint"},
                            {"format_version", kCheckpointFormatVersion},
                            {"created_at", utc_timestamp()},
                            {"model", tm.model->spec().to_json()},
                            {"pipeline", tm.pipeline.to_json()},
                            {"files", files},
                            {"weights_sha256", tensor_file_checksum(dir / "weights.bin")}};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

TrainedModel load_checkpoint(const std::filesystem::path& dir,
                             std::optional<std::filesystem::path> feature_cache) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw CheckpointError("checkpoint manifest '" + manifest_path.string() + "' not found");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("checkpoint manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
    }
    if (manifest.value("format", std::string()) != "hsd-checkpoint")
        throw CheckpointError("'" + manifest_path.string() + "' is not a checkpoint manifest");
    const int version = manifest.value("format_version", -1);
    if (version != kCheckpointFormatVersion)
        throw CheckpointError("checkpoint format version " + std::to_string(version) +
                              " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    const auto& files = manifest.at("files");
    const auto weights_path = dir / files.at("weights").get<std::string>();
    if (!std::filesystem::exists(weights_path))
        throw CheckpointError("checkpoint weight blob '" + weights_path.string() + "' is missing");
    auto tensors = read_tensors(weights_path);

    const auto spec = ModelSpec::from_json(manifest.at("model"));
    const auto& pj = manifest.at("pipeline");
    Pipeline pipeline;
    pipeline.task_mode = parse_task_mode(pj.at("task_mode").get<std::string>());
    pipeline.max_len = pj.value("max_len", 0);
    if (files.contains("vocab")) pipeline.vocab = Vocab::load(dir / files.at("vocab").get<std::string>());
    if (files.contains("preprocess")) {
        std::ifstream pin(dir / files.at("preprocess").get<std::string>());
        if (!pin) throw CheckpointError("checkpoint preprocess config is missing");
        pipeline.preprocess = PreprocessConfig::from_json(nlohmann::json::parse(pin));
    }
    if (!pj.at("encoder").is_null()) pipeline.encoder = EncoderBinding::from_json(pj.at("encoder"));

    std::unique_ptr<Model> model;
    if (spec.hyper.family == Family::kBertFinetune) {
        std::ifstream cin(dir / files.at("encoder_config").get<std::string>());
        if (!cin) throw CheckpointError("checkpoint encoder config is missing");
        auto config = TransformerConfig::from_json(nlohmann::json::parse(cin));
        auto tokenizer = WordPieceTokenizer::load(dir / files.at("encoder_vocab").get<std::string>());
        auto encoder = std::make_unique<TransformerEncoder>(config, std::move(tokenizer),
                                                            files.value("encoder_max_tokens", 128), "finetuned");
        model = build_finetune_classifier(std::move(encoder), spec.hyper.num_classes, 0, spec.hyper.dropout);
    } else {
        std::optional<EmbeddingMatrix> placeholder;
        if (spec.hyper.pretrained_embeddings) placeholder = placeholder_embeddings(spec);
        model = build_model(spec, placeholder ? &*placeholder : nullptr, 0);
    }
    for (auto* p : model->parameters()) {
        auto it = tensors.find(p->name);
        if (it == tensors.end())
            throw CheckpointError("weight blob '" + weights_path.string() + "' lacks tensor '" + p->name + "'");
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw CheckpointError("tensor '" + p->name + "' in '" + weights_path.string() + "' has the wrong shape");
        p->value = std::move(it->second);
    }
    return TrainedModel(std::move(model), std::move(pipeline), std::move(feature_cache));
}

} // namespace hsd
