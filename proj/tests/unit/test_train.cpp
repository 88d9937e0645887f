#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "hsd/error.hpp"
#include "hsd/evaluate.hpp"
#include "hsd/tensor_io.hpp"
#include "hsd/train.hpp"
#include "support/synthetic.hpp"

using namespace hsd;

namespace {

HyperParams hyper(Family family, int e, int h, double p = 0.0) {
    HyperParams hp;
    hp.family = family;
    hp.embedding_dim = e;
    hp.hidden_dim = h;
    hp.dropout = p;
    if (family == Family::kBertFeatureGru) hp.encoder = EncoderSize::kBase;
    return hp;
}

PrepareOptions no_cache() {
    PrepareOptions po;
    po.feature_cache = std::nullopt;
    return po;
}

TrainConfig quick(int epochs = 50) {
    TrainConfig cfg;
    cfg.max_epochs = epochs;
    cfg.patience = std::min(10, epochs - 1);
    return cfg;
}

/// Trains on the set and scores on the same set (the overfit criterion).
double overfit(const HyperParams& hp, const PrepareOptions& po) {
    const auto ds = fixtures::separable_dataset(64);
    auto tm = prepare_model(hp, TaskMode::kBinary1A, PreprocessConfig{}, ds, po);
    auto cfg = quick();
    cfg.batch_size = 8; // 8 updates per epoch on 64 examples
    const auto history = train(tm, ds, ds, cfg);
    EXPECT_LE(static_cast<int>(history.epochs.size()), 50);
    return evaluate(tm, ds).macro_f1;
}

std::vector<nn::Matrix> snapshot(Model& m) {
    std::vector<nn::Matrix> out;
    for (auto* p : m.parameters()) out.push_back(p->value);
    return out;
}

} // namespace

TEST(Overfit, CharLstmE50H16) {
    EXPECT_GE(overfit(hyper(Family::kCharLstm, 50, 16), no_cache()), 0.95);
}

TEST(Overfit, WordLstmE100H32) {
    auto po = no_cache();
    po.min_freq = 1;
    EXPECT_GE(overfit(hyper(Family::kWordLstm, 100, 32), po), 0.95);
}

TEST(Overfit, FeatureGruOnStubWidth16) {
    auto po = no_cache();
    po.encoder = EncoderBinding::stub(16, 5);
    EXPECT_GE(overfit(hyper(Family::kBertFeatureGru, 16, 16), po), 0.95);
}

TEST(EarlyStopping, StopsAfterPatienceEpochsWithoutImprovement) {
    EarlyStopping es(5);
    const double scores[] = {0.5, 0.6, 0.6, 0.55, 0.6, 0.59, 0.58, 0.9};
    int stopped = 0;
    for (int e = 1; e <= 8; ++e)
        if (es.observe(e, scores[e - 1])) {
            stopped = e;
            break;
        }
    EXPECT_EQ(stopped, 7);
    EXPECT_EQ(es.best_epoch(), 2); // first epoch reaching the maximum wins
}

TEST(EarlyStopping, FitStopsAtEpochSixWhenNothingImproves) {
    // lr = 0 keeps validation F1 constant, so epoch 1 stays best and patience 5 ends at epoch 6.
    const auto ds = fixtures::separable_dataset(40);
    auto tm = prepare_model(hyper(Family::kCharLstm, 8, 4), TaskMode::kBinary1A, std::nullopt, ds, no_cache());
    auto cfg = quick(50);
    cfg.patience = 5;
    cfg.learning_rate = 0.0;
    const auto h = train(tm, ds, ds, cfg);
    EXPECT_EQ(h.epochs.size(), 6u);
    EXPECT_EQ(h.best_epoch, 1);
    EXPECT_TRUE(h.stopped_early);
}

TEST(Fit, ZeroLearningRateLeavesWeightsUnchanged) {
    const auto ds = fixtures::separable_dataset(40);
    auto tm = prepare_model(hyper(Family::kWordLstm, 8, 4, 0.5), TaskMode::kBinary1A, std::nullopt, ds, no_cache());
    const auto before = snapshot(*tm.model);
    auto cfg = quick(3);
    cfg.learning_rate = 0.0;
    train(tm, ds, ds, cfg);
    const auto after = snapshot(*tm.model);
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(before[i] == after[i]);
}

TEST(Fit, DeterministicForFixedSeed) {
    const auto ds = fixtures::separable_dataset(40);
    auto run = [&] {
        auto tm = prepare_model(hyper(Family::kCharLstm, 8, 4, 0.5), TaskMode::kBinary1A, std::nullopt, ds, no_cache());
        return train(tm, ds, ds, quick(4)).epochs;
    };
    EXPECT_EQ(run(), run());
}

TEST(Fit, NonFiniteLossRaisesTrainingError) {
    const auto ds = fixtures::separable_dataset(40);
    auto tm = prepare_model(hyper(Family::kCharLstm, 8, 4), TaskMode::kBinary1A, std::nullopt, ds, no_cache());
    tm.model->parameters().front()->value.setConstant(std::nan(""));
    try {
        train(tm, ds, ds, quick(3));
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch"), std::string::npos);
        EXPECT_NE(msg.find("lr"), std::string::npos);
    }
}

TEST(Loss, DuplicatedBatchHasSameMeanLoss) {
    nn::Matrix one(1, 1), two(2, 1);
    one << 0.3;
    two << 0.3, 0.3;
    const std::vector<int> l1{1}, l2{1, 1};
    EXPECT_NEAR(nn::bce_with_logits(one, l1).loss, nn::bce_with_logits(two, l2).loss, 1e-15);
    nn::Matrix m1(1, 3), m2(2, 3);
    m1 << 0.1, -2, 3;
    m2 << 0.1, -2, 3, 0.1, -2, 3;
    const std::vector<int> c1{2}, c2{2, 2};
    EXPECT_NEAR(nn::softmax_cross_entropy(m1, c1).loss, nn::softmax_cross_entropy(m2, c2).loss, 1e-15);
}

TEST(Loss, BceIsStableForLargeLogits) {
    nn::Matrix l(2, 1);
    l << 800.0, -800.0;
    const std::vector<int> y{0, 1};
    const auto r = nn::bce_with_logits(l, y);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_NEAR(r.loss, 800.0, 1e-9);
}

TEST(Targets, ConditionalKeepsOnlyHofRows) {
    const auto ds = fixtures::separable_dataset(30);
    const auto t = task_targets(ds, TaskMode::kConditional1B);
    EXPECT_EQ(t.indices.size(), 10u);
    for (int l : t.labels) EXPECT_LT(l, 3);
    EXPECT_EQ(task_targets(ds, TaskMode::kFlat1B).indices.size(), 30u);
}

TEST(Train, FlatFourClassRuns) {
    const auto ds = fixtures::separable_dataset(40);
    auto tm = prepare_model(hyper(Family::kCharLstm, 8, 8), TaskMode::kFlat1B, PreprocessConfig{}, ds, no_cache());
    train(tm, ds, ds, quick(2));
    const auto r = evaluate(tm, ds);
    EXPECT_EQ(r.classes.size(), 4u);
}

// --- checkpoints -----------------------------------------------------------

namespace {

void expect_round_trip(TrainedModel& tm, const Dataset& ds, const std::string& name) {
    const auto dir = fixtures::temp_dir("ckpt_" + name);
    save_checkpoint(tm, dir / "ck");
    const auto loaded = load_checkpoint(dir / "ck", std::nullopt);
    const auto inputs = tm.inputs(ds);
    const auto a = tm.model->logits(inputs);
    const auto b = loaded.model->logits(loaded.inputs(ds));
    ASSERT_EQ(a.rows(), b.rows());
    EXPECT_TRUE(a == b) << name << ": max diff " << (a - b).cwiseAbs().maxCoeff();
    EXPECT_EQ(loaded.pipeline.to_json(), tm.pipeline.to_json());
}

} // namespace

TEST(Checkpoint, CharRoundTripIsBitExact) {
    const auto ds = fixtures::separable_dataset(20);
    auto tm = prepare_model(hyper(Family::kCharLstm, 8, 4, 0.5), TaskMode::kBinary1A, PreprocessConfig{}, ds, no_cache());
    train(tm, ds, ds, quick(2));
    expect_round_trip(tm, ds, "char");
}

TEST(Checkpoint, WordWithPretrainedRoundTripIsBitExact) {
    const auto ds = fixtures::separable_dataset(20);
    const auto dir = fixtures::temp_dir("glove_ck");
    {
        std::ofstream f(dir / "v.txt");
        f << "lovely 0.1 0.2 0.3 0.4\nxqz -1 -2 -3 -4\n";
    }
    auto po = no_cache();
    po.pretrained_vectors = dir / "v.txt";
    po.min_freq = 1;
    auto hp = hyper(Family::kWordLstm, 4, 4, 0.25);
    hp.pretrained_embeddings = true;
    auto tm = prepare_model(hp, TaskMode::kFlat1B, std::nullopt, ds, po);
    train(tm, ds, ds, quick(2));
    expect_round_trip(tm, ds, "word");
}

TEST(Checkpoint, FeatureStubRoundTripIsBitExact) {
    const auto ds = fixtures::separable_dataset(20);
    auto po = no_cache();
    po.encoder = EncoderBinding::stub(8, 2);
    auto tm = prepare_model(hyper(Family::kBertFeatureGru, 8, 4), TaskMode::kBinary1A, PreprocessConfig{}, ds, po);
    train(tm, ds, ds, quick(2));
    expect_round_trip(tm, ds, "feature");
}

TEST(Checkpoint, FinetuneRoundTripIsBitExact) {
    const auto ds = fixtures::separable_dataset(12);
    TransformerConfig cfg;
    std::vector<std::string> vocab{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "lovely", "sunny", "xq", "##z"};
    cfg.vocab_size = static_cast<int>(vocab.size());
    cfg.hidden_size = 8;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.intermediate_size = 8;
    cfg.max_positions = 32;
    auto po = no_cache();
    po.finetune_encoder = TransformerEncoder::random(cfg, WordPieceTokenizer::from_tokens(vocab), 1, 32);
    HyperParams hp;
    hp.family = Family::kBertFinetune;
    hp.encoder = EncoderSize::kBase;
    hp.dropout = 0.1;
    auto tm = prepare_model(hp, TaskMode::kBinary1A, PreprocessConfig{}, ds, po);
    auto tc = TrainConfig::for_family(Family::kBertFinetune);
    tc.max_epochs = 2;
    tc.patience = 1;
    tc.learning_rate = 1e-3;
    train(tm, ds, ds, tc);
    expect_round_trip(tm, ds, "finetune");
}

TEST(Checkpoint, MissingBlobNamesTheFile) {
    const auto ds = fixtures::separable_dataset(20);
    auto tm = prepare_model(hyper(Family::kCharLstm, 8, 4), TaskMode::kBinary1A, std::nullopt, ds, no_cache());
    const auto dir = fixtures::temp_dir("ckpt_missing");
    save_checkpoint(tm, dir);
    std::filesystem::remove(dir / "weights.bin");
    try {
        load_checkpoint(dir, std::nullopt);
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("weights.bin"), std::string::npos) << e.what();
    }
}

TEST(Checkpoint, CorruptedBlobDetected) {
    const auto ds = fixtures::separable_dataset(20);
    auto tm = prepare_model(hyper(Family::kCharLstm, 8, 4), TaskMode::kBinary1A, std::nullopt, ds, no_cache());
    const auto dir = fixtures::temp_dir("ckpt_corrupt");
    save_checkpoint(tm, dir);
    {
        std::fstream f(dir / "weights.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-3, std::ios::end);
        f.put('\x7f');
    }
    EXPECT_THROW(load_checkpoint(dir, std::nullopt), CheckpointError);
}

TEST(Checkpoint, ManifestRecordsFormat) {
    const auto ds = fixtures::separable_dataset(20);
    auto tm = prepare_model(hyper(Family::kCharLstm, 8, 4), TaskMode::kBinary1A, std::nullopt, ds, no_cache());
    const auto dir = fixtures::temp_dir("ckpt_manifest");
    const auto manifest = save_checkpoint(tm, dir);
    EXPECT_EQ(manifest["format"], "hsd-checkpoint");
    EXPECT_EQ(manifest["format_version"], kCheckpointFormatVersion);
    EXPECT_TRUE(std::filesystem::exists(dir / "vocab.json"));
}
