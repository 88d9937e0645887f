#include <benchmark/benchmark.h>

#include "hsd/evaluate.hpp"
#include "hsd/models.hpp"
#include "hsd/preprocess.hpp"
#include "hsd/pretrained.hpp"
#include "hsd/random.hpp"

using namespace hsd;

namespace {

const char* kTweet =
    "This is enough of yours Modi This is not skill India it is kill India @narendramodi #ExitModi "
    "#Resign_PM_Modi https://t.co/m9FZyU4Lfg \xF0\x9F\x94\xA5\xF0\x9F\x94\xA5";

void BM_Preprocess(benchmark::State& state) {
    const Preprocessor pre{PreprocessConfig{}};
    for (auto _ : state) benchmark::DoNotOptimize(pre(kTweet));
}
BENCHMARK(BM_Preprocess);

std::vector<ModelInput> id_batch(int batch, int len, int vocab) {
    Rng rng(1);
    std::vector<ModelInput> out(static_cast<std::size_t>(batch));
    for (auto& in : out) {
        in.ids.resize(static_cast<std::size_t>(len));
        for (auto& id : in.ids) id = 2 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(vocab - 2)));
        in.length = len;
    }
    return out;
}

// Char_LSTM at the published best size, batch 32 x 280 characters.
void BM_CharLstmForward(benchmark::State& state) {
    ModelSpec s;
    s.hyper.family = Family::kCharLstm;
    s.hyper.embedding_dim = 200;
    s.hyper.hidden_dim = static_cast<int>(state.range(0));
    s.hyper.dropout = 0.5;
    s.vocab_size = 120;
    const auto m = build_model(s, nullptr, 1);
    const auto batch = id_batch(32, 280, 120);
    for (auto _ : state) benchmark::DoNotOptimize(m->logits(batch));
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_CharLstmForward)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_CharLstmTrainStep(benchmark::State& state) {
    ModelSpec s;
    s.hyper.family = Family::kCharLstm;
    s.hyper.embedding_dim = 200;
    s.hyper.hidden_dim = 16;
    s.hyper.dropout = 0.5;
    s.vocab_size = 120;
    auto m = build_model(s, nullptr, 1);
    const auto batch = id_batch(32, 280, 120);
    const std::vector<int> labels(32, 1);
    Rng rng(2);
    for (auto _ : state) {
        m->zero_grad();
        const auto logits = m->forward_train(batch, rng);
        m->backward(nn::classification_loss(logits, labels).grad);
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_CharLstmTrainStep)->Unit(benchmark::kMillisecond);

void BM_StubFeatures(benchmark::State& state) {
    const auto stub = encoder_stub(768, 1);
    for (auto _ : state) benchmark::DoNotOptimize(stub->encode(kTweet));
}
BENCHMARK(BM_StubFeatures);

void BM_F1Scores(benchmark::State& state) {
    Rng rng(3);
    std::vector<int> t(10000), p(10000);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<int>(rng.below(4));
        p[i] = static_cast<int>(rng.below(4));
    }
    for (auto _ : state) benchmark::DoNotOptimize(f1_scores(confusion_matrix(t, p, 4)));
}
BENCHMARK(BM_F1Scores);

} // namespace

BENCHMARK_MAIN();
