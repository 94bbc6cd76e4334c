// Hot paths at the default model sizes (V=64, D=32, L=16, 2 layers, T=200).

#include "paradiff/denoiser.hpp"
#include "paradiff/guidance_models.hpp"
#include "paradiff/inference.hpp"
#include "paradiff/training.hpp"

#include <benchmark/benchmark.h>

using namespace paradiff;

namespace {

struct Setup {
    DenoiserConfig config;
    Rng init{1};
    Denoiser model{config, init};
    EmbeddingTable E;
    NoiseSchedule schedule{ScheduleKind::paraguide, config.steps};
    std::vector<PairExample> pairs;

    Setup() {
        Rng e(2);
        E = EmbeddingTable::unit_rows(config.vocab_size, config.dim, e);
        Rng rng(3);
        for (int i = 0; i < 32; ++i) {
            TokenSequence w, p;
            const int n = rng.uniform_int(6, config.max_len - 1);
            for (int j = 0; j < n; ++j) w.ids.push_back(rng.uniform_int(kReservedCount, config.vocab_size - 1));
            p.ids.assign(w.ids.begin(), w.ids.end() - 2);
            pairs.push_back({w, p, {}});
        }
    }
};

ToyModelConfig toy_config(int outputs) {
    ToyModelConfig c;
    c.outputs = outputs;
    return c;
}

void BM_PredictLogits(benchmark::State& state) {
    const Setup s;
    Rng rng(4);
    const NoisedLatent x = initial_latent(s.config.max_len, s.config.dim, s.config.steps, rng);
    for (auto _ : state) benchmark::DoNotOptimize(s.model.predict_logits(x, s.pairs[0].paraphrase, s.E));
}
BENCHMARK(BM_PredictLogits)->Unit(benchmark::kMicrosecond);

// One optimizer step on a batch of 32: forward, backward, RMSProp update.
void BM_TrainStep(benchmark::State& state) {
    Setup s;
    RmsProp opt(s.model.params(), {});
    std::vector<const PairExample*> batch;
    for (const auto& p : s.pairs) batch.push_back(&p);
    Rng rng(5);
    for (auto _ : state) {
        std::vector<int> ts;
        for (std::size_t i = 0; i < batch.size(); ++i) ts.push_back(rng.uniform_int(1, s.config.steps));
        Gradients g = s.model.params().zeros_like();
        benchmark::DoNotOptimize(batch_loss(s.model, s.E, s.schedule, batch, ts, rng, &g));
        opt.step(s.model.params(), g);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

// k inner updates with the recompute rule, mid-trajectory.
void BM_ApplyGuidanceAttribute(benchmark::State& state) {
    Rng rng(6);
    const ToyAttributeClassifier clf(toy_config(2), rng);
    const AttributeObjective obj(clf, 1, 3.0);
    GuidanceSpec spec;
    spec.mode = GuidanceMode::attribute;
    spec.lambda = 10.0;
    spec.k = static_cast<int>(state.range(0));
    const Matrix l = random_normal(16, 64, 1.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(apply_guidance(l, spec, 100, 200, &obj));
}
BENCHMARK(BM_ApplyGuidanceAttribute)->Arg(1)->Arg(3)->Unit(benchmark::kMicrosecond);

void BM_ApplyGuidanceStyle(benchmark::State& state) {
    Rng rng(7);
    const ToyStyleEmbedder emb(toy_config(32), rng);
    std::vector<TokenSequence> exemplars;
    for (int i = 0; i < 16; ++i) exemplars.push_back(TokenSequence{{5 + i, 20 + i, 40 + i % 20}});
    const StyleObjective obj(emb, exemplars, 3.0);
    GuidanceSpec spec;
    spec.mode = GuidanceMode::style;
    spec.exemplars = exemplars;
    spec.lambda = 10.0;
    const Matrix l = random_normal(16, 64, 1.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(apply_guidance(l, spec, 100, 200, &obj));
}
BENCHMARK(BM_ApplyGuidanceStyle)->Unit(benchmark::kMicrosecond);

void BM_TopP(benchmark::State& state) {
    Rng rng(8);
    const Vector logits = random_normal(state.range(0), 1, 2.0, rng).col(0);
    Vector probs = (logits.array() - logits.maxCoeff()).exp().matrix();
    probs /= probs.sum();
    for (auto _ : state) benchmark::DoNotOptimize(top_p_sample(probs, 0.8, rng));
}
BENCHMARK(BM_TopP)->Arg(64)->Arg(1024);

// A whole unguided reverse process at T=200.
void BM_ReverseProcess(benchmark::State& state) {
    const Setup s;
    const DenoiserCheckpoint ckpt{s.model, s.E, ScheduleKind::paraguide, 0, 0.0, {}};
    TransferConfig cfg;
    cfg.max_retries = 0;
    long item = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            transfer_paraphrase(s.pairs[0].original, s.pairs[0].paraphrase, item++, cfg, ckpt, nullptr));
    }
}
BENCHMARK(BM_ReverseProcess)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
