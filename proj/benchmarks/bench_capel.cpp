#include <benchmark/benchmark.h>

#include "capel/capel.hpp"

using namespace capel;

namespace {

struct Setup {
  CapelModel model;
  EmbeddingMatrix batch;
  LabelVector labels;
};

Setup make(std::size_t classes, std::size_t prompts, std::size_t dim, std::size_t batch) {
  Rng rng(1);
  PromptTensor p(classes, prompts, dim);
  for (auto& v : p.data) v = static_cast<float>(rng.gaussian());
  Setup s{init_model(p), EmbeddingMatrix(batch, dim), LabelVector(batch)};
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<float> x(dim);
    for (auto& v : x) v = static_cast<float>(rng.gaussian());
    const auto u = l2_normalize(x);
    std::copy(u.begin(), u.end(), s.batch.row(i).begin());
    s.labels[i] = static_cast<std::uint32_t>(rng.uniform_index(classes));
  }
  return s;
}

void BM_Predict(benchmark::State& state) {
  const auto s = make(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 512, 1);
  for (auto _ : state) benchmark::DoNotOptimize(predict(s.model, s.batch.row(0)));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Predict)->Args({10, 4})->Args({100, 50})->Args({1000, 10});

void BM_Gradients(benchmark::State& state) {
  const auto s = make(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 512, 64);
  const ObjectiveOptions opts{3.0, PcScope::AllClassesMean, static_cast<unsigned>(state.range(2))};
  for (auto _ : state) benchmark::DoNotOptimize(gradients(s.model, s.batch, s.labels, opts));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Gradients)
    ->Args({10, 4, 1})
    ->Args({100, 50, 1})
    ->Args({100, 50, 4})
    ->Unit(benchmark::kMillisecond);

void BM_TrainEpochSynth(benchmark::State& state) {
  const auto inst = generate(SynthConfig{});
  TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(init_model(inst.prompts), inst.train.x, inst.train.y, cfg));
  }
}
BENCHMARK(BM_TrainEpochSynth)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
