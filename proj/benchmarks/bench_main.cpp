#include <benchmark/benchmark.h>

#include "stnet/analysis.hpp"
#include "stnet/blocks.hpp"
#include "stnet/models.hpp"

namespace {

using namespace stnet;

Tensor<float> noise(Rng& rng, Shape shape) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// One block forward on a first-layer sized input: [2, 3, 16, 64, 64].
void BM_BlockForward(benchmark::State& state) {
  const auto kind = kAllBlockKinds[state.range(0)];
  Rng rng(1);
  BlockSpec spec;
  spec.kind = kind;
  spec.cin = 3;
  spec.cout = 64;
  Block<float> block(spec, rng);
  const auto x = noise(rng, {2, 3, 16, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(block.forward(x, Mode::Eval));
  state.SetLabel(std::string(block_kind_name(kind)));
}
BENCHMARK(BM_BlockForward)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

void BM_BlockBackward(benchmark::State& state) {
  const auto kind = kAllBlockKinds[state.range(0)];
  Rng rng(2);
  BlockSpec spec;
  spec.kind = kind;
  spec.cin = 64;
  spec.cout = 64;
  Block<float> block(spec, rng);
  const auto x = noise(rng, {2, 64, 8, 16, 16});
  const auto y = block.forward(x, Mode::Train);
  const Tensor<float> g(y.shape(), 1.0f);
  for (auto _ : state) {
    block.forward(x, Mode::Train);
    benchmark::DoNotOptimize(block.backward(g));
  }
  state.SetLabel(std::string(block_kind_name(kind)));
}
BENCHMARK(BM_BlockBackward)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

// Full training step of each video network at batch 2, 16x64x64.
void BM_VideoTrainStep(benchmark::State& state) {
  const auto& name = video_arch_names()[state.range(0)];
  Rng rng(3);
  auto model = build_arch<float>(name, rng);
  const auto x = noise(rng, {2, 3, 16, 64, 64});
  const Tensor<float> g({2, 2}, 0.5f);
  for (auto _ : state) {
    model->zero_grad();
    model->forward(x, Mode::Train);
    model->backward(g);
  }
  state.SetLabel(name);
  state.counters["MACs"] = static_cast<double>(count_flops(video_arch(name), {16, 64, 64}));
}
BENCHMARK(BM_VideoTrainStep)->DenseRange(0, 6)->Unit(benchmark::kMillisecond);

void BM_CountParams(benchmark::State& state) {
  for (auto _ : state)
    for (const auto& name : video_arch_names()) benchmark::DoNotOptimize(count_params(video_arch(name)));
}
BENCHMARK(BM_CountParams);

}  // namespace

BENCHMARK_MAIN();
