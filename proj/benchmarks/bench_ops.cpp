#include <benchmark/benchmark.h>

#include "eid/ops.hpp"
#include "eid/rng.hpp"
#include "eid/transforms.hpp"

namespace {

using namespace eid;

Tensor<float> random_image(Shape shape, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t = Tensor<float>::zeros(shape);
  for (float& v : t.values()) v = float(rng.uniform());
  return t;
}

void ConvForward(benchmark::State& state) {
  const int64_t ch = state.range(0);
  const Tensor<float> x = random_image(Shape{1, ch, 32, 32}, 1);
  const Tensor<float> w = random_image(Shape{ch, ch, 3, 3}, 2);
  const Tensor<float> b = Tensor<float>::zeros(Shape{1, ch, 1, 1});
  for (auto _ : state) {
    Tensor<float> y = conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel() * ch * 9);
}
BENCHMARK(ConvForward)->Arg(8)->Arg(16)->Arg(32);

void ConvBackward(benchmark::State& state) {
  const int64_t ch = state.range(0);
  Tensor<float> x = random_image(Shape{1, ch, 32, 32}, 3);
  x.set_requires_grad(true);
  Tensor<float> w = random_image(Shape{ch, ch, 3, 3}, 4);
  w.set_requires_grad(true);
  Tensor<float> b = Tensor<float>::zeros(Shape{1, ch, 1, 1}, true);
  for (auto _ : state) {
    backward(sum(conv2d(x, w, b, 1, 1)));
    x.clear_grad();
    w.clear_grad();
    b.clear_grad();
  }
  state.SetItemsProcessed(state.iterations() * x.numel() * ch * 9);
}
BENCHMARK(ConvBackward)->Arg(8)->Arg(16);

void GridSampleRotate(benchmark::State& state) {
  const Tensor<float> x = random_image(Shape{1, 3, 64, 64}, 5);
  const GroupElement g = make_rotate(0.7, 64, 64);
  for (auto _ : state) {
    Tensor<float> y = apply(g, x);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(GridSampleRotate);

void ElementwiseSigmoid(benchmark::State& state) {
  const Tensor<float> x = random_image(Shape{1, 16, 64, 64}, 6);
  for (auto _ : state) {
    Tensor<float> y = sigmoid(x);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(ElementwiseSigmoid);

}  // namespace

BENCHMARK_MAIN();
