#include <benchmark/benchmark.h>

#include <cmath>

#include "eid/metrics.hpp"
#include "eid/network.hpp"
#include "eid/physics.hpp"
#include "eid/trainer.hpp"

namespace {

using namespace eid;

Tensor<float> random_image(Shape shape, uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t = Tensor<float>::zeros(shape);
  for (float& v : t.values()) v = float(rng.uniform());
  return t;
}

void UNetForward(benchmark::State& state) {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = int(state.range(0));
  cfg.in_channels = 3;
  cfg.out_channels = 3;
  ParamStore<float> params;
  Rng rng(1);
  unet_init(cfg, params, rng);
  params.set_requires_grad_all(false);
  const Tensor<float> y = random_image(Shape{1, 3, 32, 32}, 2);
  for (auto _ : state) {
    NoGradGuard no_grad;
    Tensor<float> out = unet_forward(cfg, params, y);
    benchmark::DoNotOptimize(out.values().data());
  }
}
BENCHMARK(UNetForward)->Arg(8)->Arg(16);

/// One full training step of the two-term objective: forward through both
/// branches, backward, Adam.
void EidTrainStep(benchmark::State& state) {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 16;
  cfg.in_channels = 3;
  cfg.out_channels = 3;
  ParamStore<float> params;
  Rng rng(3);
  unet_init(cfg, params, rng);

  ScatteringParams sp;
  sp.beta = std::log(2.0);
  sp.alpha = {1.0};
  sp.depth = Tensor<double>::ones(Shape{1, 1, 32, 32});
  const AnalyticScattering<float> haze(sp);
  const Tensor<float> y = random_image(Shape{2, 3, 32, 32}, 4);
  const GroupElement g = make_rotate(0.5, 32, 32);

  for (auto _ : state) {
    EidLossTerms<float> terms =
        eid_loss(cfg, params, haze, y, g, 0.1, LossVariant::kV3);
    backward(terms.total);
    adam_step(params, 1e-4);
  }
  state.SetItemsProcessed(state.iterations() * y.shape().n);
}
BENCHMARK(EidTrainStep);

void SsimMetric(benchmark::State& state) {
  const Tensor<float> a = random_image(Shape{1, 3, 64, 64}, 5);
  const Tensor<float> b = random_image(Shape{1, 3, 64, 64}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(SsimMetric);

}  // namespace
