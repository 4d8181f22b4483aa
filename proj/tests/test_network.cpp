#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eid/checkpoint.hpp"
#include "eid/network.hpp"
#include "support/finite_diff.hpp"
#include "support/temp_dir.hpp"

using namespace eid;
using eid::test::finite_diff;
using eid::test::max_rel_err_scaled;
using eid::test::random_tensor;

namespace {

template <typename T>
ParamStore<T> make_unet(const UNetConfig& cfg, uint64_t seed) {
  ParamStore<T> params;
  Rng rng(seed);
  unet_init(cfg, params, rng);
  return params;
}

}  // namespace

TEST_CASE("unet output shape equals input shape") {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 8;
  cfg.in_channels = 3;
  cfg.out_channels = 3;
  auto params = make_unet<float>(cfg, 1);
  const Tensor<float> y = random_tensor<float>(Shape{1, 3, 64, 64}, 3, 0, 1);
  CHECK(unet_forward(cfg, params, y).shape() == y.shape());
}

TEST_CASE("unet outputs lie strictly inside (0,1)") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  auto params = make_unet<float>(cfg, 5);
  const Tensor<float> y = random_tensor<float>(Shape{2, 1, 8, 8}, 7, 0, 1);
  const Tensor<float> out = unet_forward(cfg, params, y);
  for (float v : out.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("unet rejects indivisible spatial sizes and names the divisor") {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  auto params = make_unet<float>(cfg, 9);
  const Tensor<float> y = Tensor<float>::zeros(Shape{1, 1, 10, 10});
  try {
    (void)unet_forward(cfg, params, y);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
}

TEST_CASE("unet parameter gradients match finite differences (tiny config)") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 2;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  auto params = make_unet<double>(cfg, 11);
  const Tensor<double> y = random_tensor<double>(Shape{1, 1, 8, 8}, 13, 0, 1);
  const Tensor<double> target = random_tensor<double>(Shape{1, 1, 8, 8}, 15, 0, 1);

  auto loss_value = [&] {
    return mse(unet_forward(cfg, params, y), target).item();
  };
  backward(mse(unet_forward(cfg, params, y), target));
  for (const std::string& name : params.names()) {
    Tensor<double>& p = params.at(name);
    REQUIRE_MESSAGE(p.has_grad(), name);
    const auto fd = finite_diff<double>(loss_value, p, 1e-5);
    CHECK_MESSAGE(max_rel_err_scaled<double>(p.grad(), fd) < 1e-3, name);
  }
}

TEST_CASE("unet input gradients flow (needed by the nested objective)") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 2;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  auto params = make_unet<double>(cfg, 17);
  Tensor<double> y = random_tensor<double>(Shape{1, 1, 8, 8}, 19, 0, 1, true);
  const Tensor<double> target = random_tensor<double>(Shape{1, 1, 8, 8}, 21, 0, 1);
  auto loss_value = [&] {
    return mse(unet_forward(cfg, params, y), target).item();
  };
  backward(mse(unet_forward(cfg, params, y), target));
  REQUIRE(y.has_grad());
  CHECK(max_rel_err_scaled<double>(
            y.grad(), finite_diff<double>(loss_value, y, 1e-5)) < 1e-3);
  params.clear_all_grads();
}

TEST_CASE("forward determinism: same params and input, bit-identical output") {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.base_channels = 4;
  cfg.in_channels = 3;
  cfg.out_channels = 3;
  auto params = make_unet<float>(cfg, 23);
  const Tensor<float> y = random_tensor<float>(Shape{1, 3, 16, 16}, 25, 0, 1);
  const Tensor<float> a = unet_forward(cfg, params, y);
  const Tensor<float> b = unet_forward(cfg, params, y);
  for (int64_t i = 0; i < a.numel(); ++i)
    CHECK(a.values()[size_t(i)] == b.values()[size_t(i)]);
}

TEST_CASE("adam: zero gradients leave parameters unchanged, step advances") {
  ParamStore<float> params;
  params.create("w", Shape{1, 1, 2, 2});
  params.at("w").values()[0] = 0.7f;
  params.at("w").grad_buf();  // allocate zeros
  adam_step(params, 1e-3);
  CHECK(params.step() == 1);
  CHECK(params.at("w").values()[0] == 0.7f);
}

TEST_CASE("adam: first step moves by about lr in the gradient direction") {
  ParamStore<double> params;
  params.create("w", Shape{1, 1, 1, 2});
  auto g = params.at("w").grad_buf();
  g[0] = 0.37;
  g[1] = -4.2;
  adam_step(params, 1e-2);
  const auto v = params.at("w").values();
  CHECK(v[0] == doctest::Approx(-1e-2).epsilon(1e-4));
  CHECK(v[1] == doctest::Approx(1e-2).epsilon(1e-4));
}

TEST_CASE("adam: equal gradients produce identical updates across names") {
  ParamStore<float> params;
  params.create("a", Shape{1, 1, 1, 1});
  params.create("b", Shape{1, 1, 1, 1});
  params.at("a").grad_buf()[0] = 1.5f;
  params.at("b").grad_buf()[0] = 1.5f;
  adam_step(params, 3e-3);
  CHECK(params.at("a").values()[0] == params.at("b").values()[0]);
}

TEST_CASE("adam rejects a parameter with no gradient, naming it") {
  ParamStore<float> params;
  params.create("connected", Shape{1, 1, 1, 1});
  params.create("orphan", Shape{1, 1, 1, 1});
  params.at("connected").grad_buf()[0] = 1.0f;
  try {
    adam_step(params, 1e-3);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("orphan") != std::string::npos);
  }
}

TEST_CASE("adam with lr = 0 leaves parameters bit-identical") {
  ParamStore<float> params;
  params.create("w", Shape{1, 1, 2, 2});
  for (float& v : params.at("w").values()) v = 0.123f;
  for (float& g : params.at("w").grad_buf()) g = 0.5f;
  adam_step(params, 0.0);
  for (float v : params.at("w").values()) CHECK(v == 0.123f);
}

TEST_CASE("learning rate halves every 20 epochs") {
  CHECK(lr_schedule(0, 1e-4) == 1e-4);
  CHECK(lr_schedule(19, 1e-4) == 1e-4);
  CHECK(lr_schedule(20, 1e-4) == 5e-5);
  CHECK(lr_schedule(39, 1e-4) == 5e-5);
  CHECK(lr_schedule(40, 1e-4) == 2.5e-5);
  CHECK_THROWS_AS((void)lr_schedule(-1, 1e-4), std::invalid_argument);
}

TEST_CASE("checkpoint save/load reproduces the forward pass bit-exactly") {
  eid::test::TempDir dir("ckpt");
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  auto params = make_unet<float>(cfg, 27);
  const Tensor<float> y = random_tensor<float>(Shape{1, 1, 8, 8}, 29, 0, 1);

  // Exercise optimizer state round-tripping too.
  backward(mse(unet_forward(cfg, params, y), y));
  adam_step(params, 1e-4);
  const Tensor<float> before = unet_forward(cfg, params, y);

  save_checkpoint(dir.sub("net.ckpt"), params);
  LoadedCheckpoint<float> loaded = load_checkpoint<float>(dir.sub("net.ckpt"));
  CHECK(loaded.params.step() == 1);
  CHECK(loaded.params.names() == params.names());
  const UNetConfig inferred = unet_config_from_params(loaded.params);
  CHECK(inferred.levels == cfg.levels);
  CHECK(inferred.base_channels == cfg.base_channels);

  const Tensor<float> after = unet_forward(cfg, loaded.params, y);
  for (int64_t i = 0; i < before.numel(); ++i)
    CHECK(before.values()[size_t(i)] == after.values()[size_t(i)]);

  // Adam state restored: a further identical step matches.
  auto step_once = [&](ParamStore<float>& p) {
    backward(mse(unet_forward(cfg, p, y), y));
    adam_step(p, 1e-4);
  };
  step_once(params);
  step_once(loaded.params);
  for (const std::string& name : params.names()) {
    const auto a = params.at(name).values();
    const auto b = loaded.params.at(name).values();
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("50-step single-pair overfit: smoothed loss decreases") {
  UNetConfig cfg;
  cfg.levels = 2;
  cfg.base_channels = 4;
  cfg.in_channels = 1;
  cfg.out_channels = 1;
  auto params = make_unet<float>(cfg, 31);
  const Tensor<float> y = random_tensor<float>(Shape{1, 1, 8, 8}, 33, 0, 1);
  const Tensor<float> target = random_tensor<float>(Shape{1, 1, 8, 8}, 35, 0.2, 0.8);

  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    const Tensor<float> loss = mse(unet_forward(cfg, params, y), target);
    losses.push_back(double(loss.item()));
    backward(loss);
    adam_step(params, 1e-2);
  }
  // 5-step window means must decrease monotonically.
  std::vector<double> smoothed;
  for (size_t i = 0; i + 5 <= losses.size(); i += 5) {
    double mean = 0;
    for (size_t k = 0; k < 5; ++k) mean += losses[i + k];
    smoothed.push_back(mean / 5);
  }
  for (size_t i = 1; i < smoothed.size(); ++i)
    CHECK(smoothed[i] < smoothed[i - 1]);
}

TEST_CASE("duplicate parameter names are rejected") {
  ParamStore<float> params;
  params.create("w", Shape{1, 1, 1, 1});
  CHECK_THROWS_AS((void)params.create("w", Shape{1, 1, 1, 1}),
                  std::invalid_argument);
}
