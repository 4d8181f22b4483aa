#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "eid/ops.hpp"
#include "eid/tensor.hpp"
#include "eid/tensor_io.hpp"
#include "support/finite_diff.hpp"
#include "support/temp_dir.hpp"

using namespace eid;
using eid::test::finite_diff;
using eid::test::max_rel_err_elementwise;
using eid::test::max_rel_err_scaled;
using eid::test::random_tensor;

TEST_CASE("exp of zeros is ones") {
  const Tensor<float> x = Tensor<float>::zeros(Shape{1, 1, 2, 3});
  const Tensor<float> y = exp(x);
  for (float v : y.values()) CHECK(v == 1.0f);
}

TEST_CASE("sigmoid at zero is one half everywhere") {
  const Tensor<double> x = Tensor<double>::zeros(Shape{2, 1, 3, 3});
  const Tensor<double> y = sigmoid(x);
  for (double v : y.values()) CHECK(v == 0.5);
}

TEST_CASE("binary ops reject shape mismatch and report both shapes") {
  const Tensor<float> a = Tensor<float>::zeros(Shape{1, 1, 2, 2});
  const Tensor<float> b = Tensor<float>::zeros(Shape{1, 1, 3, 2});
  try {
    (void)add(a, b);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("1x1x2x2") != std::string::npos);
    CHECK(msg.find("1x1x3x2") != std::string::npos);
  }
}

TEST_CASE("scalar second argument broadcasts") {
  const Tensor<double> a = Tensor<double>::full(Shape{1, 1, 2, 2}, 3.0);
  const Tensor<double> s = Tensor<double>::scalar(2.0);
  const Tensor<double> product = mul(a, s);
  for (double v : product.values()) CHECK(v == 6.0);
  const Tensor<double> shifted = add(a, s);
  for (double v : shifted.values()) CHECK(v == 5.0);
}

TEST_CASE("log is strict or clamped at 1e-12") {
  Tensor<double> x = Tensor<double>::full(Shape{1, 1, 1, 2}, 0.5);
  x.values()[1] = 0.0;
  CHECK_THROWS_AS((void)log(x, LogPolicy::kStrict), std::invalid_argument);
  const Tensor<double> y = log(x, LogPolicy::kClamp);
  CHECK(y.values()[0] == doctest::Approx(std::log(0.5)));
  CHECK(y.values()[1] == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("gradient of exp matches finite differences elementwise") {
  Tensor<double> x = random_tensor<double>(Shape{1, 1, 3, 4}, 11, -1.0, 1.0, true);
  const Tensor<double> loss = sum(exp(x));
  backward(loss);
  const auto fd = finite_diff<double>(
      [&] { return sum(exp(x)).item(); }, x, 1e-6);
  CHECK(max_rel_err_elementwise<double>(x.grad(), fd) < 1e-5);
}

TEST_CASE("elementwise gradients match finite differences") {
  // Inputs kept away from the relu/clamp kinks.
  auto check_op = [](auto make_loss, double lo, double hi) {
    Tensor<double> x =
        random_tensor<double>(Shape{1, 2, 3, 3}, 29, lo, hi, true);
    const Tensor<double> loss = make_loss(x);
    backward(loss);
    const auto fd = finite_diff<double>(
        [&] { return make_loss(x).item(); }, x, 1e-6);
    CHECK(max_rel_err_scaled<double>(x.grad(), fd) < 1e-6);
  };
  check_op([](Tensor<double>& x) { return sum(sigmoid(x)); }, -2, 2);
  check_op([](Tensor<double>& x) { return sum(tanh(x)); }, -2, 2);
  check_op([](Tensor<double>& x) { return sum(leaky_relu(x)); }, 0.1, 2);
  check_op([](Tensor<double>& x) { return sum(leaky_relu(x)); }, -2, -0.1);
  check_op([](Tensor<double>& x) { return sum(log(x)); }, 0.2, 2);
  check_op([](Tensor<double>& x) { return sum(abs(x)); }, 0.1, 2);
  check_op([](Tensor<double>& x) { return sum(mul(x, x)); }, -2, 2);
  check_op([](Tensor<double>& x) { return sum(clamp(x, -0.5, 0.5)); }, 0.6, 2);
}

TEST_CASE("conv2d scalar product") {
  const Tensor<float> x = Tensor<float>::full(Shape{1, 1, 1, 1}, 2.0f);
  const Tensor<float> w = Tensor<float>::full(Shape{1, 1, 1, 1}, 3.0f);
  const Tensor<float> b = Tensor<float>::zeros(Shape{1, 1, 1, 1});
  CHECK(conv2d(x, w, b).item() == 6.0f);
}

TEST_CASE("conv2d identity kernel reproduces the input") {
  const Tensor<float> x = random_tensor<float>(Shape{1, 1, 5, 7}, 3);
  Tensor<float> w = Tensor<float>::zeros(Shape{1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0f;
  const Tensor<float> b = Tensor<float>::zeros(Shape{1, 1, 1, 1});
  const Tensor<float> y = conv2d(x, w, b, 1, 1);
  REQUIRE(y.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.values()[size_t(i)] == x.values()[size_t(i)]);
}

TEST_CASE("conv2d rejects channel mismatch") {
  const Tensor<float> x = Tensor<float>::zeros(Shape{1, 2, 4, 4});
  const Tensor<float> w = Tensor<float>::zeros(Shape{1, 3, 3, 3});
  const Tensor<float> b = Tensor<float>::zeros(Shape{1, 1, 1, 1});
  CHECK_THROWS_AS((void)conv2d(x, w, b, 1, 1), std::invalid_argument);
}

TEST_CASE("conv2d gradients match finite differences") {
  Tensor<double> x = random_tensor<double>(Shape{1, 2, 5, 5}, 5, -1, 1, true);
  Tensor<double> w =
      random_tensor<double>(Shape{3, 2, 3, 3}, 7, -0.5, 0.5, true);
  Tensor<double> b = random_tensor<double>(Shape{1, 3, 1, 1}, 9, -0.5, 0.5, true);
  const Tensor<double> target = random_tensor<double>(Shape{1, 3, 3, 3}, 13);

  auto loss_value = [&] { return mse(conv2d(x, w, b, 1, 0), target).item(); };
  backward(mse(conv2d(x, w, b, 1, 0), target));

  CHECK(max_rel_err_scaled<double>(x.grad(),
                                   finite_diff<double>(loss_value, x, 1e-6)) <
        1e-4);
  CHECK(max_rel_err_scaled<double>(w.grad(),
                                   finite_diff<double>(loss_value, w, 1e-6)) <
        1e-4);
  CHECK(max_rel_err_scaled<double>(b.grad(),
                                   finite_diff<double>(loss_value, b, 1e-6)) <
        1e-4);
}

TEST_CASE("conv2d strided gradients match finite differences") {
  Tensor<double> x = random_tensor<double>(Shape{1, 1, 6, 6}, 15, -1, 1, true);
  Tensor<double> w =
      random_tensor<double>(Shape{2, 1, 3, 3}, 17, -0.5, 0.5, true);
  Tensor<double> b = random_tensor<double>(Shape{1, 2, 1, 1}, 19, -0.5, 0.5, true);
  auto loss_value = [&] { return sum(conv2d(x, w, b, 2, 1)).item(); };
  backward(sum(conv2d(x, w, b, 2, 1)));
  CHECK(max_rel_err_scaled<double>(x.grad(),
                                   finite_diff<double>(loss_value, x, 1e-6)) <
        1e-4);
  CHECK(max_rel_err_scaled<double>(w.grad(),
                                   finite_diff<double>(loss_value, w, 1e-6)) <
        1e-4);
}

TEST_CASE("conv2d is linear in its input") {
  const Tensor<double> a = random_tensor<double>(Shape{1, 2, 6, 6}, 21);
  const Tensor<double> bb = random_tensor<double>(Shape{1, 2, 6, 6}, 23);
  const Tensor<double> w = random_tensor<double>(Shape{2, 2, 3, 3}, 25);
  const Tensor<double> zero_bias = Tensor<double>::zeros(Shape{1, 2, 1, 1});
  const double alpha = 0.7, beta = -1.3;

  const Tensor<double> combo =
      add(mul_scalar(a, alpha), mul_scalar(bb, beta));
  const Tensor<double> lhs = conv2d(combo, w, zero_bias, 1, 1);
  const Tensor<double> rhs =
      add(mul_scalar(conv2d(a, w, zero_bias, 1, 1), alpha),
          mul_scalar(conv2d(bb, w, zero_bias, 1, 1), beta));
  CHECK(max_rel_err_scaled<double>(lhs.values(), rhs.values()) < 1e-5);
}

TEST_CASE("resample down2 of a constant image is the constant") {
  const Tensor<float> x = Tensor<float>::full(Shape{1, 2, 4, 4}, 0.37f);
  const Tensor<float> y = resample(x, Resample::kAvgDown2);
  REQUIRE(y.shape() == Shape{1, 2, 2, 2});
  for (float v : y.values()) CHECK(v == 0.37f);
}

TEST_CASE("up2 then down2 is the identity") {
  const Tensor<float> x = random_tensor<float>(Shape{1, 1, 3, 5}, 27);
  const Tensor<float> y =
      resample(resample(x, Resample::kNearestUp2), Resample::kAvgDown2);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.values()[size_t(i)] == x.values()[size_t(i)]);
}

TEST_CASE("down2 of the 2x2 block [0,1;2,3] is 1.5") {
  const Tensor<double> x =
      Tensor<double>::from_vector(Shape{1, 1, 2, 2}, {0, 1, 2, 3});
  CHECK(resample(x, Resample::kAvgDown2).item() == 1.5);
}

TEST_CASE("down2 rejects odd spatial size") {
  const Tensor<float> x = Tensor<float>::zeros(Shape{1, 1, 3, 4});
  CHECK_THROWS_AS((void)resample(x, Resample::kAvgDown2),
                  std::invalid_argument);
}

TEST_CASE("resample gradients match finite differences") {
  for (const Resample mode : {Resample::kNearestUp2, Resample::kAvgDown2}) {
    Tensor<double> x = random_tensor<double>(Shape{1, 2, 4, 4}, 31, -1, 1, true);
    const Tensor<double> target =
        random_tensor<double>(mode == Resample::kNearestUp2
                                  ? Shape{1, 2, 8, 8}
                                  : Shape{1, 2, 2, 2},
                              33);
    auto loss_value = [&] { return mse(resample(x, mode), target).item(); };
    backward(mse(resample(x, mode), target));
    CHECK(max_rel_err_scaled<double>(
              x.grad(), finite_diff<double>(loss_value, x, 1e-6)) < 1e-4);
  }
}

namespace {

/// Grid mapping every output pixel to its own center.
template <typename T>
Tensor<T> identity_grid(int64_t n, int64_t h, int64_t w) {
  Tensor<T> grid = Tensor<T>::zeros(Shape{n, 2, h, w});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        grid.at(b, 0, y, x) = T(x);
        grid.at(b, 1, y, x) = T(y);
      }
  return grid;
}

}  // namespace

TEST_CASE("grid_sample with the identity grid is the identity, bit-exact") {
  const Tensor<float> x = random_tensor<float>(Shape{2, 3, 5, 4}, 35);
  const Tensor<float> y =
      grid_sample(x, identity_grid<float>(2, 5, 4), GridPad::kZero);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.values()[size_t(i)] == x.values()[size_t(i)]);
}

TEST_CASE("grid_sample midway between pixels valued 0 and 1 gives 0.5") {
  const Tensor<double> x =
      Tensor<double>::from_vector(Shape{1, 1, 1, 2}, {0.0, 1.0});
  Tensor<double> grid = Tensor<double>::zeros(Shape{1, 2, 1, 1});
  grid.at(0, 0, 0, 0) = 0.5;  // halfway between columns 0 and 1
  grid.at(0, 1, 0, 0) = 0.0;
  CHECK(grid_sample(x, grid, GridPad::kZero).item() == 0.5);
}

TEST_CASE("grid_sample input gradient is the bilinear weights and matches FD") {
  Tensor<double> x = random_tensor<double>(Shape{1, 1, 4, 4}, 37, 0, 1, true);
  Tensor<double> grid = Tensor<double>::zeros(Shape{1, 2, 1, 1});
  grid.at(0, 0, 0, 0) = 1.3;
  grid.at(0, 1, 0, 0) = 2.6;

  backward(sum(grid_sample(x, grid, GridPad::kZero)));
  double weight_total = 0;
  for (double g : x.grad()) weight_total += g;
  CHECK(weight_total == doctest::Approx(1.0).epsilon(1e-12));

  auto loss_value = [&] {
    return sum(grid_sample(x, grid, GridPad::kZero)).item();
  };
  CHECK(max_rel_err_scaled<double>(
            x.grad(), finite_diff<double>(loss_value, x, 1e-6)) < 1e-4);
}

TEST_CASE("grid_sample rejects non-finite grids and wrap reads modulo") {
  const Tensor<float> x =
      Tensor<float>::from_vector(Shape{1, 1, 1, 2}, {3.0f, 9.0f});
  Tensor<float> bad = Tensor<float>::zeros(Shape{1, 2, 1, 1});
  bad.values()[0] = std::nanf("");
  CHECK_THROWS_AS((void)grid_sample(x, bad, GridPad::kZero),
                  std::invalid_argument);

  Tensor<float> grid = Tensor<float>::zeros(Shape{1, 2, 1, 1});
  grid.at(0, 0, 0, 0) = -2.0f;  // wraps to column 0
  CHECK(grid_sample(x, grid, GridPad::kWrap).item() == 3.0f);
  CHECK(grid_sample(x, grid, GridPad::kZero).item() == 0.0f);
}

TEST_CASE("mse basics") {
  const Tensor<double> x = random_tensor<double>(Shape{1, 1, 3, 3}, 39);
  CHECK(mse(x, x).item() == 0.0);
  const Tensor<double> a =
      Tensor<double>::from_vector(Shape{1, 1, 1, 2}, {0.0, 1.0});
  const Tensor<double> b =
      Tensor<double>::from_vector(Shape{1, 1, 1, 2}, {1.0, 1.0});
  CHECK(mse(a, b).item() == 0.5);
}

TEST_CASE("mse gradient matches finite differences") {
  Tensor<double> a = random_tensor<double>(Shape{1, 2, 3, 3}, 41, -1, 1, true);
  const Tensor<double> b = random_tensor<double>(Shape{1, 2, 3, 3}, 43);
  backward(mse(a, b));
  const auto fd =
      finite_diff<double>([&] { return mse(a, b).item(); }, a, 1e-6);
  CHECK(max_rel_err_scaled<double>(a.grad(), fd) < 1e-5);
  // Analytic form 2(a-b)/count.
  for (int64_t i = 0; i < a.numel(); ++i)
    CHECK(a.grad()[size_t(i)] ==
          doctest::Approx(2.0 * (a.values()[size_t(i)] - b.values()[size_t(i)]) /
                          double(a.numel())));
}

TEST_CASE("sum backward seeds ones; disconnected tensors stay at zero") {
  Tensor<float> x = Tensor<float>::zeros(Shape{2, 1, 2, 2}, true);
  Tensor<float> unused = Tensor<float>::zeros(Shape{1, 1, 1, 1}, true);
  backward(sum(x));
  REQUIRE(x.has_grad());
  for (float g : x.grad()) CHECK(g == 1.0f);
  CHECK(!unused.has_grad());
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor<float> x = Tensor<float>::zeros(Shape{1, 1, 2, 2}, true);
  const Tensor<float> y = mul_scalar(x, 2.0f);
  CHECK_THROWS_AS(backward(y), std::invalid_argument);
  Tape<float>::current().clear();
}

TEST_CASE("gradient additivity: sum-of-parts equals per-part backwards") {
  Tensor<double> x = random_tensor<double>(Shape{1, 1, 3, 3}, 45, -1, 1, true);
  const Tensor<double> t1 = random_tensor<double>(Shape{1, 1, 3, 3}, 47);
  const Tensor<double> t2 = random_tensor<double>(Shape{1, 1, 3, 3}, 49);

  backward(add(mse(x, t1), mse(sigmoid(x), t2)));
  std::vector<double> combined(x.grad().begin(), x.grad().end());
  x.clear_grad();

  backward(mse(x, t1));
  backward(mse(sigmoid(x), t2));  // accumulates without zeroing
  for (size_t i = 0; i < combined.size(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(combined[i]).epsilon(1e-12));
}

TEST_CASE("two-layer network gradients match finite differences") {
  const Tensor<double> y = random_tensor<double>(Shape{1, 1, 6, 6}, 51, 0, 1);
  const Tensor<double> target = random_tensor<double>(Shape{1, 1, 6, 6}, 53, 0, 1);
  Tensor<double> w1 = random_tensor<double>(Shape{4, 1, 3, 3}, 55, -0.4, 0.4, true);
  Tensor<double> b1 = random_tensor<double>(Shape{1, 4, 1, 1}, 57, -0.1, 0.1, true);
  Tensor<double> w2 = random_tensor<double>(Shape{1, 4, 3, 3}, 59, -0.4, 0.4, true);
  Tensor<double> b2 = random_tensor<double>(Shape{1, 1, 1, 1}, 61, -0.1, 0.1, true);

  auto net_loss = [&] {
    const Tensor<double> h = leaky_relu(conv2d(y, w1, b1, 1, 1));
    return mse(sigmoid(conv2d(h, w2, b2, 1, 1)), target);
  };
  backward(net_loss());
  for (Tensor<double>* p : {&w1, &b1, &w2, &b2}) {
    const auto fd =
        finite_diff<double>([&] { return net_loss().item(); }, *p, 1e-6);
    CHECK(max_rel_err_scaled<double>(p->grad(), fd) < 1e-5);
  }
}

TEST_CASE("concat_channels splits gradients back to both inputs") {
  Tensor<double> a = random_tensor<double>(Shape{1, 2, 3, 3}, 63, -1, 1, true);
  Tensor<double> b = random_tensor<double>(Shape{1, 1, 3, 3}, 65, -1, 1, true);
  const Tensor<double> target = random_tensor<double>(Shape{1, 3, 3, 3}, 67);
  auto loss_value = [&] { return mse(concat_channels(a, b), target).item(); };
  backward(mse(concat_channels(a, b), target));
  CHECK(max_rel_err_scaled<double>(a.grad(),
                                   finite_diff<double>(loss_value, a, 1e-6)) <
        1e-5);
  CHECK(max_rel_err_scaled<double>(b.grad(),
                                   finite_diff<double>(loss_value, b, 1e-6)) <
        1e-5);
}

TEST_CASE("masked_mse averages over the masked elements only") {
  const Tensor<double> a =
      Tensor<double>::from_vector(Shape{1, 1, 1, 4}, {1, 2, 3, 4});
  const Tensor<double> b = Tensor<double>::zeros(Shape{1, 1, 1, 4});
  const Tensor<double> mask =
      Tensor<double>::from_vector(Shape{1, 1, 1, 4}, {1, 1, 0, 0});
  CHECK(masked_mse(a, b, mask).item() == doctest::Approx((1.0 + 4.0) / 2.0));
}

TEST_CASE("EIDTNSR1 round trip and corruption handling") {
  eid::test::TempDir dir("tnsr");
  const Tensor<double> x = random_tensor<double>(Shape{2, 3, 4, 5}, 69);
  save_tensor(dir.sub("x.tnsr"), x);
  const Tensor<double> back = load_tensor<double>(dir.sub("x.tnsr"));
  REQUIRE(back.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(back.values()[size_t(i)] == x.values()[size_t(i)]);

  // f32 file loads into double with f32 precision.
  const Tensor<float> xf = random_tensor<float>(Shape{1, 1, 2, 2}, 71);
  save_tensor(dir.sub("f.tnsr"), xf);
  const Tensor<double> up = load_tensor<double>(dir.sub("f.tnsr"));
  for (int64_t i = 0; i < xf.numel(); ++i)
    CHECK(up.values()[size_t(i)] == double(xf.values()[size_t(i)]));

  std::ofstream bad(dir.sub("bad.tnsr"), std::ios::binary);
  bad << "NOTMAGIC" << std::string(16, '\0');
  bad.close();
  CHECK_THROWS_AS((void)load_tensor<float>(dir.sub("bad.tnsr")),
                  std::runtime_error);
}
