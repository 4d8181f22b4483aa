// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Long-running end-to-end checks live here rather than in
// the unit suites.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "eid/ablation.hpp"
#include "eid/adversarial.hpp"
#include "eid/checkpoint.hpp"
#include "eid/image_io.hpp"
#include "eid/metrics.hpp"
#include "eid/synth.hpp"
#include "eid/tensor_io.hpp"
#include "eid/trainer.hpp"
#include "support/finite_diff.hpp"
#include "support/temp_dir.hpp"

using namespace eid;
using eid::test::finite_diff;
using eid::test::max_rel_err_scaled;
using eid::test::random_tensor;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw Failure(what);
}

template <typename A, typename B>
void require_le(A value, B bound, const std::string& what) {
  if (!(value <= bound))
    throw Failure(detail::cat(what, ": ", value, " > ", bound));
}

template <typename A, typename B>
void require_ge(A value, B bound, const std::string& what) {
  if (!(value >= bound))
    throw Failure(detail::cat(what, ": ", value, " < ", bound));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(EID_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  require(pipe != nullptr, "popen failed");
  CliResult result;
  char buffer[4096];
  while (size_t n = fread(buffer, 1, sizeof(buffer), pipe))
    result.output.append(buffer, n);
  result.code = WEXITSTATUS(pclose(pipe));
  return result;
}

std::string csv_without_seconds(const std::string& path) {
  std::ifstream in(path);
  std::string out, line;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

// Shared state across criteria (4 and 5 reuse the same benchmark run).
struct Context {
  eid::test::TempDir dir{"acceptance"};
  std::string bench_dir;          // 64-scene synthetic benchmark
  double hazy_psnr = 0;           // baseline vs clean
  double hazy_ssim = 0;
  double v3_psnr = 0;             // filled by criterion 4
  double v3_ssim = 0;
  std::string v3_run_dir;
  std::string gan_dir;            // filled by criterion 7
  std::string gan_ckpt;
};

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite in 64-bit, everything < 1e-4, under 60 s.

void criterion_gradients(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const double tol = 1e-4;

  {  // elementwise
    Tensor<double> x = random_tensor<double>(Shape{1, 2, 4, 4}, 1, 0.2, 0.9, true);
    auto value = [&] { return sum(mul(sigmoid(exp(x)), log(x))).item(); };
    backward(sum(mul(sigmoid(exp(x)), log(x))));
    require_le(max_rel_err_scaled<double>(x.grad(),
                                          finite_diff<double>(value, x, 1e-6)),
               tol, "elementwise chain gradient");
  }
  {  // conv2d: input, weight, bias
    Tensor<double> x = random_tensor<double>(Shape{1, 2, 6, 6}, 3, -1, 1, true);
    Tensor<double> w = random_tensor<double>(Shape{3, 2, 3, 3}, 5, -0.5, 0.5, true);
    Tensor<double> b = random_tensor<double>(Shape{1, 3, 1, 1}, 7, -0.5, 0.5, true);
    const Tensor<double> target = random_tensor<double>(Shape{1, 3, 6, 6}, 9);
    auto value = [&] { return mse(conv2d(x, w, b, 1, 1), target).item(); };
    backward(mse(conv2d(x, w, b, 1, 1), target));
    for (Tensor<double>* p : {&x, &w, &b})
      require_le(max_rel_err_scaled<double>(
                     p->grad(), finite_diff<double>(value, *p, 1e-6)),
                 tol, "conv2d gradient");
  }
  {  // resample both modes
    for (const Resample mode : {Resample::kNearestUp2, Resample::kAvgDown2}) {
      Tensor<double> x = random_tensor<double>(Shape{1, 1, 4, 4}, 11, -1, 1, true);
      auto value = [&] { return sum(mul(resample(x, mode), resample(x, mode))).item(); };
      backward(sum(mul(resample(x, mode), resample(x, mode))));
      require_le(max_rel_err_scaled<double>(
                     x.grad(), finite_diff<double>(value, x, 1e-6)),
                 tol, "resample gradient");
    }
  }
  {  // grid_sample
    Tensor<double> x = random_tensor<double>(Shape{1, 2, 5, 5}, 13, 0, 1, true);
    Tensor<double> grid = Tensor<double>::zeros(Shape{1, 2, 3, 3});
    Rng rng(15);
    for (int64_t i = 0; i < 9; ++i) {
      grid.values()[size_t(i)] = rng.uniform(-0.5, 4.5);      // x coords
      grid.values()[size_t(9 + i)] = rng.uniform(-0.5, 4.5);  // y coords
    }
    const Tensor<double> target = random_tensor<double>(Shape{1, 2, 3, 3}, 17);
    auto value = [&] { return mse(grid_sample(x, grid), target).item(); };
    backward(mse(grid_sample(x, grid), target));
    require_le(max_rel_err_scaled<double>(
                   x.grad(), finite_diff<double>(value, x, 1e-6)),
               tol, "grid_sample gradient");
  }
  {  // reductions
    Tensor<double> a = random_tensor<double>(Shape{1, 1, 4, 4}, 19, -1, 1, true);
    const Tensor<double> b = random_tensor<double>(Shape{1, 1, 4, 4}, 21);
    auto value = [&] {
      return add(mse(a, b), add(l1(a, b), add(mean(a), sum(a)))).item();
    };
    backward(add(mse(a, b), add(l1(a, b), add(mean(a), sum(a)))));
    require_le(max_rel_err_scaled<double>(
                   a.grad(), finite_diff<double>(value, a, 1e-6)),
               tol, "reduce gradient");
  }
  {  // full eid_loss through a tiny U-Net, every parameter
    UNetConfig net;
    net.levels = 2;
    net.base_channels = 2;
    net.in_channels = 1;
    net.out_channels = 1;
    ParamStore<double> params;
    Rng rng(23);
    unet_init(net, params, rng);
    ScatteringParams sp;
    sp.beta = 0.9;
    sp.alpha = {1.0};
    sp.depth = random_tensor<double>(Shape{1, 1, 8, 8}, 25, 0.2, 1.0);
    const AnalyticScattering<double> haze(sp);
    const Tensor<double> y = random_tensor<double>(Shape{1, 1, 8, 8}, 27, 0, 1);
    const GroupElement g = make_rotate(0.5, 8, 8);

    auto terms_total = [&] {
      return double(eid_loss(net, params, haze, y, g, 0.1, LossVariant::kV3)
                        .total.item());
    };
    EidLossTerms<double> terms =
        eid_loss(net, params, haze, y, g, 0.1, LossVariant::kV3);
    backward(terms.total);
    for (const std::string& name : params.names()) {
      Tensor<double>& p = params.at(name);
      require(p.has_grad(), "missing gradient on " + name);
      const auto fd = finite_diff<double>(terms_total, p, 1e-5);
      require_le(max_rel_err_scaled<double>(p.grad(), fd), tol,
                 "eid_loss gradient for " + name);
    }
  }
  require_le(seconds_since(t0), 60.0, "gradient suite runtime (s)");
}

// ---------------------------------------------------------------------------
// Criterion 2: group axioms; continuous round trips.

void criterion_group_axioms(Context&) {
  const auto t0 = std::chrono::steady_clock::now();

  const Tensor<float> x = random_tensor<float>(Shape{1, 1, 32, 32}, 31);
  auto bit_equal = [](const Tensor<float>& a, const Tensor<float>& b) {
    for (int64_t i = 0; i < a.numel(); ++i)
      if (a.values()[size_t(i)] != b.values()[size_t(i)]) return false;
    return true;
  };

  const std::vector<GroupElement> exact = {
      make_rotate_quarter(1), make_rotate_quarter(2), make_shift(5, -3),
      make_reflect(ReflectAxis::kHorizontal),
      make_reflect(ReflectAxis::kVertical)};
  // identity
  require(bit_equal(apply(GroupElement::identity(), x), x),
          "identity is not bit-exact");
  for (const GroupElement& g : exact) {
    require(bit_equal(apply(g.inverse(), apply(g, x)), x),
            "exact inverse round trip not bit-exact: " + g.describe());
    // composition with the inverse is closed and acts as the identity
    Composite c;
    c.parts = {g, g.inverse()};
    require(bit_equal(apply(GroupElement(c), x), x),
            "composition not bit-exact: " + g.describe());
  }
  // four quarter turns
  Tensor<float> turned = x;
  for (int i = 0; i < 4; ++i) turned = apply(make_rotate_quarter(1), turned);
  require(bit_equal(turned, x), "four quarter turns are not the identity");

  // continuous round trips on the smooth synthetic image
  Tensor<float> smooth = Tensor<float>::zeros(Shape{1, 1, 32, 32});
  for (int64_t r = 0; r < 32; ++r)
    for (int64_t c = 0; c < 32; ++c)
      smooth.at(0, 0, r, c) =
          float(0.5 + 0.25 * std::sin(2 * M_PI * c / 31.0) *
                          std::cos(M_PI * r / 31.0) +
                0.1 * (c - r) / 31.0);
  Rng rng(33);
  TransformSpec spec;
  spec.image_h = spec.image_w = 32;
  for (const TransformKind kind :
       {TransformKind::kRotate, TransformKind::kScale,
        TransformKind::kEuclidean, TransformKind::kSimilarity,
        TransformKind::kAffine, TransformKind::kPanTiltRotate}) {
    spec.kinds = {kind};
    for (int trial = 0; trial < 3; ++trial) {
      const GroupElement g = sample(spec, rng);
      const Tensor<float> round = apply(g.inverse(), apply(g, smooth));
      double mae = 0;
      int64_t count = 0;
      for (int64_t r = 8; r < 24; ++r)
        for (int64_t c = 8; c < 24; ++c) {
          mae += std::abs(double(round.at(0, 0, r, c)) -
                          double(smooth.at(0, 0, r, c)));
          ++count;
        }
      require_le(mae / double(count), 2e-2,
                 "round-trip interior MAE for " + g.describe());
    }
  }
  require_le(seconds_since(t0), 30.0, "group-axiom suite runtime (s)");
}

// ---------------------------------------------------------------------------
// Criterion 3: physics.

void criterion_physics(Context& ctx) {
  {  // hand-computed value
    ScatteringParams p;
    p.beta = std::log(2.0);
    p.alpha = {1.0};
    p.depth = Tensor<double>::ones(Shape{1, 1, 4, 4});
    const AnalyticScattering<double> op(p);
    const Tensor<double> x = Tensor<double>::full(Shape{1, 1, 4, 4}, 0.25);
    const Tensor<double> hazed = op.apply(x);
    for (double v : hazed.values())
      require_le(std::abs(v - 0.625), 1e-12, "hand value 0.625");
  }
  {  // inverse composition and range stability
    Rng rng(35);
    for (int trial = 0; trial < 5; ++trial) {
      ScatteringParams p;
      p.beta = rng.uniform(0.2, 2.0);
      p.alpha = {rng.uniform(0.5, 1.0)};
      p.depth = random_tensor<double>(Shape{1, 1, 8, 8},
                                      100 + uint64_t(trial), 0.0, 1.5);
      const AnalyticScattering<double> op(p);
      const Tensor<double> x =
          random_tensor<double>(Shape{1, 1, 8, 8}, 200 + uint64_t(trial), 0, 1);
      NoGradGuard no_grad;
      const Tensor<double> hazed = op.apply(x);
      for (double v : hazed.values()) {
        require_ge(v, 0.0, "haze output below 0");
        require_le(v, 1.0, "haze output above 1");
      }
      const Tensor<double> back = invert_analytic(p, hazed);
      for (int64_t i = 0; i < x.numel(); ++i)
        require_le(std::abs(back.values()[size_t(i)] - x.values()[size_t(i)]),
                   1e-5, "invert_analytic(apply_haze) identity");
    }
  }
  {  // frozen learned operator: bytes identical across an EID run
    SceneSpec spec;
    spec.size = 16;
    spec.channels = 1;
    spec.seed = 301;
    synth_dataset(ctx.dir.sub("frozen_clear"), spec, 4);
    SceneSpec hz = spec;
    hz.seed = 302;
    synth_dataset(ctx.dir.sub("frozen_hazy"), hz, 4);

    GanTrainConfig gan;
    gan.iterations = 5;
    gan.batch_size = 2;
    gan.base_channels = 4;
    gan.seed = 303;
    const GanTrainReport gtr = train_pseudo_physics(
        ctx.dir.sub("frozen_clear"), ctx.dir.sub("frozen_hazy"),
        ctx.dir.sub("frozen_gan"), gan);
    const std::vector<unsigned char> before =
        read_file_bytes(gtr.checkpoint_path);

    TrainConfig train;
    train.epochs = 2;
    train.batch_size = 2;
    train.seed = 304;
    train.unet_levels = 2;
    train.unet_base_channels = 4;
    train.physics = gtr.checkpoint_path;
    (void)train_eid(ctx.dir.sub("frozen_hazy"), ctx.dir.sub("frozen_run"),
                    train);
    require(read_file_bytes(gtr.checkpoint_path) == before,
            "haze operator checkpoint changed during EID training");
  }
}

// ---------------------------------------------------------------------------
// Criterion 4: end-to-end synthetic benchmark.

void criterion_benchmark(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  ctx.bench_dir = ctx.dir.sub("bench");
  SceneSpec spec;
  spec.size = 32;
  spec.channels = 3;
  spec.seed = 2024;
  // Deep relief carves pockets of strong attenuation: information there is
  // genuinely lost to 8-bit quantization of the hazy images, which is what
  // the equivariance term must recover. Mean transmission stays near 0.5.
  spec.depth_relief = 2.2;
  spec.depth_gradient_bound = 0.25;
  const DatasetManifest manifest = synth_dataset(ctx.bench_dir, spec, 64);

  // Mean transmission of the generated haze sits near 0.5.
  double mean_t = 0;
  for (const DatasetEntry& e : manifest.images) {
    const Tensor<double> depth =
        load_tensor<double>(ctx.bench_dir + "/" + e.depth);
    double img_t = 0;
    for (double d : depth.values()) img_t += std::exp(-e.beta * d);
    mean_t += img_t / double(depth.numel());
  }
  mean_t /= double(manifest.images.size());
  require_ge(mean_t, 0.4, "mean transmission");
  require_le(mean_t, 0.6, "mean transmission");

  // Baseline: hazy vs clean.
  double hazy_psnr = 0, hazy_ssim = 0;
  for (const DatasetEntry& e : manifest.images) {
    const Tensor<float> clean = load_image(ctx.bench_dir + "/" + e.clean);
    const Tensor<float> hazy = load_image(ctx.bench_dir + "/" + e.hazy);
    hazy_psnr += psnr(hazy, clean);
    hazy_ssim += ssim(hazy, clean);
  }
  ctx.hazy_psnr = hazy_psnr / double(manifest.images.size());
  ctx.hazy_ssim = hazy_ssim / double(manifest.images.size());

  TrainConfig config;  // rotate + lambda 0.1; desk-scale step budget
  config.lambda_ec = 0.1;
  config.epochs = 30;
  config.seed = 2024;
  config.transform = "rotate";
  config.variant = LossVariant::kV3;
  config.batch_size = 2;   // 960 optimizer steps over 30 epochs
  config.base_lr = 1e-3;   // desk-scale rate; the full-scale default is 1e-4
  ctx.v3_run_dir = ctx.dir.sub("bench_v3");
  const TrainReport report = train_eid(ctx.bench_dir, ctx.v3_run_dir, config);

  LoadedCheckpoint<float> trained = load_checkpoint<float>(report.checkpoint_path);
  trained.params.set_requires_grad_all(false);
  const UNetConfig net = unet_config_from_params(trained.params);
  double dehazed_psnr = 0, dehazed_ssim = 0;
  for (const DatasetEntry& e : manifest.images) {
    const Tensor<float> clean = load_image(ctx.bench_dir + "/" + e.clean);
    const Tensor<float> hazy = load_image(ctx.bench_dir + "/" + e.hazy);
    const Tensor<float> dehazed = dehaze_image(net, trained.params, hazy);
    dehazed_psnr += psnr(dehazed, clean);
    dehazed_ssim += ssim(dehazed, clean);
  }
  ctx.v3_psnr = dehazed_psnr / double(manifest.images.size());
  ctx.v3_ssim = dehazed_ssim / double(manifest.images.size());

  std::cerr << "    benchmark: hazy " << ctx.hazy_psnr << " dB / "
            << ctx.hazy_ssim << " ssim; dehazed " << ctx.v3_psnr << " dB / "
            << ctx.v3_ssim << " ssim\n";
  require_ge(ctx.v3_psnr, ctx.hazy_psnr + 3.0, "PSNR improvement (dB)");
  require_ge(ctx.v3_ssim, ctx.hazy_ssim + 0.05, "SSIM improvement");
  require_le(seconds_since(t0), 900.0, "benchmark runtime (s)");
}

// ---------------------------------------------------------------------------
// Criterion 5: ablation trend on the same benchmark.

void criterion_ablation_trend(Context& ctx) {
  require(!ctx.bench_dir.empty(), "criterion 4 must run first");
  const DatasetManifest manifest =
      DatasetManifest::load(ctx.bench_dir + "/manifest.json");

  auto evaluate = [&](const std::string& run_dir, LossVariant variant) {
    TrainConfig config;
    config.lambda_ec = 0.1;
    config.epochs = 30;
    config.seed = 2024;  // identical seed: only the variant differs
    config.transform = "rotate";
    config.variant = variant;
    config.batch_size = 2;
    config.base_lr = 1e-3;
    const TrainReport report = train_eid(ctx.bench_dir, run_dir, config);
    LoadedCheckpoint<float> trained =
        load_checkpoint<float>(report.checkpoint_path);
    trained.params.set_requires_grad_all(false);
    const UNetConfig net = unet_config_from_params(trained.params);
    double psnr_sum = 0;
    for (const DatasetEntry& e : manifest.images) {
      const Tensor<float> clean = load_image(ctx.bench_dir + "/" + e.clean);
      const Tensor<float> hazy = load_image(ctx.bench_dir + "/" + e.hazy);
      psnr_sum += psnr(dehaze_image(net, trained.params, hazy), clean);
    }
    return psnr_sum / double(manifest.images.size());
  };

  const double v1 = evaluate(ctx.dir.sub("bench_v1"), LossVariant::kV1);
  const double v2 = evaluate(ctx.dir.sub("bench_v2"), LossVariant::kV2);
  std::cerr << "    ablation PSNR: V1 " << v1 << ", V2 " << v2 << ", V3 "
            << ctx.v3_psnr << "\n";
  require_ge(ctx.v3_psnr, v1, "V3 PSNR vs V1");
  require_ge(ctx.v3_psnr, v2, "V3 PSNR vs V2");

  // Equivariance residual: trained V3 beats the untrained network on the
  // same probes.
  const PhysicsSource physics = resolve_physics("analytic", ctx.bench_dir);
  const HazySet set = load_hazy_set(ctx.bench_dir, physics);
  const TransformSpec tspec = make_transform_spec("rotate", 32, 32);
  LoadedCheckpoint<float> v3 =
      load_checkpoint<float>(ctx.v3_run_dir + "/dehazer.ckpt");
  v3.params.set_requires_grad_all(false);
  const UNetConfig net = unet_config_from_params(v3.params);

  ParamStore<float> untrained;
  Rng root(2024);
  Rng init_rng = root.fork(1);
  unet_init(net, untrained, init_rng);
  untrained.set_requires_grad_all(false);

  const double trained_resid = mean_equivariance_residual(
      net, v3.params, physics, set.images, tspec, 777);
  const double untrained_resid = mean_equivariance_residual(
      net, untrained, physics, set.images, tspec, 777);
  std::cerr << "    equivariance residual: trained " << trained_resid
            << ", untrained " << untrained_resid << "\n";
  require_le(trained_resid, untrained_resid,
             "V3 residual vs untrained residual");
}

// ---------------------------------------------------------------------------
// Criterion 6: lambda arithmetic and structural branch exclusion.

void criterion_lambda(Context&) {
  {  // crafted values combined exactly as the trainer combines them
    const Tensor<double> hc = Tensor<double>::scalar(1.0);
    const Tensor<double> ec = Tensor<double>::scalar(2.0);
    const double total = add(hc, mul_scalar(ec, 0.1)).item();
    require(total == 1.0 + 0.1 * 2.0, "total != l_hc + 0.1*l_ec bitwise");
    require_le(std::abs(total - 1.2), 1e-15, "total vs 1.2");
  }

  UNetConfig net;
  net.levels = 2;
  net.base_channels = 2;
  net.in_channels = 1;
  net.out_channels = 1;
  ParamStore<float> params;
  Rng rng(41);
  unet_init(net, params, rng);
  ScatteringParams sp;
  sp.beta = std::log(2.0);
  sp.alpha = {1.0};
  sp.depth = Tensor<double>::ones(Shape{1, 1, 8, 8});
  const AnalyticScattering<float> haze(sp);
  const Tensor<float> y = random_tensor<float>(Shape{1, 1, 8, 8}, 43, 0, 1);
  const GroupElement g = make_rotate_quarter(1);

  {  // live identity on the graph tensors
    EidLossTerms<float> v3 =
        eid_loss(net, params, haze, y, g, 0.1, LossVariant::kV3);
    require(v3.total.item() == v3.hc_term.item() + 0.1f * v3.ec_term.item(),
            "live total != l_hc + lambda*l_ec");
    Tape<float>::current().clear();
  }

  // Structural exclusion, probed by backpropagating the excluded term: it
  // was built without recording, so it deposits no gradient anywhere.
  auto probe = [&](LossVariant variant) {
    params.clear_all_grads();
    EidLossTerms<float> terms =
        eid_loss(net, params, haze, y, g, 0.1, variant);
    const Tensor<float>& excluded =
        variant == LossVariant::kV1 ? terms.ec_term : terms.hc_term;
    require(!excluded.requires_grad(),
            "excluded branch still carries a graph");
    backward(excluded);  // consumes the live tape; deposits nothing from it
    int with_grad = 0;
    for (const std::string& name : params.names())
      with_grad += params.at(name).has_grad() ? 1 : 0;
    require(with_grad == 0,
            detail::cat("excluded branch deposited gradient on ", with_grad,
                        " parameters"));
  };
  probe(LossVariant::kV1);
  probe(LossVariant::kV2);
  params.clear_all_grads();
}

// ---------------------------------------------------------------------------
// Criterion 7: pseudo-physics toy run.

void criterion_pseudo_physics(Context& ctx) {
  {  // l1 sanity at D = 0.5: -d_loss = 2 log(1/2)
    const Tensor<double> real = Tensor<double>::full(Shape{2, 1, 4, 4}, 0.5);
    const Tensor<double> fake = Tensor<double>::full(Shape{2, 1, 4, 4}, 0.5);
    require_le(std::abs(adversarial_value(real, fake).item() -
                        2.0 * std::log(0.5)),
               1e-12, "l1 at D=0.5 vs -2 log 2");
  }

  // 16 + 16 unpaired images, 200 iterations.
  SceneSpec clear_spec;
  clear_spec.size = 32;
  clear_spec.channels = 3;
  clear_spec.seed = 501;
  clear_spec.beta_min = clear_spec.beta_max = 0.0;
  synth_dataset(ctx.dir.sub("gan_clear"), clear_spec, 16);
  SceneSpec hazy_spec = clear_spec;
  hazy_spec.seed = 502;
  hazy_spec.beta_min = 1.0;
  hazy_spec.beta_max = 1.6;
  synth_dataset(ctx.dir.sub("gan_hazy"), hazy_spec, 16);
  for (int i = 0; i < 16; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "/hazy_%04d.png", i);
    std::filesystem::remove(ctx.dir.sub("gan_clear") + name);
    std::snprintf(name, sizeof(name), "/clean_%04d.png", i);
    std::filesystem::remove(ctx.dir.sub("gan_hazy") + name);
  }

  GanTrainConfig gan;
  gan.iterations = 200;
  gan.batch_size = 4;
  gan.seed = 503;
  ctx.gan_dir = ctx.dir.sub("gan_run");
  const GanTrainReport report = train_pseudo_physics(
      ctx.dir.sub("gan_clear"), ctx.dir.sub("gan_hazy"), ctx.gan_dir, gan);
  ctx.gan_ckpt = report.checkpoint_path;
  std::cerr << "    cycle loss " << report.first_cycle_loss << " -> "
            << report.last_cycle_loss << "\n";
  require(report.last_cycle_loss < report.first_cycle_loss,
          detail::cat("cycle loss did not fall: ", report.first_cycle_loss,
                      " -> ", report.last_cycle_loss));

  // Frozen determinism and byte stability across an EID run.
  const std::vector<unsigned char> before = read_file_bytes(ctx.gan_ckpt);
  const LearnedHaze<float> op = LearnedHaze<float>::from_checkpoint(ctx.gan_ckpt);
  const Tensor<float> x = random_tensor<float>(Shape{1, 3, 32, 32}, 505, 0, 1);
  {
    NoGradGuard no_grad;
    const Tensor<float> once = op.apply(x);
    const Tensor<float> twice = op.apply(x);
    for (int64_t i = 0; i < once.numel(); ++i)
      require(once.values()[size_t(i)] == twice.values()[size_t(i)],
              "frozen operator is not deterministic");
  }

  TrainConfig train;
  train.epochs = 2;
  train.batch_size = 4;
  train.seed = 506;
  train.unet_levels = 2;
  train.unet_base_channels = 4;
  train.physics = ctx.gan_ckpt;
  (void)train_eid(ctx.dir.sub("gan_hazy"), ctx.dir.sub("gan_eid"), train);
  require(read_file_bytes(ctx.gan_ckpt) == before,
          "pseudo-physics checkpoint bytes changed during EID training");
}

// ---------------------------------------------------------------------------
// Criterion 8: determinism of the command-line workflows.

void criterion_determinism(Context& ctx) {
  const std::string base = ctx.dir.sub("determinism");
  std::filesystem::create_directories(base);
  auto sub = [&](const std::string& name) { return base + "/" + name; };
  auto q = [](const std::string& s) { return "'" + s + "'"; };

  CliResult r = run_cli("synth --out " + q(sub("d1")) +
                        " --count 4 --size 16 --seed 31 --channels 1");
  require(r.code == 0, "synth failed: " + r.output);
  r = run_cli("synth --out " + q(sub("d2")) +
              " --count 4 --size 16 --seed 31 --channels 1");
  require(r.code == 0, "synth rerun failed");
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "hazy_%04d.png", i);
    require(files_byte_equal(sub("d1") + "/" + name, sub("d2") + "/" + name),
            "synth rerun differs");
  }

  const std::string train_args =
      " --physics analytic --transform rotate --lambda 0.1 --epochs 3 "
      "--seed 33 --levels 2 --base-channels 4 --batch 2";
  r = run_cli("train --hazy " + q(sub("d1")) + train_args + " --out " +
              q(sub("t1")));
  require(r.code == 0, "train failed: " + r.output);
  r = run_cli("train --hazy " + q(sub("d1")) + train_args + " --out " +
              q(sub("t2")));
  require(r.code == 0, "train rerun failed");
  require(files_byte_equal(sub("t1") + "/dehazer.ckpt",
                           sub("t2") + "/dehazer.ckpt"),
          "train rerun checkpoint differs");
  require(files_byte_equal(sub("t1") + "/train_summary.json",
                           sub("t2") + "/train_summary.json"),
          "train rerun summary differs");
  require(csv_without_seconds(sub("t1") + "/train_report.csv") ==
              csv_without_seconds(sub("t2") + "/train_report.csv"),
          "train rerun CSV differs outside the timing column");

  const CliResult eval1 = run_cli("eval --pred " + q(sub("d1")) + " --ref " +
                                  q(sub("d2")) + " 2>/dev/null");
  const CliResult eval2 = run_cli("eval --pred " + q(sub("d1")) + " --ref " +
                                  q(sub("d2")) + " 2>/dev/null");
  require(eval1.code == 0 && eval1.output == eval2.output,
          "eval rerun output differs");

  const std::string audit_args = "audit --ckpt " +
                                 q(sub("t1") + "/dehazer.ckpt") +
                                 " --physics analytic --transform rotate "
                                 "--seed 35 --in " +
                                 q(sub("d1")) + " 2>/dev/null";
  const CliResult audit1 = run_cli(audit_args);
  const CliResult audit2 = run_cli(audit_args);
  require(audit1.code == 0 && audit1.output == audit2.output,
          "audit rerun output differs");

  // dehaze reruns produce identical images
  r = run_cli("dehaze --ckpt " + q(sub("t1") + "/dehazer.ckpt") + " --in " +
              q(sub("d1")) + " --out " + q(sub("o1")));
  require(r.code == 0, "dehaze failed: " + r.output);
  r = run_cli("dehaze --ckpt " + q(sub("t1") + "/dehazer.ckpt") + " --in " +
              q(sub("d1")) + " --out " + q(sub("o2")));
  require(r.code == 0, "dehaze rerun failed");
  for (const std::string& f : list_png_files(sub("o1"))) {
    const std::string name = std::filesystem::path(f).filename().string();
    require(files_byte_equal(f, sub("o2") + "/" + name),
            "dehaze rerun differs for " + name);
  }
}

// ---------------------------------------------------------------------------
// Criterion 9: metric oracles.

void criterion_metrics(Context&) {
  const Tensor<double> zero = Tensor<double>::zeros(Shape{1, 1, 16, 16});
  const Tensor<double> tenth = Tensor<double>::full(Shape{1, 1, 16, 16}, 0.1);
  require_le(std::abs(psnr(tenth, zero) - 20.0), 1e-6, "psnr at mse 0.01");

  const Tensor<double> x = random_tensor<double>(Shape{1, 3, 16, 16}, 51, 0, 1);
  require(std::isinf(psnr(x, x)), "psnr of identical images");
  require_le(std::abs(ssim(x, x) - 1.0), 1e-6, "ssim(x,x)");
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<void(Context&)> run;
  };
  Context ctx;
  const std::vector<Entry> criteria = {
      {1, "gradient suite vs finite differences", criterion_gradients},
      {2, "transformation group axioms", criterion_group_axioms},
      {3, "scattering physics", criterion_physics},
      {4, "end-to-end synthetic benchmark", criterion_benchmark},
      {5, "loss ablation trend", criterion_ablation_trend},
      {6, "lambda weighting and branch exclusion", criterion_lambda},
      {7, "pseudo-physics toy run", criterion_pseudo_physics},
      {8, "determinism of reruns", criterion_determinism},
      {9, "metric oracles", criterion_metrics},
  };

  int failures = 0;
  for (const Entry& entry : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      entry.run(ctx);
      std::printf("[PASS] criterion %d: %s (%.1f s)\n", entry.id, entry.name,
                  seconds_since(t0));
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] criterion %d: %s (%.1f s): %s\n", entry.id,
                  entry.name, seconds_since(t0), e.what());
    }
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
