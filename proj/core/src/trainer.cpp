#include "eid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "eid/adversarial.hpp"
#include "eid/checkpoint.hpp"
#include "eid/image_io.hpp"
#include "eid/synth.hpp"

namespace eid {

using nlohmann::json;

LossVariant loss_variant_from_string(const std::string& name) {
  if (name == "V1" || name == "v1") return LossVariant::kV1;
  if (name == "V2" || name == "v2") return LossVariant::kV2;
  if (name == "V3" || name == "v3") return LossVariant::kV3;
  fail(detail::cat("unknown loss variant '", name, "' (expected V1, V2 or V3)"));
}

std::string to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::kV1: return "V1";
    case LossVariant::kV2: return "V2";
    case LossVariant::kV3: return "V3";
  }
  return "?";
}

ReconLoss recon_loss_from_string(const std::string& name) {
  if (name == "mse") return ReconLoss::kMse;
  if (name == "l1") return ReconLoss::kL1;
  fail(detail::cat("unknown loss '", name, "' (expected mse or l1)"));
}

std::string to_string(ReconLoss recon) {
  return recon == ReconLoss::kMse ? "mse" : "l1";
}

void TrainConfig::validate() const {
  check(lambda_ec >= 0,
        detail::cat("lambda must be >= 0, got ", lambda_ec));
  check(!(variant == LossVariant::kV3 && lambda_ec == 0),
        "lambda must be > 0 for variant V3 (both loss terms active)");
  check(epochs > 0, detail::cat("epochs must be > 0, got ", epochs));
  check(base_lr > 0, detail::cat("lr must be > 0, got ", base_lr));
  check(batch_size > 0, detail::cat("batch must be > 0, got ", batch_size));
  check(!transform.empty(), "transform must not be empty");
  (void)parse_transform_kinds(transform);  // surfaces bad names early
  check(unet_levels >= 1, detail::cat("levels must be >= 1, got ", unet_levels));
  check(unet_base_channels >= 1,
        detail::cat("base-channels must be >= 1, got ", unet_base_channels));
  check(!physics.empty(), "physics must not be empty");
}

// ---------------------------------------------------------------------------
// eid_loss

template <typename T>
EidLossTerms<T> eid_loss(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                         const HazeOperator<T>& haze, const Tensor<T>& y,
                         const GroupElement& g, double lambda_ec,
                         LossVariant variant, bool detach_target,
                         ReconLoss recon) {
  check(lambda_ec >= 0, detail::cat("lambda must be >= 0, got ", lambda_ec));
  auto loss_of = [recon](const Tensor<T>& a, const Tensor<T>& b) {
    return recon == ReconLoss::kMse ? mse(a, b) : l1(a, b);
  };
  auto masked_loss_of = [recon](const Tensor<T>& a, const Tensor<T>& b,
                                const Tensor<T>& m) {
    return recon == ReconLoss::kMse ? masked_mse(a, b, m) : masked_l1(a, b, m);
  };

  EidLossTerms<T> out;
  const Tensor<T> x1 = f(y);

  Tensor<T> hc_term;
  {
    // In V2 the haze-consistency branch is evaluated without recording, so
    // no gradient can originate from it.
    std::optional<NoGradGuard> no_grad;
    if (variant == LossVariant::kV2) no_grad.emplace();
    hc_term = loss_of(haze.apply(x1), y);
  }
  out.hc_term = hc_term;
  out.hc = double(hc_term.item());

  Tensor<T> ec_term;
  {
    std::optional<NoGradGuard> no_grad;
    if (variant == LossVariant::kV1) no_grad.emplace();
    const Tensor<T> x2 = apply(g, x1);
    const Tensor<T> target = detach_target ? x2.detach() : x2;
    const Tensor<T> prediction = f(haze.apply(x2));
    if (g.is_exact()) {
      ec_term = loss_of(prediction, target);
    } else {
      const Tensor<T> mask = broadcast_mask(
          validity_mask<T>(g, y.shape().h, y.shape().w), x2.shape());
      ec_term = masked_loss_of(prediction, target, mask);
    }
  }
  out.ec_term = ec_term;
  out.ec = double(ec_term.item());

  switch (variant) {
    case LossVariant::kV1:
      out.total = hc_term;
      break;
    case LossVariant::kV2:
      out.total = mul_scalar(ec_term, T(lambda_ec));
      break;
    case LossVariant::kV3:
      out.total = add(hc_term, mul_scalar(ec_term, T(lambda_ec)));
      break;
  }
  return out;
}

template <typename T>
EidLossTerms<T> eid_loss(const UNetConfig& config, const ParamStore<T>& params,
                         const HazeOperator<T>& haze, const Tensor<T>& y,
                         const GroupElement& g, double lambda_ec,
                         LossVariant variant, bool detach_target,
                         ReconLoss recon) {
  const std::function<Tensor<T>(const Tensor<T>&)> f =
      [&](const Tensor<T>& in) { return unet_forward(config, params, in); };
  return eid_loss(f, haze, y, g, lambda_ec, variant, detach_target, recon);
}

// ---------------------------------------------------------------------------
// Physics resolution

std::shared_ptr<HazeOperator<float>> PhysicsSource::batch_operator(
    const std::vector<size_t>& indices) const {
  if (!analytic()) return shared;
  std::vector<ScatteringParams> selected;
  selected.reserve(indices.size());
  for (size_t i : indices) selected.push_back(per_image.at(i));
  return std::make_shared<AnalyticScattering<float>>(std::move(selected));
}

PhysicsSource resolve_physics(const std::string& physics,
                              const std::string& hazy_dir) {
  PhysicsSource source;
  if (physics == "analytic") {
    const std::string manifest_path = hazy_dir + "/manifest.json";
    check(std::filesystem::exists(manifest_path),
          detail::cat("physics 'analytic' needs ", manifest_path,
                      " with per-image depth and haze parameters"));
    const DatasetManifest manifest = DatasetManifest::load(manifest_path);
    source.per_image = manifest_physics(hazy_dir, manifest);
  } else {
    source.shared =
        std::make_shared<LearnedHaze<float>>(LearnedHaze<float>::from_checkpoint(physics));
    source.checkpoint_path = physics;
  }
  return source;
}

HazySet load_hazy_set(const std::string& hazy_dir,
                      const PhysicsSource& physics) {
  HazySet set;
  if (physics.analytic()) {
    const DatasetManifest manifest =
        DatasetManifest::load(hazy_dir + "/manifest.json");
    for (const DatasetEntry& e : manifest.images)
      set.files.push_back(hazy_dir + "/" + e.hazy);
  } else {
    set.files = list_png_files(hazy_dir);
  }
  check(!set.files.empty(), detail::cat("no hazy images found in ", hazy_dir));
  for (const std::string& f : set.files) {
    Tensor<float> img = load_image(f);
    if (!set.images.empty())
      check(img.shape() == set.images.front().shape(),
            detail::cat("image size mismatch: ", f, " is ", img.shape().str(),
                        ", expected ", set.images.front().shape().str()));
    set.images.push_back(std::move(img));
  }
  return set;
}

std::vector<double> per_image_equivariance_residuals(
    const UNetConfig& net, const ParamStore<float>& params,
    const PhysicsSource& physics, const std::vector<Tensor<float>>& hazy,
    const TransformSpec& tspec, uint64_t audit_seed) {
  check(!hazy.empty(), "no images to audit");
  Rng rng(audit_seed);
  const std::function<Tensor<float>(const Tensor<float>&)> f =
      [&](const Tensor<float>& in) { return unet_forward(net, params, in); };
  std::vector<double> residuals;
  residuals.reserve(hazy.size());
  for (size_t i = 0; i < hazy.size(); ++i) {
    const GroupElement g = sample(tspec, rng);
    const auto op = physics.batch_operator({i});
    const std::function<Tensor<float>(const Tensor<float>&)> haze_fn =
        [&](const Tensor<float>& in) { return op->apply(in); };
    residuals.push_back(equivariance_residual(f, haze_fn, hazy[i], g));
  }
  return residuals;
}

double mean_equivariance_residual(const UNetConfig& net,
                                  const ParamStore<float>& params,
                                  const PhysicsSource& physics,
                                  const std::vector<Tensor<float>>& hazy,
                                  const TransformSpec& tspec,
                                  uint64_t audit_seed) {
  const std::vector<double> residuals = per_image_equivariance_residuals(
      net, params, physics, hazy, tspec, audit_seed);
  double total = 0;
  for (double r : residuals) total += r;
  return total / double(residuals.size());
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

Tensor<float> stack_items(const std::vector<Tensor<float>>& images,
                          const std::vector<size_t>& indices) {
  const Shape& s = images.front().shape();
  Tensor<float> batch =
      Tensor<float>::zeros(Shape{int64_t(indices.size()), s.c, s.h, s.w});
  auto dst = batch.values();
  const int64_t item = s.numel();
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto src = images[indices[i]].values();
    std::copy(src.begin(), src.end(), dst.begin() + int64_t(i) * item);
  }
  return batch;
}

void shuffle_indices(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[size_t(rng.uniform_int(0, int64_t(i) - 1))]);
}

json config_to_json(const TrainConfig& c) {
  return json{{"lambda", c.lambda_ec},
              {"epochs", c.epochs},
              {"lr", c.base_lr},
              {"batch", c.batch_size},
              {"transform", c.transform},
              {"exact", c.exact_rotations},
              {"variant", to_string(c.variant)},
              {"detach_target", c.detach_target},
              {"per_item_transform", c.per_item_transform},
              {"loss", to_string(c.recon)},
              {"seed", c.seed},
              {"levels", c.unet_levels},
              {"base_channels", c.unet_base_channels},
              {"physics", c.physics}};
}

}  // namespace

TrainReport train_eid(const std::string& hazy_dir, const std::string& out_dir,
                      const TrainConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) fail_io("cannot create " + out_dir);

  PhysicsSource physics = resolve_physics(config.physics, hazy_dir);

  // Everything that can be validated is validated before epoch 0.
  HazySet set = load_hazy_set(hazy_dir, physics);
  std::vector<Tensor<float>>& images = set.images;
  const Shape image_shape = images.front().shape();

  UNetConfig net;
  net.levels = config.unet_levels;
  net.base_channels = config.unet_base_channels;
  net.in_channels = int(image_shape.c);
  net.out_channels = int(image_shape.c);
  net.validate();
  check(image_shape.h % net.spatial_divisor() == 0 &&
            image_shape.w % net.spatial_divisor() == 0,
        detail::cat("images of ", image_shape.str(),
                    " are not divisible by the U-Net divisor ",
                    net.spatial_divisor(), "; lower levels or resize"));

  const TransformSpec tspec = make_transform_spec(
      config.transform, image_shape.h, image_shape.w, config.exact_rotations);
  for (TransformKind kind : tspec.kinds)
    if (kind == TransformKind::kRotate && !config.exact_rotations)
      check(image_shape.h == image_shape.w,
            detail::cat("rotate transform requires square images, got ",
                        image_shape.str()));

  Rng root(config.seed);
  Rng init_rng = root.fork(1);
  Rng shuffle_rng = root.fork(2);
  Rng transform_rng = root.fork(3);

  ParamStore<float> params;
  unet_init(net, params, init_rng);

  std::vector<unsigned char> physics_bytes;
  if (!physics.analytic())
    physics_bytes = read_file_bytes(physics.checkpoint_path);

  const std::string csv_path = out_dir + "/train_report.csv";
  std::ofstream csv(csv_path);
  if (!csv) fail_io("cannot write " + csv_path);
  csv << "epoch,lr,l_hc,l_ec,total,seconds\n";
  csv.precision(10);

  TrainReport report;
  std::vector<size_t> indices(images.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(epoch, config.base_lr);
    shuffle_indices(indices, shuffle_rng);

    double sum_hc = 0, sum_ec = 0, sum_total = 0;
    int64_t batches = 0;
    for (size_t start = 0; start < indices.size();
         start += size_t(config.batch_size)) {
      const size_t end =
          std::min(indices.size(), start + size_t(config.batch_size));
      const std::vector<size_t> batch_idx(indices.begin() + int64_t(start),
                                          indices.begin() + int64_t(end));

      double batch_hc = 0, batch_ec = 0, batch_total = 0;
      if (config.per_item_transform && batch_idx.size() > 1) {
        // One element per item; totals averaged into a single backward.
        Tensor<float> combined;
        for (size_t k = 0; k < batch_idx.size(); ++k) {
          const std::vector<size_t> one{batch_idx[k]};
          const Tensor<float> y = stack_items(images, one);
          const auto op = physics.batch_operator(one);
          const GroupElement g = sample(tspec, transform_rng);
          EidLossTerms<float> terms =
              eid_loss(net, params, *op, y, g, config.lambda_ec,
                       config.variant, config.detach_target, config.recon);
          batch_hc += terms.hc;
          batch_ec += terms.ec;
          combined = k == 0 ? terms.total : add(combined, terms.total);
        }
        combined = mul_scalar(combined, 1.0f / float(batch_idx.size()));
        batch_hc /= double(batch_idx.size());
        batch_ec /= double(batch_idx.size());
        batch_total = double(combined.item());
        backward(combined);
      } else {
        const Tensor<float> y = stack_items(images, batch_idx);
        const auto op = physics.batch_operator(batch_idx);
        const GroupElement g = sample(tspec, transform_rng);
        EidLossTerms<float> terms =
            eid_loss(net, params, *op, y, g, config.lambda_ec, config.variant,
                     config.detach_target, config.recon);
        batch_hc = terms.hc;
        batch_ec = terms.ec;
        batch_total = double(terms.total.item());
        backward(terms.total);
      }
      adam_step(params, lr);
      if (!physics.analytic())
        for (const Tensor<float>& p : physics.shared->parameters())
          check(!p.has_grad(),
                "frozen haze operator accumulated gradient during training");

      sum_hc += batch_hc;
      sum_ec += batch_ec;
      sum_total += batch_total;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.mean_hc = sum_hc / double(batches);
    rec.mean_ec = sum_ec / double(batches);
    rec.mean_total = sum_total / double(batches);
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    report.epochs.push_back(rec);
    csv << rec.epoch << "," << rec.lr << "," << rec.mean_hc << ","
        << rec.mean_ec << "," << rec.mean_total << "," << rec.seconds << "\n";
  }
  csv.close();

  const std::string ckpt_path = out_dir + "/dehazer.ckpt";
  save_checkpoint(ckpt_path, params);

  if (!physics.analytic())
    check(read_file_bytes(physics.checkpoint_path) == physics_bytes,
          "pseudo-physics checkpoint changed during EID training");

  json summary;
  summary["config"] = config_to_json(config);
  summary["images"] = images.size();
  summary["image_shape"] = image_shape.str();
  // Relative path: the summary must be byte-identical across reruns in
  // different run directories.
  summary["checkpoint"] = "dehazer.ckpt";
  summary["physics"] = physics.analytic()
                           ? std::string("analytic(manifest)")
                           : physics.shared->describe();
  summary["initial_total"] = report.epochs.front().mean_total;
  summary["final_total"] = report.epochs.back().mean_total;
  summary["final_l_hc"] = report.epochs.back().mean_hc;
  summary["final_l_ec"] = report.epochs.back().mean_ec;
  const std::string summary_path = out_dir + "/train_summary.json";
  std::ofstream js(summary_path);
  if (!js) fail_io("cannot write " + summary_path);
  js << summary.dump(2) << "\n";

  report.checkpoint_path = ckpt_path;
  report.report_csv = csv_path;
  report.summary_json = summary_path;
  return report;
}

// ---------------------------------------------------------------------------
// Inference

template <typename T>
Tensor<T> dehaze_image(const UNetConfig& config, const ParamStore<T>& params,
                       const Tensor<T>& hazy) {
  NoGradGuard no_grad;
  Tensor<T> out = unet_forward(config, params, hazy);
  for (T& v : out.values()) v = std::clamp(v, T(0), T(1));
  return out;
}

void dehaze_directory(const std::string& checkpoint_path,
                      const std::string& in_dir, const std::string& out_dir) {
  LoadedCheckpoint<float> loaded = load_checkpoint<float>(checkpoint_path);
  loaded.params.set_requires_grad_all(false);
  const UNetConfig net = unet_config_from_params(loaded.params);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) fail_io("cannot create " + out_dir);

  const std::vector<std::string> files = list_png_files(in_dir);
  check(!files.empty(), detail::cat("no PNG images in ", in_dir));
  for (const std::string& f : files) {
    const Tensor<float> hazy = load_image(f);
    check(hazy.shape().c == net.in_channels,
          detail::cat("checkpoint expects ", net.in_channels,
                      "-channel input but ", f, " is ", hazy.shape().str()));
    const Tensor<float> clean = dehaze_image(net, loaded.params, hazy);
    save_image(out_dir + "/" + fs::path(f).filename().string(), clean);
  }
}

#define EID_INSTANTIATE(T)                                                     \
  template struct EidLossTerms<T>;                                             \
  template EidLossTerms<T> eid_loss(                                           \
      const std::function<Tensor<T>(const Tensor<T>&)>&,                       \
      const HazeOperator<T>&, const Tensor<T>&, const GroupElement&, double,   \
      LossVariant, bool, ReconLoss);                                           \
  template EidLossTerms<T> eid_loss(const UNetConfig&, const ParamStore<T>&,   \
                                    const HazeOperator<T>&, const Tensor<T>&,  \
                                    const GroupElement&, double, LossVariant,  \
                                    bool, ReconLoss);                          \
  template Tensor<T> dehaze_image(const UNetConfig&, const ParamStore<T>&,     \
                                  const Tensor<T>&);

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
