// eid: synthesize benchmarks, learn pseudo haze physics from unpaired data,
// train the equivariant dehazer, dehaze, evaluate and audit.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "eid/ablation.hpp"
#include "eid/adversarial.hpp"
#include "eid/checkpoint.hpp"
#include "eid/image_io.hpp"
#include "eid/metrics.hpp"
#include "eid/synth.hpp"
#include "eid/tensor_io.hpp"
#include "eid/trainer.hpp"

namespace {

using nlohmann::json;

/// Flat per-subcommand config: CLI flags override file keys, unknown keys
/// are rejected, and the effective result is echoed into the run directory.
class RunConfig {
 public:
  RunConfig(CLI::App* cmd, std::string subcommand)
      : cmd_(cmd), subcommand_(std::move(subcommand)) {
    known_.insert("subcommand");
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) eid::fail_io("cannot open config file " + path);
    try {
      in >> file_;
    } catch (const json::exception& e) {
      eid::fail_io(eid::detail::cat("bad JSON in ", path, ": ", e.what()));
    }
    if (file_.contains("subcommand") && file_["subcommand"] != subcommand_)
      eid::fail(eid::detail::cat("config file is for subcommand '",
                                 std::string(file_["subcommand"]),
                                 "', not '", subcommand_, "'"));
  }

  /// Registers a key: flag wins, then config file, then the default already
  /// in `value`. Pass required=true for keys that must come from one of the
  /// two sources.
  template <typename T>
  void merge(const std::string& key, T& value, bool required = false) {
    known_.insert(key);
    CLI::Option* opt = cmd_->get_option_no_throw("--" + key);
    const bool from_flag = opt != nullptr && opt->count() > 0;
    if (!from_flag && file_.contains(key)) {
      try {
        value = file_.at(key).get<T>();
      } catch (const json::exception& e) {
        eid::fail(eid::detail::cat("config key '", key, "': ", e.what()));
      }
    } else if (!from_flag && required) {
      eid::fail(eid::detail::cat("missing required --", key,
                                 " (flag or config key)"));
    }
    effective_[key] = value;
  }

  void finalize() const {
    for (const auto& [key, unused] : file_.items())
      if (!known_.count(key))
        eid::fail(eid::detail::cat("unknown config key '", key, "' for ",
                                   subcommand_));
  }

  /// Writes the effective configuration into the run directory so the run
  /// can be reproduced with --config alone.
  void echo_into(const std::string& out_dir) const {
    std::filesystem::create_directories(out_dir);
    json echo = effective_;
    echo["subcommand"] = subcommand_;
    std::ofstream out(out_dir + "/eid_config.json");
    if (!out) eid::fail_io("cannot write " + out_dir + "/eid_config.json");
    out << echo.dump(2) << "\n";
  }

 private:
  CLI::App* cmd_;
  std::string subcommand_;
  json file_ = json::object();
  json effective_ = json::object();
  std::set<std::string> known_;
};

json json_metric(double v) {
  if (std::isinf(v)) return json("inf");
  return json(v);
}

struct SynthArgs {
  std::string out, config;
  int count = 0;
  int64_t size = 32;
  uint64_t seed = 0;
  eid::SceneSpec spec;
};

void run_synth(CLI::App* cmd, SynthArgs& args) {
  RunConfig config(cmd, "synth");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("out", args.out, true);
  config.merge("count", args.count, true);
  config.merge("size", args.size, true);
  config.merge("seed", args.seed, true);
  config.merge("channels", args.spec.channels);
  config.merge("min_shapes", args.spec.min_shapes);
  config.merge("max_shapes", args.spec.max_shapes);
  config.merge("intensity_min", args.spec.intensity_min);
  config.merge("intensity_max", args.spec.intensity_max);
  config.merge("depth_bumps", args.spec.depth_bumps);
  config.merge("depth_relief", args.spec.depth_relief);
  config.merge("depth_gradient_bound", args.spec.depth_gradient_bound);
  config.merge("beta_min", args.spec.beta_min);
  config.merge("beta_max", args.spec.beta_max);
  config.merge("alpha", args.spec.alpha);
  config.finalize();

  args.spec.size = args.size;
  args.spec.seed = args.seed;
  config.echo_into(args.out);
  const eid::DatasetManifest manifest =
      eid::synth_dataset(args.out, args.spec, args.count);
  std::cerr << "wrote " << manifest.images.size() << " scenes to " << args.out
            << "\n";
}

struct HazeArgs {
  std::string in, depth, out, config;
  double beta = -1;
  double alpha = -1;
  double dmax = 1.0;
};

void run_haze(CLI::App* cmd, HazeArgs& args) {
  RunConfig config(cmd, "haze");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("in", args.in, true);
  config.merge("depth", args.depth, true);
  config.merge("beta", args.beta, true);
  config.merge("alpha", args.alpha, true);
  config.merge("out", args.out, true);
  config.merge("dmax", args.dmax);
  config.finalize();

  eid::ScatteringParams params;
  params.beta = args.beta;
  params.alpha = {args.alpha};
  params.depth = eid::load_depth(args.depth, args.dmax);
  const eid::AnalyticScattering<float> op(params);

  config.echo_into(args.out);
  const std::vector<std::string> files = eid::list_png_files(args.in);
  eid::check(!files.empty(), eid::detail::cat("no PNG images in ", args.in));
  eid::NoGradGuard no_grad;
  for (const std::string& f : files) {
    const eid::Tensor<float> x = eid::load_image(f);
    const eid::Tensor<float> hazy = eid::apply_haze(op, x, true);
    eid::save_image(
        args.out + "/" + std::filesystem::path(f).filename().string(), hazy);
  }
  std::cerr << "hazed " << files.size() << " images into " << args.out << "\n";
}

struct TrainPhysicsArgs {
  std::string clear, hazy, out, config;
  eid::GanTrainConfig gan;
};

void run_train_physics(CLI::App* cmd, TrainPhysicsArgs& args) {
  RunConfig config(cmd, "train-physics");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("clear", args.clear, true);
  config.merge("hazy", args.hazy, true);
  config.merge("out", args.out, true);
  config.merge("iters", args.gan.iterations);
  config.merge("batch", args.gan.batch_size);
  config.merge("lr", args.gan.lr);
  config.merge("seed", args.gan.seed);
  config.merge("base-channels", args.gan.base_channels);
  config.merge("cycle-weight", args.gan.cycle_weight);
  config.merge("saturating", args.gan.saturating_generator_loss);
  config.merge("clear-discriminator", args.gan.use_clear_discriminator);
  config.finalize();

  config.echo_into(args.out);
  const eid::GanTrainReport report =
      eid::train_pseudo_physics(args.clear, args.hazy, args.out, args.gan);
  std::cerr << "pseudo-physics checkpoint: " << report.checkpoint_path
            << "\ncycle loss " << report.first_cycle_loss << " -> "
            << report.last_cycle_loss << "\n";
}

struct TrainArgs {
  std::string hazy, out, config;
  std::string variant = "V3";
  std::string loss = "mse";
  eid::TrainConfig train;
};

void run_train(CLI::App* cmd, TrainArgs& args) {
  RunConfig config(cmd, "train");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("hazy", args.hazy, true);
  config.merge("physics", args.train.physics, true);
  config.merge("transform", args.train.transform, true);
  config.merge("lambda", args.train.lambda_ec, true);
  config.merge("epochs", args.train.epochs, true);
  config.merge("seed", args.train.seed, true);
  config.merge("out", args.out, true);
  config.merge("lr", args.train.base_lr);
  config.merge("batch", args.train.batch_size);
  config.merge("variant", args.variant);
  config.merge("loss", args.loss);
  config.merge("detach-target", args.train.detach_target);
  config.merge("per-item-transform", args.train.per_item_transform);
  config.merge("exact", args.train.exact_rotations);
  config.merge("levels", args.train.unet_levels);
  config.merge("base-channels", args.train.unet_base_channels);
  config.finalize();

  args.train.variant = eid::loss_variant_from_string(args.variant);
  args.train.recon = eid::recon_loss_from_string(args.loss);
  args.train.validate();

  config.echo_into(args.out);
  const eid::TrainReport report = eid::train_eid(args.hazy, args.out, args.train);
  std::cerr << "checkpoint: " << report.checkpoint_path << "\nmean total "
            << report.epochs.front().mean_total << " -> "
            << report.epochs.back().mean_total << " over "
            << report.epochs.size() << " epochs\n";
}

struct DehazeArgs {
  std::string ckpt, in, out, config;
};

void run_dehaze(CLI::App* cmd, DehazeArgs& args) {
  RunConfig config(cmd, "dehaze");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("ckpt", args.ckpt, true);
  config.merge("in", args.in, true);
  config.merge("out", args.out, true);
  config.finalize();

  config.echo_into(args.out);
  eid::dehaze_directory(args.ckpt, args.in, args.out);
  std::cerr << "dehazed " << args.in << " -> " << args.out << "\n";
}

struct EvalArgs {
  std::string pred, ref, config;
};

void run_eval(CLI::App* cmd, EvalArgs& args) {
  RunConfig config(cmd, "eval");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("pred", args.pred, true);
  config.merge("ref", args.ref, true);
  config.finalize();

  const eid::EvalReport report = eid::evaluate_directories(args.pred, args.ref);
  json out;
  out["count"] = report.per_image.size();
  out["mean_psnr"] = json_metric(report.mean_psnr);
  out["mean_ssim"] = report.mean_ssim;
  out["per_image"] = json::array();
  for (const eid::ImageScore& s : report.per_image)
    out["per_image"].push_back(json{{"name", s.name},
                                    {"psnr", json_metric(s.psnr)},
                                    {"ssim", s.ssim}});
  std::cout << out.dump(2) << "\n";
}

struct AuditArgs {
  std::string ckpt, physics, transform, in, config;
  uint64_t seed = 0;
  bool exact = false;
};

void run_audit(CLI::App* cmd, AuditArgs& args) {
  RunConfig config(cmd, "audit");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("ckpt", args.ckpt, true);
  config.merge("physics", args.physics, true);
  config.merge("transform", args.transform, true);
  config.merge("in", args.in, true);
  config.merge("seed", args.seed);
  config.merge("exact", args.exact);
  config.finalize();

  eid::LoadedCheckpoint<float> loaded = eid::load_checkpoint<float>(args.ckpt);
  loaded.params.set_requires_grad_all(false);
  const eid::UNetConfig net = eid::unet_config_from_params(loaded.params);
  const eid::PhysicsSource physics =
      eid::resolve_physics(args.physics, args.in);
  const eid::HazySet set = eid::load_hazy_set(args.in, physics);
  const eid::Shape& shape = set.images.front().shape();
  const eid::TransformSpec tspec = eid::make_transform_spec(
      args.transform, shape.h, shape.w, args.exact);
  const std::vector<double> residuals = eid::per_image_equivariance_residuals(
      net, loaded.params, physics, set.images, tspec, args.seed);

  double mean = 0;
  json per = json::array();
  for (size_t i = 0; i < residuals.size(); ++i) {
    mean += residuals[i];
    per.push_back(json{
        {"name", std::filesystem::path(set.files[i]).filename().string()},
        {"residual", residuals[i]}});
  }
  mean /= double(residuals.size());

  json out;
  out["count"] = residuals.size();
  out["transform"] = args.transform;
  out["seed"] = args.seed;
  out["mean_equivariance_residual"] = mean;
  out["per_image"] = per;
  std::cout << out.dump(2) << "\n";
}

struct AblateArgs {
  std::string data, out, config;
  std::string variants = "V1,V2,V3";
  std::string transforms = "rotate";
  std::string loss = "mse";
  bool parallel = false;
  eid::TrainConfig base;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    const size_t comma = s.find(',', start);
    out.push_back(s.substr(
        start, comma == std::string::npos ? comma : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void run_ablate(CLI::App* cmd, AblateArgs& args) {
  RunConfig config(cmd, "ablate");
  if (!args.config.empty()) config.load_file(args.config);
  config.merge("data", args.data, true);
  config.merge("out", args.out, true);
  config.merge("seed", args.base.seed, true);
  config.merge("variants", args.variants);
  config.merge("transforms", args.transforms);
  config.merge("epochs", args.base.epochs);
  config.merge("lambda", args.base.lambda_ec);
  config.merge("lr", args.base.base_lr);
  config.merge("batch", args.base.batch_size);
  config.merge("levels", args.base.unet_levels);
  config.merge("base-channels", args.base.unet_base_channels);
  config.merge("loss", args.loss);
  config.merge("exact", args.base.exact_rotations);
  config.merge("parallel", args.parallel);
  config.finalize();

  eid::AblationConfig ablation;
  ablation.dataset_dir = args.data;
  ablation.out_dir = args.out;
  ablation.base = args.base;
  ablation.base.physics = "analytic";
  ablation.base.recon = eid::recon_loss_from_string(args.loss);
  ablation.parallel = args.parallel;
  ablation.variants.clear();
  for (const std::string& v : split_csv(args.variants))
    ablation.variants.push_back(eid::loss_variant_from_string(v));
  ablation.transforms = split_csv(args.transforms);

  config.echo_into(args.out);
  const eid::AblationResult result = eid::ablation_matrix(ablation);
  std::cerr << "wrote " << result.cells.size() << " cells to "
            << result.csv_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "eid: unsupervised image dehazing via haze consistency and system "
      "equivariance"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a synthetic benchmark (clean/depth/hazy triples)");
  synth->add_option("--out", synth_args.out, "output directory");
  synth->add_option("--count", synth_args.count, "number of scenes");
  synth->add_option("--size", synth_args.size, "square image size");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--channels", synth_args.spec.channels, "1 or 3");
  synth->add_option("--min_shapes", synth_args.spec.min_shapes);
  synth->add_option("--max_shapes", synth_args.spec.max_shapes);
  synth->add_option("--intensity_min", synth_args.spec.intensity_min);
  synth->add_option("--intensity_max", synth_args.spec.intensity_max);
  synth->add_option("--depth_bumps", synth_args.spec.depth_bumps);
  synth->add_option("--depth_relief", synth_args.spec.depth_relief);
  synth->add_option("--depth_gradient_bound",
                    synth_args.spec.depth_gradient_bound);
  synth->add_option("--beta_min", synth_args.spec.beta_min);
  synth->add_option("--beta_max", synth_args.spec.beta_max);
  synth->add_option("--alpha", synth_args.spec.alpha);
  synth->add_option("--config", synth_args.config, "JSON config file");

  HazeArgs haze_args;
  CLI::App* haze = app.add_subcommand(
      "haze", "Apply the analytic scattering model to a directory of images");
  haze->add_option("--in", haze_args.in, "input image directory");
  haze->add_option("--depth", haze_args.depth,
                   "depth map (EIDTNSR1 or 16-bit grayscale PNG)");
  haze->add_option("--beta", haze_args.beta, "attenuation coefficient");
  haze->add_option("--alpha", haze_args.alpha, "atmospheric light in [0,1]");
  haze->add_option("--out", haze_args.out, "output directory");
  haze->add_option("--dmax", haze_args.dmax, "depth scale for PNG depth maps");
  haze->add_option("--config", haze_args.config, "JSON config file");

  TrainPhysicsArgs tp_args;
  CLI::App* tp = app.add_subcommand(
      "train-physics",
      "Learn a pseudo haze operator from unpaired clear/hazy images");
  tp->add_option("--clear", tp_args.clear, "directory of clear images");
  tp->add_option("--hazy", tp_args.hazy, "directory of hazy images");
  tp->add_option("--out", tp_args.out, "output directory");
  tp->add_option("--iters", tp_args.gan.iterations);
  tp->add_option("--batch", tp_args.gan.batch_size);
  tp->add_option("--lr", tp_args.gan.lr);
  tp->add_option("--seed", tp_args.gan.seed);
  tp->add_option("--base-channels", tp_args.gan.base_channels);
  tp->add_option("--cycle-weight", tp_args.gan.cycle_weight);
  tp->add_flag("--saturating", tp_args.gan.saturating_generator_loss,
               "use the literal saturating generator loss");
  tp->add_flag("--clear-discriminator", tp_args.gan.use_clear_discriminator,
               "also train a clear-side discriminator");
  tp->add_option("--config", tp_args.config, "JSON config file");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "Train the dehazer on raw hazy images");
  train->add_option("--hazy", train_args.hazy, "directory of hazy images");
  train->add_option("--physics", train_args.train.physics,
                    "'analytic' (manifest in --hazy) or a checkpoint path");
  train->add_option("--transform", train_args.train.transform,
                    "rotate|shift|scale|reflect|euclidean|similarity|affine|"
                    "pantiltrotate or a '+'-joined pair");
  train->add_option("--lambda", train_args.train.lambda_ec,
                    "equivariance weight");
  train->add_option("--epochs", train_args.train.epochs);
  train->add_option("--seed", train_args.train.seed);
  train->add_option("--out", train_args.out, "output directory");
  train->add_option("--lr", train_args.train.base_lr);
  train->add_option("--batch", train_args.train.batch_size);
  train->add_option("--variant", train_args.variant, "V1|V2|V3");
  train->add_option("--loss", train_args.loss, "mse|l1");
  train->add_flag("--detach-target", train_args.train.detach_target,
                  "stop gradient through the transformed target");
  train->add_flag("--per-item-transform", train_args.train.per_item_transform,
                  "sample one transform per image instead of per batch");
  train->add_flag("--exact", train_args.train.exact_rotations,
                  "restrict rotations to quarter turns");
  train->add_option("--levels", train_args.train.unet_levels);
  train->add_option("--base-channels", train_args.train.unet_base_channels);
  train->add_option("--config", train_args.config, "JSON config file");

  DehazeArgs dehaze_args;
  CLI::App* dehaze = app.add_subcommand(
      "dehaze", "Run a trained checkpoint over a directory of images");
  dehaze->add_option("--ckpt", dehaze_args.ckpt, "dehazer checkpoint");
  dehaze->add_option("--in", dehaze_args.in, "input directory");
  dehaze->add_option("--out", dehaze_args.out, "output directory");
  dehaze->add_option("--config", dehaze_args.config, "JSON config file");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "eval", "PSNR/SSIM of predictions against references (JSON to stdout)");
  eval->add_option("--pred", eval_args.pred, "prediction directory");
  eval->add_option("--ref", eval_args.ref, "reference directory");
  eval->add_option("--config", eval_args.config, "JSON config file");

  AuditArgs audit_args;
  CLI::App* audit = app.add_subcommand(
      "audit",
      "Equivariance residual of a checkpoint over images (JSON to stdout)");
  audit->add_option("--ckpt", audit_args.ckpt, "dehazer checkpoint");
  audit->add_option("--physics", audit_args.physics,
                    "'analytic' or a pseudo-physics checkpoint");
  audit->add_option("--transform", audit_args.transform, "transform spec");
  audit->add_option("--in", audit_args.in, "directory of hazy images");
  audit->add_option("--seed", audit_args.seed, "audit sampling seed");
  audit->add_flag("--exact", audit_args.exact,
                  "restrict rotations to quarter turns");
  audit->add_option("--config", audit_args.config, "JSON config file");

  AblateArgs ablate_args;
  CLI::App* ablate = app.add_subcommand(
      "ablate",
      "Loss-variant x transform matrix on a synthetic benchmark (CSV)");
  ablate->add_option("--data", ablate_args.data,
                     "synthetic dataset directory (with manifest.json)");
  ablate->add_option("--out", ablate_args.out, "output directory");
  ablate->add_option("--seed", ablate_args.base.seed, "matrix base seed");
  ablate->add_option("--variants", ablate_args.variants, "e.g. V1,V2,V3");
  ablate->add_option("--transforms", ablate_args.transforms,
                     "e.g. rotate,rotate+shift");
  ablate->add_option("--epochs", ablate_args.base.epochs);
  ablate->add_option("--lambda", ablate_args.base.lambda_ec);
  ablate->add_option("--lr", ablate_args.base.base_lr);
  ablate->add_option("--batch", ablate_args.base.batch_size);
  ablate->add_option("--levels", ablate_args.base.unet_levels);
  ablate->add_option("--base-channels", ablate_args.base.unet_base_channels);
  ablate->add_option("--loss", ablate_args.loss, "mse|l1");
  ablate->add_flag("--exact", ablate_args.base.exact_rotations);
  ablate->add_flag("--parallel", ablate_args.parallel,
                   "run matrix cells concurrently (bounded by EID_THREADS)");
  ablate->add_option("--config", ablate_args.config, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) run_synth(synth, synth_args);
    if (haze->parsed()) run_haze(haze, haze_args);
    if (tp->parsed()) run_train_physics(tp, tp_args);
    if (train->parsed()) run_train(train, train_args);
    if (dehaze->parsed()) run_dehaze(dehaze, dehaze_args);
    if (eval->parsed()) run_eval(eval, eval_args);
    if (audit->parsed()) run_audit(audit, audit_args);
    if (ablate->parsed()) run_ablate(ablate, ablate_args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
