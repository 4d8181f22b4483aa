#include "eid/ablation.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "eid/checkpoint.hpp"
#include "eid/image_io.hpp"
#include "eid/metrics.hpp"
#include "eid/rng.hpp"
#include "eid/synth.hpp"

namespace eid {

void AblationConfig::validate() const {
  check(!variants.empty(), "ablation: no variants listed");
  check(!transforms.empty(), "ablation: no transforms listed");
  check(base.physics == "analytic",
        "ablation runs on the synthetic benchmark and needs analytic physics");
  check(std::filesystem::exists(dataset_dir + "/manifest.json"),
        detail::cat("no manifest.json in ", dataset_dir,
                    "; generate the dataset with the synth command first"));
}

uint64_t ablation_cell_seed(uint64_t base_seed, const std::string& variant,
                            const std::string& transform) {
  return base_seed ^ fnv1a(variant + ":" + transform);
}

namespace {

AblationCell run_cell(const AblationConfig& config, LossVariant variant,
                      const std::string& transform) {
  AblationCell cell;
  cell.variant = to_string(variant);
  cell.transform = transform;
  try {
    TrainConfig cfg = config.base;
    cfg.variant = variant;
    cfg.transform = transform;
    cfg.seed = ablation_cell_seed(config.base.seed, cell.variant, transform);

    const std::string run_dir =
        config.out_dir + "/" + cell.variant + "_" + transform;
    const TrainReport report = train_eid(config.dataset_dir, run_dir, cfg);

    // Metrics against the clean references.
    const DatasetManifest manifest =
        DatasetManifest::load(config.dataset_dir + "/manifest.json");
    LoadedCheckpoint<float> trained =
        load_checkpoint<float>(report.checkpoint_path);
    trained.params.set_requires_grad_all(false);
    const UNetConfig net = unet_config_from_params(trained.params);

    double sum_psnr = 0, sum_ssim = 0;
    for (const DatasetEntry& e : manifest.images) {
      const Tensor<float> hazy =
          load_image(config.dataset_dir + "/" + e.hazy);
      const Tensor<float> clean =
          load_image(config.dataset_dir + "/" + e.clean);
      const Tensor<float> dehazed = dehaze_image(net, trained.params, hazy);
      sum_psnr += psnr(dehazed, clean);
      sum_ssim += ssim(dehazed, clean);
    }
    cell.psnr = sum_psnr / double(manifest.images.size());
    cell.ssim = sum_ssim / double(manifest.images.size());

    // Equivariance residual on identical probes for trained and untrained
    // parameters (the untrained network is re-created from the cell seed,
    // matching the initialization stream inside train_eid).
    const PhysicsSource physics =
        resolve_physics("analytic", config.dataset_dir);
    const HazySet set = load_hazy_set(config.dataset_dir, physics);
    const Shape& shape = set.images.front().shape();
    const TransformSpec tspec = make_transform_spec(
        transform, shape.h, shape.w, cfg.exact_rotations);
    const uint64_t audit_seed = mix_u64(cfg.seed ^ 0xa0d17ULL);
    cell.residual = mean_equivariance_residual(net, trained.params, physics,
                                               set.images, tspec, audit_seed);

    ParamStore<float> untrained;
    Rng root(cfg.seed);
    Rng init_rng = root.fork(1);
    unet_init(net, untrained, init_rng);
    untrained.set_requires_grad_all(false);
    cell.residual_untrained = mean_equivariance_residual(
        net, untrained, physics, set.images, tspec, audit_seed);
  } catch (const std::exception& e) {
    cell.status = e.what();
  }
  return cell;
}

}  // namespace

AblationResult ablation_matrix(const AblationConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (!fs::is_directory(config.out_dir))
    fail_io("cannot create " + config.out_dir);

  struct CellSpec {
    LossVariant variant;
    std::string transform;
  };
  std::vector<CellSpec> specs;
  for (LossVariant v : config.variants)
    for (const std::string& t : config.transforms) specs.push_back({v, t});

  AblationResult result;
  result.cells.resize(specs.size());
  if (config.parallel && thread_budget() > 1 && specs.size() > 1) {
    std::atomic<size_t> next{0};
    const int workers =
        std::min<int>(thread_budget(), int(specs.size()));
    auto worker = [&] {
      for (size_t i = next.fetch_add(1); i < specs.size();
           i = next.fetch_add(1))
        result.cells[i] =
            run_cell(config, specs[i].variant, specs[i].transform);
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  } else {
    for (size_t i = 0; i < specs.size(); ++i)
      result.cells[i] = run_cell(config, specs[i].variant, specs[i].transform);
  }

  result.csv_path = config.out_dir + "/ablation.csv";
  std::ofstream csv(result.csv_path);
  if (!csv) fail_io("cannot write " + result.csv_path);
  csv.precision(10);
  csv << "variant,transform,psnr,ssim,equiv_residual,equiv_residual_untrained,"
         "status\n";
  for (const AblationCell& cell : result.cells)
    csv << cell.variant << "," << cell.transform << "," << cell.psnr << ","
        << cell.ssim << "," << cell.residual << ","
        << cell.residual_untrained << "," << cell.status << "\n";
  return result;
}

}  // namespace eid
