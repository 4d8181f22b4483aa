#pragma once

#include <string>
#include <vector>

#include "eid/trainer.hpp"

namespace eid {

/// One training run per (variant, transform) cell on a synthetic dataset
/// with clean references, each cell under its own derived seed.
struct AblationConfig {
  std::string dataset_dir;  // synth output: manifest + clean/hazy/depth
  std::string out_dir;
  std::vector<LossVariant> variants = {LossVariant::kV1, LossVariant::kV2,
                                       LossVariant::kV3};
  std::vector<std::string> transforms = {"rotate"};
  TrainConfig base;  // physics must stay "analytic"; seed is the matrix seed
  bool parallel = false;

  void validate() const;
};

struct AblationCell {
  std::string variant;
  std::string transform;
  double psnr = 0;
  double ssim = 0;
  double residual = 0;            // trained equivariance residual
  double residual_untrained = 0;  // same probes on the untrained network
  std::string status = "ok";      // or the cell's error message
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::string csv_path;
};

/// seed XOR a stable hash of (variant, transform): cells are independent
/// but reproducible.
uint64_t ablation_cell_seed(uint64_t base_seed, const std::string& variant,
                            const std::string& transform);

/// Runs every cell (serially, or in parallel up to the EID_THREADS budget
/// when config.parallel), writing one CSV row per cell; a failing cell is
/// recorded in-row and the matrix continues.
AblationResult ablation_matrix(const AblationConfig& config);

}  // namespace eid
