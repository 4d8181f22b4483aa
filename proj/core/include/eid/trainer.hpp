#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eid/network.hpp"
#include "eid/physics.hpp"
#include "eid/transforms.hpp"

namespace eid {

/// Loss ablation variants: haze consistency only, equivariance only, both.
enum class LossVariant { kV1, kV2, kV3 };
LossVariant loss_variant_from_string(const std::string& name);
std::string to_string(LossVariant variant);

enum class ReconLoss { kMse, kL1 };
ReconLoss recon_loss_from_string(const std::string& name);
std::string to_string(ReconLoss recon);

struct TrainConfig {
  double lambda_ec = 0.1;
  int epochs = 50;
  double base_lr = 1e-4;
  int batch_size = 8;
  std::string transform = "rotate";
  bool exact_rotations = false;
  LossVariant variant = LossVariant::kV3;
  bool detach_target = false;      // stop-gradient on the transformed target
  bool per_item_transform = false; // sample g per image instead of per batch
  ReconLoss recon = ReconLoss::kMse;
  uint64_t seed = 0;
  int unet_levels = 3;
  int unet_base_channels = 16;
  /// "analytic" resolves per-image scattering parameters from the dataset
  /// manifest; anything else is a pseudo-physics checkpoint path.
  std::string physics = "analytic";

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double mean_hc = 0;
  double mean_ec = 0;
  double mean_total = 0;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::string checkpoint_path;
  std::string report_csv;    // epoch,lr,l_hc,l_ec,total,seconds
  std::string summary_json;  // config echo + final metrics
};

template <typename T>
struct EidLossTerms {
  Tensor<T> total;    // graph tensor; backward() trains on it
  Tensor<T> hc_term;  // haze-consistency scalar (graph-free when excluded)
  Tensor<T> ec_term;  // equivariance scalar (graph-free when excluded)
  double hc = 0;      // haze-consistency term value
  double ec = 0;      // equivariance term value
};

/// The training objective on one batch:
///   x1 = f(y);   l_hc = L(H(x1), y)
///   x2 = g.x1;   l_ec = L(f(H(x2)), x2)  under g's validity mask
///   total = l_hc + lambda*l_ec
/// V1/V2 drop the excluded branch from the graph structurally (it is
/// evaluated without recording, so it cannot contribute gradient); both
/// term values are always reported. With detach_target the second x2
/// occurrence carries no gradient.
template <typename T>
EidLossTerms<T> eid_loss(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                         const HazeOperator<T>& haze, const Tensor<T>& y,
                         const GroupElement& g, double lambda_ec,
                         LossVariant variant, bool detach_target = false,
                         ReconLoss recon = ReconLoss::kMse);

/// Convenience overload for the U-Net dehazer.
template <typename T>
EidLossTerms<T> eid_loss(const UNetConfig& config, const ParamStore<T>& params,
                         const HazeOperator<T>& haze, const Tensor<T>& y,
                         const GroupElement& g, double lambda_ec,
                         LossVariant variant, bool detach_target = false,
                         ReconLoss recon = ReconLoss::kMse);

/// Full EID run over a directory of hazy images. Writes checkpoint, CSV
/// report and JSON summary into out_dir; deterministic for a fixed seed
/// (wall-clock seconds in the CSV are the one nondeterministic column).
TrainReport train_eid(const std::string& hazy_dir, const std::string& out_dir,
                      const TrainConfig& config);

/// Pure forward pass, no graph recorded, output clamped to [0,1].
template <typename T>
Tensor<T> dehaze_image(const UNetConfig& config, const ParamStore<T>& params,
                       const Tensor<T>& hazy);

/// Loads a checkpoint and dehazes every PNG under in_dir into out_dir,
/// keeping file names.
void dehaze_directory(const std::string& checkpoint_path,
                      const std::string& in_dir, const std::string& out_dir);

/// Resolved physics for a hazy directory: per-image analytic operators from
/// its manifest, or one shared learned operator from a checkpoint.
struct PhysicsSource {
  std::vector<ScatteringParams> per_image;      // analytic mode
  std::shared_ptr<HazeOperator<float>> shared;  // learned mode
  std::string checkpoint_path;                  // set in learned mode

  bool analytic() const { return !per_image.empty(); }
  /// Operator for a batch assembled from the given image indices.
  std::shared_ptr<HazeOperator<float>> batch_operator(
      const std::vector<size_t>& indices) const;
};

PhysicsSource resolve_physics(const std::string& physics,
                              const std::string& hazy_dir);

struct HazySet {
  std::vector<std::string> files;
  std::vector<Tensor<float>> images;  // uniform size, validated
};

/// Hazy images for training/audit: manifest order in analytic mode, sorted
/// *.png otherwise.
HazySet load_hazy_set(const std::string& hazy_dir,
                      const PhysicsSource& physics);

/// Equivariance residuals over a hazy set, one sampled transform per image;
/// deterministic for a fixed audit seed.
std::vector<double> per_image_equivariance_residuals(
    const UNetConfig& net, const ParamStore<float>& params,
    const PhysicsSource& physics, const std::vector<Tensor<float>>& hazy,
    const TransformSpec& tspec, uint64_t audit_seed);

double mean_equivariance_residual(const UNetConfig& net,
                                  const ParamStore<float>& params,
                                  const PhysicsSource& physics,
                                  const std::vector<Tensor<float>>& hazy,
                                  const TransformSpec& tspec,
                                  uint64_t audit_seed);

}  // namespace eid
