#pragma once

#include <string>
#include <vector>

#include "eid/network.hpp"
#include "eid/physics.hpp"
#include "eid/rng.hpp"

namespace eid {

/// Two generators and the hazy-side discriminator (a clear-side
/// discriminator is available but off by default). Generators and
/// discriminators end in sigmoid, so outputs live in (0,1).
template <typename T>
struct GanBundle {
  ParamStore<T> g_h;  // clear -> hazy
  ParamStore<T> g_c;  // hazy -> clear
  ParamStore<T> d_h;  // discriminates hazy images
  ParamStore<T> d_c;  // optional clear-side discriminator
  int channels = 3;
  int base_channels = 16;
  bool use_clear_discriminator = false;
};

template <typename T>
GanBundle<T> init_gan(int channels, int base_channels, Rng& rng,
                      bool use_clear_discriminator = false);

/// Residual encoder-decoder generator: two stride-2 downs, two residual
/// blocks, two nearest-neighbor ups, sigmoid head. Spatial size must be
/// divisible by 4.
template <typename T>
Tensor<T> generator_forward(const ParamStore<T>& params, const Tensor<T>& x);

/// 4-layer strided patch discriminator; returns an Nx1xH/8xW/8 score map
/// in (0,1).
template <typename T>
Tensor<T> discriminator_forward(const ParamStore<T>& params,
                                const Tensor<T>& x);

/// Value of the adversarial objective from score maps:
/// E[log D(real)] + E[log(1 - D(fake))], logs clamped at 1e-12.
template <typename T>
Tensor<T> adversarial_value(const Tensor<T>& real_scores,
                            const Tensor<T>& fake_scores);

/// Generator-side adversarial loss from fake scores: the non-saturating
/// -E[log D(fake)] by default, or the literal saturating
/// E[log(1 - D(fake))].
template <typename T>
Tensor<T> generator_adv_loss(const Tensor<T>& fake_scores,
                             bool saturating = false);

template <typename T>
struct AdversarialLosses {
  Tensor<T> d_loss;  // discriminator descends this (it equals -l1)
  Tensor<T> g_loss;  // generator's adversarial term
  double l1 = 0;     // objective value at the current parameters
};

/// One-shot loss evaluation on a clear/hazy batch pair. Training alternates
/// its own per-phase passes; a tape is consumed by one backward, so these
/// two tensors must not both be backpropagated.
template <typename T>
AdversarialLosses<T> adversarial_losses(const GanBundle<T>& bundle,
                                        const Tensor<T>& x_c,
                                        const Tensor<T>& x_h,
                                        bool saturating = false);

/// Both cycle directions, L1: E[|G_h(G_c(x_h)) - x_h|] +
/// E[|G_c(G_h(x_c)) - x_c|].
template <typename T>
Tensor<T> cycle_loss(const GanBundle<T>& bundle, const Tensor<T>& x_c,
                     const Tensor<T>& x_h);

/// Fraction of discriminator patch scores below 0.5 on fakes G_h(x_c).
template <typename T>
double discriminator_fake_accuracy(const GanBundle<T>& bundle,
                                   const Tensor<T>& x_c);

struct GanTrainConfig {
  int iterations = 200;
  int batch_size = 4;
  double lr = 2e-4;
  uint64_t seed = 0;
  int base_channels = 16;
  double cycle_weight = 10.0;  // weight on the cycle term in the G step
  bool saturating_generator_loss = false;
  bool use_clear_discriminator = false;

  void validate() const;
};

struct GanTrainReport {
  std::string checkpoint_path;
  std::string log_path;  // CSV: iter,d_loss,g_loss,cycle_loss
  double first_cycle_loss = 0;
  double last_cycle_loss = 0;
  std::vector<double> fake_accuracy;  // sampled every iteration
};

/// Alternating optimization (one discriminator step, one generator step per
/// batch) on unpaired directories of same-size PNGs. Emits a frozen
/// EIDCKPT1 checkpoint holding G_h (plus G_c for diagnostics) and a
/// per-iteration CSV log under out_dir.
GanTrainReport train_pseudo_physics(const std::string& clear_dir,
                                    const std::string& hazy_dir,
                                    const std::string& out_dir,
                                    const GanTrainConfig& config);

/// Frozen learned haze operator backed by a trained G_h. Gradients flow
/// through apply() to the input; the generator parameters never require
/// grad.
template <typename T>
class LearnedHaze final : public HazeOperator<T> {
 public:
  explicit LearnedHaze(ParamStore<T> generator_params);
  static LearnedHaze<T> from_checkpoint(const std::string& path);

  Tensor<T> apply(const Tensor<T>& x) const override;
  std::vector<Tensor<T>> parameters() const override;
  std::string describe() const override;

 private:
  ParamStore<T> params_;
  std::string source_;
};

}  // namespace eid
