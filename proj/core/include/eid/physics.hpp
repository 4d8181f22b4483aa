#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eid/ops.hpp"
#include "eid/tensor.hpp"

namespace eid {

/// Parameters of the scattering model y = x*exp(-beta*d) + alpha*(1 -
/// exp(-beta*d)). alpha holds one value (shared by all channels) or one per
/// channel; depth is 1x1xHxW, broadcast over channels.
struct ScatteringParams {
  double beta = 0;
  std::vector<double> alpha = {1.0};
  Tensor<double> depth;

  void validate() const;
};

/// A frozen clean->hazy map. Gradients flow through apply() to its input;
/// the operator's own parameters never receive gradient during training.
template <typename T>
class HazeOperator {
 public:
  virtual ~HazeOperator() = default;
  virtual Tensor<T> apply(const Tensor<T>& x) const = 0;
  /// Frozen parameter tensors, empty for analytic operators. Exposed so the
  /// trainer can assert they stay untouched after every optimizer step.
  virtual std::vector<Tensor<T>> parameters() const { return {}; }
  virtual std::string describe() const = 0;
};

/// Analytic scattering operator. Holds one ScatteringParams shared by all
/// batch items, or one per item (per-image depth and haze strength).
template <typename T>
class AnalyticScattering final : public HazeOperator<T> {
 public:
  explicit AnalyticScattering(ScatteringParams params);
  explicit AnalyticScattering(std::vector<ScatteringParams> per_item);

  Tensor<T> apply(const Tensor<T>& x) const override;
  std::string describe() const override;

  const std::vector<ScatteringParams>& params() const { return params_; }

  /// Transmission map exp(-beta*d) for batch item i, materialized at 1x1xHxW.
  Tensor<T> transmission(size_t i = 0) const;

 private:
  std::vector<ScatteringParams> params_;
};

/// Counts values outside [0,1]; apply_haze warns on stderr in audit mode.
template <typename T>
int64_t count_out_of_range(const Tensor<T>& x);

template <typename T>
Tensor<T> apply_haze(const HazeOperator<T>& op, const Tensor<T>& x,
                     bool audit_range = false);

/// Algebraic inverse of the scattering model: (y - alpha*(1-t)) / t.
/// Rejected when transmission falls below t_min anywhere (near-total
/// extinction is not invertible). Plain data, no gradient history.
template <typename T>
Tensor<T> invert_analytic(const ScatteringParams& params, const Tensor<T>& y,
                          double t_min = 1e-3);

/// Haze consistency: mse(H(f_out), y). Gradient reaches f_out only.
template <typename T>
Tensor<T> haze_consistency_loss(const HazeOperator<T>& op,
                                const Tensor<T>& f_out, const Tensor<T>& y);

}  // namespace eid
