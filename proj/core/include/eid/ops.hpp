#pragma once

#include <vector>

#include "eid/tensor.hpp"

namespace eid {

// ---------------------------------------------------------------------------
// Elementwise. Binary ops take equal shapes or a 1-element second argument
// which broadcasts. All ops register backward rules when recording is on and
// an input requires grad.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);

template <typename T> Tensor<T> exp(const Tensor<T>& a);

/// In kClamp mode the argument is clamped at 1e-12 before the log, which
/// keeps adversarial log terms finite; kStrict rejects non-positive input.
enum class LogPolicy { kClamp, kStrict };
template <typename T>
Tensor<T> log(const Tensor<T>& a, LogPolicy policy = LogPolicy::kClamp);

template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2));
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

// ---------------------------------------------------------------------------
// Convolution. weight is [out_channels, in_channels, kh, kw] (OIHW); bias is
// one value per output channel, shape [1, out_channels, 1, 1]. Gradients are
// produced for input, weight and bias.

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride = 1, int padding = 0);

// ---------------------------------------------------------------------------
// Resampling.

enum class Resample {
  kNearestUp2,  // each pixel replicated into a 2x2 block
  kAvgDown2,    // each 2x2 block averaged; requires even H and W
};
template <typename T> Tensor<T> resample(const Tensor<T>& input, Resample mode);

/// Bilinear sampling. grid is [N, 2, H', W'] with channel 0 holding source x
/// (column) and channel 1 source y (row) in continuous pixel coordinates of
/// the input. kZero reads 0 outside the input, kWrap indexes modulo size.
/// Differentiable w.r.t. input only; grids come from sampled transform
/// parameters and are never optimized, so grid gradients are not implemented.
enum class GridPad { kZero, kWrap };
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& input, const Tensor<T>& grid,
                      GridPad pad = GridPad::kZero);

/// Pixel permutation: output pixel i takes input pixel src_index[i], applied
/// to every batch item and channel. Bit-exact; backward scatters gradients
/// through the inverse permutation. src_index has out_h*out_w entries into
/// the input plane.
template <typename T>
Tensor<T> spatial_permute(const Tensor<T>& input,
                          const std::vector<int64_t>& src_index, int64_t out_h,
                          int64_t out_w);

/// Concatenation along the channel dimension (U-Net skip connections).
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// ---------------------------------------------------------------------------
// Reductions to a scalar tensor.

template <typename T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> sum(const Tensor<T>& a);

/// MSE over the elements where mask is nonzero: sum(mask*(a-b)^2)/sum(mask).
/// The mask is plain data (no gradient flows into it).
template <typename T>
Tensor<T> masked_mse(const Tensor<T>& a, const Tensor<T>& b,
                     const Tensor<T>& mask);

/// Mean absolute difference over the masked elements.
template <typename T>
Tensor<T> masked_l1(const Tensor<T>& a, const Tensor<T>& b,
                    const Tensor<T>& mask);

}  // namespace eid
