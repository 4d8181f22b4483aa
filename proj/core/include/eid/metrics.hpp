#pragma once

#include <string>
#include <vector>

#include "eid/tensor.hpp"

namespace eid {

/// Peak signal-to-noise ratio in dB: 10*log10(max_val^2 / mse), computed in
/// double over all elements. Identical inputs give +infinity (reported as
/// the "inf" sentinel at the serialization layer).
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_val = 1.0);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1.0, channel-averaged, mean over window positions fully
/// inside the image. Requires min(H, W) >= 11.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

struct ImageScore {
  std::string name;  // prediction file name
  double psnr = 0;   // +inf for identical images
  double ssim = 0;
};

struct EvalReport {
  std::vector<ImageScore> per_image;
  double mean_psnr = 0;  // +inf if any image pair is identical
  double mean_ssim = 0;
};

/// Full-reference metrics over two directories of PNGs, paired by sorted
/// file order (counts must match). Per-image work parallelizes up to the
/// EID_THREADS budget.
EvalReport evaluate_directories(const std::string& pred_dir,
                                const std::string& ref_dir);

}  // namespace eid
