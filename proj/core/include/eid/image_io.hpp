#pragma once

#include <string>
#include <vector>

#include "eid/tensor.hpp"

namespace eid {

/// Loads an 8- or 16-bit PNG, grayscale or RGB, as 1xCxHxW in [0,1].
/// Other layouts (palette, alpha) are rejected with the path.
Tensor<float> load_image(const std::string& path);

/// Saves [0,1] values (clamped, round-to-nearest) as PNG. The tensor must be
/// 1xCxHxW with C = 1 or 3; bit_depth is 8 or 16.
void save_image(const std::string& path, const Tensor<float>& image,
                int bit_depth = 8);

/// Depth map from an EIDTNSR1 file (raw values) or a 16-bit grayscale PNG
/// (values scaled to [0, d_max]). Returns 1x1xHxW.
Tensor<double> load_depth(const std::string& path, double d_max = 1.0);

/// Sorted *.png paths directly inside dir.
std::vector<std::string> list_png_files(const std::string& dir);

}  // namespace eid
