#pragma once

#include <string>
#include <vector>

#include "eid/physics.hpp"
#include "eid/rng.hpp"
#include "eid/tensor.hpp"

namespace eid {

/// Recipe for one synthetic benchmark: procedural clean scenes (rectangles,
/// disks, linear gradients), a smooth depth map (plane ramp plus Gaussian
/// bumps, normalized to mean 0.5), and scattering haze with per-image beta.
struct SceneSpec {
  int64_t size = 32;  // square images
  int channels = 3;
  int min_shapes = 3;
  int max_shapes = 6;
  double intensity_min = 0.1;
  double intensity_max = 0.9;
  int depth_bumps = 2;
  double depth_gradient_bound = 0.15;  // max |finite difference| per pixel
  /// Multiplies the ramp/bump amplitudes. Values above 1 carve deep haze
  /// pockets whose content is strongly attenuated (and lost to 8-bit
  /// quantization) while the mean transmission stays near 0.5.
  double depth_relief = 1.0;
  double beta_min = 1.2;
  double beta_max = 1.6;
  double alpha = 1.0;
  uint64_t seed = 0;

  void validate() const;
};

struct DatasetEntry {
  std::string clean, hazy, depth;  // file names relative to the dataset dir
  double beta = 0;
  double alpha = 1;
  uint64_t seed = 0;
};

/// manifest.json schema:
///   {"spec": {...SceneSpec...}, "images": [{clean,hazy,depth,beta,alpha,seed}]}
struct DatasetManifest {
  SceneSpec spec;
  std::vector<DatasetEntry> images;

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;
};

/// One procedural clean scene, [0,1], shape 1xCxSxS.
Tensor<float> synth_scene(const SceneSpec& spec, Rng& rng);

/// Smooth depth map 1x1xSxS, non-negative, normalized to mean 0.5, with max
/// finite-difference gradient below spec.depth_gradient_bound.
Tensor<double> synth_depth(const SceneSpec& spec, Rng& rng);

/// Writes `count` (clean.png, depth.tnsr, hazy.png) triples plus
/// manifest.json into out_dir. Deterministic under spec.seed.
DatasetManifest synth_dataset(const std::string& out_dir, const SceneSpec& spec,
                              int count);

/// Per-image ScatteringParams for dataset entries (loads depth files).
std::vector<ScatteringParams> manifest_physics(const std::string& dataset_dir,
                                               const DatasetManifest& manifest);

}  // namespace eid
