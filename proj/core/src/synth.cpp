#include "eid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "eid/image_io.hpp"
#include "eid/tensor_io.hpp"

namespace eid {

using nlohmann::json;

void SceneSpec::validate() const {
  check(size >= 8, detail::cat("scene size must be >= 8, got ", size));
  check(channels == 1 || channels == 3,
        detail::cat("channels must be 1 or 3, got ", channels));
  check(min_shapes >= 0 && max_shapes >= min_shapes, "bad shape count range");
  check(intensity_min >= 0 && intensity_max <= 1 &&
            intensity_min <= intensity_max,
        "intensity range must lie inside [0,1]");
  check(beta_min >= 0 && beta_max >= beta_min,
        detail::cat("bad beta range [", beta_min, ", ", beta_max, "]"));
  check(alpha >= 0 && alpha <= 1, detail::cat("alpha must be in [0,1], got ",
                                              alpha));
  check(depth_gradient_bound > 0, "depth gradient bound must be positive");
  check(depth_relief > 0, detail::cat("depth relief must be positive, got ",
                                      depth_relief));
}

namespace {

double channel_jitter(double base, double lo, double hi, Rng& rng) {
  return std::clamp(base + rng.uniform(-0.05, 0.05), lo, hi);
}

}  // namespace

Tensor<float> synth_scene(const SceneSpec& spec, Rng& rng) {
  const int64_t s = spec.size;
  const int c = spec.channels;
  Tensor<float> img = Tensor<float>::zeros(Shape{1, c, s, s});
  auto v = img.values();
  const int64_t plane = s * s;

  // Background: linear gradient between two intensities, random direction.
  const double g0 = rng.uniform(spec.intensity_min, spec.intensity_max);
  const double g1 = rng.uniform(spec.intensity_min, spec.intensity_max);
  const double theta = rng.uniform(0, 2 * M_PI);
  const double dx = std::cos(theta), dy = std::sin(theta);
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x) {
      const double t =
          0.5 + 0.5 * ((x / double(s - 1) - 0.5) * dx +
                       (y / double(s - 1) - 0.5) * dy) / 0.7071067811865476;
      const double val = g0 + (g1 - g0) * std::clamp(t, 0.0, 1.0);
      for (int ch = 0; ch < c; ++ch) v[ch * plane + y * s + x] = float(val);
    }

  const int64_t shapes = rng.uniform_int(spec.min_shapes, spec.max_shapes);
  for (int64_t k = 0; k < shapes; ++k) {
    const int64_t kind = rng.uniform_int(0, 2);
    const double base = rng.uniform(spec.intensity_min, spec.intensity_max);
    std::vector<double> color(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch)
      color[size_t(ch)] = c == 1 ? base
                                 : channel_jitter(base, spec.intensity_min,
                                                  spec.intensity_max, rng);
    if (kind == 0) {  // rectangle
      const int64_t x0 = rng.uniform_int(0, s - 2);
      const int64_t y0 = rng.uniform_int(0, s - 2);
      const int64_t x1 = rng.uniform_int(x0 + 1, s - 1);
      const int64_t y1 = rng.uniform_int(y0 + 1, s - 1);
      for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x)
          for (int ch = 0; ch < c; ++ch)
            v[ch * plane + y * s + x] = float(color[size_t(ch)]);
    } else if (kind == 1) {  // disk
      const double cx = rng.uniform(0, double(s - 1));
      const double cy = rng.uniform(0, double(s - 1));
      const double r = rng.uniform(double(s) / 8.0, double(s) / 3.0);
      for (int64_t y = 0; y < s; ++y)
        for (int64_t x = 0; x < s; ++x)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
            for (int ch = 0; ch < c; ++ch)
              v[ch * plane + y * s + x] = float(color[size_t(ch)]);
    } else {  // gradient band
      const int64_t y0 = rng.uniform_int(0, s - 2);
      const int64_t y1 = rng.uniform_int(y0 + 1, s - 1);
      const double other = rng.uniform(spec.intensity_min, spec.intensity_max);
      for (int64_t y = y0; y <= y1; ++y) {
        const double t = (y - y0) / double(std::max<int64_t>(1, y1 - y0));
        for (int64_t x = 0; x < s; ++x)
          for (int ch = 0; ch < c; ++ch)
            v[ch * plane + y * s + x] =
                float(color[size_t(ch)] * (1 - t) + other * t);
      }
    }
  }
  return img;
}

Tensor<double> synth_depth(const SceneSpec& spec, Rng& rng) {
  const int64_t s = spec.size;
  Tensor<double> depth = Tensor<double>::zeros(Shape{1, 1, s, s});
  auto v = depth.values();

  double gx = rng.uniform(-0.4, 0.4) * spec.depth_relief;
  double gy = rng.uniform(-0.4, 0.4) * spec.depth_relief;
  struct Bump {
    double cx, cy, sigma, amp;
  };
  std::vector<Bump> bumps;
  for (int k = 0; k < spec.depth_bumps; ++k)
    bumps.push_back({rng.uniform(0, double(s - 1)), rng.uniform(0, double(s - 1)),
                     rng.uniform(double(s) / 4.0, double(s) / 2.0),
                     rng.uniform(-0.3, 0.3) * spec.depth_relief});

  // Worst-case per-pixel step of the construction: ramp slope plus the
  // steepest slope amp*exp(-1/2)/sigma of each bump. Scaled down if it would
  // approach the configured bound.
  double slope = std::max(std::abs(gx), std::abs(gy)) / double(s - 1);
  for (const Bump& b : bumps)
    slope += std::abs(b.amp) * 0.6066 / b.sigma;
  if (slope > 0.8 * spec.depth_gradient_bound) {
    const double shrink = 0.8 * spec.depth_gradient_bound / slope;
    gx *= shrink;
    gy *= shrink;
    for (Bump& b : bumps) b.amp *= shrink;
  }

  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x) {
      double d = 0.5 + gx * (x / double(s - 1) - 0.5) +
                 gy * (y / double(s - 1) - 0.5);
      for (const Bump& b : bumps) {
        const double dx = x - b.cx, dy = y - b.cy;
        d += b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
      }
      v[y * s + x] = d;
    }

  // Shift to mean 0.5 (a shift keeps gradients intact, unlike scaling), then
  // clamp at zero; clamping is non-expansive so the bound still holds.
  double mean = 0;
  for (double d : v) mean += d;
  mean /= double(v.size());
  for (double& d : v) d = std::max(0.0, d - mean + 0.5);

  double max_grad = 0;
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x + 1 < s; ++x)
      max_grad = std::max(max_grad, std::abs(v[y * s + x + 1] - v[y * s + x]));
  for (int64_t y = 0; y + 1 < s; ++y)
    for (int64_t x = 0; x < s; ++x)
      max_grad = std::max(max_grad, std::abs(v[(y + 1) * s + x] - v[y * s + x]));
  check(max_grad <= spec.depth_gradient_bound,
        detail::cat("generated depth gradient ", max_grad,
                    " exceeds the bound ", spec.depth_gradient_bound));
  return depth;
}

namespace {

std::string index_name(const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, i, ext);
  return buf;
}

json spec_to_json(const SceneSpec& s) {
  return json{{"size", s.size},
              {"channels", s.channels},
              {"min_shapes", s.min_shapes},
              {"max_shapes", s.max_shapes},
              {"intensity_min", s.intensity_min},
              {"intensity_max", s.intensity_max},
              {"depth_bumps", s.depth_bumps},
              {"depth_gradient_bound", s.depth_gradient_bound},
              {"depth_relief", s.depth_relief},
              {"beta_min", s.beta_min},
              {"beta_max", s.beta_max},
              {"alpha", s.alpha},
              {"seed", s.seed}};
}

SceneSpec spec_from_json(const json& j) {
  static const std::vector<std::string> known{
      "size",       "channels",   "min_shapes",
      "max_shapes", "intensity_min", "intensity_max",
      "depth_bumps", "depth_gradient_bound", "depth_relief", "beta_min",
      "beta_max",   "alpha",      "seed"};
  for (const auto& [key, value] : j.items())
    check(std::find(known.begin(), known.end(), key) != known.end(),
          detail::cat("unknown scene spec key '", key, "'"));
  SceneSpec s;
  s.size = j.value("size", s.size);
  s.channels = j.value("channels", s.channels);
  s.min_shapes = j.value("min_shapes", s.min_shapes);
  s.max_shapes = j.value("max_shapes", s.max_shapes);
  s.intensity_min = j.value("intensity_min", s.intensity_min);
  s.intensity_max = j.value("intensity_max", s.intensity_max);
  s.depth_bumps = j.value("depth_bumps", s.depth_bumps);
  s.depth_gradient_bound = j.value("depth_gradient_bound", s.depth_gradient_bound);
  s.depth_relief = j.value("depth_relief", s.depth_relief);
  s.beta_min = j.value("beta_min", s.beta_min);
  s.beta_max = j.value("beta_max", s.beta_max);
  s.alpha = j.value("alpha", s.alpha);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail_io(detail::cat("bad manifest JSON in ", path, ": ", e.what()));
  }
  DatasetManifest m;
  m.spec = spec_from_json(j.at("spec"));
  for (const json& e : j.at("images")) {
    DatasetEntry entry;
    entry.clean = e.at("clean").get<std::string>();
    entry.hazy = e.at("hazy").get<std::string>();
    entry.depth = e.at("depth").get<std::string>();
    entry.beta = e.at("beta").get<double>();
    entry.alpha = e.at("alpha").get<double>();
    entry.seed = e.at("seed").get<uint64_t>();
    m.images.push_back(std::move(entry));
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  json j;
  j["spec"] = spec_to_json(spec);
  j["images"] = json::array();
  for (const DatasetEntry& e : images)
    j["images"].push_back(json{{"clean", e.clean},
                               {"hazy", e.hazy},
                               {"depth", e.depth},
                               {"beta", e.beta},
                               {"alpha", e.alpha},
                               {"seed", e.seed}});
  std::ofstream out(path);
  if (!out) fail_io("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest synth_dataset(const std::string& out_dir, const SceneSpec& spec,
                              int count) {
  spec.validate();
  check(count > 0, detail::cat("image count must be positive, got ", count));
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    fail_io("cannot create output directory " + out_dir);

  DatasetManifest manifest;
  manifest.spec = spec;
  for (int i = 0; i < count; ++i) {
    const uint64_t image_seed = mix_u64(spec.seed ^ mix_u64(uint64_t(i)));
    Rng rng(image_seed);
    const Tensor<float> clean = synth_scene(spec, rng);
    const Tensor<double> depth = synth_depth(spec, rng);
    const double beta = rng.uniform(spec.beta_min, spec.beta_max);

    ScatteringParams params;
    params.beta = beta;
    params.alpha = {spec.alpha};
    params.depth = depth;
    AnalyticScattering<float> haze(params);
    NoGradGuard no_grad;
    const Tensor<float> hazy = haze.apply(clean);

    DatasetEntry entry;
    entry.clean = index_name("clean", i, "png");
    entry.hazy = index_name("hazy", i, "png");
    entry.depth = index_name("depth", i, "tnsr");
    entry.beta = beta;
    entry.alpha = spec.alpha;
    entry.seed = image_seed;
    save_image(out_dir + "/" + entry.clean, clean);
    save_image(out_dir + "/" + entry.hazy, hazy);
    save_tensor(out_dir + "/" + entry.depth, depth);
    manifest.images.push_back(std::move(entry));
  }
  manifest.save(out_dir + "/manifest.json");
  return manifest;
}

std::vector<ScatteringParams> manifest_physics(const std::string& dataset_dir,
                                               const DatasetManifest& manifest) {
  std::vector<ScatteringParams> out;
  for (const DatasetEntry& e : manifest.images) {
    ScatteringParams p;
    p.beta = e.beta;
    p.alpha = {e.alpha};
    p.depth = load_tensor<double>(dataset_dir + "/" + e.depth);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace eid
