#include "eid/transforms.hpp"

#include <cmath>
#include <numbers>

namespace eid {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// ---------------------------------------------------------------------------
// Pixel permutation maps: out plane index i reads in plane index map[i].

std::vector<int64_t> quarter_turn_map(int64_t h, int64_t w) {
  // One counterclockwise quarter turn: out(r, c) = in(c, W-1-r).
  std::vector<int64_t> map(static_cast<size_t>(h * w));
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) map[r * w + c] = c * w + (w - 1 - r);
  return map;
}

std::vector<int64_t> compose_maps(const std::vector<int64_t>& first,
                                  const std::vector<int64_t>& second) {
  // Applying `first` then `second`: out[i] = in[first[second[i]]].
  std::vector<int64_t> map(second.size());
  for (size_t i = 0; i < map.size(); ++i) map[i] = first[second[i]];
  return map;
}

std::vector<int64_t> rotate_map(int turns, int64_t h, int64_t w) {
  std::vector<int64_t> map(static_cast<size_t>(h * w));
  for (size_t i = 0; i < map.size(); ++i) map[i] = static_cast<int64_t>(i);
  const std::vector<int64_t> one = quarter_turn_map(h, w);
  for (int k = 0; k < ((turns % 4) + 4) % 4; ++k) map = compose_maps(one, map);
  return map;
}

std::vector<int64_t> shift_map(int64_t dx, int64_t dy, int64_t h, int64_t w) {
  auto wrap = [](int64_t v, int64_t size) {
    v %= size;
    return v < 0 ? v + size : v;
  };
  std::vector<int64_t> map(static_cast<size_t>(h * w));
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c)
      map[r * w + c] = wrap(r - dy, h) * w + wrap(c - dx, w);
  return map;
}

std::vector<int64_t> reflect_map(ReflectAxis axis, int64_t h, int64_t w) {
  std::vector<int64_t> map(static_cast<size_t>(h * w));
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c)
      map[r * w + c] = axis == ReflectAxis::kHorizontal
                           ? r * w + (w - 1 - c)
                           : (h - 1 - r) * w + c;
  return map;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mat3

Mat3 Mat3::translation(double tx, double ty) {
  Mat3 t;
  t.m = {1, 0, tx, 0, 1, ty, 0, 0, 1};
  return t;
}

Mat3 Mat3::mul(const Mat3& rhs) const {
  Mat3 out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * rhs.m[k * 3 + j];
      out.m[i * 3 + j] = acc;
    }
  return out;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 Mat3::inverse() const {
  const double d = det();
  check(std::abs(d) >= 1e-12,
        detail::cat("singular transform matrix, |det| = ", std::abs(d)));
  const double inv = 1.0 / d;
  Mat3 out;
  out.m[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
  out.m[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
  out.m[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
  out.m[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
  out.m[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
  out.m[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
  out.m[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
  out.m[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
  out.m[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
  return out;
}

void Mat3::apply(double x, double y, double& out_x, double& out_y) const {
  const double u = m[0] * x + m[1] * y + m[2];
  const double v = m[3] * x + m[4] * y + m[5];
  const double s = m[6] * x + m[7] * y + m[8];
  out_x = u / s;
  out_y = v / s;
}

// ---------------------------------------------------------------------------
// Kind names

TransformKind transform_kind_from_string(const std::string& name) {
  if (name == "rotate") return TransformKind::kRotate;
  if (name == "shift") return TransformKind::kShift;
  if (name == "scale") return TransformKind::kScale;
  if (name == "reflect") return TransformKind::kReflect;
  if (name == "euclidean") return TransformKind::kEuclidean;
  if (name == "similarity") return TransformKind::kSimilarity;
  if (name == "affine") return TransformKind::kAffine;
  if (name == "pantiltrotate") return TransformKind::kPanTiltRotate;
  fail(detail::cat("unknown transform kind '", name,
                   "' (expected rotate, shift, scale, reflect, euclidean, "
                   "similarity, affine or pantiltrotate)"));
}

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::kRotate: return "rotate";
    case TransformKind::kShift: return "shift";
    case TransformKind::kScale: return "scale";
    case TransformKind::kReflect: return "reflect";
    case TransformKind::kEuclidean: return "euclidean";
    case TransformKind::kSimilarity: return "similarity";
    case TransformKind::kAffine: return "affine";
    case TransformKind::kPanTiltRotate: return "pantiltrotate";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// GroupElement

GroupElement::GroupElement(Action action, uint64_t rng_seed, uint64_t rng_draw)
    : action_(std::move(action)), rng_seed_(rng_seed), rng_draw_(rng_draw) {}

GroupElement GroupElement::identity() {
  return GroupElement(RotateQuarter{0});
}

bool GroupElement::is_exact() const {
  return std::visit(
      [](const auto& a) -> bool {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, Warp>) {
          return false;
        } else if constexpr (std::is_same_v<A, Composite>) {
          for (const GroupElement& part : a.parts)
            if (!part.is_exact()) return false;
          return true;
        } else {
          return true;
        }
      },
      action_);
}

GroupElement GroupElement::inverse() const {
  Action inv = std::visit(
      [](const auto& a) -> Action {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, RotateQuarter>) {
          return RotateQuarter{(4 - (a.turns % 4 + 4) % 4) % 4};
        } else if constexpr (std::is_same_v<A, ShiftWrap>) {
          return ShiftWrap{-a.dx, -a.dy};
        } else if constexpr (std::is_same_v<A, Reflect>) {
          return a;  // involution
        } else if constexpr (std::is_same_v<A, Warp>) {
          check(std::abs(a.forward.det()) >= 1e-6,
                detail::cat("cannot invert near-singular ",
                            to_string(a.kind), " transform, |det| = ",
                            std::abs(a.forward.det())));
          Warp w = a;
          w.forward = a.forward.inverse();
          for (double& p : w.params) p = -p;
          return w;
        } else {  // Composite: reverse order, invert parts
          Composite c;
          for (auto it = a.parts.rbegin(); it != a.parts.rend(); ++it)
            c.parts.push_back(it->inverse());
          return c;
        }
      },
      action_);
  return GroupElement(std::move(inv), rng_seed_, rng_draw_);
}

std::string GroupElement::describe() const {
  return std::visit(
      [](const auto& a) -> std::string {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, RotateQuarter>) {
          return detail::cat("rotate90x", a.turns);
        } else if constexpr (std::is_same_v<A, ShiftWrap>) {
          return detail::cat("shift(", a.dx, ",", a.dy, ")");
        } else if constexpr (std::is_same_v<A, Reflect>) {
          return a.axis == ReflectAxis::kHorizontal ? "reflect(h)"
                                                    : "reflect(v)";
        } else if constexpr (std::is_same_v<A, Warp>) {
          std::string s = to_string(a.kind) + "(";
          for (size_t i = 0; i < a.params.size(); ++i)
            s += (i ? "," : "") + detail::cat(a.params[i]);
          return s + ")";
        } else {
          std::string s = "composite[";
          for (size_t i = 0; i < a.parts.size(); ++i)
            s += (i ? ";" : "") + a.parts[i].describe();
          return s + "]";
        }
      },
      action_);
}

// ---------------------------------------------------------------------------
// Factories

GroupElement make_rotate_quarter(int turns) {
  return GroupElement(RotateQuarter{((turns % 4) + 4) % 4});
}

GroupElement make_shift(int64_t dx, int64_t dy) {
  return GroupElement(ShiftWrap{dx, dy});
}

GroupElement make_reflect(ReflectAxis axis) {
  return GroupElement(Reflect{axis});
}

namespace {

/// Linear action about the image center followed by a translation:
/// dest = T(t) * T(c) * A * T(-c) * src.
Mat3 linear_about_center(double a11, double a12, double a21, double a22,
                         double tx, double ty, int64_t h, int64_t w) {
  const double cx = (double(w) - 1.0) / 2.0;
  const double cy = (double(h) - 1.0) / 2.0;
  Mat3 a;
  a.m = {a11, a12, 0, a21, a22, 0, 0, 0, 1};
  return Mat3::translation(cx + tx, cy + ty)
      .mul(a)
      .mul(Mat3::translation(-cx, -cy));
}

/// Forward rotation by `angle`, counterclockwise about the image center in
/// image coordinates (x right, y down). At angle = pi/2 the interior agrees
/// with the exact quarter-turn permutation.
Mat3 rotation_matrix(double angle, double tx, double ty, double scale,
                     int64_t h, int64_t w) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return linear_about_center(scale * c, scale * s, -scale * s, scale * c, tx,
                             ty, h, w);
}

GroupElement warp_element(TransformKind kind, Mat3 forward, int64_t h,
                          int64_t w, std::vector<double> params) {
  Warp warp;
  warp.kind = kind;
  warp.forward = forward;
  warp.image_h = h;
  warp.image_w = w;
  warp.params = std::move(params);
  return GroupElement(std::move(warp));
}

}  // namespace

GroupElement make_rotate(double angle_rad, int64_t h, int64_t w) {
  return warp_element(TransformKind::kRotate,
                      rotation_matrix(angle_rad, 0, 0, 1, h, w), h, w,
                      {angle_rad});
}

GroupElement make_scale(double factor, int64_t h, int64_t w) {
  check(factor > 0, detail::cat("scale factor must be positive, got ", factor));
  return warp_element(TransformKind::kScale,
                      linear_about_center(factor, 0, 0, factor, 0, 0, h, w), h,
                      w, {factor});
}

GroupElement make_affine(const std::array<double, 6>& m, int64_t h,
                         int64_t w) {
  const Mat3 fwd =
      linear_about_center(m[0], m[1], m[3], m[4], m[2], m[5], h, w);
  check(std::abs(fwd.det()) >= 1e-6, "affine matrix is singular");
  return warp_element(TransformKind::kAffine, fwd, h, w,
                      {m[0], m[1], m[2], m[3], m[4], m[5]});
}

GroupElement make_pan_tilt_rotate(double pan, double tilt, double roll,
                                  double focal, int64_t h, int64_t w) {
  check(focal > 0, detail::cat("focal length must be positive, got ", focal));
  const double cx = (double(w) - 1.0) / 2.0;
  const double cy = (double(h) - 1.0) / 2.0;
  const double cp = std::cos(pan), sp = std::sin(pan);
  const double ct = std::cos(tilt), st = std::sin(tilt);
  const double cr = std::cos(roll), sr = std::sin(roll);
  Mat3 ry, rx, rz, k, kinv;
  ry.m = {cp, 0, sp, 0, 1, 0, -sp, 0, cp};
  rx.m = {1, 0, 0, 0, ct, -st, 0, st, ct};
  rz.m = {cr, -sr, 0, sr, cr, 0, 0, 0, 1};
  k.m = {focal, 0, cx, 0, focal, cy, 0, 0, 1};
  kinv.m = {1 / focal, 0, -cx / focal, 0, 1 / focal, -cy / focal, 0, 0, 1};
  const Mat3 fwd = k.mul(rz).mul(rx).mul(ry).mul(kinv);
  return warp_element(TransformKind::kPanTiltRotate, fwd, h, w,
                      {pan, tilt, roll, focal});
}

// ---------------------------------------------------------------------------
// Spec and sampling

void TransformSpec::validate() const {
  check(!kinds.empty(), "transform spec: empty kind list");
  check(kinds.size() <= 2,
        detail::cat("transform spec: at most 2 kinds, got ", kinds.size()));
  check(image_h > 0 && image_w > 0,
        detail::cat("transform spec: image size not configured (", image_h,
                    "x", image_w, ")"));
  check(scale_min > 0 && scale_max >= scale_min,
        detail::cat("transform spec: bad scale range [", scale_min, ", ",
                    scale_max, "]"));
  check(shift_frac >= 0 && shift_frac <= 1, "transform spec: bad shift_frac");
}

std::vector<TransformKind> parse_transform_kinds(const std::string& names) {
  std::vector<TransformKind> kinds;
  size_t start = 0;
  while (start <= names.size()) {
    const size_t plus = names.find('+', start);
    const std::string part =
        names.substr(start, plus == std::string::npos ? plus : plus - start);
    check(!part.empty(), detail::cat("bad transform list '", names, "'"));
    kinds.push_back(transform_kind_from_string(part));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return kinds;
}

TransformSpec make_transform_spec(const std::string& names, int64_t h,
                                  int64_t w, bool exact_rotations) {
  TransformSpec spec;
  spec.image_h = h;
  spec.image_w = w;
  spec.exact_rotations = exact_rotations;
  spec.kinds = parse_transform_kinds(names);
  spec.validate();
  return spec;
}

namespace {

GroupElement sample_one(TransformKind kind, const TransformSpec& spec,
                        Rng& rng) {
  const int64_t h = spec.image_h, w = spec.image_w;
  switch (kind) {
    case TransformKind::kRotate:
      if (spec.exact_rotations)
        return make_rotate_quarter(int(rng.uniform_int(0, 3)));
      return make_rotate(rng.uniform(spec.rotate_min, spec.rotate_max), h, w);
    case TransformKind::kShift: {
      const int64_t bx = int64_t(spec.shift_frac * double(w));
      const int64_t by = int64_t(spec.shift_frac * double(h));
      return make_shift(rng.uniform_int(-bx, bx), rng.uniform_int(-by, by));
    }
    case TransformKind::kScale:
      return make_scale(rng.uniform(spec.scale_min, spec.scale_max), h, w);
    case TransformKind::kReflect:
      return make_reflect(rng.bernoulli(0.5) ? ReflectAxis::kHorizontal
                                             : ReflectAxis::kVertical);
    case TransformKind::kEuclidean: {
      const double angle = rng.uniform(spec.rotate_min, spec.rotate_max);
      const double tx = rng.uniform(-spec.translate_frac, spec.translate_frac) *
                        double(w);
      const double ty = rng.uniform(-spec.translate_frac, spec.translate_frac) *
                        double(h);
      return warp_element(kind, rotation_matrix(angle, tx, ty, 1, h, w), h, w,
                          {angle, tx, ty});
    }
    case TransformKind::kSimilarity: {
      const double s = rng.uniform(spec.scale_min, spec.scale_max);
      const double angle = rng.uniform(spec.rotate_min, spec.rotate_max);
      const double tx = rng.uniform(-spec.translate_frac, spec.translate_frac) *
                        double(w);
      const double ty = rng.uniform(-spec.translate_frac, spec.translate_frac) *
                        double(h);
      return warp_element(kind, rotation_matrix(angle, tx, ty, s, h, w), h, w,
                          {s, angle, tx, ty});
    }
    case TransformKind::kAffine: {
      std::array<double, 6> m{1, 0, 0, 0, 1, 0};
      m[0] += rng.uniform(-spec.affine_jitter, spec.affine_jitter);
      m[1] += rng.uniform(-spec.affine_jitter, spec.affine_jitter);
      m[3] += rng.uniform(-spec.affine_jitter, spec.affine_jitter);
      m[4] += rng.uniform(-spec.affine_jitter, spec.affine_jitter);
      m[2] = rng.uniform(-spec.translate_frac, spec.translate_frac) * double(w);
      m[5] = rng.uniform(-spec.translate_frac, spec.translate_frac) * double(h);
      return make_affine(m, h, w);
    }
    case TransformKind::kPanTiltRotate: {
      const double bound = spec.pan_tilt_deg * kDegToRad;
      const double pan = rng.uniform(-bound, bound);
      const double tilt = rng.uniform(-bound, bound);
      const double roll = rng.uniform(-bound, bound);
      return make_pan_tilt_rotate(pan, tilt, roll, double(w), h, w);
    }
  }
  fail("unreachable transform kind");
}

}  // namespace

GroupElement sample(const TransformSpec& spec, Rng& rng) {
  spec.validate();
  const uint64_t seed = rng.seed();
  const uint64_t draw = rng.draws();
  if (spec.kinds.size() == 1) {
    GroupElement g = sample_one(spec.kinds[0], spec, rng);
    return GroupElement(g.action(), seed, draw);
  }
  Composite composite;
  for (TransformKind kind : spec.kinds)
    composite.parts.push_back(sample_one(kind, spec, rng));
  return GroupElement(std::move(composite), seed, draw);
}

// ---------------------------------------------------------------------------
// Application

namespace {

template <typename T>
Tensor<T> build_grid(const Mat3& inv, int64_t n, int64_t h, int64_t w) {
  Tensor<T> grid = Tensor<T>::zeros(Shape{n, 2, h, w});
  auto g = grid.values();
  const int64_t plane = h * w;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double sx, sy;
      inv.apply(double(x), double(y), sx, sy);
      g[y * w + x] = T(sx);
      g[plane + y * w + x] = T(sy);
    }
  for (int64_t i = 1; i < n; ++i)
    std::copy(g.begin(), g.begin() + 2 * plane, g.begin() + i * 2 * plane);
  return grid;
}

template <typename T>
Tensor<T> apply_warp(const Warp& warp, const Tensor<T>& x) {
  const Shape& s = x.shape();
  check(s.h == warp.image_h && s.w == warp.image_w,
        detail::cat("transform was built for ", warp.image_h, "x",
                    warp.image_w, " images, input is ", s.str()));
  if (warp.kind == TransformKind::kRotate)
    check(s.h == s.w, detail::cat("rotation requires square input, got ",
                                  s.str()));
  const Tensor<T> grid =
      build_grid<T>(warp.forward.inverse(), s.n, s.h, s.w);
  return grid_sample(x, grid, GridPad::kZero);
}

}  // namespace

template <typename T>
Tensor<T> apply(const GroupElement& g, const Tensor<T>& x) {
  const Shape& s = x.shape();
  return std::visit(
      [&](const auto& a) -> Tensor<T> {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, RotateQuarter>) {
          if (a.turns % 2 != 0)
            check(s.h == s.w,
                  detail::cat("rotation requires square input, got ", s.str()));
          return spatial_permute(x, rotate_map(a.turns, s.h, s.w), s.h, s.w);
        } else if constexpr (std::is_same_v<A, ShiftWrap>) {
          return spatial_permute(x, shift_map(a.dx, a.dy, s.h, s.w), s.h, s.w);
        } else if constexpr (std::is_same_v<A, Reflect>) {
          return spatial_permute(x, reflect_map(a.axis, s.h, s.w), s.h, s.w);
        } else if constexpr (std::is_same_v<A, Warp>) {
          return apply_warp(a, x);
        } else {
          Tensor<T> out = x;
          for (const GroupElement& part : a.parts) out = apply(part, out);
          return out;
        }
      },
      g.action());
}

template <typename T>
Tensor<T> validity_mask(const GroupElement& g, int64_t h, int64_t w) {
  NoGradGuard no_grad;
  Tensor<T> mask = Tensor<T>::ones(Shape{1, 1, h, w});
  const std::function<void(const GroupElement&)> step =
      [&](const GroupElement& elem) {
        std::visit(
            [&](const auto& a) {
              using A = std::decay_t<decltype(a)>;
              if constexpr (std::is_same_v<A, Composite>) {
                for (const GroupElement& part : a.parts) step(part);
              } else if constexpr (std::is_same_v<A, Warp>) {
                const Mat3 inv = a.forward.inverse();
                const Tensor<T> grid = build_grid<T>(inv, 1, h, w);
                Tensor<T> moved = grid_sample(mask, grid, GridPad::kZero);
                auto mv = moved.values();
                auto gv = grid.values();
                const int64_t plane = h * w;
                for (int64_t i = 0; i < plane; ++i) {
                  const T sx = gv[i];
                  const T sy = gv[plane + i];
                  const bool inside = sx >= T(0) && sx <= T(w - 1) &&
                                      sy >= T(0) && sy <= T(h - 1);
                  mv[i] = (inside && mv[i] >= T(0.999)) ? T(1) : T(0);
                }
                mask = moved;
              } else {
                mask = apply(elem, mask);  // permutations keep every pixel
              }
            },
            elem.action());
      };
  step(g);
  return mask;
}

template <typename T>
Tensor<T> broadcast_mask(const Tensor<T>& mask, const Shape& target) {
  check(mask.shape().h == target.h && mask.shape().w == target.w &&
            mask.shape().n == 1 && mask.shape().c == 1,
        detail::cat("mask ", mask.shape().str(), " does not broadcast to ",
                    target.str()));
  Tensor<T> out = Tensor<T>::zeros(target);
  const auto src = mask.values();
  auto dst = out.values();
  const int64_t plane = target.plane();
  for (int64_t p = 0; p < target.n * target.c; ++p)
    std::copy(src.begin(), src.end(), dst.begin() + p * plane);
  return out;
}

template <typename T>
double equivariance_residual(
    const std::function<Tensor<T>(const Tensor<T>&)>& f,
    const std::function<Tensor<T>(const Tensor<T>&)>& haze, const Tensor<T>& y,
    const GroupElement& g) {
  NoGradGuard no_grad;
  const Tensor<T> transformed = apply(g, f(y));
  const Tensor<T> recovered = f(haze(transformed));
  if (g.is_exact()) return double(mse(recovered, transformed).item());
  const Tensor<T> mask = broadcast_mask(
      validity_mask<T>(g, y.shape().h, y.shape().w), transformed.shape());
  return double(masked_mse(recovered, transformed, mask).item());
}

#define EID_INSTANTIATE(T)                                                 \
  template Tensor<T> apply(const GroupElement&, const Tensor<T>&);         \
  template Tensor<T> validity_mask(const GroupElement&, int64_t, int64_t); \
  template Tensor<T> broadcast_mask(const Tensor<T>&, const Shape&);       \
  template double equivariance_residual(                                   \
      const std::function<Tensor<T>(const Tensor<T>&)>&,                   \
      const std::function<Tensor<T>(const Tensor<T>&)>&, const Tensor<T>&, \
      const GroupElement&);

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
