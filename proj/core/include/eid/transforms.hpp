#pragma once

#include <array>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "eid/ops.hpp"
#include "eid/rng.hpp"
#include "eid/tensor.hpp"

namespace eid {

// The eight image transformation kinds. Rotations by k*90°, integer wrap
// shifts and reflections act as pixel permutations and are bit-exact; the
// rest act through bilinear warping with zero fill outside the input.
enum class TransformKind {
  kRotate,
  kShift,
  kScale,
  kReflect,
  kEuclidean,
  kSimilarity,
  kAffine,
  kPanTiltRotate,
};

TransformKind transform_kind_from_string(const std::string& name);
std::string to_string(TransformKind kind);

/// 3x3 homogeneous matrix on pixel coordinates (x right, y down), row-major.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 translation(double tx, double ty);
  Mat3 mul(const Mat3& rhs) const;
  double det() const;
  Mat3 inverse() const;
  /// Maps (x, y) through the homography, with perspective divide.
  void apply(double x, double y, double& out_x, double& out_y) const;
};

struct RotateQuarter {
  int turns = 0;  // counterclockwise quarter turns, 0..3
};

struct ShiftWrap {
  int64_t dx = 0;  // pixels rightward
  int64_t dy = 0;  // pixels downward
};

enum class ReflectAxis { kHorizontal, kVertical };

struct Reflect {
  ReflectAxis axis = ReflectAxis::kHorizontal;
};

/// Continuous action as a forward homography built for a specific image
/// size (the matrix bakes in the image center).
struct Warp {
  TransformKind kind = TransformKind::kAffine;
  Mat3 forward;
  int64_t image_h = 0;
  int64_t image_w = 0;
  std::vector<double> params;  // sampled parameters, for reporting
};

class GroupElement;

struct Composite {
  std::vector<GroupElement> parts;  // applied first-to-last
};

/// One sampled transformation: a pixel permutation, a warp, or an ordered
/// composite. Immutable after construction; apply() is pure.
class GroupElement {
 public:
  using Action =
      std::variant<RotateQuarter, ShiftWrap, Reflect, Warp, Composite>;

  explicit GroupElement(Action action, uint64_t rng_seed = 0,
                        uint64_t rng_draw = 0);

  static GroupElement identity();

  const Action& action() const { return action_; }
  /// True when the element acts as a pixel permutation (bit-exact apply).
  bool is_exact() const;
  GroupElement inverse() const;
  std::string describe() const;

  uint64_t rng_seed() const { return rng_seed_; }
  uint64_t rng_draw() const { return rng_draw_; }

 private:
  Action action_;
  uint64_t rng_seed_ = 0;  // provenance of the sampling stream
  uint64_t rng_draw_ = 0;
};

// Factories for crafting elements directly (tests, composition).
GroupElement make_rotate_quarter(int turns);
GroupElement make_shift(int64_t dx, int64_t dy);
GroupElement make_reflect(ReflectAxis axis);
GroupElement make_rotate(double angle_rad, int64_t h, int64_t w);
GroupElement make_scale(double factor, int64_t h, int64_t w);
GroupElement make_affine(const std::array<double, 6>& mat23, int64_t h,
                         int64_t w);
GroupElement make_pan_tilt_rotate(double pan_rad, double tilt_rad,
                                  double roll_rad, double focal, int64_t h,
                                  int64_t w);

/// What to sample: one kind, or two kinds composed in listed order, with
/// parameter ranges. image_h/image_w configure the size elements act on.
struct TransformSpec {
  std::vector<TransformKind> kinds;
  int64_t image_h = 0;
  int64_t image_w = 0;
  bool exact_rotations = false;  // restrict rotations to k*90° permutations

  double rotate_min = 0.0;        // radians
  double rotate_max = 2.0 * 3.14159265358979323846;
  double shift_frac = 0.25;       // wrap shift bound, fraction of size
  double scale_min = 0.75;
  double scale_max = 1.25;
  double translate_frac = 0.10;   // warp translation bound, fraction of size
  double affine_jitter = 0.15;    // uniform perturbation of the 2x2 block
  double pan_tilt_deg = 10.0;     // pan/tilt/roll half-range in degrees

  void validate() const;
};

/// Parses "rotate" or "rotate+shift" into kinds; rejects unknown names.
std::vector<TransformKind> parse_transform_kinds(const std::string& names);

/// Parses "rotate" or "rotate+shift" style names into a spec.
TransformSpec make_transform_spec(const std::string& names, int64_t h,
                                  int64_t w, bool exact_rotations = false);

/// Draws one element; deterministic for a fixed rng state. Composites are
/// built in the listed kind order.
GroupElement sample(const TransformSpec& spec, Rng& rng);

/// Applies g to an NxCxHxW tensor. Permutation kinds are bit-exact;
/// continuous kinds sample bilinearly with zeros outside the input (wrap
/// for the integer shift). Differentiable w.r.t. x.
template <typename T>
Tensor<T> apply(const GroupElement& g, const Tensor<T>& x);

/// {0,1} mask (1x1xHxW, no grad) of output pixels fully determined by
/// in-bounds input pixels under g. All ones for permutation kinds.
template <typename T>
Tensor<T> validity_mask(const GroupElement& g, int64_t h, int64_t w);

/// Broadcasts a 1x1xHxW mask to NxCxHxW plain data.
template <typename T>
Tensor<T> broadcast_mask(const Tensor<T>& mask, const Shape& target);

/// Audit metric for the trained system: mse( f(H(g·f(y))), g·f(y) ),
/// evaluated without recording gradients, under the validity mask of g for
/// continuous kinds. `haze` is any frozen clean->hazy map.
template <typename T>
double equivariance_residual(
    const std::function<Tensor<T>(const Tensor<T>&)>& f,
    const std::function<Tensor<T>(const Tensor<T>&)>& haze, const Tensor<T>& y,
    const GroupElement& g);

}  // namespace eid
