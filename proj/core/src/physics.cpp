#include "eid/physics.hpp"

#include <cmath>
#include <iostream>

namespace eid {

void ScatteringParams::validate() const {
  check(beta >= 0, detail::cat("beta must be >= 0, got ", beta));
  check(!alpha.empty(), "alpha must have at least one component");
  for (double a : alpha)
    check(a >= 0 && a <= 1,
          detail::cat("atmospheric light must be in [0,1], got ", a));
  check(depth.defined(), "depth map not set");
  const Shape& s = depth.shape();
  check(s.n == 1 && s.c == 1,
        detail::cat("depth must be 1x1xHxW, got ", s.str()));
  for (double v : depth.values())
    check(std::isfinite(v) && v >= 0,
          detail::cat("depth values must be finite and >= 0, got ", v));
}

template <typename T>
AnalyticScattering<T>::AnalyticScattering(ScatteringParams params)
    : AnalyticScattering(std::vector<ScatteringParams>{std::move(params)}) {}

template <typename T>
AnalyticScattering<T>::AnalyticScattering(std::vector<ScatteringParams> per_item)
    : params_(std::move(per_item)) {
  check(!params_.empty(), "AnalyticScattering: no parameters");
  for (const ScatteringParams& p : params_) {
    p.validate();
    check(p.depth.shape() == params_.front().depth.shape(),
          "AnalyticScattering: per-item depth maps must share one size");
  }
}

template <typename T>
Tensor<T> AnalyticScattering<T>::transmission(size_t i) const {
  const ScatteringParams& p = params_.at(i);
  const Shape& s = p.depth.shape();
  Tensor<T> t = Tensor<T>::zeros(s);
  auto out = t.values();
  auto d = p.depth.values();
  for (size_t k = 0; k < out.size(); ++k)
    out[k] = T(std::exp(-p.beta * d[k]));
  return t;
}

template <typename T>
Tensor<T> AnalyticScattering<T>::apply(const Tensor<T>& x) const {
  const Shape& s = x.shape();
  const Shape& ds = params_.front().depth.shape();
  check(ds.h == s.h && ds.w == s.w,
        detail::cat("depth map ", ds.str(), " does not match input ", s.str()));
  check(params_.size() == 1 || int64_t(params_.size()) == s.n,
        detail::cat("operator holds ", params_.size(),
                    " parameter sets for batch of ", s.n));

  // Transmission and airlight are plain data; the gradient w.r.t. x is
  // diag(t), carried by the elementwise ops below.
  Tensor<T> tmap = Tensor<T>::zeros(s);
  Tensor<T> airlight = Tensor<T>::zeros(s);
  auto tv = tmap.values();
  auto av = airlight.values();
  const int64_t plane = s.plane();
  for (int64_t n = 0; n < s.n; ++n) {
    const ScatteringParams& p = params_[params_.size() == 1 ? 0 : size_t(n)];
    const auto depth = p.depth.values();
    for (int64_t c = 0; c < s.c; ++c) {
      const double alpha = p.alpha[p.alpha.size() == 1 ? 0 : size_t(c)];
      T* trow = tv.data() + (n * s.c + c) * plane;
      T* arow = av.data() + (n * s.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const T t = T(std::exp(-p.beta * depth[i]));
        trow[i] = t;
        arow[i] = T(alpha) * (T(1) - t);
      }
    }
  }
  return add(mul(x, tmap), airlight);
}

template <typename T>
std::string AnalyticScattering<T>::describe() const {
  if (params_.size() == 1)
    return detail::cat("analytic(beta=", params_[0].beta,
                       ", alpha=", params_[0].alpha[0], ")");
  return detail::cat("analytic(", params_.size(), " per-image parameter sets)");
}

template <typename T>
int64_t count_out_of_range(const Tensor<T>& x) {
  int64_t count = 0;
  for (T v : x.values())
    if (v < T(0) || v > T(1)) ++count;
  return count;
}

template <typename T>
Tensor<T> apply_haze(const HazeOperator<T>& op, const Tensor<T>& x,
                     bool audit_range) {
  if (audit_range) {
    const int64_t bad = count_out_of_range(x);
    if (bad > 0)
      std::cerr << "[eid] haze input has " << bad
                << " values outside [0,1]; processed unchanged\n";
  }
  return op.apply(x);
}

template <typename T>
Tensor<T> invert_analytic(const ScatteringParams& params, const Tensor<T>& y,
                          double t_min) {
  params.validate();
  const Shape& s = y.shape();
  const Shape& ds = params.depth.shape();
  check(ds.h == s.h && ds.w == s.w,
        detail::cat("depth map ", ds.str(), " does not match input ", s.str()));

  const auto depth = params.depth.values();
  Tensor<T> out = Tensor<T>::zeros(s);
  auto ov = out.values();
  const auto yv = y.values();
  const int64_t plane = s.plane();
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c) {
      const double alpha = params.alpha[params.alpha.size() == 1 ? 0 : size_t(c)];
      const int64_t base = (n * s.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        const double t = std::exp(-params.beta * depth[i]);
        check(t >= t_min,
              detail::cat("transmission ", t, " below t_min ", t_min,
                          "; haze too strong to invert"));
        ov[base + i] = T((double(yv[base + i]) - alpha * (1.0 - t)) / t);
      }
    }
  return out;
}

template <typename T>
Tensor<T> haze_consistency_loss(const HazeOperator<T>& op,
                                const Tensor<T>& f_out, const Tensor<T>& y) {
  check(f_out.shape() == y.shape(),
        detail::cat("haze consistency: shape mismatch ", f_out.shape().str(),
                    " vs ", y.shape().str()));
  return mse(op.apply(f_out), y);
}

#define EID_INSTANTIATE(T)                                                  \
  template class AnalyticScattering<T>;                                     \
  template int64_t count_out_of_range(const Tensor<T>&);                    \
  template Tensor<T> apply_haze(const HazeOperator<T>&, const Tensor<T>&,   \
                                bool);                                      \
  template Tensor<T> invert_analytic(const ScatteringParams&,               \
                                     const Tensor<T>&, double);             \
  template Tensor<T> haze_consistency_loss(const HazeOperator<T>&,          \
                                           const Tensor<T>&, const Tensor<T>&);

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
