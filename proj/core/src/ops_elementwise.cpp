#include <algorithm>
#include <cmath>

#include "eid/ops.hpp"

namespace eid {
namespace {

template <typename T, typename F, typename D>
Tensor<T> unary_op(const Tensor<T>& a, F fwd, D dfdx) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto x = a.values();
  auto y = out.values();
  for (size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (detail::grad_needed<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ai = a.impl(), oi = out.impl(), dfdx] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      auto g = std::span<const T>(oi->grad);
      auto gx = ai->grad_buf();
      for (size_t i = 0; i < gx.size(); ++i)
        gx[i] += g[i] * dfdx(ai->values[i], oi->values[i]);
    });
  }
  return out;
}

/// Binary op with optional scalar broadcast of b. da/db give the local
/// derivative of the output w.r.t. each side, as functions of (a_i, b_i).
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name,
                    F fwd, DA da, DB db) {
  const bool scalar_b = b.numel() == 1 && !(a.shape() == b.shape());
  check(a.shape() == b.shape() || b.numel() == 1,
        detail::cat(name, ": shape mismatch ", a.shape().str(), " vs ",
                    b.shape().str()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto xa = a.values();
  auto xb = b.values();
  auto y = out.values();
  if (scalar_b) {
    const T bv = xb[0];
    for (size_t i = 0; i < xa.size(); ++i) y[i] = fwd(xa[i], bv);
  } else {
    for (size_t i = 0; i < xa.size(); ++i) y[i] = fwd(xa[i], xb[i]);
  }
  if (detail::grad_needed<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current().record(
        [ai = a.impl(), bi = b.impl(), oi = out.impl(), scalar_b, da, db] {
          if (oi->grad.empty()) return;
          auto g = std::span<const T>(oi->grad);
          if (ai->requires_grad) {
            auto ga = ai->grad_buf();
            for (size_t i = 0; i < ga.size(); ++i) {
              const T bv = scalar_b ? bi->values[0] : bi->values[i];
              ga[i] += g[i] * da(ai->values[i], bv);
            }
          }
          if (bi->requires_grad) {
            auto gb = bi->grad_buf();
            if (scalar_b) {
              T acc = 0;
              for (size_t i = 0; i < g.size(); ++i)
                acc += g[i] * db(ai->values[i], bi->values[0]);
              gb[0] += acc;
            } else {
              for (size_t i = 0; i < gb.size(); ++i)
                gb[i] += g[i] * db(ai->values[i], bi->values[i]);
            }
          }
        });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary_op(
      a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return unary_op(
      a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a, LogPolicy policy) {
  if (policy == LogPolicy::kStrict) {
    for (T x : a.values())
      check(x > T(0), detail::cat("log: non-positive input ", x,
                                  " rejected in strict mode"));
  }
  // Clamped log is constant below the floor, so its gradient there is zero.
  return unary_op(
      a, [](T x) { return std::log(std::max(x, T(1e-12))); },
      [](T x, T) { return x > T(1e-12) ? T(1) / x : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary_op(
      a,
      [](T x) {
        // Split by sign for numerical stability at large |x|.
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  // Subgradient 0 at the kink.
  return unary_op(
      a, [](T x) { return x < T(0) ? -x : x; },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return unary_op(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  check(lo <= hi, detail::cat("clamp: lo ", lo, " > hi ", hi));
  return unary_op(
      a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

#define EID_INSTANTIATE(T)                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> add_scalar(const Tensor<T>&, T);               \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);               \
  template Tensor<T> exp(const Tensor<T>&);                         \
  template Tensor<T> log(const Tensor<T>&, LogPolicy);              \
  template Tensor<T> sigmoid(const Tensor<T>&);                     \
  template Tensor<T> tanh(const Tensor<T>&);                        \
  template Tensor<T> abs(const Tensor<T>&);                         \
  template Tensor<T> relu(const Tensor<T>&);                        \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);               \
  template Tensor<T> clamp(const Tensor<T>&, T, T);

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
