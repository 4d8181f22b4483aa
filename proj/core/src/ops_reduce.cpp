#include <cmath>

#include "eid/ops.hpp"

namespace eid {
namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* name) {
  check(a.shape() == b.shape(),
        detail::cat(name, ": shape mismatch ", a.shape().str(), " vs ",
                    b.shape().str()));
}

}  // namespace

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mse");
  const auto xa = a.values();
  const auto xb = b.values();
  double acc = 0;
  for (size_t i = 0; i < xa.size(); ++i) {
    const double d = double(xa[i]) - double(xb[i]);
    acc += d * d;
  }
  const T inv_n = T(1) / T(xa.size());
  Tensor<T> out = Tensor<T>::scalar(T(acc / double(xa.size())));
  if (detail::grad_needed<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current().record(
        [ai = a.impl(), bi = b.impl(), oi = out.impl(), inv_n] {
          if (oi->grad.empty()) return;
          const T g2 = T(2) * oi->grad[0] * inv_n;
          if (ai->requires_grad) {
            auto ga = ai->grad_buf();
            for (size_t i = 0; i < ga.size(); ++i)
              ga[i] += g2 * (ai->values[i] - bi->values[i]);
          }
          if (bi->requires_grad) {
            auto gb = bi->grad_buf();
            for (size_t i = 0; i < gb.size(); ++i)
              gb[i] -= g2 * (ai->values[i] - bi->values[i]);
          }
        });
  }
  return out;
}

template <typename T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "l1");
  const auto xa = a.values();
  const auto xb = b.values();
  double acc = 0;
  for (size_t i = 0; i < xa.size(); ++i)
    acc += std::abs(double(xa[i]) - double(xb[i]));
  const T inv_n = T(1) / T(xa.size());
  Tensor<T> out = Tensor<T>::scalar(T(acc / double(xa.size())));
  if (detail::grad_needed<T>({&a, &b})) {
    out.set_requires_grad(true);
    // Subgradient sign(0) = 0.
    Tape<T>::current().record(
        [ai = a.impl(), bi = b.impl(), oi = out.impl(), inv_n] {
          if (oi->grad.empty()) return;
          const T g = oi->grad[0] * inv_n;
          for (size_t i = 0; i < ai->values.size(); ++i) {
            const T d = ai->values[i] - bi->values[i];
            const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            if (ai->requires_grad) ai->grad_buf()[i] += g * s;
            if (bi->requires_grad) bi->grad_buf()[i] -= g * s;
          }
        });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  double acc = 0;
  for (T v : a.values()) acc += double(v);
  const T inv_n = T(1) / T(a.numel());
  Tensor<T> out = Tensor<T>::scalar(T(acc / double(a.numel())));
  if (detail::grad_needed<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ai = a.impl(), oi = out.impl(), inv_n] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      const T g = oi->grad[0] * inv_n;
      auto ga = ai->grad_buf();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0;
  for (T v : a.values()) acc += double(v);
  Tensor<T> out = Tensor<T>::scalar(T(acc));
  if (detail::grad_needed<T>({&a})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ai = a.impl(), oi = out.impl()] {
      if (oi->grad.empty() || !ai->requires_grad) return;
      const T g = oi->grad[0];
      auto ga = ai->grad_buf();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> masked_mse(const Tensor<T>& a, const Tensor<T>& b,
                     const Tensor<T>& mask) {
  check_same_shape(a, b, "masked_mse");
  check_same_shape(a, mask, "masked_mse(mask)");
  check(!mask.requires_grad(), "masked_mse: mask must not require grad");
  double denom = 0;
  for (T v : mask.values()) denom += double(v);
  check(denom > 0, "masked_mse: mask selects no pixels");
  // Composed from primitives; the backward rules compose likewise.
  Tensor<T> d = sub(a, b);
  Tensor<T> weighted = mul(mul(d, d), mask);
  return mul_scalar(sum(weighted), T(1.0 / denom));
}

template <typename T>
Tensor<T> masked_l1(const Tensor<T>& a, const Tensor<T>& b,
                    const Tensor<T>& mask) {
  check_same_shape(a, b, "masked_l1");
  check_same_shape(a, mask, "masked_l1(mask)");
  check(!mask.requires_grad(), "masked_l1: mask must not require grad");
  double denom = 0;
  for (T v : mask.values()) denom += double(v);
  check(denom > 0, "masked_l1: mask selects no pixels");
  return mul_scalar(sum(mul(abs(sub(a, b)), mask)), T(1.0 / denom));
}

#define EID_INSTANTIATE(T)                                                \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> l1(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> mean(const Tensor<T>&);                              \
  template Tensor<T> sum(const Tensor<T>&);                               \
  template Tensor<T> masked_mse(const Tensor<T>&, const Tensor<T>&,       \
                                const Tensor<T>&);                        \
  template Tensor<T> masked_l1(const Tensor<T>&, const Tensor<T>&,        \
                               const Tensor<T>&);

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
