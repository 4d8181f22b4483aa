#include <algorithm>

#include "eid/ops.hpp"

namespace eid {
namespace {

struct ConvDims {
  int64_t N, IC, H, W, OC, KH, KW, OH, OW;
  int stride, padding;
};

/// Valid output range [lo, hi] (inclusive) along one axis for kernel offset k:
/// all o in range satisfy 0 <= o*stride - padding + k < size.
inline std::pair<int64_t, int64_t> valid_range(int64_t out_size, int64_t size,
                                               int k, int stride,
                                               int padding) {
  const int64_t a = padding - k;
  const int64_t lo = std::max<int64_t>(0, (a + stride - 1) / stride);
  const int64_t hi = std::min<int64_t>(out_size - 1, (size - 1 + a) / stride);
  return {lo, hi};
}

template <typename T>
void conv_forward(const ConvDims& d, const T* in, const T* w, const T* b,
                  T* out) {
  const int64_t in_plane = d.H * d.W;
  const int64_t out_plane = d.OH * d.OW;
  for (int64_t n = 0; n < d.N; ++n) {
    for (int64_t oc = 0; oc < d.OC; ++oc) {
      T* op = out + (n * d.OC + oc) * out_plane;
      std::fill(op, op + out_plane, b[oc]);
      for (int64_t ic = 0; ic < d.IC; ++ic) {
        const T* ip = in + (n * d.IC + ic) * in_plane;
        const T* wp = w + (oc * d.IC + ic) * d.KH * d.KW;
        for (int ky = 0; ky < d.KH; ++ky) {
          const auto [oy_lo, oy_hi] =
              valid_range(d.OH, d.H, ky, d.stride, d.padding);
          for (int kx = 0; kx < d.KW; ++kx) {
            const T wv = wp[ky * d.KW + kx];
            const auto [ox_lo, ox_hi] =
                valid_range(d.OW, d.W, kx, d.stride, d.padding);
            for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
              const int64_t iy = oy * d.stride - d.padding + ky;
              const T* irow = ip + iy * d.W - d.padding + kx;
              T* orow = op + oy * d.OW;
              if (d.stride == 1) {
                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                  orow[ox] += wv * irow[ox];
              } else {
                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                  orow[ox] += wv * irow[ox * d.stride];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward(const ConvDims& d, const T* in, const T* w, const T* g,
                   T* din, T* dw, T* db) {
  const int64_t in_plane = d.H * d.W;
  const int64_t out_plane = d.OH * d.OW;
  for (int64_t n = 0; n < d.N; ++n) {
    for (int64_t oc = 0; oc < d.OC; ++oc) {
      const T* gp = g + (n * d.OC + oc) * out_plane;
      if (db) {
        T acc = 0;
        for (int64_t i = 0; i < out_plane; ++i) acc += gp[i];
        db[oc] += acc;
      }
      if (!din && !dw) continue;
      for (int64_t ic = 0; ic < d.IC; ++ic) {
        const T* ip = in + (n * d.IC + ic) * in_plane;
        T* dip = din ? din + (n * d.IC + ic) * in_plane : nullptr;
        for (int ky = 0; ky < d.KH; ++ky) {
          const auto [oy_lo, oy_hi] =
              valid_range(d.OH, d.H, ky, d.stride, d.padding);
          for (int kx = 0; kx < d.KW; ++kx) {
            const int64_t widx = (oc * d.IC + ic) * d.KH * d.KW + ky * d.KW + kx;
            const T wv = w[widx];
            const auto [ox_lo, ox_hi] =
                valid_range(d.OW, d.W, kx, d.stride, d.padding);
            T wacc = 0;
            for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
              const int64_t row_off =
                  (oy * d.stride - d.padding + ky) * d.W - d.padding + kx;
              const T* grow = gp + oy * d.OW;
              const T* irow = ip + row_off;
              if (d.stride == 1) {
                if (dip) {
                  T* dirow = dip + row_off;
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                    dirow[ox] += wv * grow[ox];
                }
                if (dw) {
                  for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                    wacc += grow[ox] * irow[ox];
                }
              } else {
                T* dirow = dip ? dip + row_off : nullptr;
                for (int64_t ox = ox_lo; ox <= ox_hi; ++ox) {
                  if (dirow) dirow[ox * d.stride] += wv * grow[ox];
                  if (dw) wacc += grow[ox] * irow[ox * d.stride];
                }
              }
            }
            if (dw) dw[widx] += wacc;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  check(stride >= 1, detail::cat("conv2d: stride must be >= 1, got ", stride));
  check(padding >= 0,
        detail::cat("conv2d: padding must be >= 0, got ", padding));
  check(ws.c == is.c,
        detail::cat("conv2d: weight expects ", ws.c, " input channels, input has ",
                    is.c, " (input ", is.str(), ", weight ", ws.str(), ")"));
  check(bias.shape() == Shape{1, ws.n, 1, 1},
        detail::cat("conv2d: bias shape ", bias.shape().str(),
                    " does not match ", ws.n, " output channels"));
  check(is.h + 2 * padding >= ws.h && is.w + 2 * padding >= ws.w,
        detail::cat("conv2d: kernel ", ws.h, "x", ws.w,
                    " does not fit padded input ", is.str(), " with padding ",
                    padding));

  ConvDims d{is.n, is.c, is.h, is.w, ws.n, ws.h, ws.w,
             (is.h + 2 * padding - ws.h) / stride + 1,
             (is.w + 2 * padding - ws.w) / stride + 1, stride, padding};
  Tensor<T> out = Tensor<T>::zeros(Shape{d.N, d.OC, d.OH, d.OW});
  conv_forward(d, input.values().data(), weight.values().data(),
               bias.values().data(), out.values().data());

  if (detail::grad_needed<T>({&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ii = input.impl(), wi = weight.impl(),
                               bi = bias.impl(), oi = out.impl(), d] {
      if (oi->grad.empty()) return;
      T* din = ii->requires_grad ? ii->grad_buf().data() : nullptr;
      T* dw = wi->requires_grad ? wi->grad_buf().data() : nullptr;
      T* db = bi->requires_grad ? bi->grad_buf().data() : nullptr;
      conv_backward(d, ii->values.data(), wi->values.data(), oi->grad.data(),
                    din, dw, db);
    });
  }
  return out;
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&,
                              const Tensor<float>&, int, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, int, int);

}  // namespace eid
