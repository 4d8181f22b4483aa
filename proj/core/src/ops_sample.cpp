#include <cmath>

#include "eid/ops.hpp"

namespace eid {
namespace {

inline int64_t wrap_index(int64_t v, int64_t size) {
  v %= size;
  return v < 0 ? v + size : v;
}

/// The four bilinear taps for one sample point. In kZero mode out-of-bounds
/// taps are dropped (they read zero); in kWrap mode indices wrap.
template <typename T>
struct Taps {
  int64_t idx[4];
  T wgt[4];
  int count = 0;

  void add(int64_t y, int64_t x, T w, int64_t h_size, int64_t w_size,
           GridPad pad) {
    if (pad == GridPad::kWrap) {
      y = wrap_index(y, h_size);
      x = wrap_index(x, w_size);
    } else if (y < 0 || y >= h_size || x < 0 || x >= w_size) {
      return;
    }
    idx[count] = y * w_size + x;
    wgt[count] = w;
    ++count;
  }
};

template <typename T>
Taps<T> bilinear_taps(T sx, T sy, int64_t h, int64_t w, GridPad pad) {
  const T fx = std::floor(sx);
  const T fy = std::floor(sy);
  const int64_t x0 = static_cast<int64_t>(fx);
  const int64_t y0 = static_cast<int64_t>(fy);
  const T wx = sx - fx;
  const T wy = sy - fy;
  Taps<T> taps;
  taps.add(y0, x0, (T(1) - wy) * (T(1) - wx), h, w, pad);
  taps.add(y0, x0 + 1, (T(1) - wy) * wx, h, w, pad);
  taps.add(y0 + 1, x0, wy * (T(1) - wx), h, w, pad);
  taps.add(y0 + 1, x0 + 1, wy * wx, h, w, pad);
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> resample(const Tensor<T>& input, Resample mode) {
  const Shape& s = input.shape();
  const bool up = mode == Resample::kNearestUp2;
  if (!up)
    check(s.h % 2 == 0 && s.w % 2 == 0,
          detail::cat("resample: avg-down2 requires even spatial size, got ",
                      s.str()));
  const Shape os{s.n, s.c, up ? s.h * 2 : s.h / 2, up ? s.w * 2 : s.w / 2};
  Tensor<T> out = Tensor<T>::zeros(os);

  const int64_t planes = s.n * s.c;
  const T* in = input.values().data();
  T* o = out.values().data();
  for (int64_t p = 0; p < planes; ++p) {
    const T* ip = in + p * s.plane();
    T* op = o + p * os.plane();
    if (up) {
      for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x) {
          const T v = ip[y * s.w + x];
          T* q = op + 2 * y * os.w + 2 * x;
          q[0] = v;
          q[1] = v;
          q[os.w] = v;
          q[os.w + 1] = v;
        }
    } else {
      for (int64_t y = 0; y < os.h; ++y)
        for (int64_t x = 0; x < os.w; ++x) {
          const T* q = ip + 2 * y * s.w + 2 * x;
          op[y * os.w + x] = (q[0] + q[1] + q[s.w] + q[s.w + 1]) * T(0.25);
        }
    }
  }

  if (detail::grad_needed<T>({&input})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ii = input.impl(), oi = out.impl(), up] {
      if (oi->grad.empty() || !ii->requires_grad) return;
      const Shape& is = ii->shape;
      const Shape& osh = oi->shape;
      const T* g = oi->grad.data();
      T* di = ii->grad_buf().data();
      for (int64_t p = 0; p < is.n * is.c; ++p) {
        const T* gp = g + p * osh.plane();
        T* dp = di + p * is.plane();
        if (up) {
          for (int64_t y = 0; y < is.h; ++y)
            for (int64_t x = 0; x < is.w; ++x) {
              const T* q = gp + 2 * y * osh.w + 2 * x;
              dp[y * is.w + x] += q[0] + q[1] + q[osh.w] + q[osh.w + 1];
            }
        } else {
          for (int64_t y = 0; y < osh.h; ++y)
            for (int64_t x = 0; x < osh.w; ++x) {
              const T gv = gp[y * osh.w + x] * T(0.25);
              T* q = dp + 2 * y * is.w + 2 * x;
              q[0] += gv;
              q[1] += gv;
              q[is.w] += gv;
              q[is.w + 1] += gv;
            }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> grid_sample(const Tensor<T>& input, const Tensor<T>& grid,
                      GridPad pad) {
  const Shape& is = input.shape();
  const Shape& gs = grid.shape();
  check(gs.c == 2 && gs.n == is.n,
        detail::cat("grid_sample: grid must be ", is.n, "x2xH'xW', got ",
                    gs.str()));
  check(!grid.requires_grad(),
        "grid_sample: gradients w.r.t. the grid are not implemented; grids "
        "come from sampled transform parameters");
  for (T v : grid.values())
    check(std::isfinite(v), "grid_sample: non-finite grid value rejected");

  const Shape os{is.n, is.c, gs.h, gs.w};
  Tensor<T> out = Tensor<T>::zeros(os);
  const T* in = input.values().data();
  const T* gr = grid.values().data();
  T* o = out.values().data();
  const int64_t gplane = gs.plane();
  for (int64_t n = 0; n < is.n; ++n) {
    const T* gx = gr + n * 2 * gplane;
    const T* gy = gx + gplane;
    for (int64_t i = 0; i < gplane; ++i) {
      const Taps<T> taps = bilinear_taps(gx[i], gy[i], is.h, is.w, pad);
      for (int64_t c = 0; c < is.c; ++c) {
        const T* ip = in + (n * is.c + c) * is.plane();
        T acc = 0;
        for (int k = 0; k < taps.count; ++k)
          acc += taps.wgt[k] * ip[taps.idx[k]];
        o[(n * os.c + c) * gplane + i] = acc;
      }
    }
  }

  if (detail::grad_needed<T>({&input})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ii = input.impl(), gi = grid.impl(),
                               oi = out.impl(), pad] {
      if (oi->grad.empty() || !ii->requires_grad) return;
      const Shape& is = ii->shape;
      const Shape& gs = gi->shape;
      const int64_t gplane = gs.plane();
      const T* gr = gi->values.data();
      const T* g = oi->grad.data();
      T* di = ii->grad_buf().data();
      for (int64_t n = 0; n < is.n; ++n) {
        const T* gx = gr + n * 2 * gplane;
        const T* gy = gx + gplane;
        for (int64_t i = 0; i < gplane; ++i) {
          const Taps<T> taps = bilinear_taps(gx[i], gy[i], is.h, is.w, pad);
          for (int64_t c = 0; c < is.c; ++c) {
            const T gv = g[(n * is.c + c) * gplane + i];
            T* dp = di + (n * is.c + c) * is.plane();
            for (int k = 0; k < taps.count; ++k)
              dp[taps.idx[k]] += taps.wgt[k] * gv;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> spatial_permute(const Tensor<T>& input,
                          const std::vector<int64_t>& src_index, int64_t out_h,
                          int64_t out_w) {
  const Shape& is = input.shape();
  check(static_cast<int64_t>(src_index.size()) == out_h * out_w,
        detail::cat("spatial_permute: index map has ", src_index.size(),
                    " entries for output plane ", out_h, "x", out_w));
  for (int64_t s : src_index)
    check(s >= 0 && s < is.plane(),
          detail::cat("spatial_permute: source index ", s,
                      " outside input plane of ", is.plane()));

  const Shape os{is.n, is.c, out_h, out_w};
  Tensor<T> out = Tensor<T>::zeros(os);
  const T* in = input.values().data();
  T* o = out.values().data();
  for (int64_t p = 0; p < is.n * is.c; ++p) {
    const T* ip = in + p * is.plane();
    T* op = o + p * os.plane();
    for (size_t i = 0; i < src_index.size(); ++i) op[i] = ip[src_index[i]];
  }

  if (detail::grad_needed<T>({&input})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ii = input.impl(), oi = out.impl(), src_index] {
      if (oi->grad.empty() || !ii->requires_grad) return;
      const Shape& is = ii->shape;
      const int64_t out_plane = oi->shape.plane();
      const T* g = oi->grad.data();
      T* di = ii->grad_buf().data();
      for (int64_t p = 0; p < is.n * is.c; ++p) {
        const T* gp = g + p * out_plane;
        T* dp = di + p * is.plane();
        for (int64_t i = 0; i < out_plane; ++i) dp[src_index[i]] += gp[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  check(as.n == bs.n && as.h == bs.h && as.w == bs.w,
        detail::cat("concat_channels: incompatible shapes ", as.str(), " vs ",
                    bs.str()));
  const Shape os{as.n, as.c + bs.c, as.h, as.w};
  Tensor<T> out = Tensor<T>::zeros(os);
  const int64_t plane = as.plane();
  T* o = out.values().data();
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (int64_t n = 0; n < as.n; ++n) {
    std::copy(pa + n * as.c * plane, pa + (n + 1) * as.c * plane,
              o + n * os.c * plane);
    std::copy(pb + n * bs.c * plane, pb + (n + 1) * bs.c * plane,
              o + (n * os.c + as.c) * plane);
  }

  if (detail::grad_needed<T>({&a, &b})) {
    out.set_requires_grad(true);
    Tape<T>::current().record([ai = a.impl(), bi = b.impl(), oi = out.impl()] {
      if (oi->grad.empty()) return;
      const Shape& as = ai->shape;
      const Shape& bs = bi->shape;
      const Shape& os = oi->shape;
      const int64_t plane = as.plane();
      const T* g = oi->grad.data();
      if (ai->requires_grad) {
        T* da = ai->grad_buf().data();
        for (int64_t n = 0; n < as.n; ++n) {
          const T* gp = g + n * os.c * plane;
          T* dp = da + n * as.c * plane;
          for (int64_t i = 0; i < as.c * plane; ++i) dp[i] += gp[i];
        }
      }
      if (bi->requires_grad) {
        T* db = bi->grad_buf().data();
        for (int64_t n = 0; n < bs.n; ++n) {
          const T* gp = g + (n * os.c + as.c) * plane;
          T* dp = db + n * bs.c * plane;
          for (int64_t i = 0; i < bs.c * plane; ++i) dp[i] += gp[i];
        }
      }
    });
  }
  return out;
}

#define EID_INSTANTIATE(T)                                                   \
  template Tensor<T> resample(const Tensor<T>&, Resample);                   \
  template Tensor<T> grid_sample(const Tensor<T>&, const Tensor<T>&,         \
                                 GridPad);                                   \
  template Tensor<T> spatial_permute(const Tensor<T>&,                       \
                                     const std::vector<int64_t>&, int64_t,   \
                                     int64_t);                               \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);

EID_INSTANTIATE(float)
EID_INSTANTIATE(double)

}  // namespace eid
