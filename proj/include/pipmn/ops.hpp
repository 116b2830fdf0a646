#pragma once

#include <cmath>
#include <initializer_list>
#include <numbers>
#include <vector>

#include "pipmn/tensor.hpp"

// Forward ops with recorded backward closures. Every op checks its output for
// NaN/Inf and throws NumericError on the first offender. Passing a null tape
// runs the forward pass only (no recording, outputs never require grad).
namespace pipmn::ops {

namespace detail {

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  const T* p = t.data();
  const long n = t.size();
  for (long i = 0; i < n; ++i)
    if (!std::isfinite(static_cast<double>(p[i])))
      throw NumericError(std::string(op) + " produced a non-finite value");
}

template <typename T>
bool track(Tape<T>* tape, std::initializer_list<bool> inputs_require_grad) {
  if (!tape) return false;
  for (bool b : inputs_require_grad)
    if (b) return true;
  return false;
}

}  // namespace detail

// y[..., j] = sum_i x[..., i] * w[i, j] + b[j]
template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() < 1 || w.rank() != 2 || b.rank() != 1)
    throw ShapeError("linear expects x rank>=1, w rank 2, b rank 1; got x" +
                     shape_str(x.shape()) + " w" + shape_str(w.shape()) + " b" +
                     shape_str(b.shape()));
  const int fin = x.extent(x.rank() - 1);
  const int fout = w.extent(1);
  if (w.extent(0) != fin || b.extent(0) != fout)
    throw ShapeError("linear dimension mismatch between x" + shape_str(x.shape()) + " and w" +
                     shape_str(w.shape()) + ", b" + shape_str(b.shape()));
  const long rows = x.size() / fin;
  std::vector<int> out_shape = x.shape();
  out_shape.back() = fout;
  Tensor<T> y(out_shape, detail::track(tape, {x.requires_grad(), w.requires_grad(),
                                              b.requires_grad()}));
  {
    const T* xp = x.data();
    const T* wp = w.data();
    const T* bp = b.data();
    T* yp = y.data();
    for (long r = 0; r < rows; ++r) {
      T* yr = yp + r * fout;
      for (int j = 0; j < fout; ++j) yr[j] = bp[j];
      const T* xr = xp + r * fin;
      for (int i = 0; i < fin; ++i) {
        const T xv = xr[i];
        const T* wrow = wp + static_cast<long>(i) * fout;
        for (int j = 0; j < fout; ++j) yr[j] += xv * wrow[j];
      }
    }
  }
  detail::check_finite(y, "linear");
  if (y.requires_grad()) {
    tape->record([x, w, b, y, rows, fin, fout]() mutable {
      const T* gy = y.grad();
      if (x.requires_grad()) {
        T* gx = x.grad();
        const T* wp = w.data();
        for (long r = 0; r < rows; ++r) {
          const T* gyr = gy + r * fout;
          for (int i = 0; i < fin; ++i) {
            const T* wrow = wp + static_cast<long>(i) * fout;
            T acc = T(0);
            for (int j = 0; j < fout; ++j) acc += gyr[j] * wrow[j];
            gx[r * fin + i] += acc;
          }
        }
      }
      if (w.requires_grad()) {
        T* gw = w.grad();
        const T* xp = x.data();
        for (long r = 0; r < rows; ++r) {
          const T* xr = xp + r * fin;
          const T* gyr = gy + r * fout;
          for (int i = 0; i < fin; ++i) {
            T* gwrow = gw + static_cast<long>(i) * fout;
            const T xv = xr[i];
            for (int j = 0; j < fout; ++j) gwrow[j] += xv * gyr[j];
          }
        }
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (long r = 0; r < rows; ++r) {
          const T* gyr = gy + r * fout;
          for (int j = 0; j < fout; ++j) gb[j] += gyr[j];
        }
      }
    });
  }
  return y;
}

// Normalizes over the last axis with biased variance:
// y = (x - mean) / sqrt(var + eps) * gamma + beta
template <typename T>
Tensor<T> layer_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5)) {
  if (x.rank() < 1 || gamma.rank() != 1 || beta.rank() != 1)
    throw ShapeError("layer_norm expects x rank>=1 and rank-1 gamma/beta");
  const int f = x.extent(x.rank() - 1);
  if (gamma.extent(0) != f || beta.extent(0) != f)
    throw ShapeError("layer_norm parameter size mismatch: x" + shape_str(x.shape()) +
                     ", gamma" + shape_str(gamma.shape()));
  if (!(eps > T(0))) throw ValueError("layer_norm eps must be positive");
  const long rows = x.size() / f;
  Tensor<T> y(x.shape(), detail::track(tape, {x.requires_grad(), gamma.requires_grad(),
                                              beta.requires_grad()}));
  // Saved for backward: normalized values and per-row inverse stddev.
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  {
    const T* xp = x.data();
    const T* gp = gamma.data();
    const T* bp = beta.data();
    T* yp = y.data();
    for (long r = 0; r < rows; ++r) {
      const T* xr = xp + r * f;
      T mean = T(0);
      for (int i = 0; i < f; ++i) mean += xr[i];
      mean /= T(f);
      T var = T(0);
      for (int i = 0; i < f; ++i) {
        const T d = xr[i] - mean;
        var += d * d;
      }
      var /= T(f);
      const T s = T(1) / std::sqrt(var + eps);
      (*inv_std)[r] = s;
      T* xh = xhat->data() + r * f;
      T* yr = yp + r * f;
      for (int i = 0; i < f; ++i) {
        xh[i] = (xr[i] - mean) * s;
        yr[i] = xh[i] * gp[i] + bp[i];
      }
    }
  }
  detail::check_finite(y, "layer_norm");
  if (y.requires_grad()) {
    tape->record([x, gamma, beta, y, xhat, inv_std, rows, f]() mutable {
      const T* gy = y.grad();
      const T* gp = gamma.data();
      for (long r = 0; r < rows; ++r) {
        const T* gyr = gy + r * f;
        const T* xh = xhat->data() + r * f;
        if (gamma.requires_grad()) {
          T* gg = gamma.grad();
          for (int i = 0; i < f; ++i) gg[i] += gyr[i] * xh[i];
        }
        if (beta.requires_grad()) {
          T* gb = beta.grad();
          for (int i = 0; i < f; ++i) gb[i] += gyr[i];
        }
        if (x.requires_grad()) {
          // gx = s * (g1 - mean(g1) - xhat * mean(g1 * xhat)), g1 = gy * gamma
          T mean_g = T(0), mean_gx = T(0);
          for (int i = 0; i < f; ++i) {
            const T g1 = gyr[i] * gp[i];
            mean_g += g1;
            mean_gx += g1 * xh[i];
          }
          mean_g /= T(f);
          mean_gx /= T(f);
          const T s = (*inv_std)[r];
          T* gx = x.grad() + r * f;
          for (int i = 0; i < f; ++i) {
            const T g1 = gyr[i] * gp[i];
            gx[i] += s * (g1 - mean_g - xh[i] * mean_gx);
          }
        }
      }
    });
  }
  return y;
}

// Exact-erf GELU: 0.5 * x * (1 + erf(x / sqrt(2)))
template <typename T>
Tensor<T> gelu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> y(x.shape(), detail::track(tape, {x.requires_grad()}));
  const T inv_sqrt2 = T(0.70710678118654752440L);
  {
    const T* xp = x.data();
    T* yp = y.data();
    for (long i = 0; i < x.size(); ++i)
      yp[i] = T(0.5) * xp[i] * (T(1) + std::erf(xp[i] * inv_sqrt2));
  }
  detail::check_finite(y, "gelu");
  if (y.requires_grad()) {
    tape->record([x, y, inv_sqrt2]() mutable {
      const T inv_sqrt2pi = T(0.39894228040143267794L);
      const T* gy = y.grad();
      const T* xp = x.data();
      T* gx = x.grad();
      for (long i = 0; i < x.size(); ++i) {
        const T v = xp[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        gx[i] += gy[i] * (cdf + v * pdf);
      }
    });
  }
  return y;
}

// Per-channel width-3 convolution along the last axis, stride 1, zero padding
// of 1 on both ends. Channel d only ever touches channel d.
template <typename T>
Tensor<T> depthwise_conv1d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& kernel,
                           const Tensor<T>& bias) {
  if (x.rank() != 3)
    throw ShapeError("depthwise_conv1d expects x rank 3, got " + shape_str(x.shape()));
  const int batch = x.extent(0), depth = x.extent(1), len = x.extent(2);
  if (kernel.rank() != 2 || kernel.extent(0) != depth || kernel.extent(1) != 3 ||
      bias.rank() != 1 || bias.extent(0) != depth)
    throw ShapeError("depthwise_conv1d needs kernel (" + std::to_string(depth) +
                     ",3) and bias (" + std::to_string(depth) + "); got kernel" +
                     shape_str(kernel.shape()) + " bias" + shape_str(bias.shape()));
  Tensor<T> y(x.shape(), detail::track(tape, {x.requires_grad(), kernel.requires_grad(),
                                              bias.requires_grad()}));
  {
    const T* xp = x.data();
    const T* kp = kernel.data();
    const T* bp = bias.data();
    T* yp = y.data();
    for (int b = 0; b < batch; ++b)
      for (int d = 0; d < depth; ++d) {
        const T* xr = xp + (static_cast<long>(b) * depth + d) * len;
        T* yr = yp + (static_cast<long>(b) * depth + d) * len;
        const T k0 = kp[d * 3], k1 = kp[d * 3 + 1], k2 = kp[d * 3 + 2];
        for (int t = 0; t < len; ++t) {
          T acc = bp[d] + xr[t] * k1;
          if (t > 0) acc += xr[t - 1] * k0;
          if (t + 1 < len) acc += xr[t + 1] * k2;
          yr[t] = acc;
        }
      }
  }
  detail::check_finite(y, "depthwise_conv1d");
  if (y.requires_grad()) {
    tape->record([x, kernel, bias, y, batch, depth, len]() mutable {
      const T* gy = y.grad();
      const T* xp = x.data();
      const T* kp = kernel.data();
      for (int b = 0; b < batch; ++b)
        for (int d = 0; d < depth; ++d) {
          const long base = (static_cast<long>(b) * depth + d) * len;
          const T* gyr = gy + base;
          if (x.requires_grad()) {
            T* gx = x.grad() + base;
            const T k0 = kp[d * 3], k1 = kp[d * 3 + 1], k2 = kp[d * 3 + 2];
            for (int s = 0; s < len; ++s) {
              T acc = gyr[s] * k1;
              if (s + 1 < len) acc += gyr[s + 1] * k0;  // y[s+1] used x[s] via tap 0
              if (s > 0) acc += gyr[s - 1] * k2;        // y[s-1] used x[s] via tap 2
              gx[s] += acc;
            }
          }
          if (kernel.requires_grad()) {
            T* gk = kernel.grad();
            const T* xr = xp + base;
            T g0 = T(0), g1 = T(0), g2 = T(0);
            for (int t = 0; t < len; ++t) {
              const T g = gyr[t];
              if (t > 0) g0 += g * xr[t - 1];
              g1 += g * xr[t];
              if (t + 1 < len) g2 += g * xr[t + 1];
            }
            gk[d * 3] += g0;
            gk[d * 3 + 1] += g1;
            gk[d * 3 + 2] += g2;
          }
          if (bias.requires_grad()) {
            T acc = T(0);
            for (int t = 0; t < len; ++t) acc += gyr[t];
            bias.grad()[d] += acc;
          }
        }
    });
  }
  return y;
}

// Averages the time axis (axis 1 of [B,T,D]) down to out_len segments.
// Segment i covers t in [floor(i*T/out_len), ceil((i+1)*T/out_len)).
template <typename T>
Tensor<T> adaptive_avg_pool_time(Tape<T>* tape, const Tensor<T>& x, int out_len) {
  if (x.rank() != 3)
    throw ShapeError("adaptive_avg_pool_time expects rank 3, got " + shape_str(x.shape()));
  const int batch = x.extent(0), tlen = x.extent(1), depth = x.extent(2);
  if (out_len < 1 || out_len > tlen)
    throw ValueError("adaptive_avg_pool_time: out_len " + std::to_string(out_len) +
                     " must be in [1, " + std::to_string(tlen) + "]");
  Tensor<T> y({batch, out_len, depth}, detail::track(tape, {x.requires_grad()}));
  std::vector<int> seg_lo(out_len), seg_hi(out_len);
  for (int i = 0; i < out_len; ++i) {
    seg_lo[i] = static_cast<int>((static_cast<long>(i) * tlen) / out_len);
    seg_hi[i] = static_cast<int>((static_cast<long>(i + 1) * tlen + out_len - 1) / out_len);
  }
  {
    const T* xp = x.data();
    T* yp = y.data();
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < out_len; ++i) {
        const int lo = seg_lo[i], hi = seg_hi[i];
        const T inv = T(1) / T(hi - lo);
        T* yr = yp + (static_cast<long>(b) * out_len + i) * depth;
        for (int d = 0; d < depth; ++d) yr[d] = T(0);
        for (int t = lo; t < hi; ++t) {
          const T* xr = xp + (static_cast<long>(b) * tlen + t) * depth;
          for (int d = 0; d < depth; ++d) yr[d] += xr[d];
        }
        for (int d = 0; d < depth; ++d) yr[d] *= inv;
      }
  }
  detail::check_finite(y, "adaptive_avg_pool_time");
  if (y.requires_grad()) {
    tape->record([x, y, seg_lo, seg_hi, batch, tlen, depth, out_len]() mutable {
      const T* gy = y.grad();
      T* gx = x.grad();
      for (int b = 0; b < batch; ++b)
        for (int i = 0; i < out_len; ++i) {
          const int lo = seg_lo[i], hi = seg_hi[i];
          const T inv = T(1) / T(hi - lo);
          const T* gyr = gy + (static_cast<long>(b) * out_len + i) * depth;
          for (int t = lo; t < hi; ++t) {
            T* gxr = gx + (static_cast<long>(b) * tlen + t) * depth;
            for (int d = 0; d < depth; ++d) gxr[d] += gyr[d] * inv;
          }
        }
    });
  }
  return y;
}

// [B,P,Q] -> [B,Q,P]; applying it twice is the identity.
template <typename T>
Tensor<T> permute_last_two(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 3)
    throw ShapeError("permute_last_two expects rank 3, got " + shape_str(x.shape()));
  const int batch = x.extent(0), p = x.extent(1), q = x.extent(2);
  Tensor<T> y({batch, q, p}, detail::track(tape, {x.requires_grad()}));
  {
    const T* xp = x.data();
    T* yp = y.data();
    for (int b = 0; b < batch; ++b) {
      const T* xb = xp + static_cast<long>(b) * p * q;
      T* yb = yp + static_cast<long>(b) * p * q;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) yb[static_cast<long>(j) * p + i] = xb[static_cast<long>(i) * q + j];
    }
  }
  detail::check_finite(y, "permute_last_two");
  if (y.requires_grad()) {
    tape->record([x, y, batch, p, q]() mutable {
      const T* gy = y.grad();
      T* gx = x.grad();
      for (int b = 0; b < batch; ++b) {
        const T* gyb = gy + static_cast<long>(b) * p * q;
        T* gxb = gx + static_cast<long>(b) * p * q;
        for (int i = 0; i < p; ++i)
          for (int j = 0; j < q; ++j)
            gxb[static_cast<long>(i) * q + j] += gyb[static_cast<long>(j) * p + i];
      }
    });
  }
  return y;
}

// Order-preserving concatenation along the last axis.
template <typename T>
Tensor<T> concat_last(Tape<T>* tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ValueError("concat_last needs at least one tensor");
  const auto& first = xs.front().shape();
  long lead = 1;
  for (std::size_t i = 0; i + 1 < first.size(); ++i) lead *= first[i];
  int total_last = 0;
  bool rg = false;
  for (const auto& t : xs) {
    if (t.rank() != static_cast<int>(first.size()))
      throw ShapeError("concat_last rank mismatch: " + shape_str(first) + " vs " +
                       shape_str(t.shape()));
    for (std::size_t i = 0; i + 1 < first.size(); ++i)
      if (t.shape()[i] != first[i])
        throw ShapeError("concat_last leading-shape mismatch: " + shape_str(first) + " vs " +
                         shape_str(t.shape()));
    total_last += t.shape().back();
    rg = rg || t.requires_grad();
  }
  std::vector<int> out_shape = first;
  out_shape.back() = total_last;
  Tensor<T> y(out_shape, tape != nullptr && rg);
  {
    T* yp = y.data();
    for (long r = 0; r < lead; ++r) {
      long off = 0;
      for (const auto& t : xs) {
        const int w = t.shape().back();
        const T* src = t.data() + r * w;
        T* dst = yp + r * total_last + off;
        for (int j = 0; j < w; ++j) dst[j] = src[j];
        off += w;
      }
    }
  }
  detail::check_finite(y, "concat_last");
  if (y.requires_grad()) {
    tape->record([xs, y, lead, total_last]() mutable {
      const T* gy = y.grad();
      for (long r = 0; r < lead; ++r) {
        long off = 0;
        for (auto& t : xs) {
          const int w = t.shape().back();
          if (t.requires_grad()) {
            T* gt = t.grad() + r * w;
            const T* src = gy + r * total_last + off;
            for (int j = 0; j < w; ++j) gt[j] += src[j];
          }
          off += w;
        }
      }
    });
  }
  return y;
}

// scale * x + y with a trainable scalar scale (layer-scale building block).
template <typename T>
Tensor<T> scale_add(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& scale,
                    const Tensor<T>& y) {
  if (scale.size() != 1)
    throw ShapeError("scale_add expects a scalar scale, got " + shape_str(scale.shape()));
  if (x.shape() != y.shape())
    throw ShapeError("scale_add shape mismatch: " + shape_str(x.shape()) + " vs " +
                     shape_str(y.shape()));
  Tensor<T> out(x.shape(), detail::track(tape, {x.requires_grad(), scale.requires_grad(),
                                                y.requires_grad()}));
  const T s = scale.data()[0];
  {
    const T* xp = x.data();
    const T* yp = y.data();
    T* op = out.data();
    for (long i = 0; i < x.size(); ++i) op[i] = s * xp[i] + yp[i];
  }
  detail::check_finite(out, "scale_add");
  if (out.requires_grad()) {
    tape->record([x, scale, y, out, s]() mutable {
      const T* go = out.grad();
      if (x.requires_grad()) {
        T* gx = x.grad();
        for (long i = 0; i < x.size(); ++i) gx[i] += s * go[i];
      }
      if (scale.requires_grad()) {
        const T* xp = x.data();
        T acc = T(0);
        for (long i = 0; i < x.size(); ++i) acc += go[i] * xp[i];
        scale.grad()[0] += acc;
      }
      if (y.requires_grad()) {
        T* gy = y.grad();
        for (long i = 0; i < y.size(); ++i) gy[i] += go[i];
      }
    });
  }
  return out;
}

// Elementwise x + y.
template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape())
    throw ShapeError("add shape mismatch: " + shape_str(x.shape()) + " vs " +
                     shape_str(y.shape()));
  Tensor<T> out(x.shape(), detail::track(tape, {x.requires_grad(), y.requires_grad()}));
  {
    const T* xp = x.data();
    const T* yp = y.data();
    T* op = out.data();
    for (long i = 0; i < x.size(); ++i) op[i] = xp[i] + yp[i];
  }
  detail::check_finite(out, "add");
  if (out.requires_grad()) {
    tape->record([x, y, out]() mutable {
      const T* go = out.grad();
      if (x.requires_grad()) {
        T* gx = x.grad();
        for (long i = 0; i < x.size(); ++i) gx[i] += go[i];
      }
      if (y.requires_grad()) {
        T* gy = y.grad();
        for (long i = 0; i < y.size(); ++i) gy[i] += go[i];
      }
    });
  }
  return out;
}

// scale * x with a trainable scalar.
template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s) {
  if (s.size() != 1)
    throw ShapeError("scale expects a scalar multiplier, got " + shape_str(s.shape()));
  Tensor<T> out(x.shape(), detail::track(tape, {x.requires_grad(), s.requires_grad()}));
  const T sv = s.data()[0];
  {
    const T* xp = x.data();
    T* op = out.data();
    for (long i = 0; i < x.size(); ++i) op[i] = sv * xp[i];
  }
  detail::check_finite(out, "scale");
  if (out.requires_grad()) {
    tape->record([x, s, out, sv]() mutable {
      const T* go = out.grad();
      if (x.requires_grad()) {
        T* gx = x.grad();
        for (long i = 0; i < x.size(); ++i) gx[i] += sv * go[i];
      }
      if (s.requires_grad()) {
        const T* xp = x.data();
        T acc = T(0);
        for (long i = 0; i < x.size(); ++i) acc += go[i] * xp[i];
        s.grad()[0] += acc;
      }
    });
  }
  return out;
}

// Arithmetic mean over axis 1 of [B,L,D] -> [B,D].
template <typename T>
Tensor<T> mean_over_time(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 3)
    throw ShapeError("mean_over_time expects rank 3, got " + shape_str(x.shape()));
  const int batch = x.extent(0), len = x.extent(1), depth = x.extent(2);
  Tensor<T> y({batch, depth}, detail::track(tape, {x.requires_grad()}));
  {
    const T* xp = x.data();
    T* yp = y.data();
    const T inv = T(1) / T(len);
    for (int b = 0; b < batch; ++b) {
      T* yr = yp + static_cast<long>(b) * depth;
      for (int d = 0; d < depth; ++d) yr[d] = T(0);
      for (int t = 0; t < len; ++t) {
        const T* xr = xp + (static_cast<long>(b) * len + t) * depth;
        for (int d = 0; d < depth; ++d) yr[d] += xr[d];
      }
      for (int d = 0; d < depth; ++d) yr[d] *= inv;
    }
  }
  detail::check_finite(y, "mean_over_time");
  if (y.requires_grad()) {
    tape->record([x, y, batch, len, depth]() mutable {
      const T* gy = y.grad();
      T* gx = x.grad();
      const T inv = T(1) / T(len);
      for (int b = 0; b < batch; ++b) {
        const T* gyr = gy + static_cast<long>(b) * depth;
        for (int t = 0; t < len; ++t) {
          T* gxr = gx + (static_cast<long>(b) * len + t) * depth;
          for (int d = 0; d < depth; ++d) gxr[d] += gyr[d] * inv;
        }
      }
    });
  }
  return y;
}

// Per-last-axis-channel affine map with constant coefficients; used for input
// standardization. Gradients flow to x only.
template <typename T>
Tensor<T> channel_affine(Tape<T>* tape, const Tensor<T>& x, const std::vector<T>& scale,
                         const std::vector<T>& shift) {
  const int d = x.extent(x.rank() - 1);
  if (static_cast<int>(scale.size()) != d || static_cast<int>(shift.size()) != d)
    throw ShapeError("channel_affine coefficient length mismatch with " + shape_str(x.shape()));
  Tensor<T> y(x.shape(), detail::track(tape, {x.requires_grad()}));
  {
    const long rows = x.size() / d;
    const T* xp = x.data();
    T* yp = y.data();
    for (long r = 0; r < rows; ++r)
      for (int i = 0; i < d; ++i) yp[r * d + i] = xp[r * d + i] * scale[i] + shift[i];
  }
  detail::check_finite(y, "channel_affine");
  if (y.requires_grad()) {
    tape->record([x, y, scale, d]() mutable {
      const long rows = x.size() / d;
      const T* gy = y.grad();
      T* gx = x.grad();
      for (long r = 0; r < rows; ++r)
        for (int i = 0; i < d; ++i) gx[r * d + i] += gy[r * d + i] * scale[i];
    });
  }
  return y;
}

// Sum of all elements, as a scalar tensor.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> y({}, detail::track(tape, {x.requires_grad()}));
  {
    const T* xp = x.data();
    T acc = T(0);
    for (long i = 0; i < x.size(); ++i) acc += xp[i];
    y.data()[0] = acc;
  }
  detail::check_finite(y, "sum");
  if (y.requires_grad()) {
    tape->record([x, y]() mutable {
      const T g = y.grad()[0];
      T* gx = x.grad();
      for (long i = 0; i < x.size(); ++i) gx[i] += g;
    });
  }
  return y;
}

// Elementwise product.
template <typename T>
Tensor<T> hadamard(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape())
    throw ShapeError("hadamard shape mismatch: " + shape_str(x.shape()) + " vs " +
                     shape_str(y.shape()));
  Tensor<T> out(x.shape(), detail::track(tape, {x.requires_grad(), y.requires_grad()}));
  {
    const T* xp = x.data();
    const T* yp = y.data();
    T* op = out.data();
    for (long i = 0; i < x.size(); ++i) op[i] = xp[i] * yp[i];
  }
  detail::check_finite(out, "hadamard");
  if (out.requires_grad()) {
    tape->record([x, y, out]() mutable {
      const T* go = out.grad();
      if (x.requires_grad()) {
        T* gx = x.grad();
        const T* yp = y.data();
        for (long i = 0; i < x.size(); ++i) gx[i] += go[i] * yp[i];
      }
      if (y.requires_grad()) {
        T* gy = y.grad();
        const T* xp = x.data();
        for (long i = 0; i < y.size(); ++i) gy[i] += go[i] * xp[i];
      }
    });
  }
  return out;
}

}  // namespace pipmn::ops
