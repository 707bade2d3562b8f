#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "dce/tensor.hpp"

namespace dce {

using ChannelBits = std::vector<uint8_t>;  // 0/1 per channel; empty = all active

namespace detail {

inline std::vector<int> active_list(const ChannelBits& bits, int n) {
  std::vector<int> out;
  if (bits.empty()) {
    out.resize(size_t(n));
    for (int i = 0; i < n; ++i) out[size_t(i)] = i;
    return out;
  }
  check(int(bits.size()) == n, strf("channel mask covers %zu channels, layer has %d", bits.size(), n));
  for (int i = 0; i < n; ++i)
    if (bits[size_t(i)]) out.push_back(i);
  return out;
}

inline int pooled_extent(const char* op, int in, int k, int stride) {
  check(k >= 1 && stride >= 1, strf("%s: kernel/stride must be >= 1 (k=%d, stride=%d)", op, k, stride));
  const int out = (in - k) / stride + 1;
  check(in >= k, strf("%s: window %d exceeds input extent %d", op, k, in));
  return out;
}

}  // namespace detail

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.values())
    if (!std::isfinite(double(v))) return false;
  return true;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

struct Conv2dAttrs {
  int stride = 1;
  int pad = 0;
  // Skip lists for thin execution. Output channels absent from active_out are
  // not computed (rows stay zero); input channels absent from active_in are
  // treated as identically zero and never read. With the lists empty this is
  // a plain dense convolution.
  ChannelBits active_out;
  ChannelBits active_in;
};

namespace detail {

// col layout: P x K' (P = Ho*Wo spatial positions, K' = |ain| * k * k).
template <typename T>
void im2col(const T* x, int h, int w, int k, int stride, int pad, int ho, int wo,
            const std::vector<int>& ain, size_t plane_stride, T* col) {
  const int kk = k * k;
  const int kprime = int(ain.size()) * kk;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      T* row = col + (size_t(oy) * wo + ox) * kprime;
      const int iy0 = oy * stride - pad;
      const int ix0 = ox * stride - pad;
      for (size_t ci = 0; ci < ain.size(); ++ci) {
        const T* plane = x + size_t(ain[ci]) * plane_stride;
        T* dst = row + ci * kk;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = iy0 + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ix0 + kx;
            dst[ky * k + kx] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[size_t(iy) * w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* dcol, int h, int w, int k, int stride, int pad, int ho, int wo,
                const std::vector<int>& ain, T* dx_image, size_t plane_stride) {
  const int kk = k * k;
  const int kprime = int(ain.size()) * kk;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const T* row = dcol + (size_t(oy) * wo + ox) * kprime;
      const int iy0 = oy * stride - pad;
      const int ix0 = ox * stride - pad;
      for (size_t ci = 0; ci < ain.size(); ++ci) {
        T* plane = dx_image + size_t(ain[ci]) * plane_stride;
        const T* src = row + ci * kk;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = iy0 + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ix0 + kx;
            if (ix >= 0 && ix < w) plane[size_t(iy) * w + ix] += src[ky * k + kx];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv2dAttrs& attrs) {
  check(x.ndim() == 4, "conv2d: input must be NxCxHxW, got " + shape_str(x.shape()));
  check(w.ndim() == 4, "conv2d: weight must be CoutxCinxkxk, got " + shape_str(w.shape()));
  check(w.dim(2) == w.dim(3), "conv2d: kernel must be square, got " + shape_str(w.shape()));
  check(attrs.stride >= 1 && attrs.pad >= 0,
        strf("conv2d: stride %d / pad %d out of range", attrs.stride, attrs.pad));
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), k = w.dim(2);
  check(w.dim(1) == cin,
        strf("conv2d: weight expects %d input channels, input has %d", w.dim(1), cin));
  if (bias) check(bias->ndim() == 1 && bias->dim(0) == cout,
                  "conv2d: bias must be [Cout], got " + shape_str(bias->shape()));
  const int ho = (h + 2 * attrs.pad - k) / attrs.stride + 1;
  const int wo = (wd + 2 * attrs.pad - k) / attrs.stride + 1;
  check(ho >= 1 && wo >= 1, strf("conv2d: empty output %dx%d for input %dx%d k=%d stride=%d pad=%d",
                                 ho, wo, h, wd, k, attrs.stride, attrs.pad));

  const std::vector<int> aout = detail::active_list(attrs.active_out, cout);
  const std::vector<int> ain = detail::active_list(attrs.active_in, cin);
  const int kk = k * k;
  const int kprime = int(ain.size()) * kk;
  const size_t p_cnt = size_t(ho) * wo;

  Tensor<T> y = Tensor<T>::zeros({n, cout, ho, wo});

  // Weight gathered as K' x |aout| so the inner product loop runs contiguous
  // over output channels.
  std::vector<T> wt(size_t(kprime) * aout.size());
  for (size_t ci = 0; ci < ain.size(); ++ci)
    for (int e = 0; e < kk; ++e)
      for (size_t co = 0; co < aout.size(); ++co)
        wt[(ci * kk + e) * aout.size() + co] =
            w.values()[(size_t(aout[co]) * cin + ain[ci]) * kk + e];

  std::vector<T> col(p_cnt * size_t(kprime));
  std::vector<T> yt(p_cnt * aout.size());
  const size_t x_img = size_t(cin) * h * wd;
  const size_t y_img = size_t(cout) * p_cnt;

  for (int img = 0; img < n; ++img) {
    detail::im2col(x.data() + size_t(img) * x_img, h, wd, k, attrs.stride, attrs.pad, ho, wo, ain,
                   size_t(h) * wd, col.data());
    std::fill(yt.begin(), yt.end(), T(0));
    const size_t nao = aout.size();
    for (size_t p = 0; p < p_cnt; ++p) {
      const T* crow = col.data() + p * kprime;
      T* yrow = yt.data() + p * nao;
      for (int e = 0; e < kprime; ++e) {
        const T a = crow[e];
        if (a == T(0)) continue;
        const T* wrow = wt.data() + size_t(e) * nao;
        for (size_t co = 0; co < nao; ++co) yrow[co] += a * wrow[co];
      }
    }
    T* yimg = y.data() + size_t(img) * y_img;
    for (size_t co = 0; co < nao; ++co) {
      T* plane = yimg + size_t(aout[co]) * p_cnt;
      const T b = bias ? bias->values()[size_t(aout[co])] : T(0);
      for (size_t p = 0; p < p_cnt; ++p) plane[p] = yt[p * nao + co] + b;
    }
  }

  const bool needs = x.requires_grad() || w.requires_grad() || (bias && bias->requires_grad());
  if (tape && needs) {
    y.set_requires_grad(true);
    Tensor<T> bias_t = bias ? *bias : Tensor<T>();
    const bool has_bias = bias != nullptr;
    Conv2dAttrs at = attrs;
    tape->record([x, w, bias_t, y, at, aout, ain, n, cin, h, wd, k, ho, wo, has_bias]() {
      const int kk = k * k;
      const int kprime = int(ain.size()) * kk;
      const size_t p_cnt = size_t(ho) * wo;
      const size_t nao = aout.size();
      const std::vector<T>& gy = y.grad();

      // Weight rows per active output channel for the dcol pass.
      std::vector<T> wmat(nao * size_t(kprime));
      for (size_t co = 0; co < nao; ++co)
        for (size_t ci = 0; ci < ain.size(); ++ci)
          for (int e = 0; e < kk; ++e)
            wmat[co * kprime + ci * kk + e] =
                w.values()[(size_t(aout[co]) * cin + ain[ci]) * kk + e];

      std::vector<T> col(p_cnt * size_t(kprime));
      std::vector<T> dyt(p_cnt * nao);
      std::vector<T> dcol;
      if (x.requires_grad()) dcol.assign(p_cnt * size_t(kprime), T(0));
      std::vector<T> dwloc;
      if (w.requires_grad()) dwloc.assign(nao * size_t(kprime), T(0));

      const size_t x_img = size_t(cin) * h * wd;
      const size_t y_img = size_t(y.dim(1)) * p_cnt;

      for (int img = 0; img < n; ++img) {
        const T* gyimg = gy.data() + size_t(img) * y_img;
        for (size_t co = 0; co < nao; ++co) {
          const T* plane = gyimg + size_t(aout[co]) * p_cnt;
          for (size_t p = 0; p < p_cnt; ++p) dyt[p * nao + co] = plane[p];
        }
        if (w.requires_grad() || x.requires_grad())
          detail::im2col(x.data() + size_t(img) * x_img, h, wd, k, at.stride, at.pad, ho, wo, ain,
                         size_t(h) * wd, col.data());
        if (w.requires_grad()) {
          for (size_t p = 0; p < p_cnt; ++p) {
            const T* crow = col.data() + p * kprime;
            const T* gyrow = dyt.data() + p * nao;
            for (size_t co = 0; co < nao; ++co) {
              const T g = gyrow[co];
              if (g == T(0)) continue;
              T* dwrow = dwloc.data() + co * kprime;
              for (int e = 0; e < kprime; ++e) dwrow[e] += g * crow[e];
            }
          }
        }
        if (x.requires_grad()) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          for (size_t p = 0; p < p_cnt; ++p) {
            T* drow = dcol.data() + p * kprime;
            const T* gyrow = dyt.data() + p * nao;
            for (size_t co = 0; co < nao; ++co) {
              const T g = gyrow[co];
              if (g == T(0)) continue;
              const T* wrow = wmat.data() + co * kprime;
              for (int e = 0; e < kprime; ++e) drow[e] += g * wrow[e];
            }
          }
          detail::col2im_add(dcol.data(), h, wd, k, at.stride, at.pad, ho, wo, ain,
                             x.grad().data() + size_t(img) * x_img, size_t(h) * wd);
        }
      }
      if (w.requires_grad()) {
        std::vector<T>& gw = w.grad();
        for (size_t co = 0; co < nao; ++co)
          for (size_t ci = 0; ci < ain.size(); ++ci)
            for (int e = 0; e < kk; ++e)
              gw[(size_t(aout[co]) * cin + ain[ci]) * kk + e] += dwloc[co * kprime + ci * kk + e];
      }
      if (has_bias && bias_t.requires_grad()) {
        std::vector<T>& gb = bias_t.grad();
        for (int img = 0; img < n; ++img) {
          const T* gyimg = gy.data() + size_t(img) * y_img;
          for (size_t co = 0; co < nao; ++co) {
            const T* plane = gyimg + size_t(aout[co]) * p_cnt;
            T s = 0;
            for (size_t p = 0; p < p_cnt; ++p) s += plane[p];
            gb[size_t(aout[co])] += s;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// batchnorm2d
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormAttrs {
  bool training = true;
  T momentum = T(0.1);
  T eps = T(1e-5);
  ChannelBits active;          // empty = all channels
  bool update_running = true;  // only honored in training mode
};

// Per-channel batch normalization over N, H, W. Inactive channels produce an
// all-zero output plane and neither read nor update their statistics, so one
// skipped step leaves their running stats untouched.
template <typename T>
Tensor<T> batchnorm2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, std::vector<T>& run_mean, std::vector<T>& run_var,
                      const BatchNormAttrs<T>& attrs) {
  check(x.ndim() == 4, "batchnorm2d: input must be NxCxHxW, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  check(gamma.ndim() == 1 && gamma.dim(0) == c, "batchnorm2d: gamma must be [C]");
  check(beta.ndim() == 1 && beta.dim(0) == c, "batchnorm2d: beta must be [C]");
  check(int(run_mean.size()) == c && int(run_var.size()) == c,
        "batchnorm2d: running stats must be [C]");

  const std::vector<int> act = detail::active_list(attrs.active, c);
  const size_t hw = size_t(h) * w;
  const size_t m = size_t(n) * hw;
  Tensor<T> y = Tensor<T>::zeros({n, c, h, w});

  // Normalization stats actually used, captured for the backward pass.
  std::vector<T> mean_used(act.size()), invstd_used(act.size());

  for (size_t a = 0; a < act.size(); ++a) {
    const int ch = act[a];
    T mean, var;
    if (attrs.training) {
      double s = 0;
      for (int img = 0; img < n; ++img) {
        const T* plane = x.data() + (size_t(img) * c + ch) * hw;
        for (size_t i = 0; i < hw; ++i) s += double(plane[i]);
      }
      mean = T(s / double(m));
      double sq = 0;
      for (int img = 0; img < n; ++img) {
        const T* plane = x.data() + (size_t(img) * c + ch) * hw;
        for (size_t i = 0; i < hw; ++i) {
          const double d = double(plane[i]) - double(mean);
          sq += d * d;
        }
      }
      var = T(sq / double(m));
      if (attrs.update_running) {
        const T unbiased = m > 1 ? T(sq / double(m - 1)) : var;
        run_mean[size_t(ch)] = (T(1) - attrs.momentum) * run_mean[size_t(ch)] + attrs.momentum * mean;
        run_var[size_t(ch)] = (T(1) - attrs.momentum) * run_var[size_t(ch)] + attrs.momentum * unbiased;
      }
    } else {
      mean = run_mean[size_t(ch)];
      var = run_var[size_t(ch)];
    }
    const T invstd = T(1) / std::sqrt(var + attrs.eps);
    mean_used[a] = mean;
    invstd_used[a] = invstd;
    const T g = gamma.values()[size_t(ch)];
    const T b = beta.values()[size_t(ch)];
    for (int img = 0; img < n; ++img) {
      const T* xp = x.data() + (size_t(img) * c + ch) * hw;
      T* yp = y.data() + (size_t(img) * c + ch) * hw;
      for (size_t i = 0; i < hw; ++i) yp[i] = g * (xp[i] - mean) * invstd + b;
    }
  }

  const bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  if (tape && needs) {
    y.set_requires_grad(true);
    const bool training = attrs.training;
    tape->record([x, gamma, beta, y, act, mean_used, invstd_used, n, c, h, w, training]() {
      const size_t hw = size_t(h) * w;
      const size_t m = size_t(n) * hw;
      const std::vector<T>& gy = y.grad();
      for (size_t a = 0; a < act.size(); ++a) {
        const int ch = act[a];
        const T mean = mean_used[a], invstd = invstd_used[a];
        const T g = gamma.values()[size_t(ch)];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int img = 0; img < n; ++img) {
          const T* xp = x.data() + (size_t(img) * c + ch) * hw;
          const T* gp = gy.data() + (size_t(img) * c + ch) * hw;
          for (size_t i = 0; i < hw; ++i) {
            sum_dy += double(gp[i]);
            sum_dy_xhat += double(gp[i]) * double((xp[i] - mean) * invstd);
          }
        }
        if (gamma.requires_grad()) gamma.grad()[size_t(ch)] += T(sum_dy_xhat);
        if (beta.requires_grad()) beta.grad()[size_t(ch)] += T(sum_dy);
        if (x.requires_grad()) {
          std::vector<T>& gx = x.grad();
          if (training) {
            const T c1 = g * invstd / T(m);
            for (int img = 0; img < n; ++img) {
              const T* xp = x.data() + (size_t(img) * c + ch) * hw;
              const T* gp = gy.data() + (size_t(img) * c + ch) * hw;
              T* dxp = gx.data() + (size_t(img) * c + ch) * hw;
              for (size_t i = 0; i < hw; ++i) {
                const T xhat = (xp[i] - mean) * invstd;
                dxp[i] += c1 * (T(m) * gp[i] - T(sum_dy) - xhat * T(sum_dy_xhat));
              }
            }
          } else {
            const T c1 = g * invstd;
            for (int img = 0; img < n; ++img) {
              const T* gp = gy.data() + (size_t(img) * c + ch) * hw;
              T* dxp = gx.data() + (size_t(img) * c + ch) * hw;
              for (size_t i = 0; i < hw; ++i) dxp[i] += c1 * gp[i];
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// elementwise / shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  const size_t n = x.numel();
  for (size_t i = 0; i < n; ++i) y.values()[i] = x.values()[i] > T(0) ? x.values()[i] : T(0);
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y]() {
      const std::vector<T>& gy = y.grad();
      std::vector<T>& gx = x.grad();
      for (size_t i = 0; i < gy.size(); ++i)
        if (x.values()[i] > T(0)) gx[i] += gy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(),
        "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = a.values()[i] + b.values()[i];
  if (tape && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    tape->record([a, b, y]() {
      const std::vector<T>& gy = y.grad();
      if (a.requires_grad()) {
        std::vector<T>& ga = a.grad();
        for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        std::vector<T>& gb = b.grad();
        for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul_scalar(Tape<T>* tape, const Tensor<T>& x, T s) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = x.values()[i] * s;
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y, s]() {
      const std::vector<T>& gy = y.grad();
      std::vector<T>& gx = x.grad();
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += s * gy[i];
    });
  }
  return y;
}

// Multiplies each channel (dim 1) by a per-channel factor. Factors are op
// attributes, not differentiated. Fractional factors are allowed, which is
// what the saliency first-order checks use.
template <typename T>
Tensor<T> channel_mask_mul(Tape<T>* tape, const Tensor<T>& x, const std::vector<T>& factors) {
  check(x.ndim() >= 2, "channel_mask_mul: input must have a channel dim, got " + shape_str(x.shape()));
  const int c = x.dim(1);
  check(int(factors.size()) == c,
        strf("channel_mask_mul: %zu factors for %d channels", factors.size(), c));
  size_t inner = 1;
  for (int d = 2; d < x.ndim(); ++d) inner *= size_t(x.dim(d));
  const int n = x.dim(0);
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  for (int img = 0; img < n; ++img)
    for (int ch = 0; ch < c; ++ch) {
      const T f = factors[size_t(ch)];
      const T* xp = x.data() + (size_t(img) * c + ch) * inner;
      T* yp = y.data() + (size_t(img) * c + ch) * inner;
      for (size_t i = 0; i < inner; ++i) yp[i] = f * xp[i];
    }
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y, factors, n, c, inner]() {
      const std::vector<T>& gy = y.grad();
      std::vector<T>& gx = x.grad();
      for (int img = 0; img < n; ++img)
        for (int ch = 0; ch < c; ++ch) {
          const T f = factors[size_t(ch)];
          if (f == T(0)) continue;
          const T* gp = gy.data() + (size_t(img) * c + ch) * inner;
          T* dxp = gx.data() + (size_t(img) * c + ch) * inner;
          for (size_t i = 0; i < inner; ++i) dxp[i] += f * gp[i];
        }
    });
  }
  return y;
}

template <typename T>
Tensor<T> flatten(Tape<T>* tape, const Tensor<T>& x) {
  check(x.ndim() >= 2, "flatten: input must have a batch dim, got " + shape_str(x.shape()));
  int features = 1;
  for (int d = 1; d < x.ndim(); ++d) features *= x.dim(d);
  Tensor<T> y = Tensor<T>::from({x.dim(0), features}, x.values());
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y]() {
      const std::vector<T>& gy = y.grad();
      std::vector<T>& gx = x.grad();
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> maxpool2d(Tape<T>* tape, const Tensor<T>& x, int k, int stride) {
  check(x.ndim() == 4, "maxpool2d: input must be NxCxHxW, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = detail::pooled_extent("maxpool2d", h, k, stride);
  const int wo = detail::pooled_extent("maxpool2d", w, k, stride);
  Tensor<T> y = Tensor<T>::zeros({n, c, ho, wo});
  std::vector<int32_t> argmax(size_t(n) * c * ho * wo);
  const size_t hw = size_t(h) * w;
  size_t oi = 0;
  for (int img = 0; img < n; ++img)
    for (int ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (size_t(img) * c + ch) * hw;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++oi) {
          T best = -std::numeric_limits<T>::infinity();
          int32_t best_i = -1;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride + ky, ix = ox * stride + kx;
              const T v = plane[size_t(iy) * w + ix];
              if (v > best) {
                best = v;
                best_i = int32_t(iy * w + ix);
              }
            }
          y.values()[oi] = best;
          argmax[oi] = best_i;
        }
    }
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y, argmax, n, c, hw, ho, wo]() {
      const std::vector<T>& gy = y.grad();
      std::vector<T>& gx = x.grad();
      const size_t per_plane = size_t(ho) * wo;
      size_t oi = 0;
      for (int img = 0; img < n; ++img)
        for (int ch = 0; ch < c; ++ch) {
          T* gplane = gx.data() + (size_t(img) * c + ch) * hw;
          for (size_t p = 0; p < per_plane; ++p, ++oi) gplane[size_t(argmax[oi])] += gy[oi];
        }
    });
  }
  return y;
}

template <typename T>
Tensor<T> avgpool2d(Tape<T>* tape, const Tensor<T>& x, int k, int stride) {
  check(x.ndim() == 4, "avgpool2d: input must be NxCxHxW, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = detail::pooled_extent("avgpool2d", h, k, stride);
  const int wo = detail::pooled_extent("avgpool2d", w, k, stride);
  Tensor<T> y = Tensor<T>::zeros({n, c, ho, wo});
  const size_t hw = size_t(h) * w;
  const T inv = T(1) / T(k * k);
  size_t oi = 0;
  for (int img = 0; img < n; ++img)
    for (int ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (size_t(img) * c + ch) * hw;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++oi) {
          T s = 0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              s += plane[size_t(oy * stride + ky) * w + (ox * stride + kx)];
          y.values()[oi] = s * inv;
        }
    }
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    tape->record([x, y, n, c, h, w, ho, wo, k, stride, inv]() {
      const std::vector<T>& gy = y.grad();
      std::vector<T>& gx = x.grad();
      const size_t hw = size_t(h) * w;
      size_t oi = 0;
      for (int img = 0; img < n; ++img)
        for (int ch = 0; ch < c; ++ch) {
          T* gplane = gx.data() + (size_t(img) * c + ch) * hw;
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox, ++oi) {
              const T g = gy[oi] * inv;
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx)
                  gplane[size_t(oy * stride + ky) * w + (ox * stride + kx)] += g;
            }
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// linear / loss
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
  check(x.ndim() == 2, "linear: input must be NxF, got " + shape_str(x.shape()));
  check(w.ndim() == 2, "linear: weight must be OxF, got " + shape_str(w.shape()));
  const int n = x.dim(0), f = x.dim(1), o = w.dim(0);
  check(w.dim(1) == f, strf("linear: weight expects %d features, input has %d", w.dim(1), f));
  if (bias) check(bias->ndim() == 1 && bias->dim(0) == o,
                  "linear: bias must be [O], got " + shape_str(bias->shape()));
  Tensor<T> y = Tensor<T>::zeros({n, o});
  for (int i = 0; i < n; ++i) {
    const T* xr = x.data() + size_t(i) * f;
    T* yr = y.data() + size_t(i) * o;
    for (int j = 0; j < o; ++j) {
      const T* wr = w.data() + size_t(j) * f;
      T s = bias ? bias->values()[size_t(j)] : T(0);
      for (int e = 0; e < f; ++e) s += xr[e] * wr[e];
      yr[j] = s;
    }
  }
  const bool needs = x.requires_grad() || w.requires_grad() || (bias && bias->requires_grad());
  if (tape && needs) {
    y.set_requires_grad(true);
    Tensor<T> bias_t = bias ? *bias : Tensor<T>();
    const bool has_bias = bias != nullptr;
    tape->record([x, w, bias_t, y, n, f, o, has_bias]() {
      const std::vector<T>& gy = y.grad();
      for (int i = 0; i < n; ++i) {
        const T* gr = gy.data() + size_t(i) * o;
        if (x.requires_grad()) {
          T* gxr = x.grad().data() + size_t(i) * f;
          for (int j = 0; j < o; ++j) {
            const T g = gr[j];
            if (g == T(0)) continue;
            const T* wr = w.data() + size_t(j) * f;
            for (int e = 0; e < f; ++e) gxr[e] += g * wr[e];
          }
        }
        if (w.requires_grad()) {
          const T* xr = x.data() + size_t(i) * f;
          for (int j = 0; j < o; ++j) {
            const T g = gr[j];
            if (g == T(0)) continue;
            T* gwr = w.grad().data() + size_t(j) * f;
            for (int e = 0; e < f; ++e) gwr[e] += g * xr[e];
          }
        }
        if (has_bias && bias_t.requires_grad()) {
          T* gb = bias_t.grad().data();
          for (int j = 0; j < o; ++j) gb[j] += gr[j];
        }
      }
    });
  }
  return y;
}

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits,
                                const std::vector<int>& labels) {
  check(logits.ndim() == 2, "softmax_cross_entropy: logits must be NxC, got " + shape_str(logits.shape()));
  const int n = logits.dim(0), c = logits.dim(1);
  check(int(labels.size()) == n,
        strf("softmax_cross_entropy: %zu labels for batch of %d", labels.size(), n));
  std::vector<T> probs(size_t(n) * c);
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    check(labels[size_t(i)] >= 0 && labels[size_t(i)] < c,
          strf("softmax_cross_entropy: label %d out of range [0,%d)", labels[size_t(i)], c));
    const T* row = logits.data() + size_t(i) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int j = 0; j < c; ++j) denom += std::exp(double(row[j] - mx));
    const double log_denom = std::log(denom);
    for (int j = 0; j < c; ++j)
      probs[size_t(i) * c + j] = T(std::exp(double(row[j] - mx)) / denom);
    loss += -(double(row[labels[size_t(i)]] - mx) - log_denom);
  }
  Tensor<T> out = Tensor<T>::scalar(T(loss / double(n)));
  if (tape && logits.requires_grad()) {
    out.set_requires_grad(true);
    tape->record([logits, out, probs, labels, n, c]() {
      const T gl = out.grad()[0];
      std::vector<T>& gx = logits.grad();
      const T invn = T(1) / T(n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          T p = probs[size_t(i) * c + j];
          if (j == labels[size_t(i)]) p -= T(1);
          gx[size_t(i) * c + j] += gl * p * invn;
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// finite differences (test oracle)
// ---------------------------------------------------------------------------

// Central-difference gradient of a scalar function; independent of the tape.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps) {
  check(eps > T(0), "finite_diff_grad: eps must be positive");
  Tensor<T> g = Tensor<T>::zeros(x.shape());
  Tensor<T> probe = x.clone();
  for (size_t i = 0; i < x.numel(); ++i) {
    const T orig = probe.values()[i];
    probe.values()[i] = orig + eps;
    const T hi = f(probe);
    probe.values()[i] = orig - eps;
    const T lo = f(probe);
    probe.values()[i] = orig;
    g.values()[i] = (hi - lo) / (T(2) * eps);
  }
  return g;
}

}  // namespace dce
