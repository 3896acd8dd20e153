#pragma once

// Independent reference implementations used to freeze expected values.
// Deliberately naive: direct loops, no shared code with src/.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "difd/tensor.hpp"

namespace oracle {

using difd::Shape;
using difd::Tensor;

inline Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(s);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

/// Direct cross-correlation with per-side padding, stride, dilation.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                             std::size_t stride_h, std::size_t stride_w, long pad_top, long pad_bottom, long pad_left,
                             long pad_right, std::size_t dil_h, std::size_t dil_w, bool depthwise) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const long H = static_cast<long>(xs.h), W = static_cast<long>(xs.w);
  const long KH = static_cast<long>(ws.h), KW = static_cast<long>(ws.w);
  const long OH = (H + pad_top + pad_bottom - static_cast<long>(dil_h) * (KH - 1) - 1) / static_cast<long>(stride_h) + 1;
  const long OW = (W + pad_left + pad_right - static_cast<long>(dil_w) * (KW - 1) - 1) / static_cast<long>(stride_w) + 1;
  Tensor<double> y(Shape{xs.n, ws.n, static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (long i = 0; i < OH; ++i)
        for (long j = 0; j < OW; ++j) {
          double acc = b ? (*b)[o] : 0.0;
          const std::size_t c0 = depthwise ? o : 0;
          const std::size_t c1 = depthwise ? o + 1 : xs.c;
          for (std::size_t c = c0; c < c1; ++c)
            for (long a = 0; a < KH; ++a)
              for (long bb = 0; bb < KW; ++bb) {
                const long r = i * static_cast<long>(stride_h) + a * static_cast<long>(dil_h) - pad_top;
                const long s = j * static_cast<long>(stride_w) + bb * static_cast<long>(dil_w) - pad_left;
                if (r < 0 || r >= H || s < 0 || s >= W) continue;
                const double wv = depthwise ? w(o, 0, a, bb) : w(o, c, a, bb);
                acc += wv * x(n, c, r, s);
              }
          y(n, o, i, j) = acc;
        }
  return y;
}

/// Transposed conv (kernel k, stride k) by scattering every input pixel.
inline Tensor<double> conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t k = ws.h;
  Tensor<double> y(Shape{xs.n, ws.c, xs.h * k, xs.w * k});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t ic = 0; ic < xs.c; ++ic)
      for (std::size_t i = 0; i < xs.h; ++i)
        for (std::size_t j = 0; j < xs.w; ++j)
          for (std::size_t oc = 0; oc < ws.c; ++oc)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t c = 0; c < k; ++c) y(n, oc, i * k + a, j * k + c) += x(n, ic, i, j) * w(ic, oc, a, c);
  if (b)
    for (std::size_t n = 0; n < xs.n; ++n)
      for (std::size_t oc = 0; oc < ws.c; ++oc)
        for (std::size_t i = 0; i < xs.h * k; ++i)
          for (std::size_t j = 0; j < xs.w * k; ++j) y(n, oc, i, j) += (*b)[oc];
  return y;
}

/// Two-pass per-channel mean / biased variance.
inline void channel_stats(const Tensor<double>& x, std::vector<double>& mean, std::vector<double>& var) {
  const auto& s = x.shape();
  mean.assign(s.c, 0.0);
  var.assign(s.c, 0.0);
  const double m = static_cast<double>(s.n * s.h * s.w);
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) mean[c] += x(n, c, i, j);
    mean[c] /= m;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) var[c] += (x(n, c, i, j) - mean[c]) * (x(n, c, i, j) - mean[c]);
    var[c] /= m;
  }
}

inline Tensor<double> batch_norm(const Tensor<double>& x, const std::vector<double>& mean,
                                 const std::vector<double>& var, const std::vector<double>& gamma,
                                 const std::vector<double>& beta, double eps) {
  Tensor<double> y(x.shape());
  const auto& s = x.shape();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j)
          y(n, c, i, j) = gamma[c] * (x(n, c, i, j) - mean[c]) / std::sqrt(var[c] + eps) + beta[c];
  return y;
}

inline Tensor<double> elu(const Tensor<double>& x) {
  Tensor<double> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : std::exp(x[i]) - 1.0;
  return y;
}

inline Tensor<double> nearest(const Tensor<double>& x, std::size_t oh, std::size_t ow) {
  const auto& s = x.shape();
  Tensor<double> y(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const auto si = static_cast<std::size_t>(std::floor(static_cast<double>(i) * s.h / oh));
          const auto sj = static_cast<std::size_t>(std::floor(static_cast<double>(j) * s.w / ow));
          y(n, c, i, j) = x(n, c, si, sj);
        }
  return y;
}

inline Tensor<double> pixel_shuffle(const Tensor<double>& x, std::size_t r) {
  const auto& s = x.shape();
  Tensor<double> y(Shape{s.n, s.c / (r * r), s.h * r, s.w * r});
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c / (r * r); ++c)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w)
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j) y(b, c, h * r + i, w * r + j) = x(b, c * r * r + i * r + j, h, w);
  return y;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
