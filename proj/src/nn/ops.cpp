#include "difd/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

namespace difd::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapRow = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMapRow = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMapRow = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer size, in elements.
constexpr std::size_t kColBudget = std::size_t{1} << 22;

struct ConvDims {
  std::size_t n, in_c, in_h, in_w;
  std::size_t out_c, out_h, out_w;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.h != g.kernel_h || ws.w != g.kernel_w) {
    throw ConfigError("conv2d: weight " + ws.str() + " does not match kernel " + std::to_string(g.kernel_h) + "x" +
                      std::to_string(g.kernel_w));
  }
  if (g.stride_h == 0 || g.stride_w == 0 || g.dilation_h == 0 || g.dilation_w == 0) {
    throw ConfigError("conv2d: stride and dilation must be >= 1");
  }
  if (g.depthwise) {
    if (ws.c != 1 || ws.n != xs.c) {
      throw ConfigError("depthwise conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
    }
  } else if (ws.c != xs.c) {
    throw ConfigError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, input " + xs.str());
  }
  ConvDims d{};
  d.n = xs.n;
  d.in_c = xs.c;
  d.in_h = xs.h;
  d.in_w = xs.w;
  d.out_c = ws.n;
  d.out_h = conv_output_size(xs.h, g.kernel_h, g.stride_h, g.pad.top + g.pad.bottom, g.dilation_h);
  d.out_w = conv_output_size(xs.w, g.kernel_w, g.stride_w, g.pad.left + g.pad.right, g.dilation_w);
  return d;
}

template <typename T>
void check_bias(const Tensor<T>* bias, std::size_t channels, const char* what) {
  if (bias && (bias->shape() != Shape{1, channels, 1, 1})) {
    throw ConfigError(std::string(what) + ": bias " + bias->shape().str() + " expected (1, " +
                      std::to_string(channels) + ", 1, 1)");
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride_h == 1 && g.stride_w == 1 && g.pad.top == 0 &&
         g.pad.bottom == 0 && g.pad.left == 0 && g.pad.right == 0 && !g.depthwise;
}

// Source coordinate of kernel tap k for output position o, or -1 if in padding.
inline long tap(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad, std::size_t dil, std::size_t in) {
  const long s = static_cast<long>(o * stride + k * dil) - static_cast<long>(pad);
  return (s < 0 || s >= static_cast<long>(in)) ? -1 : s;
}

template <typename T>
void im2col(const T* x, const ConvDims& d, const ConvGeometry& g, std::size_t r0, std::size_t r1, T* col) {
  const std::size_t cols = (r1 - r0) * d.out_w;
  for (std::size_t c = 0; c < d.in_c; ++c) {
    const T* xp = x + c * d.in_h * d.in_w;
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        T* row = col + ((c * g.kernel_h + kh) * g.kernel_w + kw) * cols;
        for (std::size_t oh = r0; oh < r1; ++oh) {
          const long ih = tap(oh, kh, g.stride_h, g.pad.top, g.dilation_h, d.in_h);
          T* dst = row + (oh - r0) * d.out_w;
          if (ih < 0) {
            std::fill(dst, dst + d.out_w, T(0));
            continue;
          }
          const T* src = xp + static_cast<std::size_t>(ih) * d.in_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const long iw = tap(ow, kw, g.stride_w, g.pad.left, g.dilation_w, d.in_w);
            dst[ow] = iw < 0 ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, const ConvGeometry& g, std::size_t r0, std::size_t r1, T* dx) {
  const std::size_t cols = (r1 - r0) * d.out_w;
  for (std::size_t c = 0; c < d.in_c; ++c) {
    T* xp = dx + c * d.in_h * d.in_w;
    for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
      for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
        const T* row = col + ((c * g.kernel_h + kh) * g.kernel_w + kw) * cols;
        for (std::size_t oh = r0; oh < r1; ++oh) {
          const long ih = tap(oh, kh, g.stride_h, g.pad.top, g.dilation_h, d.in_h);
          if (ih < 0) continue;
          const T* src = row + (oh - r0) * d.out_w;
          T* dst = xp + static_cast<std::size_t>(ih) * d.in_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const long iw = tap(ow, kw, g.stride_w, g.pad.left, g.dilation_w, d.in_w);
            if (iw >= 0) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

std::size_t rows_per_chunk(std::size_t k, std::size_t out_w, std::size_t out_h) {
  const std::size_t per_row = std::max<std::size_t>(1, k * out_w);
  return std::clamp<std::size_t>(kColBudget / per_row, 1, out_h);
}

template <typename T>
void depthwise_forward(const Tensor<T>& x, const Tensor<T>& w, const ConvDims& d, const ConvGeometry& g, Tensor<T>& y) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.in_c; ++c) {
      const T* xp = x.plane(n, c);
      const T* wp = w.plane(c, 0);
      T* yp = y.plane(n, c);
      for (std::size_t oh = 0; oh < d.out_h; ++oh) {
        for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
          const long ih = tap(oh, kh, g.stride_h, g.pad.top, g.dilation_h, d.in_h);
          if (ih < 0) continue;
          const T* xr = xp + static_cast<std::size_t>(ih) * d.in_w;
          T* yr = yp + oh * d.out_w;
          for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
            const T wv = wp[kh * g.kernel_w + kw];
            for (std::size_t ow = 0; ow < d.out_w; ++ow) {
              const long iw = tap(ow, kw, g.stride_w, g.pad.left, g.dilation_w, d.in_w);
              if (iw >= 0) yr[ow] += wv * xr[iw];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const Tensor<T>& x, const Tensor<T>& w, const ConvDims& d, const ConvGeometry& g,
                        const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dw) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.in_c; ++c) {
      const T* xp = x.plane(n, c);
      const T* wp = w.plane(c, 0);
      const T* gp = dy.plane(n, c);
      T* dxp = dx ? dx->plane(n, c) : nullptr;
      T* dwp = dw ? dw->plane(c, 0) : nullptr;
      for (std::size_t oh = 0; oh < d.out_h; ++oh) {
        for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
          const long ih = tap(oh, kh, g.stride_h, g.pad.top, g.dilation_h, d.in_h);
          if (ih < 0) continue;
          const std::size_t row = static_cast<std::size_t>(ih) * d.in_w;
          const T* gr = gp + oh * d.out_w;
          for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
            const T wv = wp[kh * g.kernel_w + kw];
            T acc = 0;
            for (std::size_t ow = 0; ow < d.out_w; ++ow) {
              const long iw = tap(ow, kw, g.stride_w, g.pad.left, g.dilation_w, d.in_w);
              if (iw < 0) continue;
              acc += gr[ow] * xp[row + iw];
              if (dxp) dxp[row + iw] += wv * gr[ow];
            }
            if (dwp) dwp[kh * g.kernel_w + kw] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
void add_bias(Tensor<T>& y, const Tensor<T>& bias) {
  const Shape& s = y.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      T* p = y.plane(n, c);
      const T b = bias[c];
      for (std::size_t i = 0; i < s.plane(); ++i) p[i] += b;
    }
  }
}

template <typename T>
void bias_grad(const Tensor<T>& dy, Tensor<T>& db) {
  const Shape& s = dy.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* p = dy.plane(n, c);
      T acc = 0;
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      db[c] += acc;
    }
  }
}

template <typename T>
const Tensor<T>* opt_value(const Var<T>& v) {
  return v.defined() ? &v.value() : nullptr;
}

template <typename T>
Tensor<T>* opt_grad(const std::shared_ptr<Node<T>>& n) {
  return n->requires_grad ? &n->grad_buffer() : nullptr;
}

struct AxisLerp {
  std::vector<std::size_t> i0, i1;
  std::vector<double> frac;
};

AxisLerp bilinear_axis(std::size_t in, std::size_t out) {
  AxisLerp a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    a.i0[o] = lo;
    a.i1[o] = std::min(lo + 1, in - 1);
    a.frac[o] = src - static_cast<double>(lo);
  }
  return a;
}

void check_resize_target(std::size_t out_h, std::size_t out_w, const char* what) {
  if (out_h == 0 || out_w == 0) throw ConfigError(std::string(what) + ": target size must be >= 1");
}

}  // namespace

Padding Padding::same(std::size_t kh, std::size_t kw, std::size_t dil_h, std::size_t dil_w) {
  const std::size_t eh = dil_h * (kh - 1);
  const std::size_t ew = dil_w * (kw - 1);
  return {eh / 2, eh - eh / 2, ew / 2, ew - ew / 2};
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad_total,
                             std::size_t dilation) {
  const std::size_t effective = dilation * (kernel - 1) + 1;
  if (effective > in + pad_total) {
    throw ConfigError("convolution: effective kernel " + std::to_string(effective) + " exceeds padded input " +
                      std::to_string(in + pad_total));
  }
  return (in + pad_total - effective) / stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, const ConvGeometry& g) {
  if (!x.all_finite()) throw NumericError("conv2d: non-finite value in input " + x.shape().str());
  const ConvDims d = conv_dims(x, weight, g);
  check_bias(bias, d.out_c, "conv2d");
  Tensor<T> y(Shape{d.n, d.out_c, d.out_h, d.out_w});
  if (g.depthwise) {
    depthwise_forward(x, weight, d, g, y);
  } else {
    const std::size_t k = d.in_c * g.kernel_h * g.kernel_w;
    ConstMapRow<T> wm(weight.data(), static_cast<Eigen::Index>(d.out_c), static_cast<Eigen::Index>(k));
    if (is_pointwise(g)) {
      for (std::size_t n = 0; n < d.n; ++n) {
        ConstMapRow<T> xm(x.plane(n, 0), d.in_c, d.in_h * d.in_w);
        MapRow<T> ym(y.plane(n, 0), d.out_c, d.out_h * d.out_w);
        ym.noalias() = wm * xm;
      }
    } else {
      const std::size_t chunk = rows_per_chunk(k, d.out_w, d.out_h);
      std::vector<T> col(k * chunk * d.out_w);
      for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t r0 = 0; r0 < d.out_h; r0 += chunk) {
          const std::size_t r1 = std::min(d.out_h, r0 + chunk);
          const std::size_t cols = (r1 - r0) * d.out_w;
          im2col(x.plane(n, 0), d, g, r0, r1, col.data());
          ConstMapRow<T> cm(col.data(), k, cols);
          StridedMapRow<T> ym(y.plane(n, 0) + r0 * d.out_w, d.out_c, cols,
                              Eigen::OuterStride<>(d.out_h * d.out_w));
          ym.noalias() = wm * cm;
        }
      }
    }
  }
  if (bias) add_bias(y, *bias);
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvGeometry& g, const Tensor<T>& dy,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const ConvDims d = conv_dims(x, weight, g);
  if (dy.shape() != Shape{d.n, d.out_c, d.out_h, d.out_w}) {
    throw ConfigError("conv2d backward: gradient shape " + dy.shape().str());
  }
  if (dbias) bias_grad(dy, *dbias);
  if (g.depthwise) {
    depthwise_backward(x, weight, d, g, dy, dx, dweight);
    return;
  }
  const std::size_t k = d.in_c * g.kernel_h * g.kernel_w;
  ConstMapRow<T> wm(weight.data(), d.out_c, k);
  if (is_pointwise(g)) {
    for (std::size_t n = 0; n < d.n; ++n) {
      ConstMapRow<T> xm(x.plane(n, 0), d.in_c, d.in_h * d.in_w);
      ConstMapRow<T> gm(dy.plane(n, 0), d.out_c, d.out_h * d.out_w);
      if (dweight) {
        MapRow<T> dwm(dweight->data(), d.out_c, k);
        dwm.noalias() += gm * xm.transpose();
      }
      if (dx) {
        MapRow<T> dxm(dx->plane(n, 0), d.in_c, d.in_h * d.in_w);
        dxm.noalias() += wm.transpose() * gm;
      }
    }
    return;
  }
  const std::size_t chunk = rows_per_chunk(k, d.out_w, d.out_h);
  std::vector<T> col(k * chunk * d.out_w);
  std::vector<T> dcol(dx ? col.size() : 0);
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t r0 = 0; r0 < d.out_h; r0 += chunk) {
      const std::size_t r1 = std::min(d.out_h, r0 + chunk);
      const std::size_t cols = (r1 - r0) * d.out_w;
      ConstStridedMapRow<T> gm(dy.plane(n, 0) + r0 * d.out_w, d.out_c, cols, Eigen::OuterStride<>(d.out_h * d.out_w));
      if (dweight) {
        im2col(x.plane(n, 0), d, g, r0, r1, col.data());
        ConstMapRow<T> cm(col.data(), k, cols);
        MapRow<T> dwm(dweight->data(), d.out_c, k);
        dwm.noalias() += gm * cm.transpose();
      }
      if (dx) {
        MapRow<T> dcm(dcol.data(), k, cols);
        dcm.noalias() = wm.transpose() * gm;
        col2im_add(dcol.data(), d, g, r0, r1, dx->plane(n, 0));
      }
    }
  }
}

template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.n != xs.c || ws.h != ws.w) {
    throw ConfigError("conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  if (!x.all_finite()) throw NumericError("conv_transpose2d: non-finite value in input " + xs.str());
  const std::size_t k = ws.h;
  const std::size_t oc = ws.c;
  check_bias(bias, oc, "conv_transpose2d");
  const std::size_t hw = xs.h * xs.w;
  Tensor<T> y(Shape{xs.n, oc, xs.h * k, xs.w * k});
  ConstMapRow<T> wm(weight.data(), xs.c, oc * k * k);
  RowMat<T> tmp(oc * k * k, hw);
  for (std::size_t n = 0; n < xs.n; ++n) {
    ConstMapRow<T> xm(x.plane(n, 0), xs.c, hw);
    tmp.noalias() = wm.transpose() * xm;
    for (std::size_t o = 0; o < oc; ++o) {
      T* yp = y.plane(n, o);
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          const T* src = tmp.data() + ((o * k + a) * k + b) * hw;
          for (std::size_t i = 0; i < xs.h; ++i) {
            T* row = yp + (i * k + a) * xs.w * k;
            for (std::size_t j = 0; j < xs.w; ++j) row[j * k + b] = src[i * xs.w + j];
          }
        }
      }
    }
  }
  if (bias) add_bias(y, *bias);
  return y;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                               Tensor<T>* dweight, Tensor<T>* dbias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const std::size_t k = ws.h;
  const std::size_t oc = ws.c;
  const std::size_t hw = xs.h * xs.w;
  if (dbias) bias_grad(dy, *dbias);
  ConstMapRow<T> wm(weight.data(), xs.c, oc * k * k);
  RowMat<T> g(oc * k * k, hw);
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t o = 0; o < oc; ++o) {
      const T* gp = dy.plane(n, o);
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          T* dst = g.data() + ((o * k + a) * k + b) * hw;
          for (std::size_t i = 0; i < xs.h; ++i) {
            const T* row = gp + (i * k + a) * xs.w * k;
            for (std::size_t j = 0; j < xs.w; ++j) dst[i * xs.w + j] = row[j * k + b];
          }
        }
      }
    }
    ConstMapRow<T> xm(x.plane(n, 0), xs.c, hw);
    if (dx) {
      MapRow<T> dxm(dx->plane(n, 0), xs.c, hw);
      dxm.noalias() += wm * g;
    }
    if (dweight) {
      MapRow<T> dwm(dweight->data(), xs.c, oc * k * k);
      dwm.noalias() += xm * g.transpose();
    }
  }
}

template <typename T>
Tensor<T> resize_nearest_forward(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  check_resize_target(out_h, out_w, "resize_nearest");
  const Shape& s = x.shape();
  Tensor<T> y(Shape{s.n, s.c, out_h, out_w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* xp = x.plane(n, c);
      T* yp = y.plane(n, c);
      for (std::size_t i = 0; i < out_h; ++i) {
        const std::size_t si = i * s.h / out_h;
        for (std::size_t j = 0; j < out_w; ++j) yp[i * out_w + j] = xp[si * s.w + j * s.w / out_w];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> resize_bilinear_forward(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  check_resize_target(out_h, out_w, "resize_bilinear");
  const Shape& s = x.shape();
  const AxisLerp ah = bilinear_axis(s.h, out_h);
  const AxisLerp aw = bilinear_axis(s.w, out_w);
  Tensor<T> y(Shape{s.n, s.c, out_h, out_w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* xp = x.plane(n, c);
      T* yp = y.plane(n, c);
      for (std::size_t i = 0; i < out_h; ++i) {
        const double fy = ah.frac[i];
        const T* r0 = xp + ah.i0[i] * s.w;
        const T* r1 = xp + ah.i1[i] * s.w;
        for (std::size_t j = 0; j < out_w; ++j) {
          const double fx = aw.frac[j];
          const double top = (1 - fx) * r0[aw.i0[j]] + fx * r0[aw.i1[j]];
          const double bot = (1 - fx) * r1[aw.i0[j]] + fx * r1[aw.i1[j]];
          yp[i * out_w + j] = static_cast<T>((1 - fy) * top + fy * bot);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> pixel_shuffle_forward(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  if (r == 0 || s.c % (r * r) != 0) {
    throw ConfigError("pixel_shuffle: " + std::to_string(s.c) + " channels not divisible by r^2 = " +
                      std::to_string(r * r));
  }
  const std::size_t oc = s.c / (r * r);
  Tensor<T> y(Shape{s.n, oc, s.h * r, s.w * r});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < oc; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const T* src = x.plane(n, c * r * r + i * r + j);
          T* dst = y.plane(n, c);
          for (std::size_t h = 0; h < s.h; ++h)
            for (std::size_t w = 0; w < s.w; ++w) dst[(h * r + i) * s.w * r + w * r + j] = src[h * s.w + w];
        }
  return y;
}

template <typename T>
Tensor<T> pixel_unshuffle_forward(const Tensor<T>& x, std::size_t r) {
  const Shape& s = x.shape();
  if (r == 0 || s.h % r != 0 || s.w % r != 0) {
    throw ConfigError("pixel_unshuffle: spatial size " + s.str() + " not divisible by " + std::to_string(r));
  }
  const std::size_t h = s.h / r;
  const std::size_t w = s.w / r;
  Tensor<T> y(Shape{s.n, s.c * r * r, h, w});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          T* dst = y.plane(n, c * r * r + i * r + j);
          const T* src = x.plane(n, c);
          for (std::size_t a = 0; a < h; ++a)
            for (std::size_t b = 0; b < w; ++b) dst[a * w + b] = src[(a * r + i) * s.w + b * r + j];
        }
  return y;
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& geom) {
  Tensor<T> y = conv2d_forward(x.value(), weight.value(), opt_value(bias), geom);
  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result<T>(std::move(y), std::move(parents), [geom](Node<T>& self) {
    auto& xs = self.parents[0];
    auto& ws = self.parents[1];
    Tensor<T>* db = self.parents.size() > 2 ? opt_grad(self.parents[2]) : nullptr;
    conv2d_backward(xs->value, ws->value, geom, self.grad, opt_grad(xs), opt_grad(ws), db);
  });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  Tensor<T> y = conv_transpose2d_forward(x.value(), weight.value(), opt_value(bias));
  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result<T>(std::move(y), std::move(parents), [](Node<T>& self) {
    auto& xs = self.parents[0];
    auto& ws = self.parents[1];
    Tensor<T>* db = self.parents.size() > 2 ? opt_grad(self.parents[2]) : nullptr;
    conv_transpose2d_backward(xs->value, ws->value, self.grad, opt_grad(xs), opt_grad(ws), db);
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Var<T>& running_mean,
                  Var<T>& running_var, Mode mode, const BatchNormOptions& opts) {
  const Shape& s = x.shape();
  const Shape cshape{1, s.c, 1, 1};
  if (gamma.shape() != cshape || beta.shape() != cshape || running_mean.shape() != cshape ||
      running_var.shape() != cshape) {
    throw ConfigError("batch_norm: per-channel parameters do not match input " + s.str());
  }
  if (!(opts.eps > 0)) throw ConfigError("batch_norm: eps must be positive");
  const std::size_t count = s.n * s.plane();
  std::vector<double> mu(s.c), inv_std(s.c);
  if (mode == Mode::Train) {
    Tensor<T>& rm = running_mean.mutable_value();
    Tensor<T>& rv = running_var.mutable_value();
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      }
      const double m = acc / static_cast<double>(count);
      double sq = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const double var = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + opts.eps);
      rm[c] = static_cast<T>((1 - opts.momentum) * rm[c] + opts.momentum * m);
      rv[c] = static_cast<T>((1 - opts.momentum) * rv[c] + opts.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < s.c; ++c) {
      mu[c] = running_mean.value()[c];
      inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var.value()[c]) + opts.eps);
    }
  }
  Tensor<T> y(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const double gm = gamma.value()[c];
      const double bt = beta.value()[c];
      const T* p = x.value().plane(n, c);
      T* q = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) q[i] = static_cast<T>(gm * (p[i] - mu[c]) * inv_std[c] + bt);
    }
  }
  return make_result<T>(std::move(y), {x, gamma, beta},
                        [mu = std::move(mu), inv_std = std::move(inv_std), mode, count](Node<T>& self) {
    const Tensor<T>& xv = self.parents[0]->value;
    const Tensor<T>& gv = self.parents[1]->value;
    Tensor<T>* dx = opt_grad(self.parents[0]);
    Tensor<T>* dg = opt_grad(self.parents[1]);
    Tensor<T>* db = opt_grad(self.parents[2]);
    const Shape& s = xv.shape();
    const Tensor<T>& dy = self.grad;
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum_dy = 0;
      double sum_dy_xhat = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = xv.plane(n, c);
        const T* g = dy.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          sum_dy += g[i];
          sum_dy_xhat += g[i] * (p[i] - mu[c]) * inv_std[c];
        }
      }
      if (dg) (*dg)[c] += static_cast<T>(sum_dy_xhat);
      if (db) (*db)[c] += static_cast<T>(sum_dy);
      if (!dx) continue;
      const double gm = gv[c];
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = xv.plane(n, c);
        const T* g = dy.plane(n, c);
        T* out = dx->plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          if (mode == Mode::Train) {
            const double xhat = (p[i] - mu[c]) * inv_std[c];
            const double m = static_cast<double>(count);
            out[i] += static_cast<T>(gm * inv_std[c] * (g[i] - sum_dy / m - xhat * sum_dy_xhat / m));
          } else {
            out[i] += static_cast<T>(gm * inv_std[c] * g[i]);
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> elu(const Var<T>& x, T alpha) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T v = xv[i];
    y[i] = v > 0 ? v : alpha * std::expm1(v);
  }
  return make_result<T>(std::move(y), {x}, [alpha](Node<T>& self) {
    const Tensor<T>& xv = self.parents[0]->value;
    Tensor<T>& dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      dx[i] += self.grad[i] * (v >= 0 ? T(1) : alpha * std::exp(v));
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().require_same_shape(b.value(), "add");
  Tensor<T> y = a.value();
  y += b.value();
  return make_result<T>(std::move(y), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer() += self.grad;
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  const Shape& s0 = parts.front().shape();
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ConfigError("concat_channels: spatial mismatch " + s.str() + " vs " + s0.str());
    }
    channels += s.c;
  }
  Tensor<T> y(Shape{s0.n, channels, s0.h, s0.w});
  for (std::size_t n = 0; n < s0.n; ++n) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.shape().c * s0.plane();
      std::copy_n(p.value().plane(n, 0), len, y.plane(n, off));
      off += p.shape().c;
    }
  }
  return make_result<T>(std::move(y), parts, [](Node<T>& self) {
    const Shape& s = self.value.shape();
    for (std::size_t n = 0; n < s.n; ++n) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        const std::size_t c = p->value.shape().c;
        if (p->requires_grad) {
          T* dst = p->grad_buffer().plane(n, 0);
          const T* src = self.grad.plane(n, off);
          for (std::size_t i = 0; i < c * s.plane(); ++i) dst[i] += src[i];
        }
        off += c;
      }
    }
  });
}

template <typename T>
Var<T> resize_nearest(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  return make_result<T>(resize_nearest_forward(x.value(), out_h, out_w), {x}, [](Node<T>& self) {
    const Shape& is = self.parents[0]->value.shape();
    const Shape& os = self.value.shape();
    Tensor<T>& dx = self.parents[0]->grad_buffer();
    for (std::size_t n = 0; n < os.n; ++n)
      for (std::size_t c = 0; c < os.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = dx.plane(n, c);
        for (std::size_t i = 0; i < os.h; ++i) {
          const std::size_t si = i * is.h / os.h;
          for (std::size_t j = 0; j < os.w; ++j) d[si * is.w + j * is.w / os.w] += g[i * os.w + j];
        }
      }
  });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  return make_result<T>(resize_bilinear_forward(x.value(), out_h, out_w), {x}, [](Node<T>& self) {
    const Shape& is = self.parents[0]->value.shape();
    const Shape& os = self.value.shape();
    const AxisLerp ah = bilinear_axis(is.h, os.h);
    const AxisLerp aw = bilinear_axis(is.w, os.w);
    Tensor<T>& dx = self.parents[0]->grad_buffer();
    for (std::size_t n = 0; n < os.n; ++n)
      for (std::size_t c = 0; c < os.c; ++c) {
        const T* g = self.grad.plane(n, c);
        T* d = dx.plane(n, c);
        for (std::size_t i = 0; i < os.h; ++i) {
          const double fy = ah.frac[i];
          for (std::size_t j = 0; j < os.w; ++j) {
            const double fx = aw.frac[j];
            const double v = g[i * os.w + j];
            d[ah.i0[i] * is.w + aw.i0[j]] += static_cast<T>((1 - fy) * (1 - fx) * v);
            d[ah.i0[i] * is.w + aw.i1[j]] += static_cast<T>((1 - fy) * fx * v);
            d[ah.i1[i] * is.w + aw.i0[j]] += static_cast<T>(fy * (1 - fx) * v);
            d[ah.i1[i] * is.w + aw.i1[j]] += static_cast<T>(fy * fx * v);
          }
        }
      }
  });
}

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r) {
  return make_result<T>(pixel_shuffle_forward(x.value(), r), {x}, [r](Node<T>& self) {
    self.parents[0]->grad_buffer() += pixel_unshuffle_forward(self.grad, r);
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0;
  for (T v : x.value().values()) acc += v;
  return make_result<T>(Tensor<T>(Shape{}, static_cast<T>(acc)), {x}, [](Node<T>& self) {
    Tensor<T>& dx = self.parents[0]->grad_buffer();
    const T g = self.grad[0];
    for (auto& v : dx.values()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  double acc = 0;
  for (T v : x.value().values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.value().size());
  return make_result<T>(Tensor<T>(Shape{}, static_cast<T>(acc * inv)), {x}, [inv](Node<T>& self) {
    Tensor<T>& dx = self.parents[0]->grad_buffer();
    const T g = static_cast<T>(self.grad[0] * inv);
    for (auto& v : dx.values()) v += g;
  });
}

#define DIFD_INSTANTIATE_OPS(T)                                                                                  \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvGeometry&);   \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&, const Tensor<T>&,       \
                                Tensor<T>*, Tensor<T>*, Tensor<T>*);                                             \
  template Tensor<T> conv_transpose2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);             \
  template void conv_transpose2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,      \
                                          Tensor<T>*, Tensor<T>*);                                               \
  template Tensor<T> resize_nearest_forward(const Tensor<T>&, std::size_t, std::size_t);                         \
  template Tensor<T> resize_bilinear_forward(const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> pixel_shuffle_forward(const Tensor<T>&, std::size_t);                                       \
  template Tensor<T> pixel_unshuffle_forward(const Tensor<T>&, std::size_t);                                     \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvGeometry&);                      \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&);                                 \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Var<T>&, Var<T>&, Mode,                \
                             const BatchNormOptions&);                                                           \
  template Var<T> elu(const Var<T>&, T);                                                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                             \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                                   \
  template Var<T> resize_nearest(const Var<T>&, std::size_t, std::size_t);                                       \
  template Var<T> resize_bilinear(const Var<T>&, std::size_t, std::size_t);                                      \
  template Var<T> pixel_shuffle(const Var<T>&, std::size_t);                                                     \
  template Var<T> sum(const Var<T>&);                                                                            \
  template Var<T> mean(const Var<T>&);

DIFD_INSTANTIATE_OPS(float)
DIFD_INSTANTIATE_OPS(double)

}  // namespace difd::nn
