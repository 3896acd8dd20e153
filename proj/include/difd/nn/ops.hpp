#pragma once

#include <cstddef>
#include <vector>

#include "difd/autograd.hpp"
#include "difd/tensor.hpp"

namespace difd::nn {

/// Explicit per-side zero padding. Asymmetric padding is needed for the
/// "same" 2x2 convolution (pad right and bottom by one).
struct Padding {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  static Padding uniform(std::size_t p) { return {p, p, p, p}; }
  /// Output size equals input size at stride 1. Odd effective kernels pad
  /// symmetrically; even ones put the extra row/column at bottom/right.
  static Padding same(std::size_t kh, std::size_t kw, std::size_t dil_h = 1, std::size_t dil_w = 1);
};

struct ConvGeometry {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding pad{};
  std::size_t dilation_h = 1;
  std::size_t dilation_w = 1;
  bool depthwise = false;

  static ConvGeometry square(std::size_t k, std::size_t stride = 1, Padding pad = {}) {
    ConvGeometry g;
    g.kernel_h = g.kernel_w = k;
    g.stride_h = g.stride_w = stride;
    g.pad = pad;
    return g;
  }
};

/// floor((in + pad_total - dilation*(k-1) - 1) / stride) + 1; throws
/// ConfigError when the dilated kernel does not fit the padded input.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad_total,
                             std::size_t dilation);

// ---------------------------------------------------------------------------
// Raw kernels. Backward variants accumulate into the provided buffers; any of
// the gradient pointers may be null.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias,
                         const ConvGeometry& geom);

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const ConvGeometry& geom, const Tensor<T>& dy,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias);

/// Transposed convolution with kernel == stride (non-overlapping windows).
/// weight is (C_in, C_out, k, k).
template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                               Tensor<T>* dweight, Tensor<T>* dbias);

template <typename T>
Tensor<T> resize_nearest_forward(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> resize_bilinear_forward(const Tensor<T>& x, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> pixel_shuffle_forward(const Tensor<T>& x, std::size_t r);

template <typename T>
Tensor<T> pixel_unshuffle_forward(const Tensor<T>& x, std::size_t r);

// ---------------------------------------------------------------------------
// Differentiable ops.

/// Cross-correlation. weight is (C_out, C_in, kh, kw), or (C, 1, kh, kw) when
/// geom.depthwise. bias is (1, C_out, 1, 1) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& geom);

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

enum class Mode { Train, Eval };

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel batch normalisation. In Train mode normalises with biased
/// batch statistics and updates the running buffers in place (running_var
/// receives the unbiased estimate); Eval mode uses the running buffers.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Var<T>& running_mean,
                  Var<T>& running_var, Mode mode, const BatchNormOptions& opts = {});

/// x if x > 0 else alpha*(exp(x)-1). The derivative at 0 is taken as 1.
template <typename T>
Var<T> elu(const Var<T>& x, T alpha = T(1));

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// src = floor(dst * in / out) on each axis.
template <typename T>
Var<T> resize_nearest(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// Half-pixel centres, no corner alignment, edge clamping.
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w);

/// out[b, c, h*r+i, w*r+j] = in[b, c*r*r + i*r + j, h, w]
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, std::size_t r);

/// Sum of all elements as a (1,1,1,1) scalar.
template <typename T>
Var<T> sum(const Var<T>& x);

/// Mean of all elements as a (1,1,1,1) scalar.
template <typename T>
Var<T> mean(const Var<T>& x);

}  // namespace difd::nn
