#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "difd/nn/ops.hpp"
#include "difd/nn/params.hpp"

namespace difd::nn {

/// Spatial arithmetic of the satellite branch: the entry map (sat_size) is
/// resized to pre_size, then doubled n_stages times to reach target_size.
struct SpatialPlan {
  std::size_t sat_size = 26;
  std::size_t pre_size = 16;
  std::size_t n_stages = 3;
  std::size_t target_size = 128;

  static SpatialPlan reference() { return {26, 16, 3, 128}; }

  /// Throws ConfigError unless pre_size * 2^n_stages == target_size.
  void validate() const;
  /// Pixel-shuffle factor target_size / pre_size (== 2^n_stages).
  std::size_t shuffle_factor() const { return target_size / pre_size; }

  bool operator==(const SpatialPlan&) const = default;
};

struct DpcBranch {
  int source = -1;  ///< -1: encoder features, otherwise index of an earlier branch
  std::size_t rate_h = 1;
  std::size_t rate_w = 1;
};

struct DpcConfig {
  std::size_t branch_channels = 256;
  std::vector<DpcBranch> branches;

  /// Five-branch cell with anisotropic rates (1x6, 18x15, 6x3, 1x1, 6x21).
  static DpcConfig reference();
  void validate() const;
};

template <typename T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  ConvGeometry geom;

  Conv2d() = default;
  Conv2d(ParamBuilder<T> b, std::size_t in, std::size_t out, ConvGeometry geom, bool with_bias = true);
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, geom); }
};

template <typename T>
struct ConvTranspose2d {
  Var<T> weight;
  Var<T> bias;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamBuilder<T> b, std::size_t in, std::size_t out, std::size_t kernel = 2);
  Var<T> operator()(const Var<T>& x) const { return conv_transpose2d(x, weight, bias); }
};

template <typename T>
struct BatchNorm2d {
  Var<T> gamma;
  Var<T> beta;
  Var<T> running_mean;
  Var<T> running_var;
  BatchNormOptions opts;

  BatchNorm2d() = default;
  BatchNorm2d(ParamBuilder<T> b, std::size_t channels);
  Var<T> operator()(const Var<T>& x, Mode mode) { return batch_norm(x, gamma, beta, running_mean, running_var, mode, opts); }
};

/// Depthwise 3x3 (optionally strided / dilated) followed by a pointwise conv.
template <typename T>
struct SeparableConv {
  Conv2d<T> depthwise;
  Conv2d<T> pointwise;

  SeparableConv() = default;
  SeparableConv(ParamBuilder<T> b, std::size_t in, std::size_t out, std::size_t stride = 1, std::size_t rate_h = 1,
                std::size_t rate_w = 1);
  Var<T> operator()(const Var<T>& x) const { return pointwise(depthwise(x)); }
};

enum class StageConv { Pointwise, Same2x2 };

/// ELU(BN(Conv(ConvTranspose2x2/2(x)))); doubles the spatial size.
template <typename T>
struct UpConvTStage {
  ConvTranspose2d<T> up;
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  UpConvTStage() = default;
  UpConvTStage(ParamBuilder<T> b, std::size_t in, std::size_t out, StageConv kind);
  Var<T> operator()(const Var<T>& x, Mode mode);
};

/// Channel depths of the satellite upsampler: entry depth 8*C2, geometric
/// interpolation towards out_channels over n_stages. Length n_stages + 1.
std::vector<std::size_t> tcl_channel_schedule(std::size_t in_channels, std::size_t out_channels, std::size_t n_stages);

/// Transposed-convolution satellite upsampler:
/// stages(resize(BN(Conv2x2(DWConv3x3(x))), pre_size)).
template <typename T>
struct TclUpsampler {
  SpatialPlan plan;
  Conv2d<T> dw;
  Conv2d<T> entry;
  BatchNorm2d<T> entry_bn;
  std::vector<UpConvTStage<T>> stages;

  TclUpsampler() = default;
  TclUpsampler(ParamBuilder<T> b, std::size_t in_channels, std::size_t out_channels, const SpatialPlan& plan);
  Var<T> operator()(const Var<T>& x, Mode mode);
};

/// Pixel-shuffle satellite upsampler: ConvTranspose2x2/2, nearest resize to
/// 2*pre_size, Conv3x3/2 down to pre_size, Conv3x3 to out*r^2 channels, then
/// pixel shuffle by r = target/pre.
template <typename T>
struct PsUpsampler {
  SpatialPlan plan;
  std::size_t out_channels = 0;
  ConvTranspose2d<T> up;
  Conv2d<T> reduce;
  Conv2d<T> expand;

  PsUpsampler() = default;
  PsUpsampler(ParamBuilder<T> b, std::size_t in_channels, std::size_t mid_channels, std::size_t out_channels,
              const SpatialPlan& plan);
  Var<T> pre_shuffle(const Var<T>& x) const;
  Var<T> operator()(const Var<T>& x) const { return pixel_shuffle(pre_shuffle(x), plan.shuffle_factor()); }
};

/// Dense-prediction-cell head: dilated separable branches over a branch DAG,
/// channel concat, 1x1 projection.
template <typename T>
struct DpcHead {
  DpcConfig cfg;
  std::vector<SeparableConv<T>> branch_convs;
  std::vector<BatchNorm2d<T>> branch_bns;
  Conv2d<T> project;
  BatchNorm2d<T> project_bn;

  DpcHead() = default;
  DpcHead(ParamBuilder<T> b, std::size_t in_channels, std::size_t out_channels, DpcConfig cfg);
  Var<T> operator()(const Var<T>& x, Mode mode);
};

// Functional entry points used by tests and the model.
template <typename T>
Var<T> up_convt_stage(const Var<T>& x, UpConvTStage<T>& p, Mode mode) {
  return p(x, mode);
}
template <typename T>
Var<T> tcl_upsample(const Var<T>& x, TclUpsampler<T>& p, Mode mode) {
  return p(x, mode);
}
template <typename T>
Var<T> ps_upsample(const Var<T>& x, const PsUpsampler<T>& p) {
  return p(x);
}
template <typename T>
Var<T> dpc_refine(const Var<T>& x, DpcHead<T>& p, Mode mode) {
  return p(x, mode);
}
template <typename T>
Var<T> nearest_upsample(const Var<T>& x, std::size_t target) {
  return resize_nearest(x, target, target);
}
template <typename T>
Var<T> bilinear_upsample(const Var<T>& x, std::size_t target) {
  return resize_bilinear(x, target, target);
}

}  // namespace difd::nn
