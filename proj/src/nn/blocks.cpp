#include "difd/nn/blocks.hpp"

#include <cmath>

namespace difd::nn {

void SpatialPlan::validate() const {
  if (sat_size == 0 || pre_size == 0 || target_size == 0) {
    throw ConfigError("spatial plan: sizes must be >= 1");
  }
  if (n_stages > 30 || (pre_size << n_stages) != target_size) {
    throw ConfigError("spatial plan (" + std::to_string(sat_size) + ", " + std::to_string(pre_size) + ", " +
                      std::to_string(n_stages) + ", " + std::to_string(target_size) +
                      ") violates pre_size * 2^n_stages == target_size");
  }
}

DpcConfig DpcConfig::reference() {
  DpcConfig c;
  c.branch_channels = 256;
  c.branches = {{-1, 1, 6}, {0, 18, 15}, {0, 6, 3}, {0, 1, 1}, {3, 6, 21}};
  return c;
}

void DpcConfig::validate() const {
  if (branches.empty()) throw ConfigError("DPC: at least one branch required");
  if (branch_channels == 0) throw ConfigError("DPC: branch_channels must be >= 1");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const auto& br = branches[i];
    if (br.source >= static_cast<int>(i) || br.source < -1) {
      throw ConfigError("DPC: branch " + std::to_string(i) + " reads from branch " + std::to_string(br.source) +
                        ", which is not an earlier branch");
    }
    if (br.rate_h == 0 || br.rate_w == 0) throw ConfigError("DPC: dilation rates must be >= 1");
  }
}

template <typename T>
Conv2d<T>::Conv2d(ParamBuilder<T> b, std::size_t in, std::size_t out, ConvGeometry g, bool with_bias) : geom(g) {
  if (g.depthwise) {
    if (in != out) throw ConfigError("depthwise conv requires equal in/out channels");
    weight = b.kaiming("weight", Shape{out, 1, g.kernel_h, g.kernel_w}, g.kernel_h * g.kernel_w);
  } else {
    weight = b.kaiming("weight", Shape{out, in, g.kernel_h, g.kernel_w}, in * g.kernel_h * g.kernel_w);
  }
  if (with_bias) bias = b.constant("bias", Shape{1, out, 1, 1}, T(0));
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(ParamBuilder<T> b, std::size_t in, std::size_t out, std::size_t kernel) {
  // Each output pixel receives exactly `in` products when kernel == stride.
  weight = b.kaiming("weight", Shape{in, out, kernel, kernel}, in);
  bias = b.constant("bias", Shape{1, out, 1, 1}, T(0));
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParamBuilder<T> b, std::size_t channels) {
  const Shape s{1, channels, 1, 1};
  gamma = b.constant("gamma", s, T(1));
  beta = b.constant("beta", s, T(0));
  running_mean = b.buffer("running_mean", s, T(0));
  running_var = b.buffer("running_var", s, T(1));
}

template <typename T>
SeparableConv<T>::SeparableConv(ParamBuilder<T> b, std::size_t in, std::size_t out, std::size_t stride,
                                std::size_t rate_h, std::size_t rate_w) {
  ConvGeometry dg = ConvGeometry::square(3, stride, Padding::same(3, 3, rate_h, rate_w));
  dg.dilation_h = rate_h;
  dg.dilation_w = rate_w;
  dg.depthwise = true;
  depthwise = Conv2d<T>(b.sub("depthwise"), in, in, dg);
  pointwise = Conv2d<T>(b.sub("pointwise"), in, out, ConvGeometry::square(1));
}

template <typename T>
UpConvTStage<T>::UpConvTStage(ParamBuilder<T> b, std::size_t in, std::size_t out, StageConv kind)
    : up(b.sub("up"), in, out, 2), bn(b.sub("bn"), out) {
  const ConvGeometry g = kind == StageConv::Pointwise ? ConvGeometry::square(1)
                                                      : ConvGeometry::square(2, 1, Padding::same(2, 2));
  conv = Conv2d<T>(b.sub("conv"), out, out, g);
}

template <typename T>
Var<T> UpConvTStage<T>::operator()(const Var<T>& x, Mode mode) {
  return elu(bn(conv(up(x)), mode));
}

std::vector<std::size_t> tcl_channel_schedule(std::size_t in_channels, std::size_t out_channels, std::size_t n_stages) {
  std::vector<std::size_t> depths(n_stages + 1);
  const double first = static_cast<double>(8 * in_channels);
  depths[0] = 8 * in_channels;
  for (std::size_t i = 1; i <= n_stages; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_stages);
    depths[i] = static_cast<std::size_t>(std::lround(first * std::pow(out_channels / first, t)));
  }
  depths[n_stages] = out_channels;
  return depths;
}

template <typename T>
TclUpsampler<T>::TclUpsampler(ParamBuilder<T> b, std::size_t in_channels, std::size_t out_channels,
                              const SpatialPlan& p)
    : plan(p) {
  plan.validate();
  const auto depths = tcl_channel_schedule(in_channels, out_channels, plan.n_stages);
  ConvGeometry dg = ConvGeometry::square(3, 1, Padding::same(3, 3));
  dg.depthwise = true;
  dw = Conv2d<T>(b.sub("dw"), in_channels, in_channels, dg);
  entry = Conv2d<T>(b.sub("entry"), in_channels, depths[0], ConvGeometry::square(2, 1, Padding::same(2, 2)));
  entry_bn = BatchNorm2d<T>(b.sub("entry_bn"), depths[0]);
  for (std::size_t i = 0; i < plan.n_stages; ++i) {
    stages.emplace_back(b.sub("stage" + std::to_string(i)), depths[i], depths[i + 1], StageConv::Same2x2);
  }
}

template <typename T>
Var<T> TclUpsampler<T>::operator()(const Var<T>& x, Mode mode) {
  if (x.shape().h != plan.sat_size || x.shape().w != plan.sat_size) {
    throw ConfigError("TCL upsampler: input " + x.shape().str() + " does not match sat_size " +
                      std::to_string(plan.sat_size));
  }
  Var<T> h = entry_bn(entry(dw(x)), mode);
  h = resize_nearest(h, plan.pre_size, plan.pre_size);
  for (auto& s : stages) h = s(h, mode);
  return h;
}

template <typename T>
PsUpsampler<T>::PsUpsampler(ParamBuilder<T> b, std::size_t in_channels, std::size_t mid_channels,
                            std::size_t out, const SpatialPlan& p)
    : plan(p), out_channels(out), up(b.sub("up"), in_channels, mid_channels, 2) {
  plan.validate();
  const std::size_t r = plan.shuffle_factor();
  reduce = Conv2d<T>(b.sub("reduce"), mid_channels, mid_channels, ConvGeometry::square(3, 2, Padding::uniform(1)));
  expand = Conv2d<T>(b.sub("expand"), mid_channels, out * r * r, ConvGeometry::square(3, 1, Padding::same(3, 3)));
}

template <typename T>
Var<T> PsUpsampler<T>::pre_shuffle(const Var<T>& x) const {
  if (x.shape().h != plan.sat_size || x.shape().w != plan.sat_size) {
    throw ConfigError("PS upsampler: input " + x.shape().str() + " does not match sat_size " +
                      std::to_string(plan.sat_size));
  }
  Var<T> h = up(x);
  h = resize_nearest(h, 2 * plan.pre_size, 2 * plan.pre_size);
  return expand(reduce(h));
}

template <typename T>
DpcHead<T>::DpcHead(ParamBuilder<T> b, std::size_t in_channels, std::size_t out_channels, DpcConfig c)
    : cfg(std::move(c)) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.branches.size(); ++i) {
    const auto& br = cfg.branches[i];
    const std::size_t in = br.source < 0 ? in_channels : cfg.branch_channels;
    auto sb = b.sub("branch" + std::to_string(i));
    branch_convs.emplace_back(sb.sub("conv"), in, cfg.branch_channels, 1, br.rate_h, br.rate_w);
    branch_bns.emplace_back(sb.sub("bn"), cfg.branch_channels);
  }
  project = Conv2d<T>(b.sub("project"), cfg.branch_channels * cfg.branches.size(), out_channels,
                      ConvGeometry::square(1));
  project_bn = BatchNorm2d<T>(b.sub("project_bn"), out_channels);
}

template <typename T>
Var<T> DpcHead<T>::operator()(const Var<T>& x, Mode mode) {
  std::vector<Var<T>> outs;
  outs.reserve(cfg.branches.size());
  for (std::size_t i = 0; i < cfg.branches.size(); ++i) {
    const Var<T>& src = cfg.branches[i].source < 0 ? x : outs[static_cast<std::size_t>(cfg.branches[i].source)];
    outs.push_back(elu(branch_bns[i](branch_convs[i](src), mode)));
  }
  return elu(project_bn(project(concat_channels(outs)), mode));
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct ConvTranspose2d<float>;
template struct ConvTranspose2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template struct SeparableConv<float>;
template struct SeparableConv<double>;
template struct UpConvTStage<float>;
template struct UpConvTStage<double>;
template struct TclUpsampler<float>;
template struct TclUpsampler<double>;
template struct PsUpsampler<float>;
template struct PsUpsampler<double>;
template struct DpcHead<float>;
template struct DpcHead<double>;

}  // namespace difd::nn
