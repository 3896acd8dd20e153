#include "difd/model/difd.hpp"

#include <random>

namespace difd::model {

using nn::ConvGeometry;
using nn::Padding;

template <typename T>
ResidualSepBlock<T>::ResidualSepBlock(nn::ParamBuilder<T> b, std::size_t in, std::size_t out, std::size_t stride)
    : sep1(b.sub("sep1"), in, out, stride),
      bn1(b.sub("bn1"), out),
      sep2(b.sub("sep2"), out, out, 1),
      bn2(b.sub("bn2"), out),
      skip(b.sub("skip"), in, out, ConvGeometry::square(1, stride)),
      skip_bn(b.sub("skip_bn"), out) {}

template <typename T>
Var<T> ResidualSepBlock<T>::operator()(const Var<T>& x, Mode mode) {
  Var<T> h = nn::elu(bn1(sep1(x), mode));
  h = bn2(sep2(h), mode);
  return nn::elu(nn::add(h, skip_bn(skip(x), mode)));
}

template <typename T>
DifdModel<T>::DifdModel(DifdConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  nn::ParamBuilder<T> root(store_, rng);

  if (cfg_.uses_aerial()) {
    const auto& bb = cfg_.backbone;
    auto enc = root.sub("encoder");
    stem_ = nn::Conv2d<T>(enc.sub("stem"), cfg_.c1, bb.stem_channels, ConvGeometry::square(3, 2, Padding::uniform(1)));
    stem_bn_ = nn::BatchNorm2d<T>(enc.sub("stem_bn"), bb.stem_channels);
    blocks_.emplace_back(enc.sub("block1"), bb.stem_channels, bb.llf_channels, 2);
    blocks_.emplace_back(enc.sub("block2"), bb.llf_channels, bb.mid_channels, 2);
    blocks_.emplace_back(enc.sub("block3"), bb.mid_channels, bb.out_channels, 2);
    dpc_ = nn::DpcHead<T>(enc.sub("dpc"), bb.out_channels, cfg_.hlf_channels, cfg_.dpc);

    auto dec = root.sub("decoder");
    llf_proj_ = nn::Conv2d<T>(dec.sub("llf_proj"), bb.llf_channels, cfg_.llf1_channels, ConvGeometry::square(1));
    for (int i = 0; i < 2; ++i) {
      hlf_up_.emplace_back(dec.sub("hlf_up" + std::to_string(i)), cfg_.hlf_channels, cfg_.hlf_channels,
                           nn::StageConv::Pointwise);
    }
  }

  auto sat = root.sub("second");
  if (cfg_.variant == Variant::UpConvT || cfg_.variant == Variant::SatOnly) {
    tcl_ = nn::TclUpsampler<T>(sat.sub("tcl"), cfg_.second_channels(), cfg_.llf2_channels, cfg_.sat_plan);
  } else if (cfg_.variant == Variant::UpPS) {
    ps_ = nn::PsUpsampler<T>(sat.sub("ps"), cfg_.second_channels(), cfg_.ps_mid_channels, cfg_.llf2_channels,
                             cfg_.sat_plan);
  }

  auto head = root.sub("head");
  const auto& d = cfg_.decoder_channels;
  const std::size_t fused = cfg_.fused_channels();
  head_convs_.emplace_back(head.sub("conv0"), fused, d[0], ConvGeometry::square(3, 1, Padding::uniform(1)));
  head_bns_.emplace_back(head.sub("bn0"), d[0]);
  head_convs_.emplace_back(head.sub("conv1"), d[0], d[1], ConvGeometry::square(3, 1, Padding::uniform(1)));
  head_bns_.emplace_back(head.sub("bn1"), d[1]);
  head_convs_.emplace_back(head.sub("conv2"), d[1], d[2], ConvGeometry::square(1));
  head_bns_.emplace_back(head.sub("bn2"), d[2]);
  head_up_.emplace_back(head.sub("up0"), d[2], d[3], nn::StageConv::Pointwise);
  head_up_.emplace_back(head.sub("up1"), d[3], d[4], nn::StageConv::Pointwise);
  classifier_ = nn::Conv2d<T>(head.sub("classifier"), d[4], cfg_.num_classes,
                              ConvGeometry::square(3, 1, Padding::uniform(1)));
}

template <typename T>
typename DifdModel<T>::Encoded DifdModel<T>::encode(const Var<T>& input1, Mode mode) {
  if (!cfg_.uses_aerial()) throw ConfigError(to_string(cfg_.variant) + " has no aerial encoder");
  const Shape& s = input1.shape();
  if (s.c != cfg_.c1 || s.h != cfg_.aerial_size || s.w != cfg_.aerial_size) {
    throw ConfigError("encoder: input " + s.str() + " expected (N, " + std::to_string(cfg_.c1) + ", " +
                      std::to_string(cfg_.aerial_size) + ", " + std::to_string(cfg_.aerial_size) + ")");
  }
  Var<T> h = nn::elu(stem_bn_(stem_(input1), mode));
  Var<T> llf = blocks_[0](h, mode);
  h = blocks_[1](llf, mode);
  h = blocks_[2](h, mode);
  return {llf, dpc_(h, mode)};
}

template <typename T>
typename DifdModel<T>::Decoded DifdModel<T>::decode(const Encoded& enc, Mode mode) {
  const std::size_t q = cfg_.aerial_size / 4;
  const std::size_t s = cfg_.aerial_size / 16;
  if (enc.llf.shape().h != q || enc.hlf.shape().h != s) {
    throw ConfigError("decoder: LLF " + enc.llf.shape().str() + " / HLF " + enc.hlf.shape().str() +
                      " inconsistent with aerial_size " + std::to_string(cfg_.aerial_size));
  }
  Var<T> llf1 = nn::elu(llf_proj_(enc.llf));
  Var<T> hlf = enc.hlf;
  for (auto& stage : hlf_up_) hlf = stage(hlf, mode);
  return {llf1, hlf};
}

template <typename T>
Var<T> DifdModel<T>::second_branch(const Var<T>& input2, Mode mode) {
  const Shape& s = input2.shape();
  const std::size_t sat = cfg_.sat_plan.sat_size;
  if (!cfg_.uses_second()) throw ConfigError("AerialOnly variant has no second branch");
  if (s.c != cfg_.second_channels() || s.h != sat || s.w != sat) {
    throw ConfigError("second branch: input " + s.str() + " expected (N, " + std::to_string(cfg_.second_channels()) +
                      ", " + std::to_string(sat) + ", " + std::to_string(sat) + ")");
  }
  const std::size_t target = cfg_.sat_plan.target_size;
  switch (cfg_.variant) {
    case Variant::UpConvT:
    case Variant::SatOnly:
      return nn::tcl_upsample(input2, tcl_, mode);
    case Variant::UpPS:
      return nn::ps_upsample(input2, ps_);
    case Variant::UpNearest:
      return nn::nearest_upsample(input2, target);
    case Variant::UpBilinear:
      return nn::bilinear_upsample(input2, target);
    case Variant::AerialOnly:
      break;
  }
  throw ConfigError("second branch: unsupported variant");
}

template <typename T>
Var<T> DifdModel<T>::fuse_and_decode(const Var<T>& llf1, const Var<T>& hlf, const Var<T>& llf2, Mode mode) {
  std::vector<Var<T>> parts;
  for (const Var<T>* v : {&llf1, &hlf, &llf2})
    if (v->defined()) parts.push_back(*v);
  if (parts.empty()) throw ConfigError("fuse_and_decode: no inputs");
  const std::size_t q = cfg_.aerial_size / 4;
  for (const auto& p : parts) {
    if (p.shape().h != q || p.shape().w != q) {
      throw ConfigError("fuse_and_decode: branch " + p.shape().str() + " is not at spatial size " + std::to_string(q));
    }
  }
  Var<T> h = parts.size() == 1 ? parts.front() : nn::concat_channels(parts);
  if (h.shape().c != cfg_.fused_channels()) {
    throw ConfigError("fuse_and_decode: fused depth " + std::to_string(h.shape().c) + " expected " +
                      std::to_string(cfg_.fused_channels()));
  }
  for (std::size_t i = 0; i < head_convs_.size(); ++i) h = nn::elu(head_bns_[i](head_convs_[i](h), mode));
  for (auto& stage : head_up_) h = stage(h, mode);
  return classifier_(h);
}

template <typename T>
Var<T> DifdModel<T>::forward(const Var<T>& input1, const Var<T>& input2, Mode mode) {
  if (cfg_.uses_aerial() && !input1.defined()) {
    throw ConfigError(to_string(cfg_.variant) + " requires the aerial input");
  }
  if (cfg_.uses_second() && !input2.defined()) {
    throw ConfigError(to_string(cfg_.variant) + " requires the second input");
  }
  if (input1.defined() && input2.defined() && cfg_.uses_aerial() && cfg_.uses_second() &&
      input1.shape().n != input2.shape().n) {
    throw ConfigError("batch size mismatch between inputs");
  }
  Var<T> llf1, hlf, llf2;
  if (cfg_.uses_aerial()) {
    Decoded dec = decode(encode(input1, mode), mode);
    llf1 = dec.llf1;
    hlf = dec.hlf;
  }
  if (cfg_.uses_second()) llf2 = second_branch(input2, mode);
  return fuse_and_decode(llf1, hlf, llf2, mode);
}

template struct ResidualSepBlock<float>;
template struct ResidualSepBlock<double>;
template class DifdModel<float>;
template class DifdModel<double>;

}  // namespace difd::model
