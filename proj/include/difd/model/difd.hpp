#pragma once

#include <cstdint>
#include <vector>

#include "difd/model/config.hpp"
#include "difd/nn/blocks.hpp"

namespace difd::model {

using nn::Mode;

/// Separable residual block: two separable convs with BN, 1x1 projection on
/// the skip path, ELU after the sum.
template <typename T>
struct ResidualSepBlock {
  nn::SeparableConv<T> sep1;
  nn::BatchNorm2d<T> bn1;
  nn::SeparableConv<T> sep2;
  nn::BatchNorm2d<T> bn2;
  nn::Conv2d<T> skip;
  nn::BatchNorm2d<T> skip_bn;

  ResidualSepBlock() = default;
  ResidualSepBlock(nn::ParamBuilder<T> b, std::size_t in, std::size_t out, std::size_t stride);
  Var<T> operator()(const Var<T>& x, Mode mode);
};

/// Dual-input fusion segmentation network. Inputs are NCHW batches:
/// input1 (N, C1, k, k) aerial, input2 (N, C2, s, s) satellite (or the
/// downsampled aerial tile). Output is raw logits (N, classes, k, k).
template <typename T>
class DifdModel {
 public:
  struct Encoded {
    Var<T> llf;  ///< stride 4
    Var<T> hlf;  ///< stride 16, after the DPC head
  };
  struct Decoded {
    Var<T> llf1;
    Var<T> hlf;
  };

  DifdModel(DifdConfig cfg, std::uint64_t seed);

  DifdModel(const DifdModel&) = delete;
  DifdModel& operator=(const DifdModel&) = delete;

  Encoded encode(const Var<T>& input1, Mode mode);
  Decoded decode(const Encoded& enc, Mode mode);
  Var<T> second_branch(const Var<T>& input2, Mode mode);
  /// Any of the three inputs may be undefined; the present ones are
  /// concatenated in the order llf1, hlf, llf2.
  Var<T> fuse_and_decode(const Var<T>& llf1, const Var<T>& hlf, const Var<T>& llf2, Mode mode);
  /// Pass an undefined Var for an input the variant does not use.
  Var<T> forward(const Var<T>& input1, const Var<T>& input2, Mode mode);

  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }
  const DifdConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  /// Number of trainable scalars.
  std::size_t count_parameters() const { return store_.trainable_count(); }

 private:
  DifdConfig cfg_;
  std::uint64_t seed_;
  nn::ParamStore<T> store_;

  // Encoder.
  nn::Conv2d<T> stem_;
  nn::BatchNorm2d<T> stem_bn_;
  std::vector<ResidualSepBlock<T>> blocks_;
  nn::DpcHead<T> dpc_;
  // Aerial decoder.
  nn::Conv2d<T> llf_proj_;
  std::vector<nn::UpConvTStage<T>> hlf_up_;
  // Satellite branch.
  nn::TclUpsampler<T> tcl_;
  nn::PsUpsampler<T> ps_;
  // Final decoder.
  std::vector<nn::Conv2d<T>> head_convs_;
  std::vector<nn::BatchNorm2d<T>> head_bns_;
  std::vector<nn::UpConvTStage<T>> head_up_;
  nn::Conv2d<T> classifier_;
};

/// Free-function forms of the model stages.
template <typename T>
typename DifdModel<T>::Encoded encoder_forward(const Var<T>& input1, DifdModel<T>& m, Mode mode) {
  return m.encode(input1, mode);
}
template <typename T>
Var<T> difd_forward(const Var<T>& input1, const Var<T>& input2, DifdModel<T>& m, Mode mode) {
  return m.forward(input1, input2, mode);
}
template <typename T>
std::size_t count_parameters(const DifdModel<T>& m) {
  return m.count_parameters();
}

}  // namespace difd::model
