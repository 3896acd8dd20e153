#pragma once

#include <vector>

#include "difd/nn/params.hpp"

namespace difd::harness {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay over every trainable entry of a store.
/// Entries without a gradient this step are left untouched.
template <typename T>
class AdamW {
 public:
  AdamW(nn::ParamStore<T>& store, AdamWOptions opt);

  void step();
  std::size_t steps() const { return t_; }
  const AdamWOptions& options() const { return opt_; }

 private:
  nn::ParamStore<T>* store_;
  AdamWOptions opt_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace difd::harness
