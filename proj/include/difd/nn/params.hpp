#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "difd/autograd.hpp"

namespace difd::nn {

/// Named parameters and buffers of a model, in registration order. Buffers
/// (batch-norm running statistics) are checkpointed but not trained.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var<T> var;
    bool trainable = true;
  };

  Var<T> add(const std::string& name, Tensor<T> value, bool trainable) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Var<T> v = trainable ? Var<T>::leaf(std::move(value)) : Var<T>::constant(std::move(value));
    index_.emplace(name, entries_.size());
    entries_.push_back({name, v, trainable});
    return v;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  const Entry* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  std::size_t trainable_count() const {
    std::size_t total = 0;
    for (const auto& e : entries_)
      if (e.trainable) total += e.var.value().size();
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_)
      if (e.trainable) e.var.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Registers parameters under a dotted path prefix and initialises them:
/// Kaiming-normal (fan-in) weights, zero biases, unit/zero batch-norm affine.
template <typename T>
class ParamBuilder {
 public:
  ParamBuilder(ParamStore<T>& store, std::mt19937_64& rng, std::string prefix = {})
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

  ParamBuilder sub(const std::string& name) const {
    return ParamBuilder(*store_, *rng_, prefix_.empty() ? name : prefix_ + "." + name);
  }

  Var<T> kaiming(const std::string& name, Shape shape, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor<T> t(shape);
    for (auto& v : t.values()) v = static_cast<T>(dist(*rng_));
    return store_->add(path(name), std::move(t), true);
  }

  Var<T> constant(const std::string& name, Shape shape, T value) {
    return store_->add(path(name), Tensor<T>(shape, value), true);
  }

  Var<T> buffer(const std::string& name, Shape shape, T value) {
    return store_->add(path(name), Tensor<T>(shape, value), false);
  }

  const std::string& prefix() const { return prefix_; }

 private:
  std::string path(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

  ParamStore<T>* store_;
  std::mt19937_64* rng_;
  std::string prefix_;
};

}  // namespace difd::nn
