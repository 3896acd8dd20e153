#pragma once

// Central finite-difference gradient checking for Var<double> graphs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "difd/autograd.hpp"

namespace gradcheck {

using difd::Tensor;
using difd::Var;

/// sum_i weights_i * x_i as a scalar Var; a random projection exercises every
/// output element with a distinct coefficient (plain sums cancel under BN).
inline Var<double> project(const Var<double>& x, const Tensor<double>& weights) {
  double acc = 0;
  for (std::size_t i = 0; i < x.value().size(); ++i) acc += weights[i] * x.value()[i];
  return difd::make_result<double>(Tensor<double>(difd::Shape{}, acc), {x}, [weights](difd::Node<double>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += weights[i] * self.grad[0];
  });
}

struct Result {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;
};

/// |a - n| / max(|a|, |n|); pairs where both magnitudes are below `floor`
/// count as exact.
inline double rel_error(double a, double n, double floor = 1e-8) {
  const double scale = std::max(std::abs(a), std::abs(n));
  if (scale < floor) return 0.0;
  return std::abs(a - n) / scale;
}

/// One scalar entry of a leaf to perturb.
struct Probe {
  std::string name;
  Var<double> var;
  std::size_t index;
};

/// `loss` rebuilds the scalar from the current leaf values. Each probe is
/// perturbed by +-step and the central difference compared to backprop.
inline Result check_probes(const std::function<Var<double>()>& loss, std::vector<Probe> probes, double step = 1e-4) {
  for (auto& p : probes) p.var.zero_grad();
  difd::backward(loss());
  std::vector<double> analytic;
  for (auto& p : probes) analytic.push_back(p.var.grad().empty() ? 0.0 : p.var.grad()[p.index]);
  Result r;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    auto& p = probes[k];
    double& x = p.var.mutable_value()[p.index];
    const double orig = x;
    double plus, minus;
    {
      difd::NoGradGuard ng;
      x = orig + step;
      plus = loss().value()[0];
      x = orig - step;
      minus = loss().value()[0];
    }
    x = orig;
    const double numeric = (plus - minus) / (2 * step);
    const double e = rel_error(analytic[k], numeric);
    ++r.checked;
    if (e >= r.max_rel_error) {
      r.max_rel_error = e;
      r.worst = p.name + "[" + std::to_string(p.index) + "] analytic=" + std::to_string(analytic[k]) +
                " numeric=" + std::to_string(numeric);
    }
  }
  return r;
}

/// `per_leaf` randomly chosen entries of every leaf.
inline Result check(const std::function<Var<double>()>& loss, std::vector<std::pair<std::string, Var<double>>> leaves,
                    std::size_t per_leaf, std::mt19937_64& rng, double step = 1e-4) {
  std::vector<Probe> probes;
  for (auto& [name, v] : leaves) {
    const std::size_t n = v.value().size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_leaf, n));
    for (std::size_t i : idx) probes.push_back({name, v, i});
  }
  return check_probes(loss, std::move(probes), step);
}

/// `count` entries drawn uniformly over all scalars of the given leaves.
inline std::vector<Probe> sample_probes(const std::vector<std::pair<std::string, Var<double>>>& leaves,
                                        std::size_t count, std::mt19937_64& rng) {
  std::vector<Probe> all;
  for (const auto& [name, v] : leaves)
    for (std::size_t i = 0; i < v.value().size(); ++i) all.push_back({name, v, i});
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(count, all.size()));
  return all;
}

}  // namespace gradcheck
