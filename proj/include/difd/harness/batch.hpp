#pragma once

#include <cstdint>
#include <vector>

#include "difd/data/dataset.hpp"
#include "difd/harness/config.hpp"

namespace difd::harness {

/// Model-ready samples: normalised, band-selected, flattened CHW.
struct PreparedSet {
  std::size_t c1 = 3;
  std::size_t c2 = 0;
  std::size_t k = 0;   ///< aerial / label size
  std::size_t s = 0;   ///< second-input size
  std::vector<std::vector<float>> input1;
  std::vector<std::vector<float>> input2;
  std::vector<LabelMap> labels;  ///< each (1, k, k)
  std::vector<std::string> stems;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

/// Throws ConfigError when tile or crop sizes disagree with cfg.model.
PreparedSet prepare(const std::vector<data::TilePair>& pairs, const RunConfig& cfg);

struct Batch {
  Tensor<float> input1;  ///< (N, c1, k, k)
  Tensor<float> input2;  ///< (N, c2, s, s); empty for aerial-only models
  LabelMap labels;       ///< (N, k, k)
  std::size_t n = 0;
};

/// Gathers `indices` into a batch. Sample copies are spread over `workers`
/// threads; the result does not depend on the worker count.
Batch make_batch(const PreparedSet& set, const std::vector<std::size_t>& indices, std::size_t workers = 1);

/// Epoch permutation, a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Consecutive chunks of `order` of at most batch_size.
std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order, std::size_t batch_size);

}  // namespace difd::harness
