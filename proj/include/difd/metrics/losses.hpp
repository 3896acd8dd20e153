#pragma once

#include <cstdint>
#include <vector>

#include "difd/autograd.hpp"
#include "difd/labels.hpp"

namespace difd::metrics {

struct ClassStats {
  std::vector<double> counts;
  std::vector<double> frequencies;
  std::vector<double> weights;
};

inline constexpr double kDiceEps = 1e-7;
inline constexpr double kLogEps = 1e-12;

/// frequency_i = count_i / total, weight_i = normalised 1 / frequency_i.
/// Counts may be pixel counts or frequencies. Throws DataError on a
/// negative or zero count, or an empty list.
ClassStats class_weights(const std::vector<double>& counts);
ClassStats class_weights(const std::vector<std::uint64_t>& counts);

/// Softmax over the channel axis.
template <typename T>
Var<T> softmax_channels(const Var<T>& logits);

/// Mean over classes of 1 - (2 sum(p y) + eps) / (sum p + sum y + eps); sums
/// run over all pixels of the batch.
template <typename T>
Var<T> dice_loss(const Var<T>& probs, const Tensor<T>& onehot);

/// Mean over pixels of -sum_c w_c y_c log(p_c + eps_log).
template <typename T>
Var<T> weighted_ce(const Var<T>& probs, const Tensor<T>& onehot, const std::vector<double>& weights);

/// dice_loss + weighted_ce.
template <typename T>
Var<T> dice_ce(const Var<T>& probs, const Tensor<T>& onehot, const std::vector<double>& weights);

/// dice_ce(softmax(logits), one_hot(labels)).
template <typename T>
Var<T> segmentation_loss(const Var<T>& logits, const LabelMap& labels, const std::vector<double>& weights);

}  // namespace difd::metrics
