#include "difd/metrics/losses.hpp"

#include <algorithm>
#include <cmath>

#include "difd/nn/ops.hpp"

namespace difd::metrics {

ClassStats class_weights(const std::vector<double>& counts) {
  if (counts.empty()) throw DataError("class_weights: empty count list");
  ClassStats s;
  s.counts = counts;
  double total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (!(counts[i] > 0) || !std::isfinite(counts[i])) {
      throw DataError("class_weights: class " + std::to_string(i) + " has degenerate count " +
                      std::to_string(counts[i]));
    }
    total += counts[i];
  }
  double inv_sum = 0;
  for (double c : counts) {
    s.frequencies.push_back(c / total);
    inv_sum += total / c;
  }
  for (double c : counts) s.weights.push_back((total / c) / inv_sum);
  return s;
}

ClassStats class_weights(const std::vector<std::uint64_t>& counts) {
  return class_weights(std::vector<double>(counts.begin(), counts.end()));
}

namespace {

template <typename T>
void require_match(const Shape& probs, const Shape& onehot, const char* what) {
  if (!(probs == onehot)) {
    throw ConfigError(std::string(what) + ": probabilities " + probs.str() + " vs one-hot " + onehot.str());
  }
}

}  // namespace

template <typename T>
Var<T> softmax_channels(const Var<T>& logits) {
  const Shape& s = logits.shape();
  const std::size_t hw = s.plane();
  Tensor<T> p(s);
  const Tensor<T>& x = logits.value();
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t k = 0; k < hw; ++k) {
      T m = x.plane(b, 0)[k];
      for (std::size_t c = 1; c < s.c; ++c) m = std::max(m, x.plane(b, c)[k]);
      T z = 0;
      for (std::size_t c = 0; c < s.c; ++c) z += (p.plane(b, c)[k] = std::exp(x.plane(b, c)[k] - m));
      for (std::size_t c = 0; c < s.c; ++c) p.plane(b, c)[k] /= z;
    }
  return make_result<T>(std::move(p), {logits}, [](Node<T>& self) {
    const Shape& s = self.value.shape();
    const std::size_t hw = s.plane();
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t k = 0; k < hw; ++k) {
        T dot = 0;
        for (std::size_t c = 0; c < s.c; ++c) dot += self.grad.plane(b, c)[k] * self.value.plane(b, c)[k];
        for (std::size_t c = 0; c < s.c; ++c)
          dx.plane(b, c)[k] += self.value.plane(b, c)[k] * (self.grad.plane(b, c)[k] - dot);
      }
  });
}

template <typename T>
Var<T> dice_loss(const Var<T>& probs, const Tensor<T>& onehot) {
  const Shape& s = probs.shape();
  require_match<T>(s, onehot.shape(), "dice_loss");
  const Tensor<T>& p = probs.value();
  std::vector<double> inter(s.c, 0.0), denom(s.c, 0.0);
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* pp = p.plane(b, c);
      const T* yy = onehot.plane(b, c);
      for (std::size_t k = 0; k < s.plane(); ++k) {
        inter[c] += static_cast<double>(pp[k]) * yy[k];
        denom[c] += static_cast<double>(pp[k]) + yy[k];
      }
    }
  double loss = 0;
  for (std::size_t c = 0; c < s.c; ++c) loss += 1.0 - (2.0 * inter[c] + kDiceEps) / (denom[c] + kDiceEps);
  loss /= static_cast<double>(s.c);
  return make_result<T>(Tensor<T>(Shape{}, static_cast<T>(loss)), {probs},
                        [onehot, inter, denom](Node<T>& self) {
                          auto& dp = self.parents[0]->grad_buffer();
                          const Shape& s = dp.shape();
                          const double g = static_cast<double>(self.grad[0]) / static_cast<double>(s.c);
                          for (std::size_t c = 0; c < s.c; ++c) {
                            const double d = denom[c] + kDiceEps;
                            const double a = 2.0 / d;
                            const double q = (2.0 * inter[c] + kDiceEps) / (d * d);
                            for (std::size_t b = 0; b < s.n; ++b) {
                              T* out = dp.plane(b, c);
                              const T* yy = onehot.plane(b, c);
                              for (std::size_t k = 0; k < s.plane(); ++k)
                                out[k] += static_cast<T>(-g * (a * yy[k] - q));
                            }
                          }
                        });
}

template <typename T>
Var<T> weighted_ce(const Var<T>& probs, const Tensor<T>& onehot, const std::vector<double>& weights) {
  const Shape& s = probs.shape();
  require_match<T>(s, onehot.shape(), "weighted_ce");
  if (weights.size() != s.c) {
    throw ConfigError("weighted_ce: " + std::to_string(weights.size()) + " weights for " + std::to_string(s.c) +
                      " classes");
  }
  const Tensor<T>& p = probs.value();
  const double pixels = static_cast<double>(s.n * s.plane());
  double loss = 0;
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* pp = p.plane(b, c);
      const T* yy = onehot.plane(b, c);
      for (std::size_t k = 0; k < s.plane(); ++k)
        if (yy[k] != T(0)) loss -= weights[c] * yy[k] * std::log(static_cast<double>(pp[k]) + kLogEps);
    }
  loss /= pixels;
  return make_result<T>(Tensor<T>(Shape{}, static_cast<T>(loss)), {probs},
                        [onehot, weights, pixels](Node<T>& self) {
                          auto& dp = self.parents[0]->grad_buffer();
                          const Tensor<T>& p = self.parents[0]->value;
                          const Shape& s = dp.shape();
                          const double g = static_cast<double>(self.grad[0]) / pixels;
                          for (std::size_t b = 0; b < s.n; ++b)
                            for (std::size_t c = 0; c < s.c; ++c) {
                              T* out = dp.plane(b, c);
                              const T* pp = p.plane(b, c);
                              const T* yy = onehot.plane(b, c);
                              for (std::size_t k = 0; k < s.plane(); ++k)
                                if (yy[k] != T(0))
                                  out[k] += static_cast<T>(-g * weights[c] * yy[k] /
                                                           (static_cast<double>(pp[k]) + kLogEps));
                            }
                        });
}

template <typename T>
Var<T> dice_ce(const Var<T>& probs, const Tensor<T>& onehot, const std::vector<double>& weights) {
  return nn::add(dice_loss(probs, onehot), weighted_ce(probs, onehot, weights));
}

template <typename T>
Var<T> segmentation_loss(const Var<T>& logits, const LabelMap& labels, const std::vector<double>& weights) {
  const Shape& s = logits.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
    throw ConfigError("segmentation_loss: logits " + s.str() + " vs labels (" + std::to_string(labels.n) + ", " +
                      std::to_string(labels.h) + ", " + std::to_string(labels.w) + ")");
  }
  if (!logits.value().all_finite()) throw NumericError("segmentation_loss: non-finite logits");
  return dice_ce(softmax_channels(logits), one_hot<T>(labels, s.c), weights);
}

#define DIFD_INSTANTIATE_LOSSES(T)                                                                  \
  template Var<T> softmax_channels(const Var<T>&);                                                  \
  template Var<T> dice_loss(const Var<T>&, const Tensor<T>&);                                       \
  template Var<T> weighted_ce(const Var<T>&, const Tensor<T>&, const std::vector<double>&);         \
  template Var<T> dice_ce(const Var<T>&, const Tensor<T>&, const std::vector<double>&);             \
  template Var<T> segmentation_loss(const Var<T>&, const LabelMap&, const std::vector<double>&);

DIFD_INSTANTIATE_LOSSES(float)
DIFD_INSTANTIATE_LOSSES(double)

}  // namespace difd::metrics
