#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "difd/labels.hpp"

namespace difd::metrics {

/// C x C pixel counts; entry (t, p) counts pixels of true class t predicted
/// as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = kNumClasses) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::uint64_t operator()(std::size_t t, std::size_t p) const { return counts_[t * classes_ + p]; }
  std::uint64_t& at(std::size_t t, std::size_t p) { return counts_[t * classes_ + p]; }
  std::uint64_t total() const;

  std::uint64_t tp(std::size_t c) const { return (*this)(c, c); }
  std::uint64_t fp(std::size_t c) const;  ///< predicted c, truth differs
  std::uint64_t fn(std::size_t c) const;  ///< truth c, predicted otherwise

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// Adds every (true, pred) pixel pair to cm. Throws DataError on a shape
/// mismatch or a label outside [0, C).
ConfusionMatrix accumulate_confusion(const LabelMap& pred, const LabelMap& truth, std::size_t classes,
                                     ConfusionMatrix cm);

/// TP / (TP + FP + FN); nullopt where the union is empty.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);
/// 2TP / (2TP + FP + FN); nullopt where the union is empty.
std::vector<std::optional<double>> f1_per_class(const ConfusionMatrix& cm);

/// Unweighted mean over defined classes with index >= first_class (pass 1 to
/// leave out background). Returns 0 when no class is defined.
double mean_of(const std::vector<std::optional<double>>& per_class, std::size_t first_class = 0);
double mean_iou(const ConfusionMatrix& cm, std::size_t first_class = 0);
double mean_f1(const ConfusionMatrix& cm, std::size_t first_class = 0);

}  // namespace difd::metrics
