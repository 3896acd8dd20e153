#include "difd/metrics/confusion.hpp"

#include <numeric>

namespace difd::metrics {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::fp(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes_; ++t)
    if (t != c) s += (*this)(t, c);
  return s;
}

std::uint64_t ConfusionMatrix::fn(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p)
    if (p != c) s += (*this)(c, p);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) {
    throw ConfigError("cannot merge confusion matrices of " + std::to_string(classes_) + " and " +
                      std::to_string(other.classes_) + " classes");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

ConfusionMatrix accumulate_confusion(const LabelMap& pred, const LabelMap& truth, std::size_t classes,
                                     ConfusionMatrix cm) {
  if (pred.n != truth.n || pred.h != truth.h || pred.w != truth.w) {
    throw DataError("confusion: prediction and truth label maps differ in shape");
  }
  if (cm.classes() != classes) throw ConfigError("confusion: matrix class count mismatch");
  check_labels(pred, classes);
  check_labels(truth, classes);
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm.at(truth.data[i], pred.data[i]);
  return cm;
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.classes());
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const std::uint64_t u = cm.tp(c) + cm.fp(c) + cm.fn(c);
    if (u > 0) out[c] = static_cast<double>(cm.tp(c)) / static_cast<double>(u);
  }
  return out;
}

std::vector<std::optional<double>> f1_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.classes());
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const std::uint64_t d = 2 * cm.tp(c) + cm.fp(c) + cm.fn(c);
    if (d > 0) out[c] = static_cast<double>(2 * cm.tp(c)) / static_cast<double>(d);
  }
  return out;
}

double mean_of(const std::vector<std::optional<double>>& per_class, std::size_t first_class) {
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t c = first_class; c < per_class.size(); ++c) {
    if (per_class[c]) {
      sum += *per_class[c];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double mean_iou(const ConfusionMatrix& cm, std::size_t first_class) { return mean_of(iou_per_class(cm), first_class); }
double mean_f1(const ConfusionMatrix& cm, std::size_t first_class) { return mean_of(f1_per_class(cm), first_class); }

}  // namespace difd::metrics
