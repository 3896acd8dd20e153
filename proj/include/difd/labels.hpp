#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "difd/errors.hpp"
#include "difd/tensor.hpp"

namespace difd {

/// Land-cover class codes (LandCover.ai label values).
enum ClassId : std::uint8_t { kBackground = 0, kBuilding = 1, kWoodland = 2, kWater = 3, kRoad = 4 };

inline constexpr std::size_t kNumClasses = 5;
inline const std::array<std::string, kNumClasses> kClassNames{"background", "building", "woodland", "water", "road"};

/// Per-pixel class labels for a batch, row-major (n, h, w).
struct LabelMap {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(std::size_t n_, std::size_t h_, std::size_t w_, std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), data(n_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::uint8_t& operator()(std::size_t b, std::size_t i, std::size_t j) { return data[(b * h + i) * w + j]; }
  std::uint8_t operator()(std::size_t b, std::size_t i, std::size_t j) const { return data[(b * h + i) * w + j]; }
  bool operator==(const LabelMap&) const = default;
};

/// Throws DataError naming the first label outside [0, classes).
inline void check_labels(const LabelMap& y, std::size_t classes) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.data[i] >= classes) {
      throw DataError("label value " + std::to_string(y.data[i]) + " at index " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

template <typename T>
Tensor<T> one_hot(const LabelMap& y, std::size_t classes) {
  check_labels(y, classes);
  Tensor<T> t(Shape{y.n, classes, y.h, y.w});
  for (std::size_t b = 0; b < y.n; ++b)
    for (std::size_t i = 0; i < y.h; ++i)
      for (std::size_t j = 0; j < y.w; ++j) t(b, y(b, i, j), i, j) = T(1);
  return t;
}

/// Channel argmax of an (N, C, H, W) score map; ties go to the lower index.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& scores) {
  const Shape& s = scores.shape();
  LabelMap y(s.n, s.h, s.w);
  for (std::size_t b = 0; b < s.n; ++b)
    for (std::size_t i = 0; i < s.h; ++i)
      for (std::size_t j = 0; j < s.w; ++j) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < s.c; ++c)
          if (scores(b, c, i, j) > scores(b, best, i, j)) best = c;
        y(b, i, j) = static_cast<std::uint8_t>(best);
      }
  return y;
}

}  // namespace difd
