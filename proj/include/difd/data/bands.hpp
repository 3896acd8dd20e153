#pragma once

#include <array>
#include <string>
#include <vector>

#include "difd/data/raster.hpp"

namespace difd::data {

/// Satellite channel catalog, in storage order.
inline constexpr std::size_t kCatalogBands = 17;
inline const std::array<std::string, kCatalogBands> kBandNames{"NDVI", "NDWI", "B02",  "B03",  "B04",  "B05",
                                                               "B06",  "B07",  "B08",  "B8A",  "B11",  "B12",
                                                               "B02E", "B03E", "B04E", "SCL",  "CLD"};
enum BandIndex : std::size_t {
  kNDVI = 0, kNDWI = 1, kB02 = 2, kB03 = 3, kB04 = 4, kB05 = 5, kB06 = 6, kB07 = 7, kB08 = 8,
  kB8A = 9, kB11 = 10, kB12 = 11, kB02E = 12, kB03E = 13, kB04E = 14, kSCL = 15, kCLD = 16
};

enum class BandKind { Index, Reflectance, SceneClass, CloudProb };
BandKind band_kind(std::size_t catalog_index);

struct BandSelection {
  std::string name;
  std::vector<std::size_t> indices;

  static BandSelection by_name(const std::string& name);  ///< "4B", "7B", "10B" or "17B"
  static BandSelection b4() { return {"4B", {2, 3, 4, 8}}; }
  static BandSelection b7() { return {"7B", {0, 1, 12, 13, 14, 8, 15}}; }
  static BandSelection b10() { return {"10B", {2, 3, 4, 5, 6, 7, 8, 9, 10, 11}}; }
  static BandSelection all() {
    BandSelection s{"17B", {}};
    for (std::size_t i = 0; i < kCatalogBands; ++i) s.indices.push_back(i);
    return s;
  }
  std::size_t size() const { return indices.size(); }
  bool operator==(const BandSelection&) const = default;
};

/// Bands of `r` at `indices`, in that order.
Raster select_bands(const Raster& r, const std::vector<std::size_t>& indices);
/// Catalog selection; throws DataError unless r has 17 bands.
Raster select_bands(const Raster& sat17, const BandSelection& sel);

}  // namespace difd::data
