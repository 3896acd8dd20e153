#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "difd/errors.hpp"
#include "difd/labels.hpp"

namespace difd::data {

enum class DType { F32, U8 };

/// world_x = origin_x + col * pixel_w, world_y = origin_y + row * pixel_h
/// (pixel_h is usually negative: rows run southwards).
struct Geotransform {
  double origin_x = 0;
  double origin_y = 0;
  double pixel_w = 1;
  double pixel_h = -1;

  std::pair<double, double> pixel_to_world(double col, double row) const {
    return {origin_x + col * pixel_w, origin_y + row * pixel_h};
  }
  std::pair<double, double> world_to_pixel(double x, double y) const {
    return {(x - origin_x) / pixel_w, (y - origin_y) / pixel_h};
  }
  bool operator==(const Geotransform&) const = default;
};

struct WorldBox {
  double min_x = 0;
  double min_y = 0;
  double max_x = 0;
  double max_y = 0;
};

/// Multi-band georeferenced raster, band-major. Exactly one of f32 / u8
/// holds the samples, selected by dtype.
struct Raster {
  std::size_t bands = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  DType dtype = DType::F32;
  Geotransform gt{};
  int crs = 0;
  std::optional<double> nodata;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  Raster() = default;
  Raster(std::size_t bands, std::size_t width, std::size_t height, DType dtype, Geotransform gt = {}, int crs = 0);

  std::size_t index(std::size_t b, std::size_t row, std::size_t col) const { return (b * height + row) * width + col; }
  float at(std::size_t b, std::size_t row, std::size_t col) const {
    const std::size_t i = index(b, row, col);
    return dtype == DType::F32 ? f32[i] : static_cast<float>(u8[i]);
  }
  void set(std::size_t b, std::size_t row, std::size_t col, float v);
  std::span<const float> band(std::size_t b) const;
  std::span<float> band(std::size_t b);

  WorldBox bounds() const;
  /// Sub-window with the geotransform shifted to its top-left corner.
  Raster window(std::size_t row0, std::size_t col0, std::size_t h, std::size_t w) const;
  /// Throws DataError on inconsistent sizes or zero pixel sizes.
  void validate() const;

  bool operator==(const Raster&) const = default;
};

/// Single-band u8 raster holding class codes -> LabelMap (n = 1). Throws
/// DataError on a code outside [0, classes).
LabelMap to_label_map(const Raster& label, std::size_t classes = kNumClasses);
Raster label_raster(const LabelMap& y, std::size_t batch_index, Geotransform gt, int crs);

// RSTX container: "RSTX1", u32 LE header length, JSON header, band-major LE
// payload (f32 or u8).
std::vector<std::uint8_t> encode_rstx(const Raster& r);
Raster decode_rstx(const std::vector<std::uint8_t>& bytes);
void write_rstx(const std::filesystem::path& path, const Raster& r);
Raster read_rstx(const std::filesystem::path& path);

/// (a - b) / (a + b); 0 where a + b == 0. Throws DataError on size mismatch.
std::vector<float> normalized_difference(std::span<const float> a, std::span<const float> b);
inline std::vector<float> ndvi(std::span<const float> b08, std::span<const float> b04) {
  return normalized_difference(b08, b04);
}
inline std::vector<float> ndwi(std::span<const float> b03, std::span<const float> b08) {
  return normalized_difference(b03, b08);
}

struct AerialTile {
  Raster image;
  Raster label;
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Non-overlapping row-major tiles; partial edge tiles are dropped.
std::vector<AerialTile> tile_aerial(const Raster& image, const Raster& label, std::size_t tile);

/// Samples an out_size x out_size grid over `bounds` by nearest neighbour
/// at output pixel centres. Output orientation follows sat's geotransform.
Raster crop_satellite(const Raster& sat, const WorldBox& bounds, std::size_t out_size);

}  // namespace difd::data
