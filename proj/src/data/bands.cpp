#include "difd/data/bands.hpp"

#include <algorithm>

namespace difd::data {

BandKind band_kind(std::size_t i) {
  if (i == kNDVI || i == kNDWI) return BandKind::Index;
  if (i == kSCL) return BandKind::SceneClass;
  if (i == kCLD) return BandKind::CloudProb;
  if (i >= kCatalogBands) throw DataError("band index " + std::to_string(i) + " outside the 17-band catalog");
  return BandKind::Reflectance;
}

BandSelection BandSelection::by_name(const std::string& name) {
  if (name == "4B") return b4();
  if (name == "7B") return b7();
  if (name == "10B") return b10();
  if (name == "17B") return all();
  throw ConfigError("unknown band selection '" + name + "' (expected 4B, 7B, 10B or 17B)");
}

Raster select_bands(const Raster& r, const std::vector<std::size_t>& indices) {
  r.validate();
  if (indices.empty()) throw ConfigError("band selection is empty");
  Raster out(indices.size(), r.width, r.height, r.dtype, r.gt, r.crs);
  out.nodata = r.nodata;
  const std::size_t plane = r.width * r.height;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= r.bands) {
      throw DataError("band " + std::to_string(indices[k]) + " requested from a " + std::to_string(r.bands) +
                      "-band raster");
    }
    const auto src = static_cast<long>(indices[k] * plane), dst = static_cast<long>(k * plane);
    if (r.dtype == DType::F32)
      std::copy_n(r.f32.begin() + src, plane, out.f32.begin() + dst);
    else
      std::copy_n(r.u8.begin() + src, plane, out.u8.begin() + dst);
  }
  return out;
}

Raster select_bands(const Raster& sat17, const BandSelection& sel) {
  if (sat17.bands != kCatalogBands) {
    throw DataError("band selection " + sel.name + " needs a 17-band raster, got " + std::to_string(sat17.bands));
  }
  return select_bands(sat17, sel.indices);
}

}  // namespace difd::data
