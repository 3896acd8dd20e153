#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difd/data/bands.hpp"
#include "difd/data/raster.hpp"
#include "difd/metrics/losses.hpp"

namespace difd::data {

/// One co-registered training sample.
struct TilePair {
  Raster aerial;  ///< 3 bands, u8 raw or f32 normalised
  Raster sat;     ///< C2 bands, f32
  Raster label;   ///< 1 band, u8 class codes
  std::vector<std::size_t> sat_bands;  ///< catalog index of each sat band
  std::string parent;
  std::size_t row = 0;
  std::size_t col = 0;
  bool normalized = false;

  std::string stem() const { return parent + "_" + std::to_string(row) + "_" + std::to_string(col); }
};

/// Tiles the aerial parent and crops the satellite parent over each tile's
/// world bounds.
std::vector<TilePair> make_pairs(const Raster& aerial, const Raster& label, const Raster& sat17, std::size_t tile,
                                 std::size_t sat_size, const std::string& parent);

/// Throws DataError unless aerial/label share a geotransform and the
/// satellite bounds cover the aerial bounds within one satellite pixel.
void check_pair(const TilePair& p);

/// Aerial /255 into [0, 1]; NDVI/NDWI clipped to [-1, 1]; reflectances
/// clipped to [0, 1]; SCL codes scaled by 1/11; CLD scaled by 1/100.
/// Pairs already normalised are returned unchanged.
TilePair normalize_pair(TilePair p);

/// Selects catalog bands from the pair's satellite raster. The pair must
/// carry every requested catalog band.
TilePair select_pair_bands(TilePair p, const BandSelection& sel);

/// Box-filtered RGB at out_size x out_size (second input for the
/// downsampled-aerial source).
Raster downsample_aerial(const Raster& aerial, std::size_t out_size);

std::vector<std::uint64_t> class_counts(const std::vector<Raster>& labels, std::size_t classes = kNumClasses);
/// Counts -> frequencies -> weights. Throws DataError on an empty list or a
/// class with zero pixels.
metrics::ClassStats class_stats(const std::vector<Raster>& labels, std::size_t classes = kNumClasses);

// ---------------------------------------------------------------------------
// On-disk dataset: manifest.json + pairs/{split}/{stem}.{aerial|sat|label}.rstx

struct PairRecord {
  std::string split;
  std::string parent;
  std::size_t row = 0;
  std::size_t col = 0;
  std::string stem() const { return parent + "_" + std::to_string(row) + "_" + std::to_string(col); }
};

struct Manifest {
  std::size_t tile_size = 0;
  std::size_t sat_size = 0;
  BandSelection bands;
  nlohmann::json generation = nlohmann::json::object();
  std::vector<PairRecord> pairs;

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  std::vector<PairRecord> split(const std::string& name) const;
};

struct SplitPair {
  std::string split;
  TilePair pair;
};

void write_dataset(const std::filesystem::path& dir, const std::vector<SplitPair>& pairs,
                   const nlohmann::json& generation);
Manifest read_manifest(const std::filesystem::path& dir);
TilePair load_pair(const std::filesystem::path& dir, const Manifest& m, const PairRecord& rec);
std::vector<TilePair> load_split(const std::filesystem::path& dir, const Manifest& m, const std::string& split);

}  // namespace difd::data
