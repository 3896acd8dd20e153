#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difd/data/dataset.hpp"

namespace difd::data {

/// Procedural paired-scene generator. Water is drawn with the background
/// texture in the aerial image; the same outline is drawn around water and
/// around "decoy" background patches, so only the satellite bands tell them
/// apart.
struct SynthSpec {
  std::size_t tile_size = 64;
  std::size_t sat_size = 4;
  std::size_t parent_tiles = 2;   ///< parent scene is parent_tiles x parent_tiles tiles
  double aerial_pixel_m = 0.5;
  double sat_pixel_m = 0;         ///< 0: tile_size * aerial_pixel_m / sat_size
  int crs = 2180;
  std::size_t woodland_blobs = 3;
  std::size_t water_blobs = 2;
  std::size_t decoy_blobs = 2;
  std::size_t roads = 1;
  std::size_t road_width_min = 3;
  std::size_t road_width_max = 4;
  std::size_t buildings = 8;
  std::size_t outline_width = 2;
  double aerial_noise = 6;        ///< std-dev of per-pixel aerial noise, DN
  double sat_noise = 0.01;        ///< std-dev of reflectance noise
  bool satellite_signal = true;   ///< false: satellite bands are pure noise

  static SynthSpec toy() { return {}; }
  /// 512-px tiles at 0.5 m with 10 m satellite pixels cropped to 26x26.
  static SynthSpec paper_scale();

  double effective_sat_pixel_m() const;
  /// Throws ConfigError for infeasible specs.
  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SynthScene {
  Raster aerial;  ///< 3-band u8
  Raster label;   ///< 1-band u8
  Raster sat17;   ///< 17-band f32, raw (reflectance in [0,1] plus noise, SCL codes, CLD percent)
};

SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed);

/// n_pairs tile pairs from consecutive scenes; deterministic given seed.
/// Parent ids are "{prefix}{scene index}".
std::vector<TilePair> synth_generate(std::uint64_t seed, std::size_t n_pairs, const SynthSpec& spec,
                                     const std::string& prefix = "s");

}  // namespace difd::data
