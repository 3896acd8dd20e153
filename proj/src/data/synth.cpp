#include "difd/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace difd::data {

namespace {

using Rng = std::mt19937_64;

// Reflectance signatures for catalog bands B02..B12 (2..11) and the
// enhanced-colour bands B02E..B04E (12..14), indexed by class code.
constexpr std::array<std::array<double, 13>, kNumClasses> kSignature{{
    {0.06, 0.09, 0.10, 0.14, 0.20, 0.23, 0.26, 0.27, 0.28, 0.20, 0.35, 0.40, 0.30},  // background
    {0.15, 0.16, 0.18, 0.20, 0.21, 0.22, 0.24, 0.24, 0.30, 0.28, 0.55, 0.50, 0.50},  // building
    {0.03, 0.05, 0.03, 0.08, 0.25, 0.32, 0.38, 0.40, 0.18, 0.09, 0.15, 0.30, 0.12},  // woodland
    {0.08, 0.07, 0.05, 0.04, 0.03, 0.02, 0.02, 0.02, 0.01, 0.01, 0.25, 0.30, 0.45},  // water
    {0.10, 0.11, 0.12, 0.13, 0.14, 0.15, 0.16, 0.16, 0.22, 0.20, 0.40, 0.40, 0.40},  // road
}};
constexpr std::array<int, kNumClasses> kSclCode{5, 5, 4, 6, 5};

constexpr std::array<double, 3> kBackgroundRgb{150, 140, 100};
constexpr std::array<double, 3> kWoodlandRgb{55, 95, 50};
constexpr std::array<double, 3> kRoofRgb{185, 85, 75};
constexpr std::array<double, 3> kRoofEdgeRgb{120, 60, 55};
constexpr std::array<double, 3> kRoadRgb{105, 105, 110};
constexpr std::array<double, 3> kOutlineRgb{70, 75, 65};

Rng derive(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct Ellipse {
  double cx, cy, rx, ry, angle;
  bool contains(double x, double y, double shrink = 0) const {
    const double a = rx - shrink, b = ry - shrink;
    if (a <= 0 || b <= 0) return false;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (x - cx) * c + (y - cy) * s, v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

Ellipse random_ellipse(Rng& rng, double size, double rmin, double rmax) {
  return {uniform(rng, 0, size), uniform(rng, 0, size), uniform(rng, rmin, rmax), uniform(rng, rmin, rmax),
          uniform(rng, 0, std::numbers::pi)};
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace

SynthSpec SynthSpec::paper_scale() {
  SynthSpec s;
  s.tile_size = 512;
  s.sat_size = 26;
  s.sat_pixel_m = 10;
  s.parent_tiles = 1;
  s.woodland_blobs = 3;
  s.water_blobs = 2;
  s.decoy_blobs = 2;
  s.buildings = 12;
  s.outline_width = 4;
  return s;
}

double SynthSpec::effective_sat_pixel_m() const {
  return sat_pixel_m > 0 ? sat_pixel_m : static_cast<double>(tile_size) * aerial_pixel_m / static_cast<double>(sat_size);
}

void SynthSpec::validate() const {
  if (tile_size < 16) throw ConfigError("synthetic tile_size must be >= 16");
  if (sat_size == 0 || sat_size > tile_size) throw ConfigError("synthetic sat_size must be in [1, tile_size]");
  if (parent_tiles == 0) throw ConfigError("parent_tiles must be >= 1");
  if (!(aerial_pixel_m > 0) || sat_pixel_m < 0) throw ConfigError("pixel sizes must be positive");
  if (effective_sat_pixel_m() < aerial_pixel_m) throw ConfigError("satellite pixels must not be finer than aerial ones");
  if (road_width_min == 0 || road_width_min > road_width_max) throw ConfigError("invalid road width range");
  if (road_width_max >= tile_size) {
    throw ConfigError("road width " + std::to_string(road_width_max) + " does not fit in a " +
                      std::to_string(tile_size) + "-px tile");
  }
  if (outline_width * 4 >= tile_size) throw ConfigError("outline width too large for the tile");
  if (aerial_noise < 0 || sat_noise < 0) throw ConfigError("noise levels must be >= 0");
}

nlohmann::json SynthSpec::to_json() const {
  return {{"tile_size", tile_size},       {"sat_size", sat_size},
          {"parent_tiles", parent_tiles}, {"aerial_pixel_m", aerial_pixel_m},
          {"sat_pixel_m", sat_pixel_m},   {"crs", crs},
          {"woodland_blobs", woodland_blobs}, {"water_blobs", water_blobs},
          {"decoy_blobs", decoy_blobs},   {"roads", roads},
          {"road_width_min", road_width_min}, {"road_width_max", road_width_max},
          {"buildings", buildings},       {"outline_width", outline_width},
          {"aerial_noise", aerial_noise}, {"sat_noise", sat_noise},
          {"satellite_signal", satellite_signal}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.tile_size = j.value("tile_size", s.tile_size);
    s.sat_size = j.value("sat_size", s.sat_size);
    s.parent_tiles = j.value("parent_tiles", s.parent_tiles);
    s.aerial_pixel_m = j.value("aerial_pixel_m", s.aerial_pixel_m);
    s.sat_pixel_m = j.value("sat_pixel_m", s.sat_pixel_m);
    s.crs = j.value("crs", s.crs);
    s.woodland_blobs = j.value("woodland_blobs", s.woodland_blobs);
    s.water_blobs = j.value("water_blobs", s.water_blobs);
    s.decoy_blobs = j.value("decoy_blobs", s.decoy_blobs);
    s.roads = j.value("roads", s.roads);
    s.road_width_min = j.value("road_width_min", s.road_width_min);
    s.road_width_max = j.value("road_width_max", s.road_width_max);
    s.buildings = j.value("buildings", s.buildings);
    s.outline_width = j.value("outline_width", s.outline_width);
    s.aerial_noise = j.value("aerial_noise", s.aerial_noise);
    s.sat_noise = j.value("sat_noise", s.sat_noise);
    s.satellite_signal = j.value("satellite_signal", s.satellite_signal);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SynthScene synth_scene(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng geo = derive(seed, 0, 1);
  Rng sat_rng = derive(seed, 0, 2);
  const std::size_t S = spec.tile_size * spec.parent_tiles;
  const double size = static_cast<double>(S);
  const double u = static_cast<double>(spec.tile_size) / 64.0;

  LabelMap y(1, S, S, kBackground);
  std::vector<std::uint8_t> outline(S * S, 0), reserved(S * S, 0);
  auto paint = [&](const Ellipse& e, std::uint8_t cls, bool ring) {
    const auto x0 = static_cast<std::size_t>(std::max(0.0, e.cx - std::max(e.rx, e.ry) - 1));
    const auto x1 = static_cast<std::size_t>(std::min(size - 1, e.cx + std::max(e.rx, e.ry) + 1));
    const auto y0 = static_cast<std::size_t>(std::max(0.0, e.cy - std::max(e.rx, e.ry) - 1));
    const auto y1 = static_cast<std::size_t>(std::min(size - 1, e.cy + std::max(e.rx, e.ry) + 1));
    for (std::size_t i = y0; i <= y1; ++i)
      for (std::size_t j = x0; j <= x1; ++j) {
        const double px = static_cast<double>(j) + 0.5, py = static_cast<double>(i) + 0.5;
        if (!e.contains(px, py)) continue;
        y(0, i, j) = cls;
        if (ring) {
          reserved[i * S + j] = 1;
          outline[i * S + j] = e.contains(px, py, static_cast<double>(spec.outline_width)) ? 0 : 1;
        }
      }
  };

  // Woodland: clusters of overlapping ellipses.
  for (std::size_t k = 0; k < spec.woodland_blobs; ++k) {
    const Ellipse base = random_ellipse(geo, size, 8 * u, 18 * u);
    paint(base, kWoodland, false);
    const std::size_t extra = uniform_int(geo, 1, 2);
    for (std::size_t e = 0; e < extra; ++e) {
      Ellipse part = base;
      part.cx += uniform(geo, -10 * u, 10 * u);
      part.cy += uniform(geo, -10 * u, 10 * u);
      part.rx = uniform(geo, 6 * u, 14 * u);
      part.ry = uniform(geo, 6 * u, 14 * u);
      paint(part, kWoodland, false);
    }
  }
  // Water and decoys share shape statistics and outline; decoys stay background.
  std::vector<Ellipse> lakes;
  auto place_lake = [&](std::uint8_t cls) {
    Ellipse best{};
    for (int attempt = 0; attempt < 40; ++attempt) {
      best = random_ellipse(geo, size, 12 * u, 22 * u);
      bool clear = true;
      for (const auto& o : lakes) {
        const double d = std::hypot(best.cx - o.cx, best.cy - o.cy);
        if (d < std::max(best.rx, best.ry) + std::max(o.rx, o.ry) + 2) clear = false;
      }
      if (clear) break;
    }
    lakes.push_back(best);
    paint(best, cls, true);
  };
  for (std::size_t k = 0; k < std::max(spec.water_blobs, spec.decoy_blobs); ++k) {
    if (k < spec.water_blobs) place_lake(kWater);
    if (k < spec.decoy_blobs) place_lake(kBackground);
  }
  // Roads: two-segment polylines between opposite edges.
  for (std::size_t k = 0; k < spec.roads; ++k) {
    const bool horizontal = geo() % 2 == 0;
    const double a = uniform(geo, 0.1 * size, 0.9 * size), b = uniform(geo, 0.1 * size, 0.9 * size);
    const double mx = uniform(geo, 0.3 * size, 0.7 * size), my = uniform(geo, 0.3 * size, 0.7 * size);
    const double ax = horizontal ? 0 : a, ay = horizontal ? a : 0;
    const double bx = horizontal ? size : b, by = horizontal ? b : size;
    const double half = static_cast<double>(uniform_int(geo, spec.road_width_min, spec.road_width_max)) / 2.0;
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        const double px = static_cast<double>(j) + 0.5, py = static_cast<double>(i) + 0.5;
        if (std::min(segment_distance(px, py, ax, ay, mx, my), segment_distance(px, py, mx, my, bx, by)) < half) {
          y(0, i, j) = kRoad;
          outline[i * S + j] = 0;
        }
      }
  }
  // Buildings: rectangles on free background only.
  std::vector<std::uint8_t> roof_edge(S * S, 0);
  for (std::size_t k = 0; k < spec.buildings; ++k) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      const auto bw = static_cast<std::size_t>(uniform(geo, 5 * u, 12 * u));
      const auto bh = static_cast<std::size_t>(uniform(geo, 5 * u, 12 * u));
      if (bw + 2 >= S || bh + 2 >= S) break;
      const std::size_t r0 = uniform_int(geo, 1, S - bh - 1), c0 = uniform_int(geo, 1, S - bw - 1);
      bool free = true;
      for (std::size_t i = r0 - 1; i <= r0 + bh && free; ++i)
        for (std::size_t j = c0 - 1; j <= c0 + bw && free; ++j)
          free = y(0, i, j) == kBackground && !reserved[i * S + j];
      if (!free) continue;
      for (std::size_t i = r0; i < r0 + bh; ++i)
        for (std::size_t j = c0; j < c0 + bw; ++j) {
          y(0, i, j) = kBuilding;
          roof_edge[i * S + j] = i == r0 || j == c0 || i + 1 == r0 + bh || j + 1 == c0 + bw;
        }
      break;
    }
  }

  // Aerial rendering.
  const Geotransform agt{500000.0 + 1000.0 * static_cast<double>(geo() % 1000), 5800000.0, spec.aerial_pixel_m,
                         -spec.aerial_pixel_m};
  SynthScene scene;
  scene.aerial = Raster(3, S, S, DType::U8, agt, spec.crs);
  scene.label = label_raster(y, 0, agt, spec.crs);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::array<double, 3> tint{};
  for (auto& t : tint) t = 8 * noise(geo);
  const double fx = uniform(geo, 0.02, 0.08), fy = uniform(geo, 0.02, 0.08), ph = uniform(geo, 0, 6.28);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t j = 0; j < S; ++j) {
      const std::uint8_t cls = y(0, i, j);
      const std::array<double, 3>* rgb = &kBackgroundRgb;
      double sigma = spec.aerial_noise;
      double shade = 6 * std::sin(fx * static_cast<double>(j) + fy * static_cast<double>(i) + ph);
      if (outline[i * S + j]) {
        rgb = &kOutlineRgb;
        shade = 0;
      } else if (cls == kWoodland) {
        rgb = &kWoodlandRgb;
        sigma *= 2.5;
      } else if (cls == kBuilding) {
        rgb = roof_edge[i * S + j] ? &kRoofEdgeRgb : &kRoofRgb;
        shade = 0;
      } else if (cls == kRoad) {
        rgb = &kRoadRgb;
        shade = 0;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (*rgb)[c] + (rgb == &kBackgroundRgb ? tint[c] + shade : 0) + sigma * noise(geo);
        scene.aerial.set(c, i, j, static_cast<float>(std::clamp(v, 0.0, 255.0)));
      }
    }

  // Satellite parent raster: class fractions over each footprint.
  const double spm = spec.effective_sat_pixel_m();
  const double ratio = spm / spec.aerial_pixel_m;
  const auto ns = static_cast<std::size_t>(std::ceil(size / ratio - 1e-9));
  scene.sat17 = Raster(kCatalogBands, ns, ns, DType::F32, Geotransform{agt.origin_x, agt.origin_y, spm, -spm}, spec.crs);
  Raster& sat = scene.sat17;
  for (std::size_t si = 0; si < ns; ++si)
    for (std::size_t sj = 0; sj < ns; ++sj) {
      std::array<double, kNumClasses> frac{};
      double n = 0;
      const auto lo_r = static_cast<std::size_t>(std::ceil(static_cast<double>(si) * ratio - 0.5));
      const auto lo_c = static_cast<std::size_t>(std::ceil(static_cast<double>(sj) * ratio - 0.5));
      for (std::size_t i = lo_r; i < S && static_cast<double>(i) + 0.5 < static_cast<double>(si + 1) * ratio; ++i)
        for (std::size_t j = lo_c; j < S && static_cast<double>(j) + 0.5 < static_cast<double>(sj + 1) * ratio; ++j) {
          frac[y(0, i, j)] += 1;
          n += 1;
        }
      if (n == 0) {
        frac[kBackground] = 1;
        n = 1;
      }
      for (auto& f : frac) f /= n;
      const std::size_t majority = static_cast<std::size_t>(std::max_element(frac.begin(), frac.end()) - frac.begin());
      for (std::size_t b = kB02; b <= kB04E; ++b) {
        double v;
        if (spec.satellite_signal) {
          v = 0;
          for (std::size_t c = 0; c < kNumClasses; ++c) v += frac[c] * kSignature[c][b - kB02];
          v += spec.sat_noise * noise(sat_rng);
        } else {
          v = uniform(sat_rng, 0.0, 0.4);
        }
        sat.set(b, si, sj, static_cast<float>(v));
      }
      const int scl = spec.satellite_signal ? kSclCode[majority] : static_cast<int>(uniform_int(sat_rng, 4, 6));
      sat.set(kSCL, si, sj, static_cast<float>(scl));
      sat.set(kCLD, si, sj, static_cast<float>(std::min(100.0, std::abs(1.5 * noise(sat_rng)))));
    }
  const auto nd_vi = ndvi(sat.band(kB08), sat.band(kB04));
  const auto nd_wi = ndwi(sat.band(kB03), sat.band(kB08));
  std::copy(nd_vi.begin(), nd_vi.end(), sat.band(kNDVI).begin());
  std::copy(nd_wi.begin(), nd_wi.end(), sat.band(kNDWI).begin());
  return scene;
}

std::vector<TilePair> synth_generate(std::uint64_t seed, std::size_t n_pairs, const SynthSpec& spec,
                                     const std::string& prefix) {
  spec.validate();
  std::vector<TilePair> out;
  for (std::uint64_t k = 0; out.size() < n_pairs; ++k) {
    Rng r = derive(seed, k, 0);
    const SynthScene s = synth_scene(spec, r());
    auto pairs = make_pairs(s.aerial, s.label, s.sat17, spec.tile_size, spec.sat_size, prefix + std::to_string(k));
    for (auto& p : pairs) {
      if (out.size() == n_pairs) break;
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace difd::data
