#include "difd/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace difd::data {

namespace fs = std::filesystem;

std::vector<TilePair> make_pairs(const Raster& aerial, const Raster& label, const Raster& sat17, std::size_t tile,
                                 std::size_t sat_size, const std::string& parent) {
  std::vector<TilePair> out;
  for (auto& t : tile_aerial(aerial, label, tile)) {
    TilePair p;
    p.sat = crop_satellite(sat17, t.image.bounds(), sat_size);
    p.aerial = std::move(t.image);
    p.label = std::move(t.label);
    for (std::size_t b = 0; b < sat17.bands; ++b) p.sat_bands.push_back(b);
    p.parent = parent;
    p.row = t.row;
    p.col = t.col;
    check_pair(p);
    out.push_back(std::move(p));
  }
  return out;
}

void check_pair(const TilePair& p) {
  p.aerial.validate();
  p.sat.validate();
  p.label.validate();
  if (p.aerial.bands != 3) throw DataError(p.stem() + ": aerial must have 3 bands");
  if (p.label.bands != 1 || p.label.dtype != DType::U8) throw DataError(p.stem() + ": label must be 1-band u8");
  if (p.aerial.width != p.label.width || p.aerial.height != p.label.height || !(p.aerial.gt == p.label.gt)) {
    throw DataError(p.stem() + ": aerial and label geotransforms differ");
  }
  if (p.sat_bands.size() != p.sat.bands) throw DataError(p.stem() + ": satellite band list size mismatch");
  const WorldBox a = p.aerial.bounds(), s = p.sat.bounds();
  const double tol_x = std::abs(p.sat.gt.pixel_w), tol_y = std::abs(p.sat.gt.pixel_h);
  if (s.min_x > a.min_x + tol_x || s.max_x < a.max_x - tol_x || s.min_y > a.min_y + tol_y ||
      s.max_y < a.max_y - tol_y) {
    throw DataError(p.stem() + ": satellite bounds do not cover the aerial tile within one satellite pixel");
  }
}

TilePair normalize_pair(TilePair p) {
  if (p.normalized) return p;
  if (p.aerial.dtype == DType::U8) {
    Raster a(p.aerial.bands, p.aerial.width, p.aerial.height, DType::F32, p.aerial.gt, p.aerial.crs);
    for (std::size_t i = 0; i < a.f32.size(); ++i) a.f32[i] = static_cast<float>(p.aerial.u8[i]) / 255.f;
    p.aerial = std::move(a);
  } else {
    for (auto& v : p.aerial.f32) v = std::clamp(v / 255.f, 0.f, 1.f);
  }
  if (p.sat.dtype != DType::F32) throw DataError(p.stem() + ": satellite raster must be f32");
  for (std::size_t b = 0; b < p.sat.bands; ++b) {
    auto band = p.sat.band(b);
    switch (band_kind(p.sat_bands.at(b))) {
      case BandKind::Index:
        for (auto& v : band) v = std::clamp(v, -1.f, 1.f);
        break;
      case BandKind::Reflectance:
        for (auto& v : band) v = std::clamp(v, 0.f, 1.f);
        break;
      case BandKind::SceneClass:
        for (auto& v : band) v = v / 11.f;
        break;
      case BandKind::CloudProb:
        for (auto& v : band) v = std::clamp(v / 100.f, 0.f, 1.f);
        break;
    }
  }
  p.normalized = true;
  return p;
}

TilePair select_pair_bands(TilePair p, const BandSelection& sel) {
  std::vector<std::size_t> local;
  for (std::size_t want : sel.indices) {
    auto it = std::find(p.sat_bands.begin(), p.sat_bands.end(), want);
    if (it == p.sat_bands.end()) {
      throw DataError(p.stem() + ": band " + kBandNames.at(want) + " needed by " + sel.name + " is not stored");
    }
    local.push_back(static_cast<std::size_t>(it - p.sat_bands.begin()));
  }
  p.sat = select_bands(p.sat, local);
  p.sat_bands = sel.indices;
  return p;
}

Raster downsample_aerial(const Raster& aerial, std::size_t out_size) {
  aerial.validate();
  if (out_size == 0 || out_size > aerial.width || out_size > aerial.height) {
    throw ConfigError("downsample size must be in [1, tile size]");
  }
  const Geotransform gt{aerial.gt.origin_x, aerial.gt.origin_y,
                        aerial.gt.pixel_w * static_cast<double>(aerial.width) / static_cast<double>(out_size),
                        aerial.gt.pixel_h * static_cast<double>(aerial.height) / static_cast<double>(out_size)};
  Raster out(aerial.bands, out_size, out_size, DType::F32, gt, aerial.crs);
  for (std::size_t b = 0; b < aerial.bands; ++b)
    for (std::size_t i = 0; i < out_size; ++i) {
      const std::size_t r0 = i * aerial.height / out_size, r1 = (i + 1) * aerial.height / out_size;
      for (std::size_t j = 0; j < out_size; ++j) {
        const std::size_t c0 = j * aerial.width / out_size, c1 = (j + 1) * aerial.width / out_size;
        double acc = 0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) acc += aerial.at(b, r, c);
        out.set(b, i, j, static_cast<float>(acc / static_cast<double>((r1 - r0) * (c1 - c0))));
      }
    }
  return out;
}

std::vector<std::uint64_t> class_counts(const std::vector<Raster>& labels, std::size_t classes) {
  if (labels.empty()) throw DataError("class statistics need at least one label raster");
  std::vector<std::uint64_t> counts(classes, 0);
  for (const auto& l : labels) {
    const LabelMap y = to_label_map(l, classes);
    for (auto v : y.data) ++counts[v];
  }
  return counts;
}

metrics::ClassStats class_stats(const std::vector<Raster>& labels, std::size_t classes) {
  return metrics::class_weights(class_counts(labels, classes));
}

// ---------------------------------------------------------------------------

nlohmann::json Manifest::to_json() const {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& p : pairs) pj.push_back({{"split", p.split}, {"parent", p.parent}, {"row", p.row}, {"col", p.col}});
  nlohmann::json names = nlohmann::json::array();
  for (auto i : bands.indices) names.push_back(kBandNames.at(i));
  return {{"format", "difd-dataset"},
          {"version", 1},
          {"tile_size", tile_size},
          {"sat_size", sat_size},
          {"band_selection", bands.name},
          {"band_indices", bands.indices},
          {"band_names", names},
          {"classes", kClassNames},
          {"generation", generation},
          {"pairs", pj}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "difd-dataset") throw DataError("manifest format is not difd-dataset");
    if (j.at("version") != 1) throw DataError("unsupported manifest version");
    Manifest m;
    m.tile_size = j.at("tile_size").get<std::size_t>();
    m.sat_size = j.at("sat_size").get<std::size_t>();
    m.bands.name = j.at("band_selection").get<std::string>();
    m.bands.indices = j.at("band_indices").get<std::vector<std::size_t>>();
    m.generation = j.value("generation", nlohmann::json::object());
    for (const auto& p : j.at("pairs")) {
      m.pairs.push_back({p.at("split").get<std::string>(), p.at("parent").get<std::string>(),
                         p.at("row").get<std::size_t>(), p.at("col").get<std::size_t>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid manifest: ") + e.what());
  }
}

std::vector<PairRecord> Manifest::split(const std::string& name) const {
  std::vector<PairRecord> out;
  for (const auto& p : pairs)
    if (p.split == name) out.push_back(p);
  return out;
}

namespace {

fs::path pair_path(const fs::path& dir, const PairRecord& r, const char* part) {
  return dir / "pairs" / r.split / (r.stem() + "." + part + ".rstx");
}

}  // namespace

void write_dataset(const fs::path& dir, const std::vector<SplitPair>& pairs, const nlohmann::json& generation) {
  if (pairs.empty()) throw DataError("refusing to write an empty dataset");
  Manifest m;
  m.generation = generation;
  const TilePair& first = pairs.front().pair;
  m.tile_size = first.aerial.width;
  m.sat_size = first.sat.width;
  m.bands.indices = first.sat_bands;
  m.bands.name = first.sat_bands.size() == kCatalogBands ? "17B" : "custom";
  for (const char* n : {"4B", "7B", "10B", "17B"})
    if (BandSelection::by_name(n).indices == first.sat_bands) m.bands.name = n;
  std::error_code ec;
  for (const auto& sp : pairs) {
    if (sp.pair.sat_bands != first.sat_bands || sp.pair.aerial.width != m.tile_size) {
      throw DataError("all pairs of a dataset must share tile size and band list");
    }
    PairRecord rec{sp.split, sp.pair.parent, sp.pair.row, sp.pair.col};
    fs::create_directories(dir / "pairs" / rec.split, ec);
    if (ec) throw IoError("cannot create " + (dir / "pairs" / rec.split).string() + ": " + ec.message());
    write_rstx(pair_path(dir, rec, "aerial"), sp.pair.aerial);
    write_rstx(pair_path(dir, rec, "sat"), sp.pair.sat);
    write_rstx(pair_path(dir, rec, "label"), sp.pair.label);
    m.pairs.push_back(rec);
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << m.to_json().dump(2) << "\n";
}

Manifest read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("dataset manifest not found: " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  return Manifest::from_json(j);
}

TilePair load_pair(const fs::path& dir, const Manifest& m, const PairRecord& rec) {
  TilePair p;
  p.aerial = read_rstx(pair_path(dir, rec, "aerial"));
  p.sat = read_rstx(pair_path(dir, rec, "sat"));
  p.label = read_rstx(pair_path(dir, rec, "label"));
  p.sat_bands = m.bands.indices;
  p.parent = rec.parent;
  p.row = rec.row;
  p.col = rec.col;
  check_pair(p);
  to_label_map(p.label);
  return p;
}

std::vector<TilePair> load_split(const fs::path& dir, const Manifest& m, const std::string& split) {
  std::vector<TilePair> out;
  for (const auto& rec : m.split(split)) out.push_back(load_pair(dir, m, rec));
  return out;
}

}  // namespace difd::data
