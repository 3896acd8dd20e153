#include "difd/data/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace difd::data {

Raster::Raster(std::size_t b, std::size_t w, std::size_t h, DType t, Geotransform g, int c)
    : bands(b), width(w), height(h), dtype(t), gt(g), crs(c) {
  if (t == DType::F32)
    f32.assign(b * w * h, 0.f);
  else
    u8.assign(b * w * h, 0);
}

void Raster::set(std::size_t b, std::size_t row, std::size_t col, float v) {
  const std::size_t i = index(b, row, col);
  if (dtype == DType::F32) {
    f32[i] = v;
  } else {
    u8[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
}

std::span<const float> Raster::band(std::size_t b) const {
  if (dtype != DType::F32) throw DataError("band view requires an f32 raster");
  return std::span<const float>(f32).subspan(b * width * height, width * height);
}

std::span<float> Raster::band(std::size_t b) {
  if (dtype != DType::F32) throw DataError("band view requires an f32 raster");
  return std::span<float>(f32).subspan(b * width * height, width * height);
}

WorldBox Raster::bounds() const {
  const auto [x0, y0] = gt.pixel_to_world(0, 0);
  const auto [x1, y1] = gt.pixel_to_world(static_cast<double>(width), static_cast<double>(height));
  return {std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
}

Raster Raster::window(std::size_t row0, std::size_t col0, std::size_t h, std::size_t w) const {
  if (row0 + h > height || col0 + w > width) throw DataError("raster window outside raster");
  const auto [ox, oy] = gt.pixel_to_world(static_cast<double>(col0), static_cast<double>(row0));
  Raster out(bands, w, h, dtype, Geotransform{ox, oy, gt.pixel_w, gt.pixel_h}, crs);
  out.nodata = nodata;
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t r = 0; r < h; ++r) {
      const std::size_t src = index(b, row0 + r, col0);
      const std::size_t dst = out.index(b, r, 0);
      if (dtype == DType::F32)
        std::copy_n(f32.begin() + static_cast<long>(src), w, out.f32.begin() + static_cast<long>(dst));
      else
        std::copy_n(u8.begin() + static_cast<long>(src), w, out.u8.begin() + static_cast<long>(dst));
    }
  return out;
}

void Raster::validate() const {
  const std::size_t n = bands * width * height;
  if (bands == 0 || width == 0 || height == 0) throw DataError("raster has an empty dimension");
  if ((dtype == DType::F32 ? f32.size() : u8.size()) != n) throw DataError("raster payload size mismatch");
  if (gt.pixel_w == 0 || gt.pixel_h == 0) throw DataError("raster geotransform has a zero pixel size");
}

LabelMap to_label_map(const Raster& label, std::size_t classes) {
  if (label.dtype != DType::U8 || label.bands != 1) throw DataError("label raster must be single-band u8");
  LabelMap y(1, label.height, label.width);
  y.data = label.u8;
  check_labels(y, classes);
  return y;
}

Raster label_raster(const LabelMap& y, std::size_t batch_index, Geotransform gt, int crs) {
  Raster r(1, y.w, y.h, DType::U8, gt, crs);
  const auto begin = y.data.begin() + static_cast<long>(batch_index * y.h * y.w);
  std::copy(begin, begin + static_cast<long>(y.h * y.w), r.u8.begin());
  return r;
}

namespace {

constexpr char kMagic[5] = {'R', 'S', 'T', 'X', '1'};

}  // namespace

std::vector<std::uint8_t> encode_rstx(const Raster& r) {
  r.validate();
  nlohmann::json h = {{"bands", r.bands},
                      {"width", r.width},
                      {"height", r.height},
                      {"dtype", r.dtype == DType::F32 ? "f32" : "u8"},
                      {"geotransform", {r.gt.origin_x, r.gt.origin_y, r.gt.pixel_w, r.gt.pixel_h}},
                      {"crs", r.crs},
                      {"nodata", nullptr}};
  if (r.nodata) {
    if (!std::isfinite(*r.nodata)) throw DataError("RSTX nodata must be finite");
    h["nodata"] = *r.nodata;
  }
  const std::string header = h.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  if (r.dtype == DType::U8) {
    out.insert(out.end(), r.u8.begin(), r.u8.end());
  } else {
    out.reserve(out.size() + 4 * r.f32.size());
    for (float v : r.f32) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

Raster decode_rstx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw DataError("not an RSTX file");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[5 + static_cast<std::size_t>(i)]) << (8 * i);
  if (9 + static_cast<std::size_t>(len) > bytes.size()) throw DataError("RSTX header truncated");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + len);
    Raster r;
    r.bands = h.at("bands").get<std::size_t>();
    r.width = h.at("width").get<std::size_t>();
    r.height = h.at("height").get<std::size_t>();
    const std::string dt = h.at("dtype").get<std::string>();
    if (dt != "f32" && dt != "u8") throw DataError("RSTX dtype '" + dt + "' not supported");
    r.dtype = dt == "f32" ? DType::F32 : DType::U8;
    const auto g = h.at("geotransform").get<std::vector<double>>();
    if (g.size() != 4) throw DataError("RSTX geotransform must have 4 entries");
    r.gt = {g[0], g[1], g[2], g[3]};
    r.crs = h.at("crs").get<int>();
    if (!h.at("nodata").is_null()) r.nodata = h.at("nodata").get<double>();
    const std::size_t n = r.bands * r.width * r.height;
    const std::size_t payload = bytes.size() - 9 - len;
    const std::size_t expect = r.dtype == DType::F32 ? 4 * n : n;
    if (payload != expect) {
      throw DataError("RSTX payload has " + std::to_string(payload) + " bytes, expected " + std::to_string(expect));
    }
    const std::uint8_t* p = bytes.data() + 9 + len;
    if (r.dtype == DType::U8) {
      r.u8.assign(p, p + n);
    } else {
      r.f32.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[4 * i + static_cast<std::size_t>(k)]) << (8 * k);
        r.f32[i] = std::bit_cast<float>(bits);
      }
    }
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("RSTX header invalid: ") + e.what());
  }
}

void write_rstx(const std::filesystem::path& path, const Raster& r) {
  const auto bytes = encode_rstx(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Raster read_rstx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_rstx(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<float> normalized_difference(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DataError("band size mismatch in normalized difference");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double s = static_cast<double>(a[i]) + b[i];
    out[i] = s == 0 ? 0.f : static_cast<float>((static_cast<double>(a[i]) - b[i]) / s);
  }
  return out;
}

std::vector<AerialTile> tile_aerial(const Raster& image, const Raster& label, std::size_t tile) {
  if (tile == 0) throw ConfigError("tile size must be >= 1");
  image.validate();
  label.validate();
  if (image.width != label.width || image.height != label.height || !(image.gt == label.gt) ||
      image.crs != label.crs) {
    throw DataError("aerial image and label are not aligned (size, geotransform or CRS differ)");
  }
  std::vector<AerialTile> tiles;
  const std::size_t rows = image.height / tile, cols = image.width / tile;
  tiles.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      tiles.push_back({image.window(r * tile, c * tile, tile, tile), label.window(r * tile, c * tile, tile, tile), r, c});
  return tiles;
}

Raster crop_satellite(const Raster& sat, const WorldBox& bounds, std::size_t out_size) {
  sat.validate();
  if (out_size == 0) throw ConfigError("crop size must be >= 1");
  if (!(bounds.max_x > bounds.min_x) || !(bounds.max_y > bounds.min_y)) throw DataError("empty crop bounds");
  const double dx = (bounds.max_x - bounds.min_x) / static_cast<double>(out_size);
  const double dy = (bounds.max_y - bounds.min_y) / static_cast<double>(out_size);
  const double ox = sat.gt.pixel_w > 0 ? bounds.min_x : bounds.max_x;
  const double oy = sat.gt.pixel_h > 0 ? bounds.min_y : bounds.max_y;
  const Geotransform gt{ox, oy, sat.gt.pixel_w > 0 ? dx : -dx, sat.gt.pixel_h > 0 ? dy : -dy};
  Raster out(sat.bands, out_size, out_size, sat.dtype, gt, sat.crs);
  out.nodata = sat.nodata;
  std::vector<std::size_t> src_row(out_size), src_col(out_size);
  for (std::size_t k = 0; k < out_size; ++k) {
    const double centre = static_cast<double>(k) + 0.5;
    const auto [x, y] = gt.pixel_to_world(centre, centre);
    const auto [pc, pr] = sat.gt.world_to_pixel(x, y);
    const double fc = std::floor(pc), fr = std::floor(pr);
    if (fc < 0 || fr < 0 || fc >= static_cast<double>(sat.width) || fr >= static_cast<double>(sat.height)) {
      throw DataError("crop bounds fall outside the satellite raster");
    }
    src_col[k] = static_cast<std::size_t>(fc);
    src_row[k] = static_cast<std::size_t>(fr);
  }
  bool any_valid = !sat.nodata.has_value();
  for (std::size_t b = 0; b < sat.bands; ++b)
    for (std::size_t i = 0; i < out_size; ++i)
      for (std::size_t j = 0; j < out_size; ++j) {
        const std::size_t s = sat.index(b, src_row[i], src_col[j]);
        const std::size_t d = out.index(b, i, j);
        if (sat.dtype == DType::F32)
          out.f32[d] = sat.f32[s];
        else
          out.u8[d] = sat.u8[s];
        if (!any_valid && static_cast<double>(out.at(b, i, j)) != *sat.nodata) any_valid = true;
      }
  if (!any_valid) throw DataError("satellite crop window contains only nodata");
  return out;
}

}  // namespace difd::data
