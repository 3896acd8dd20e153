#include "difd/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace difd::model {

namespace {

constexpr char kMagic[8] = {'D', 'I', 'F', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  const std::uint8_t* bytes(std::size_t n) {
    if (pos_ + n > in_.size()) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U le() {
    const std::uint8_t* p = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
Checkpoint capture_checkpoint(const DifdModel<T>& model) {
  Checkpoint c;
  c.version = kCheckpointVersion;
  c.fingerprint = model.config().fingerprint();
  c.seed = model.seed();
  c.config = model.config().to_json();
  for (const auto& e : model.params().entries()) {
    CheckpointEntry ce;
    ce.name = e.name;
    ce.trainable = e.trainable;
    ce.shape = e.var.shape();
    ce.values.assign(e.var.value().values().begin(), e.var.value().values().end());
    c.entries.push_back(std::move(ce));
  }
  return c;
}

template <typename T>
void restore_checkpoint(const Checkpoint& ckpt, DifdModel<T>& model) {
  if (ckpt.fingerprint != model.config().fingerprint()) {
    throw ConfigError("checkpoint config fingerprint " + std::to_string(ckpt.fingerprint) +
                      " does not match model fingerprint " + std::to_string(model.config().fingerprint()));
  }
  auto& entries = model.params().entries();
  if (entries.size() != ckpt.entries.size()) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.entries.size()) + " entries, model has " +
                      std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& src = ckpt.entries[i];
    auto& dst = entries[i];
    if (src.name != dst.name || src.shape != dst.var.shape() || src.trainable != dst.trainable) {
      throw ConfigError("checkpoint entry '" + src.name + "' " + src.shape.str() + " does not match model entry '" +
                        dst.name + "' " + dst.var.shape().str());
    }
    auto& values = dst.var.mutable_value().values();
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = static_cast<T>(src.values[k]);
  }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint64_t>(ckpt.fingerprint);
  w.le<std::uint64_t>(ckpt.seed);
  const std::string cfg = ckpt.config.dump();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg.data(), cfg.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    if (e.name.size() > 0xFFFF) throw ConfigError("parameter name too long: " + e.name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint8_t>(e.trainable ? 1 : 0);
    for (std::size_t d : {e.shape.n, e.shape.c, e.shape.h, e.shape.w}) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    if (e.values.size() != e.shape.numel()) throw ConfigError("checkpoint entry '" + e.name + "' payload size mismatch");
    for (float v : e.values) w.f32(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.bytes(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) throw DataError("not a DIFD checkpoint");
  Checkpoint c;
  c.version = r.le<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(c.version));
  }
  c.fingerprint = r.le<std::uint64_t>();
  c.seed = r.le<std::uint64_t>();
  const auto cfg_len = r.le<std::uint32_t>();
  const auto* cfg = r.bytes(cfg_len);
  try {
    c.config = nlohmann::json::parse(cfg, cfg + cfg_len);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  const auto count = r.le<std::uint32_t>();
  c.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = r.le<std::uint16_t>();
    const auto* name = r.bytes(len);
    e.name.assign(reinterpret_cast<const char*>(name), len);
    e.trainable = r.le<std::uint8_t>() != 0;
    e.shape.n = r.le<std::uint32_t>();
    e.shape.c = r.le<std::uint32_t>();
    e.shape.h = r.le<std::uint32_t>();
    e.shape.w = r.le<std::uint32_t>();
    e.values.resize(e.shape.numel());
    for (auto& v : e.values) v = r.f32();
    c.entries.push_back(std::move(e));
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint payload");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template Checkpoint capture_checkpoint(const DifdModel<float>&);
template Checkpoint capture_checkpoint(const DifdModel<double>&);
template void restore_checkpoint(const Checkpoint&, DifdModel<float>&);
template void restore_checkpoint(const Checkpoint&, DifdModel<double>&);

}  // namespace difd::model
