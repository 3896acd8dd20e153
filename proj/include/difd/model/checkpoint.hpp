#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "difd/model/difd.hpp"

namespace difd::model {

/// On-disk checkpoint, little-endian throughout (see docs/checkpoint.md):
///
///   magic      8 bytes  "DIFDCKPT"
///   version    u32      kCheckpointVersion
///   fingerprint u64     DifdConfig::fingerprint()
///   seed       u64      initialisation seed
///   config     u32 length + UTF-8 JSON (DifdConfig::to_json)
///   count      u32      number of entries
///   entry*     u16 name length, name bytes, u8 trainable,
///              4 x u32 shape (n, c, h, w), n*c*h*w x f32 payload
struct CheckpointEntry {
  std::string name;
  bool trainable = true;
  Shape shape{};
  std::vector<float> values;
};

struct Checkpoint {
  std::uint32_t version = 0;
  std::uint64_t fingerprint = 0;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<CheckpointEntry> entries;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
Checkpoint capture_checkpoint(const DifdModel<T>& model);

/// Copies the entries into the model. Throws ConfigError on a fingerprint,
/// name or shape mismatch.
template <typename T>
void restore_checkpoint(const Checkpoint& ckpt, DifdModel<T>& model);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace difd::model
