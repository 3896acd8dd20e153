#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difd/nn/blocks.hpp"

namespace difd::model {

enum class Variant { UpConvT, UpNearest, UpBilinear, UpPS, AerialOnly, SatOnly };

/// What feeds the second input: satellite bands, or the aerial RGB tile
/// downsampled to the satellite grid.
enum class SecondSource { Satellite, DownsampledAerial };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string to_string(SecondSource s);
SecondSource second_source_from_string(const std::string& s);

/// Separable residual backbone; stem and each block halve the spatial size.
/// LLF is taken after block 1 (stride 4), features after block 3 (stride 16).
struct BackboneSpec {
  std::size_t stem_channels = 32;
  std::size_t llf_channels = 128;
  std::size_t mid_channels = 256;
  std::size_t out_channels = 512;
};

struct DifdConfig {
  Variant variant = Variant::UpConvT;
  std::size_t num_classes = 5;
  std::size_t aerial_size = 512;
  nn::SpatialPlan sat_plan = nn::SpatialPlan::reference();
  std::size_t c1 = 3;
  std::size_t c2 = 7;
  BackboneSpec backbone{};
  nn::DpcConfig dpc = nn::DpcConfig::reference();
  std::size_t llf1_channels = 48;
  std::size_t hlf_channels = 256;
  std::size_t llf2_channels = 48;
  /// conv3x3, conv3x3, conv1x1, up-stage 1, up-stage 2 output depths.
  std::vector<std::size_t> decoder_channels{256, 256, 256, 128, 64};
  std::size_t ps_mid_channels = 64;
  SecondSource second_source = SecondSource::Satellite;

  /// Full-size network (k = 512, 26x26 satellite crops).
  static DifdConfig reference(Variant v, std::size_t c2);
  /// Desk-scale network (k = 64, 4x4 satellite crops, narrow channels).
  static DifdConfig toy(Variant v, std::size_t c2);

  void validate() const;

  bool uses_aerial() const { return variant != Variant::SatOnly; }
  bool uses_second() const { return variant != Variant::AerialOnly; }
  /// Channel count of input 2.
  std::size_t second_channels() const { return second_source == SecondSource::Satellite ? c2 : c1; }
  /// Channel count of llf2 (raw channels for interpolating variants).
  std::size_t llf2_out_channels() const;
  /// Input depth of the final decoder (sum of concatenated branches).
  std::size_t fused_channels() const;

  nlohmann::json to_json() const;
  static DifdConfig from_json(const nlohmann::json& j);
  /// FNV-1a 64 of the canonical JSON encoding.
  std::uint64_t fingerprint() const;
};

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace difd::model
