#include "difd/model/config.hpp"

#include <array>
#include <utility>

namespace difd::model {

namespace {

constexpr std::array<std::pair<Variant, const char*>, 6> kVariantNames{{
    {Variant::UpConvT, "UpConvT"},
    {Variant::UpNearest, "UpNearest"},
    {Variant::UpBilinear, "UpBilinear"},
    {Variant::UpPS, "UpPS"},
    {Variant::AerialOnly, "AerialOnly"},
    {Variant::SatOnly, "SatOnly"},
}};

}  // namespace

std::string to_string(Variant v) {
  for (const auto& [k, name] : kVariantNames)
    if (k == v) return name;
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (const auto& [k, name] : kVariantNames)
    if (s == name) return k;
  throw ConfigError("unknown model variant: " + s);
}

std::string to_string(SecondSource s) { return s == SecondSource::Satellite ? "satellite" : "downsampled-aerial"; }

SecondSource second_source_from_string(const std::string& s) {
  if (s == "satellite") return SecondSource::Satellite;
  if (s == "downsampled-aerial") return SecondSource::DownsampledAerial;
  throw ConfigError("unknown second-input source: " + s);
}

DifdConfig DifdConfig::reference(Variant v, std::size_t c2) {
  DifdConfig c;
  c.variant = v;
  c.c2 = c2;
  return c;
}

DifdConfig DifdConfig::toy(Variant v, std::size_t c2) {
  DifdConfig c;
  c.variant = v;
  c.c2 = c2;
  c.aerial_size = 64;
  c.sat_plan = {4, 4, 2, 16};
  c.backbone = {16, 32, 32, 48};
  c.dpc.branch_channels = 16;
  c.dpc.branches = {{-1, 1, 1}, {0, 1, 2}, {0, 2, 1}};
  c.llf1_channels = 16;
  c.hlf_channels = 32;
  c.llf2_channels = 16;
  c.decoder_channels = {48, 48, 32, 24, 16};
  c.ps_mid_channels = 16;
  return c;
}

std::size_t DifdConfig::llf2_out_channels() const {
  switch (variant) {
    case Variant::UpNearest:
    case Variant::UpBilinear:
      return second_channels();
    case Variant::AerialOnly:
      return 0;
    default:
      return llf2_channels;
  }
}

std::size_t DifdConfig::fused_channels() const {
  std::size_t c = llf2_out_channels();
  if (uses_aerial()) c += llf1_channels + hlf_channels;
  return c;
}

void DifdConfig::validate() const {
  if (aerial_size == 0 || aerial_size % 16 != 0) {
    throw ConfigError("aerial_size " + std::to_string(aerial_size) + " must be a positive multiple of 16");
  }
  sat_plan.validate();
  if (sat_plan.target_size != aerial_size / 4) {
    throw ConfigError("sat_plan.target_size " + std::to_string(sat_plan.target_size) + " must equal aerial_size/4 = " +
                      std::to_string(aerial_size / 4));
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (c1 == 0) throw ConfigError("c1 must be >= 1");
  if (uses_second() && second_channels() == 0) throw ConfigError("second input needs >= 1 channel");
  if (variant == Variant::AerialOnly && second_source == SecondSource::DownsampledAerial) {
    throw ConfigError("AerialOnly variant has no second input; second_source must be 'satellite'");
  }
  if (variant == Variant::SatOnly && second_source == SecondSource::DownsampledAerial) {
    throw ConfigError("SatOnly variant cannot take its second input from the aerial tile");
  }
  if (decoder_channels.size() != 5) throw ConfigError("decoder_channels must list 5 depths");
  for (auto d : decoder_channels)
    if (d == 0) throw ConfigError("decoder channel depth must be >= 1");
  const auto& b = backbone;
  if (b.stem_channels == 0 || b.llf_channels == 0 || b.mid_channels == 0 || b.out_channels == 0) {
    throw ConfigError("backbone widths must be >= 1");
  }
  if (llf1_channels == 0 || hlf_channels == 0 || llf2_channels == 0 || ps_mid_channels == 0) {
    throw ConfigError("branch channel counts must be >= 1");
  }
  dpc.validate();
}

nlohmann::json DifdConfig::to_json() const {
  nlohmann::json branches = nlohmann::json::array();
  for (const auto& br : dpc.branches) branches.push_back({br.source, br.rate_h, br.rate_w});
  return {
      {"variant", to_string(variant)},
      {"num_classes", num_classes},
      {"aerial_size", aerial_size},
      {"sat_plan", {sat_plan.sat_size, sat_plan.pre_size, sat_plan.n_stages, sat_plan.target_size}},
      {"c1", c1},
      {"c2", c2},
      {"backbone", {backbone.stem_channels, backbone.llf_channels, backbone.mid_channels, backbone.out_channels}},
      {"dpc", {{"branch_channels", dpc.branch_channels}, {"branches", branches}}},
      {"llf1_channels", llf1_channels},
      {"hlf_channels", hlf_channels},
      {"llf2_channels", llf2_channels},
      {"decoder_channels", decoder_channels},
      {"ps_mid_channels", ps_mid_channels},
      {"second_source", to_string(second_source)},
  };
}

DifdConfig DifdConfig::from_json(const nlohmann::json& j) {
  try {
    DifdConfig c;
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.aerial_size = j.at("aerial_size").get<std::size_t>();
    const auto p = j.at("sat_plan").get<std::vector<std::size_t>>();
    if (p.size() != 4) throw ConfigError("sat_plan must have 4 entries");
    c.sat_plan = {p[0], p[1], p[2], p[3]};
    c.c1 = j.at("c1").get<std::size_t>();
    c.c2 = j.at("c2").get<std::size_t>();
    const auto bb = j.at("backbone").get<std::vector<std::size_t>>();
    if (bb.size() != 4) throw ConfigError("backbone must list 4 widths");
    c.backbone = {bb[0], bb[1], bb[2], bb[3]};
    c.dpc.branch_channels = j.at("dpc").at("branch_channels").get<std::size_t>();
    c.dpc.branches.clear();
    for (const auto& br : j.at("dpc").at("branches")) {
      c.dpc.branches.push_back({br.at(0).get<int>(), br.at(1).get<std::size_t>(), br.at(2).get<std::size_t>()});
    }
    c.llf1_channels = j.at("llf1_channels").get<std::size_t>();
    c.hlf_channels = j.at("hlf_channels").get<std::size_t>();
    c.llf2_channels = j.at("llf2_channels").get<std::size_t>();
    c.decoder_channels = j.at("decoder_channels").get<std::vector<std::size_t>>();
    c.ps_mid_channels = j.at("ps_mid_channels").get<std::size_t>();
    c.second_source = second_source_from_string(j.at("second_source").get<std::string>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t DifdConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

}  // namespace difd::model
