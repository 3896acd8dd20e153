#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "difd/data/bands.hpp"
#include "difd/model/config.hpp"

namespace difd::harness {

/// Everything a training run depends on. `model.c2` follows the band
/// selection (see with_bands).
struct RunConfig {
  std::string profile = "toy";
  std::string run_id = "run";
  model::DifdConfig model = model::DifdConfig::toy(model::Variant::UpConvT, 7);
  std::string bands = "7B";

  // AdamW
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double adam_eps = 1e-8;

  std::size_t batch_size = 4;
  std::size_t max_epochs = 100;
  std::size_t patience = 15;
  std::size_t max_steps = 0;  ///< 0: unlimited
  std::uint64_t seed = 3407;
  std::size_t workers = 1;

  std::string data_dir;
  std::string out_dir = "runs";
  std::string train_split = "train";
  std::string val_split = "val";
  std::string test_split = "test";

  static RunConfig toy(model::Variant v = model::Variant::UpConvT, const std::string& bands = "7B");
  /// k = 512, batch 26, 26x26 satellite crops.
  static RunConfig paper(model::Variant v = model::Variant::UpConvT, const std::string& bands = "7B");
  /// "toy" or "paper"; ConfigError otherwise.
  static RunConfig for_profile(const std::string& profile);

  /// Sets the band selection and the matching model input depth.
  RunConfig& with_bands(const std::string& name);
  data::BandSelection band_selection() const { return data::BandSelection::by_name(bands); }

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the defaults of the given base.
  static RunConfig from_json(const nlohmann::json& j, const RunConfig& base);
  static RunConfig from_json(const nlohmann::json& j) { return from_json(j, toy()); }
  /// Model fingerprint as 16 lower-case hex digits.
  std::string fingerprint_hex() const;
};

RunConfig load_run_config(const std::string& path, const RunConfig& base = RunConfig::toy());
std::string hex64(std::uint64_t v);

}  // namespace difd::harness
