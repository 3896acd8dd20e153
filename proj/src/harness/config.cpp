#include "difd/harness/config.hpp"

#include <cstdio>
#include <fstream>

namespace difd::harness {

RunConfig RunConfig::toy(model::Variant v, const std::string& bands) {
  RunConfig c;
  c.profile = "toy";
  c.model = model::DifdConfig::toy(v, 7);
  c.batch_size = 4;
  c.with_bands(bands);
  return c;
}

RunConfig RunConfig::paper(model::Variant v, const std::string& bands) {
  RunConfig c;
  c.profile = "paper";
  c.model = model::DifdConfig::reference(v, 7);
  c.batch_size = 26;
  c.with_bands(bands);
  return c;
}

RunConfig RunConfig::for_profile(const std::string& profile) {
  if (profile == "toy") return toy();
  if (profile == "paper") return paper();
  throw ConfigError("unknown profile '" + profile + "' (expected toy or paper)");
}

RunConfig& RunConfig::with_bands(const std::string& name) {
  model.c2 = data::BandSelection::by_name(name).size();
  bands = name;
  return *this;
}

void RunConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
  if (weight_decay < 0 || !(adam_eps > 0)) throw ConfigError("weight_decay must be >= 0 and eps > 0");
  if (run_id.empty() || run_id.find_first_of("/\\,\n") != std::string::npos) {
    throw ConfigError("run_id must be non-empty and free of '/', '\\', ',' and newlines");
  }
  const auto sel = band_selection();
  model.validate();
  if (model.uses_second() && model.second_source == model::SecondSource::Satellite && model.c2 != sel.size()) {
    throw ConfigError("model.c2 = " + std::to_string(model.c2) + " does not match band selection " + bands + " (" +
                      std::to_string(sel.size()) + " bands)");
  }
}

nlohmann::json RunConfig::to_json() const {
  return {{"profile", profile},
          {"run_id", run_id},
          {"model", model.to_json()},
          {"bands", bands},
          {"optimizer",
           {{"name", "adamw"},
            {"lr", lr},
            {"beta1", beta1},
            {"beta2", beta2},
            {"weight_decay", weight_decay},
            {"eps", adam_eps}}},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"max_steps", max_steps},
          {"seed", seed},
          {"workers", workers},
          {"data_dir", data_dir},
          {"out_dir", out_dir},
          {"splits", {{"train", train_split}, {"val", val_split}, {"test", test_split}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const RunConfig& base) {
  try {
    RunConfig c = base;
    if (j.contains("profile") && j.at("profile").get<std::string>() != base.profile) {
      c = for_profile(j.at("profile").get<std::string>());
    }
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("model")) c.model = model::DifdConfig::from_json(j.at("model"));
    if (j.contains("variant")) c.model.variant = model::variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("bands")) {
      const auto name = j.at("bands").get<std::string>();
      if (j.contains("model"))
        c.bands = name;
      else
        c.with_bands(name);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      if (o.value("name", std::string("adamw")) != "adamw") throw ConfigError("only the adamw optimizer is supported");
      c.lr = o.value("lr", c.lr);
      c.beta1 = o.value("beta1", c.beta1);
      c.beta2 = o.value("beta2", c.beta2);
      c.weight_decay = o.value("weight_decay", c.weight_decay);
      c.adam_eps = o.value("eps", c.adam_eps);
    }
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("splits")) {
      const auto& s = j.at("splits");
      c.train_split = s.value("train", c.train_split);
      c.val_split = s.value("val", c.val_split);
      c.test_split = s.value("test", c.test_split);
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string RunConfig::fingerprint_hex() const { return hex64(model.fingerprint()); }

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("run config " + path + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j, base);
}

}  // namespace difd::harness
