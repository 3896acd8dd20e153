#include "difd/harness/ablate.hpp"

#include <cstdio>

namespace difd::harness {

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string opt_pct(const std::optional<double>& v) { return v ? pct(*v) : "-"; }

// Full-scale results for the rows of the standard matrix; per-class IoU in
// class-code order (background, building, woodland, water, road).
PublishedRow published(double mf1, double miou, std::array<double, kNumClasses> iou) { return {mf1, miou, iou}; }

}  // namespace

std::string inputs_label(const RunConfig& cfg) {
  const auto& m = cfg.model;
  if (m.variant == model::Variant::AerialOnly) return "RGB";
  if (m.variant == model::Variant::SatOnly) return cfg.bands;
  if (m.second_source == model::SecondSource::DownsampledAerial) return "RGB+RGB";
  return "RGB+" + cfg.bands;
}

std::vector<AblationSpec> standard_matrix(const RunConfig& base) {
  using model::Variant;
  auto make = [&](Variant v, const std::string& bands, bool rgb_twice = false) {
    RunConfig c = base;
    c.model = base.profile == "paper" ? model::DifdConfig::reference(v, 7) : model::DifdConfig::toy(v, 7);
    if (rgb_twice) c.model.second_source = model::SecondSource::DownsampledAerial;
    c.with_bands(bands);
    return c;
  };
  std::vector<AblationSpec> specs{
      {"2", "aerial-only UpConvT", make(Variant::AerialOnly, "7B"),
       published(90.12, 82.74, {91.88, 75.25, 88.9, 93.28, 64.36})},
      {"3", "satellite-only UpConvT", make(Variant::SatOnly, "10B"),
       published(14.54, 11.43, {57.13, 0, 0, 0, 0})},
      {"4", "dual input (RGB twice)", make(Variant::UpConvT, "7B", true),
       published(90.8, 83.84, {92.54, 76.66, 90.3, 94.12, 65.59})},
      {"6", "DIFD_UpConvT", make(Variant::UpConvT, "4B"), published(90.75, 83.7, {92.3, 75.89, 90.3, 93.32, 66.71})},
      {"7", "DIFD_UpConvT", make(Variant::UpConvT, "10B"), published(90.94, 84.07, {92.79, 75.98, 90.8, 94.22, 66.54})},
      {"8", "DIFD_UpConvT", make(Variant::UpConvT, "7B"), published(91.5, 84.91, {92.94, 78.68, 90.9, 94.29, 67.79})},
      {"9", "DIFD_UpBilinear", make(Variant::UpBilinear, "7B"),
       published(91.32, 84.63, {92.81, 77.76, 90.7, 94.35, 67.55})},
      {"10", "DIFD_UpNearest", make(Variant::UpNearest, "7B"),
       published(91.3, 84.56, {92.41, 77.43, 90.2, 94.24, 68.49})},
      {"11", "DIFD_UpPS", make(Variant::UpPS, "7B"), published(91.28, 84.53, {92.64, 78.22, 90.4, 93.87, 67.51})},
  };
  for (auto& s : specs) s.cfg.run_id = base.run_id + "-row" + s.id;
  return specs;
}

AblationTable ablate(const std::vector<AblationSpec>& specs, const std::vector<data::TilePair>& train_pairs,
                     const std::vector<data::TilePair>& val_pairs, const std::vector<data::TilePair>& test_pairs,
                     const std::filesystem::path& out_dir) {
  if (specs.empty()) throw ConfigError("ablation matrix is empty");
  AblationTable table;
  table.split = test_pairs.empty() ? "val" : "test";
  const auto& scoring = test_pairs.empty() ? val_pairs : test_pairs;
  for (const auto& spec : specs) {
    AblationRow row;
    row.id = spec.id;
    row.label = spec.label;
    row.inputs = inputs_label(spec.cfg);
    row.published = spec.published;
    try {
      const auto dir = out_dir.empty() ? std::filesystem::path{} : out_dir / spec.cfg.run_id;
      TrainResult tr = train(spec.cfg, train_pairs, val_pairs, dir);
      row.report = evaluate_model(*tr.model, prepare(scoring, spec.cfg), spec.cfg.batch_size, tr.record.class_weights);
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::summary_markdown() const {
  std::string s = "| ID | Configuration | Inputs | mF1 | mIoU | published mF1 | published mIoU |\n";
  s += "|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    s += "| " + r.id + " | " + r.label + " | " + r.inputs + " | ";
    s += r.ok ? pct(r.report.mf1) + " | " + pct(r.report.miou) : "failed: " + r.error + " | -";
    s += " | " + (r.published ? num(r.published->mf1) : "-") + " | " + (r.published ? num(r.published->miou) : "-") +
         " |\n";
  }
  return s;
}

std::string AblationTable::per_class_markdown() const {
  std::string s = "| ID | Inputs |";
  for (const auto& n : kClassNames) s += " " + n + " |";
  for (const auto& n : kClassNames) s += " published " + n + " |";
  s += "\n|---|---|";
  for (std::size_t c = 0; c < 2 * kNumClasses; ++c) s += "---|";
  s += "\n";
  for (const auto& r : rows) {
    s += "| " + r.id + " | " + r.inputs + " |";
    for (std::size_t c = 0; c < kNumClasses; ++c) s += " " + (r.ok ? opt_pct(r.report.iou[c]) : "failed") + " |";
    for (std::size_t c = 0; c < kNumClasses; ++c) s += " " + (r.published ? num(r.published->iou[c]) : "-") + " |";
    s += "\n";
  }
  return s;
}

std::string AblationTable::summary_csv() const {
  std::string s = "id,configuration,inputs,status,mf1,miou,published_mf1,published_miou\n";
  for (const auto& r : rows) {
    s += r.id + "," + r.label + "," + r.inputs + "," + (r.ok ? "ok" : "failed") + ",";
    s += r.ok ? pct(r.report.mf1) + "," + pct(r.report.miou) : ",";
    s += "," + (r.published ? num(r.published->mf1) : "") + "," + (r.published ? num(r.published->miou) : "") + "\n";
  }
  return s;
}

std::string AblationTable::per_class_csv() const {
  std::string s = "id,inputs,status";
  for (const auto& n : kClassNames) s += ",iou_" + n;
  for (const auto& n : kClassNames) s += ",published_iou_" + n;
  s += "\n";
  for (const auto& r : rows) {
    s += r.id + "," + r.inputs + "," + (r.ok ? "ok" : "failed");
    for (std::size_t c = 0; c < kNumClasses; ++c) s += "," + (r.ok && r.report.iou[c] ? pct(*r.report.iou[c]) : "");
    for (std::size_t c = 0; c < kNumClasses; ++c) s += "," + (r.published ? num(r.published->iou[c]) : "");
    s += "\n";
  }
  return s;
}

}  // namespace difd::harness
