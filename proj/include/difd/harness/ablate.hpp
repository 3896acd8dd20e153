#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "difd/harness/train.hpp"

namespace difd::harness {

/// Published full-scale numbers, quoted as a citation next to desk-scale
/// results (never recomputed). Per-class IoU is in class-code order.
struct PublishedRow {
  double mf1 = 0;
  double miou = 0;
  std::array<double, kNumClasses> iou{};
};

struct AblationSpec {
  std::string id;
  std::string label;  ///< configuration description
  RunConfig cfg;
  std::optional<PublishedRow> published;
};

/// Input description such as "RGB", "10B", "RGB+RGB" or "RGB+7B".
std::string inputs_label(const RunConfig& cfg);

/// Rows 2, 3, 4 and 6-11 of the published design ablation, built on `base`
/// (profile, seed, optimiser and schedule are taken from it).
std::vector<AblationSpec> standard_matrix(const RunConfig& base);

struct AblationRow {
  std::string id;
  std::string label;
  std::string inputs;
  bool ok = false;
  std::string error;
  EvalReport report;
  std::optional<PublishedRow> published;
};

struct AblationTable {
  std::string split;  ///< split the rows were scored on
  std::vector<AblationRow> rows;

  /// Config, inputs, mF1, mIoU, published mF1 / mIoU.
  std::string summary_markdown() const;
  /// Per-class IoU.
  std::string per_class_markdown() const;
  std::string summary_csv() const;
  std::string per_class_csv() const;
};

/// Trains and scores every spec on the same data. Scores on `test` when it
/// is non-empty, else on `val`. A failing spec becomes a failed row.
AblationTable ablate(const std::vector<AblationSpec>& specs, const std::vector<data::TilePair>& train,
                     const std::vector<data::TilePair>& val, const std::vector<data::TilePair>& test,
                     const std::filesystem::path& out_dir = {});

}  // namespace difd::harness
