#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "difd/harness/ablate.hpp"
#include "difd/harness/train.hpp"

namespace difd::harness {

/// One plotted point; carried as data-* attributes on each SVG marker so
/// plots can be checked against the CSV.
struct PlotPoint {
  std::string run_id;
  std::string split;
  std::size_t epoch = 0;
  double value = 0;
};

/// Line chart of `metric` ("loss" or "miou") over epochs, one polyline per
/// (run, split).
std::string curve_svg(const std::vector<RunRecord>& records, const std::string& metric);
/// Grouped bars of per-class IoU at each run's best validation epoch.
std::string per_class_svg(const std::vector<RunRecord>& records);

/// Parses the markers written by curve_svg.
std::vector<PlotPoint> parse_svg_points(const std::string& svg);

/// Writes report.md, metrics.csv, loss.svg, miou.svg, per_class_iou.svg and,
/// if given, ablation.md / ablation.csv / ablation_per_class.csv. Throws
/// IoError when out_dir cannot be written.
void write_report(const std::filesystem::path& out_dir, const std::vector<RunRecord>& records,
                  const std::optional<AblationTable>& ablation = std::nullopt);

}  // namespace difd::harness
