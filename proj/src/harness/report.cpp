#include "difd/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <regex>

namespace difd::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 20, kTop = 30, kBottom = 50;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string svg_open(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + g17(kW) + "\" height=\"" + g17(kH) +
         "\" viewBox=\"0 0 " + g17(kW) + " " + g17(kH) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
         "<text x=\"" + g17(kW / 2) + "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         xml_escape(title) + "</text>\n";
}

std::string axes(double x0, double x1, double y0, double y1, const std::string& xlabel, const std::string& ylabel) {
  const double bx = kLeft, by = kH - kBottom, ex = kW - kRight, ey = kTop;
  std::string s = "<g stroke=\"black\" stroke-width=\"1\"><line x1=\"" + g17(bx) + "\" y1=\"" + g17(by) + "\" x2=\"" +
                  g17(ex) + "\" y2=\"" + g17(by) + "\"/><line x1=\"" + g17(bx) + "\" y1=\"" + g17(by) + "\" x2=\"" +
                  g17(bx) + "\" y2=\"" + g17(ey) + "\"/></g>\n";
  s += "<g font-family=\"sans-serif\" font-size=\"11\">";
  s += "<text x=\"" + g17(bx) + "\" y=\"" + g17(by + 16) + "\">" + f2(x0) + "</text>";
  s += "<text x=\"" + g17(ex) + "\" y=\"" + g17(by + 16) + "\" text-anchor=\"end\">" + f2(x1) + "</text>";
  s += "<text x=\"" + g17(bx - 4) + "\" y=\"" + g17(by) + "\" text-anchor=\"end\">" + f2(y0) + "</text>";
  s += "<text x=\"" + g17(bx - 4) + "\" y=\"" + g17(ey + 8) + "\" text-anchor=\"end\">" + f2(y1) + "</text>";
  s += "<text x=\"" + g17((bx + ex) / 2) + "\" y=\"" + g17(kH - 12) + "\" text-anchor=\"middle\">" +
       xml_escape(xlabel) + "</text>";
  s += "<text x=\"14\" y=\"" + g17((by + ey) / 2) + "\" transform=\"rotate(-90 14 " + g17((by + ey) / 2) +
       ")\" text-anchor=\"middle\">" + xml_escape(ylabel) + "</text></g>\n";
  return s;
}

double metric_of(const MetricRow& r, const std::string& metric) {
  if (metric == "loss") return r.loss;
  if (metric == "miou") return r.miou;
  if (metric == "mf1") return r.mf1;
  throw ConfigError("unknown plot metric '" + metric + "'");
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string curve_svg(const std::vector<RunRecord>& records, const std::string& metric) {
  std::vector<PlotPoint> pts;
  for (const auto& rec : records)
    for (const auto& r : rec.rows) pts.push_back({r.run_id, r.split, r.epoch, metric_of(r, metric)});
  double x0 = 1, x1 = 2, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& p : pts) {
    if (!std::isfinite(p.value)) continue;
    if (first) x0 = x1 = static_cast<double>(p.epoch), y0 = y1 = p.value, first = false;
    x0 = std::min(x0, static_cast<double>(p.epoch));
    x1 = std::max(x1, static_cast<double>(p.epoch));
    y0 = std::min(y0, p.value);
    y1 = std::max(y1, p.value);
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  if (metric != "loss") y0 = std::min(y0, 0.0), y1 = std::max(y1, 1.0);
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); };
  auto sy = [&](double y) { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); };

  std::string s = svg_open(metric + " per epoch");
  s += axes(x0, x1, y0, y1, "epoch", metric);
  if (pts.empty()) {
    s += "<text x=\"" + g17(kW / 2) + "\" y=\"" + g17(kH / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">no runs</text>\n";
  }
  // One series per (run, split), in first-seen order.
  std::vector<std::pair<std::string, std::string>> series;
  for (const auto& p : pts)
    if (std::find(series.begin(), series.end(), std::make_pair(p.run_id, p.split)) == series.end())
      series.emplace_back(p.run_id, p.split);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = kPalette[k % std::size(kPalette)];
    std::string line;
    for (const auto& p : pts)
      if (p.run_id == series[k].first && p.split == series[k].second && std::isfinite(p.value))
        line += g17(sx(static_cast<double>(p.epoch))) + "," + g17(sy(p.value)) + " ";
    s += "<g class=\"series\" data-run=\"" + xml_escape(series[k].first) + "\" data-split=\"" +
         xml_escape(series[k].second) + "\">\n<polyline fill=\"none\" stroke=\"" + colour + "\" stroke-width=\"1.5\"" +
         (series[k].second == "train" ? " stroke-dasharray=\"4 3\"" : "") + " points=\"" + line + "\"/>\n";
    for (const auto& p : pts) {
      if (p.run_id != series[k].first || p.split != series[k].second) continue;
      const double y = std::isfinite(p.value) ? sy(p.value) : sy(y0);
      s += "<circle cx=\"" + g17(sx(static_cast<double>(p.epoch))) + "\" cy=\"" + g17(y) + "\" r=\"2.5\" fill=\"" +
           colour + "\" data-run=\"" + xml_escape(p.run_id) + "\" data-split=\"" + xml_escape(p.split) +
           "\" data-epoch=\"" + std::to_string(p.epoch) + "\" data-value=\"" + (std::isnan(p.value) ? "nan" : g17(p.value)) +
           "\"/>\n";
    }
    s += "<text x=\"" + g17(kW - kRight - 4) + "\" y=\"" + g17(kTop + 14 * static_cast<double>(k + 1)) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + colour + "\">" +
         xml_escape(series[k].first + " / " + series[k].second) + "</text>\n</g>\n";
  }
  return s + "</svg>\n";
}

std::string per_class_svg(const std::vector<RunRecord>& records) {
  std::string s = svg_open("per-class IoU at the best validation epoch");
  s += axes(0, static_cast<double>(kNumClasses), 0, 1, "class", "IoU");
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  const double group = plot_w / static_cast<double>(kNumClasses);
  const double bar = records.empty() ? 0 : group * 0.8 / static_cast<double>(records.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    s += "<text x=\"" + g17(kLeft + group * (static_cast<double>(c) + 0.5)) + "\" y=\"" + g17(kH - kBottom + 30) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + kClassNames[c] + "</text>\n";
  }
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    const MetricRow* best = nullptr;
    for (const auto& r : rec.rows)
      if (r.split == "val" && r.epoch == rec.best_epoch) best = &r;
    if (!best) continue;
    for (std::size_t c = 0; c < kNumClasses && c < best->iou.size(); ++c) {
      if (!best->iou[c]) continue;
      const double v = *best->iou[c];
      const double x = kLeft + group * static_cast<double>(c) + group * 0.1 + bar * static_cast<double>(k);
      s += "<rect x=\"" + g17(x) + "\" y=\"" + g17(kH - kBottom - v * plot_h) + "\" width=\"" + g17(bar) +
           "\" height=\"" + g17(v * plot_h) + "\" fill=\"" + kPalette[k % std::size(kPalette)] + "\" data-run=\"" +
           xml_escape(rec.run_id) + "\" data-class=\"" + kClassNames[c] + "\" data-value=\"" + g17(v) + "\"/>\n";
    }
  }
  return s + "</svg>\n";
}

std::vector<PlotPoint> parse_svg_points(const std::string& svg) {
  static const std::regex circle(
      "<circle[^>]*data-run=\"([^\"]*)\" data-split=\"([^\"]*)\" data-epoch=\"([0-9]+)\" data-value=\"([^\"]*)\"");
  std::vector<PlotPoint> out;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), circle); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string v = m[4].str();
    out.push_back({m[1].str(), m[2].str(), static_cast<std::size_t>(std::stoull(m[3].str())),
                   v == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(v)});
  }
  return out;
}

void write_report(const fs::path& out_dir, const std::vector<RunRecord>& records,
                  const std::optional<AblationTable>& ablation) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create report directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));
  }
  std::vector<MetricRow> rows;
  for (const auto& r : records) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  write_metrics_csv(out_dir / "metrics.csv", rows);
  write_file(out_dir / "loss.svg", curve_svg(records, "loss"));
  write_file(out_dir / "miou.svg", curve_svg(records, "miou"));
  write_file(out_dir / "per_class_iou.svg", per_class_svg(records));

  std::string md = "# Run report\n\n";
  if (records.empty()) {
    md += "No runs recorded.\n\n";
  } else {
    md += "| run | fingerprint | epochs | steps | stop | best epoch | best val mIoU |\n";
    md += "|---|---|---|---|---|---|---|\n";
    for (const auto& r : records) {
      md += "| " + r.run_id + " | " + r.fingerprint + " | " + std::to_string(r.epochs) + " | " +
            std::to_string(r.steps) + " | " + to_string(r.stop_reason) + " | " + std::to_string(r.best_epoch) + " | " +
            f2(100.0 * r.best_miou) + " |\n";
    }
    md += "\n";
  }
  md += "Per-epoch rows: [metrics.csv](metrics.csv)\n\n";
  md += "![loss](loss.svg)\n\n![mIoU](miou.svg)\n\n![per-class IoU](per_class_iou.svg)\n";
  if (ablation) {
    md += "\n## Ablation (scored on " + ablation->split + ")\n\n" + ablation->summary_markdown() +
          "\nPublished columns are full-scale reference numbers, quoted and not recomputed.\n\n### Per-class IoU\n\n" +
          ablation->per_class_markdown();
    write_file(out_dir / "ablation.md", ablation->summary_markdown() + "\n" + ablation->per_class_markdown());
    write_file(out_dir / "ablation.csv", ablation->summary_csv());
    write_file(out_dir / "ablation_per_class.csv", ablation->per_class_csv());
  }
  write_file(out_dir / "report.md", md);
}

}  // namespace difd::harness
