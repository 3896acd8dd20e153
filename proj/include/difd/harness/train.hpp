#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "difd/harness/batch.hpp"
#include "difd/harness/config.hpp"
#include "difd/metrics/confusion.hpp"
#include "difd/model/difd.hpp"

namespace difd::harness {

// ---------------------------------------------------------------------------
// Metric rows (CSV: run_id, epoch, split, iou_<class> x5, f1_<class> x5,
// miou, mf1, loss). Undefined per-class values are empty cells.

struct MetricRow {
  std::string run_id;
  std::size_t epoch = 0;
  std::string split;
  std::vector<std::optional<double>> iou;
  std::vector<std::optional<double>> f1;
  double miou = 0;
  double mf1 = 0;
  double loss = 0;

  bool operator==(const MetricRow&) const = default;
};

std::string metrics_csv_header();
std::string to_csv_line(const MetricRow& r);
MetricRow parse_csv_line(const std::string& line);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Early stopping

enum class StopReason { EarlyStop, MaxEpochs, MaxSteps };
std::string to_string(StopReason r);
StopReason stop_reason_from_string(const std::string& s);

/// Improvement means strictly greater than the best so far; ties and
/// regressions consume patience.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);
  /// Returns true if `metric` is a new best.
  bool update(double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_index() const { return best_index_; }  ///< 1-based
  std::size_t since_best() const { return since_best_; }

 private:
  std::size_t patience_;
  double best_ = 0;
  bool has_best_ = false;
  std::size_t best_index_ = 0;
  std::size_t seen_ = 0;
  std::size_t since_best_ = 0;
};

struct LoopResult {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_metric = 0;
  StopReason reason = StopReason::MaxEpochs;
};

/// Calls epoch_fn(epoch) for epoch = 1, 2, ... ; epoch_fn returns the
/// validation metric. on_best(epoch) runs after each new best. `halt`, if
/// set, is polled after each epoch (step budgets).
LoopResult train_loop(std::size_t max_epochs, std::size_t patience, const std::function<double(std::size_t)>& epoch_fn,
                      const std::function<void(std::size_t)>& on_best = {},
                      const std::function<bool()>& halt = {});

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  metrics::ConfusionMatrix cm;
  std::vector<std::optional<double>> iou;
  std::vector<std::optional<double>> f1;
  double miou = 0;     ///< macro over all classes with a non-empty union
  double mf1 = 0;
  double miou_fg = 0;  ///< same, background left out
  double mf1_fg = 0;
  double loss = 0;     ///< mean batch loss; NaN when not computed

  MetricRow row(const std::string& run_id, std::size_t epoch, const std::string& split) const;
};

EvalReport summarize(const metrics::ConfusionMatrix& cm, double loss);

/// Maps a batch to per-pixel class predictions (N, k, k).
using Predictor = std::function<LabelMap(const Batch&)>;

EvalReport evaluate_predictor(const PreparedSet& set, const Predictor& predict, std::size_t batch_size = 4);

/// Eval-mode forward over the set. The loss uses `class_weights` when given.
EvalReport evaluate_model(model::DifdModel<float>& m, const PreparedSet& set, std::size_t batch_size,
                          const std::optional<std::vector<double>>& class_weights = std::nullopt);

/// Loads a checkpoint, checks its fingerprint against cfg.model (ConfigError
/// on mismatch) and evaluates it.
EvalReport evaluate_checkpoint(const std::filesystem::path& ckpt, const RunConfig& cfg, const PreparedSet& set,
                               const std::optional<std::vector<double>>& class_weights = std::nullopt);

// ---------------------------------------------------------------------------
// Training

struct RunRecord {
  std::string run_id;
  std::string fingerprint;
  std::vector<MetricRow> rows;
  std::string best_checkpoint;
  std::size_t best_epoch = 0;
  double best_miou = 0;
  StopReason stop_reason = StopReason::MaxEpochs;
  std::size_t epochs = 0;
  std::size_t steps = 0;
  double wall_time_s = 0;
  std::vector<double> class_weights;
  nlohmann::json config;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  /// Validation rows only.
  std::vector<MetricRow> split_rows(const std::string& split) const;
};

struct TrainResult {
  RunRecord record;
  std::unique_ptr<model::DifdModel<float>> model;  ///< best-epoch weights
};

/// Trains on `train`, selects on `val` mIoU. With a non-empty out_dir writes
/// metrics.csv, best.ckpt and run.json there. Throws NumericError naming the
/// step on a non-finite loss.
TrainResult train(const RunConfig& cfg, const std::vector<data::TilePair>& train, const std::vector<data::TilePair>& val,
                  const std::filesystem::path& out_dir = {});

/// Reads cfg.data_dir (IoError if the manifest is missing) and trains into
/// cfg.out_dir / cfg.run_id.
TrainResult train_from_dataset(const RunConfig& cfg);

void save_run_record(const std::filesystem::path& dir, const RunRecord& r);
RunRecord load_run_record(const std::filesystem::path& dir);

}  // namespace difd::harness
