#include "difd/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "difd/harness/optim.hpp"
#include "difd/metrics/losses.hpp"
#include "difd/model/checkpoint.hpp"

namespace difd::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError("metrics CSV: '" + s + "' is not a number");
  }
  if (used != s.size()) throw DataError("metrics CSV: '" + s + "' is not a number");
  return v;
}

}  // namespace

std::string metrics_csv_header() {
  std::string h = "run_id,epoch,split";
  for (const char* kind : {"iou_", "f1_"})
    for (const auto& name : kClassNames) h += "," + std::string(kind) + name;
  return h + ",miou,mf1,loss";
}

std::string to_csv_line(const MetricRow& r) {
  std::string s = r.run_id + "," + std::to_string(r.epoch) + "," + r.split;
  for (const auto* vals : {&r.iou, &r.f1})
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      s += ",";
      if (c < vals->size() && (*vals)[c]) s += fmt(*(*vals)[c]);
    }
  return s + "," + fmt(r.miou) + "," + fmt(r.mf1) + "," + fmt(r.loss);
}

MetricRow parse_csv_line(const std::string& line) {
  const auto cells = split_csv(line);
  if (cells.size() != 3 + 2 * kNumClasses + 3) {
    throw DataError("metrics CSV row has " + std::to_string(cells.size()) + " cells: " + line);
  }
  MetricRow r;
  r.run_id = cells[0];
  r.epoch = static_cast<std::size_t>(parse_double(cells[1]));
  r.split = cells[2];
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& a = cells[3 + c];
    const auto& b = cells[3 + kNumClasses + c];
    r.iou.push_back(a.empty() ? std::nullopt : std::optional<double>(parse_double(a)));
    r.f1.push_back(b.empty() ? std::nullopt : std::optional<double>(parse_double(b)));
  }
  r.miou = parse_double(cells[3 + 2 * kNumClasses]);
  r.mf1 = parse_double(cells[4 + 2 * kNumClasses]);
  r.loss = parse_double(cells[5 + 2 * kNumClasses]);
  return r;
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << metrics_csv_header() << "\n";
  for (const auto& r : rows) out << to_csv_line(r) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header()) throw DataError(path.string() + ": unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_csv_line(line));
  return rows;
}

// ---------------------------------------------------------------------------
// Early stopping

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::EarlyStop:
      return "early-stop";
    case StopReason::MaxEpochs:
      return "max-epoch";
    case StopReason::MaxSteps:
      return "max-steps";
  }
  return "?";
}

StopReason stop_reason_from_string(const std::string& s) {
  if (s == "early-stop") return StopReason::EarlyStop;
  if (s == "max-epoch") return StopReason::MaxEpochs;
  if (s == "max-steps") return StopReason::MaxSteps;
  throw DataError("unknown stop reason '" + s + "'");
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("patience must be >= 1");
}

bool EarlyStopper::update(double metric) {
  ++seen_;
  if (!has_best_ || metric > best_) {
    has_best_ = true;
    best_ = metric;
    best_index_ = seen_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

LoopResult train_loop(std::size_t max_epochs, std::size_t patience, const std::function<double(std::size_t)>& epoch_fn,
                      const std::function<void(std::size_t)>& on_best, const std::function<bool()>& halt) {
  EarlyStopper stop(patience);
  LoopResult r;
  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    const double metric = epoch_fn(epoch);
    r.epochs_run = epoch;
    if (stop.update(metric) && on_best) on_best(epoch);
    if (stop.should_stop()) {
      r.reason = StopReason::EarlyStop;
      break;
    }
    if (halt && halt()) {
      r.reason = StopReason::MaxSteps;
      break;
    }
  }
  r.best_epoch = stop.best_index();
  r.best_metric = stop.best();
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

MetricRow EvalReport::row(const std::string& run_id, std::size_t epoch, const std::string& split) const {
  return {run_id, epoch, split, iou, f1, miou, mf1, loss};
}

EvalReport summarize(const metrics::ConfusionMatrix& cm, double loss) {
  EvalReport r;
  r.cm = cm;
  r.iou = metrics::iou_per_class(cm);
  r.f1 = metrics::f1_per_class(cm);
  r.miou = metrics::mean_of(r.iou, 0);
  r.mf1 = metrics::mean_of(r.f1, 0);
  r.miou_fg = metrics::mean_of(r.iou, 1);
  r.mf1_fg = metrics::mean_of(r.f1, 1);
  r.loss = loss;
  return r;
}

EvalReport evaluate_predictor(const PreparedSet& set, const Predictor& predict, std::size_t batch_size) {
  if (set.empty()) throw DataError("cannot evaluate an empty split");
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  metrics::ConfusionMatrix cm(kNumClasses);
  for (const auto& idx : chunk(order, batch_size)) {
    const Batch b = make_batch(set, idx);
    cm = metrics::accumulate_confusion(predict(b), b.labels, kNumClasses, std::move(cm));
  }
  return summarize(cm, std::numeric_limits<double>::quiet_NaN());
}

namespace {

struct Inputs {
  Var<float> first;
  Var<float> second;
};

Inputs model_inputs(const model::DifdConfig& cfg, const Batch& b) {
  Inputs in;
  if (cfg.uses_aerial()) in.first = Var<float>::constant(b.input1);
  if (cfg.uses_second()) in.second = Var<float>::constant(b.input2);
  return in;
}

}  // namespace

EvalReport evaluate_model(model::DifdModel<float>& m, const PreparedSet& set, std::size_t batch_size,
                          const std::optional<std::vector<double>>& class_weights) {
  if (set.empty()) throw DataError("cannot evaluate an empty split");
  NoGradGuard no_grad;
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  metrics::ConfusionMatrix cm(m.config().num_classes);
  double loss_sum = 0;
  for (const auto& idx : chunk(order, batch_size)) {
    const Batch b = make_batch(set, idx);
    const Inputs in = model_inputs(m.config(), b);
    const Var<float> logits = m.forward(in.first, in.second, nn::Mode::Eval);
    if (class_weights) {
      loss_sum += static_cast<double>(metrics::segmentation_loss(logits, b.labels, *class_weights).value()[0]) *
                  static_cast<double>(b.n);
    }
    cm = metrics::accumulate_confusion(argmax_labels(logits.value()), b.labels, m.config().num_classes, std::move(cm));
  }
  return summarize(cm, class_weights ? loss_sum / static_cast<double>(set.size())
                                     : std::numeric_limits<double>::quiet_NaN());
}

EvalReport evaluate_checkpoint(const fs::path& ckpt_path, const RunConfig& cfg, const PreparedSet& set,
                               const std::optional<std::vector<double>>& class_weights) {
  const model::Checkpoint ckpt = model::load_checkpoint(ckpt_path);
  if (ckpt.fingerprint != cfg.model.fingerprint()) {
    throw ConfigError("checkpoint fingerprint " + hex64(ckpt.fingerprint) + " does not match config fingerprint " +
                      cfg.fingerprint_hex());
  }
  model::DifdModel<float> m(cfg.model, ckpt.seed);
  model::restore_checkpoint(ckpt, m);
  return evaluate_model(m, set, cfg.batch_size, class_weights);
}

// ---------------------------------------------------------------------------
// Run records

nlohmann::json RunRecord::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) rows_j.push_back(to_csv_line(r));
  return {{"run_id", run_id},
          {"fingerprint", fingerprint},
          {"best_checkpoint", best_checkpoint},
          {"best_epoch", best_epoch},
          {"best_miou", best_miou},
          {"stop_reason", to_string(stop_reason)},
          {"epochs", epochs},
          {"steps", steps},
          {"wall_time_s", wall_time_s},
          {"class_weights", class_weights},
          {"config", config},
          {"rows", rows_j}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.best_checkpoint = j.value("best_checkpoint", std::string());
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.best_miou = j.at("best_miou").get<double>();
    r.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    r.epochs = j.at("epochs").get<std::size_t>();
    r.steps = j.at("steps").get<std::size_t>();
    r.wall_time_s = j.value("wall_time_s", 0.0);
    r.class_weights = j.value("class_weights", std::vector<double>{});
    r.config = j.value("config", nlohmann::json::object());
    for (const auto& line : j.at("rows")) r.rows.push_back(parse_csv_line(line.get<std::string>()));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid run record: ") + e.what());
  }
}

std::vector<MetricRow> RunRecord::split_rows(const std::string& split) const {
  std::vector<MetricRow> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(r);
  return out;
}

void save_run_record(const fs::path& dir, const RunRecord& r) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_metrics_csv(dir / "metrics.csv", r.rows);
  std::ofstream out(dir / "run.json");
  if (!out) throw IoError("cannot write " + (dir / "run.json").string());
  out << r.to_json().dump(2) << "\n";
}

RunRecord load_run_record(const fs::path& dir) {
  std::ifstream in(dir / "run.json");
  if (!in) throw IoError("run record not found: " + (dir / "run.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("run.json is not valid JSON: ") + e.what());
  }
  return RunRecord::from_json(j);
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(const RunConfig& cfg, const std::vector<data::TilePair>& train_pairs,
                  const std::vector<data::TilePair>& val_pairs, const fs::path& out_dir) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  if (train_pairs.empty()) throw DataError("training split is empty");
  if (val_pairs.empty()) throw DataError("validation split is empty");
  const PreparedSet tr = prepare(train_pairs, cfg);
  const PreparedSet va = prepare(val_pairs, cfg);
  const std::size_t classes = cfg.model.num_classes;

  std::vector<std::uint64_t> counts(classes, 0);
  for (const auto& y : tr.labels)
    for (auto v : y.data) ++counts[v];
  std::vector<double> weights;
  try {
    weights = metrics::class_weights(counts).weights;
  } catch (const DataError& e) {
    throw DataError(std::string("training split class weights: ") + e.what());
  }

  TrainResult result;
  result.model = std::make_unique<model::DifdModel<float>>(cfg.model, cfg.seed);
  auto& m = *result.model;
  AdamW<float> opt(m.params(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.adam_eps});
  RunRecord& rec = result.record;
  rec.run_id = cfg.run_id;
  rec.fingerprint = cfg.fingerprint_hex();
  rec.class_weights = weights;
  rec.config = cfg.to_json();
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }

  std::size_t step = 0;
  model::Checkpoint best = model::capture_checkpoint(m);
  auto epoch_fn = [&](std::size_t epoch) {
    metrics::ConfusionMatrix cm(classes);
    double loss_sum = 0;
    std::size_t seen = 0;
    for (const auto& idx : chunk(epoch_order(tr.size(), cfg.seed, epoch), cfg.batch_size)) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      const Batch b = make_batch(tr, idx, cfg.workers);
      const Inputs in = model_inputs(cfg.model, b);
      const std::string where = "epoch " + std::to_string(epoch) + ", step " + std::to_string(step + 1);
      m.params().zero_grad();
      Var<float> logits, loss;
      try {
        logits = m.forward(in.first, in.second, nn::Mode::Train);
        loss = metrics::segmentation_loss(logits, b.labels, weights);
      } catch (const NumericError& e) {
        throw NumericError("numeric failure at " + where + ": " + e.what());
      }
      const double l = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(l)) throw NumericError("numeric failure at " + where + ": loss is " + fmt(l));
      backward(loss);
      opt.step();
      ++step;
      loss_sum += l * static_cast<double>(b.n);
      seen += b.n;
      cm = metrics::accumulate_confusion(argmax_labels(logits.value()), b.labels, classes, std::move(cm));
    }
    rec.rows.push_back(summarize(cm, seen ? loss_sum / static_cast<double>(seen) : 0.0).row(cfg.run_id, epoch, "train"));
    const EvalReport val = evaluate_model(m, va, cfg.batch_size, weights);
    rec.rows.push_back(val.row(cfg.run_id, epoch, "val"));
    return val.miou;
  };
  auto on_best = [&](std::size_t) {
    best = model::capture_checkpoint(m);
    if (!out_dir.empty()) model::save_checkpoint(out_dir / "best.ckpt", best);
  };
  auto halt = [&] { return cfg.max_steps > 0 && step >= cfg.max_steps; };

  const LoopResult loop = train_loop(cfg.max_epochs, cfg.patience, epoch_fn, on_best, halt);
  model::restore_checkpoint(best, m);
  rec.best_epoch = loop.best_epoch;
  rec.best_miou = loop.best_metric;
  rec.stop_reason = loop.reason;
  rec.epochs = loop.epochs_run;
  rec.steps = step;
  if (!out_dir.empty()) rec.best_checkpoint = (out_dir / "best.ckpt").string();
  rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out_dir.empty()) save_run_record(out_dir, rec);
  return result;
}

TrainResult train_from_dataset(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw ConfigError("data_dir is not set");
  const data::Manifest man = data::read_manifest(cfg.data_dir);
  const auto tr = data::load_split(cfg.data_dir, man, cfg.train_split);
  const auto va = data::load_split(cfg.data_dir, man, cfg.val_split);
  return train(cfg, tr, va, fs::path(cfg.out_dir) / cfg.run_id);
}

}  // namespace difd::harness
