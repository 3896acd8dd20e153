// difd: command-line front end (gen-data, preprocess, stats, train, eval,
// ablate, report). Exit codes: 0 ok, 2 configuration, 3 data / I/O,
// 4 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <set>

#include "difd/data/synth.hpp"
#include "difd/harness/ablate.hpp"
#include "difd/harness/report.hpp"

using namespace difd;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string profile = "toy";
  std::string out;
  std::uint64_t seed = 3407;
  bool seed_set = false;
};

void add_common(CLI::App* sub, Common& c, bool with_out = true) {
  sub->add_option("--config", c.config, "JSON run config");
  sub->add_option("--profile", c.profile, "toy or paper")->check(CLI::IsMember({"toy", "paper"}));
  sub->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s, c.seed_set = true; }, "random seed (default 3407)");
  if (with_out) sub->add_option("--out", c.out, "output directory");
}

harness::RunConfig run_config(const Common& c) {
  harness::RunConfig cfg = harness::RunConfig::for_profile(c.profile);
  if (!c.config.empty()) cfg = harness::load_run_config(c.config, cfg);
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

data::SynthSpec synth_spec(const std::string& profile) {
  return profile == "paper" ? data::SynthSpec::paper_scale() : data::SynthSpec::toy();
}

std::vector<data::SplitPair> tag(const std::vector<data::TilePair>& pairs, const std::string& split) {
  std::vector<data::SplitPair> out;
  for (const auto& p : pairs) out.push_back({split, p});
  return out;
}

void print_report(const harness::EvalReport& r) {
  nlohmann::json j;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    j["iou"][kClassNames[c]] = r.iou[c] ? nlohmann::json(*r.iou[c]) : nlohmann::json(nullptr);
    j["f1"][kClassNames[c]] = r.f1[c] ? nlohmann::json(*r.f1[c]) : nlohmann::json(nullptr);
  }
  j["miou"] = r.miou;
  j["mf1"] = r.mf1;
  j["miou_no_background"] = r.miou_fg;
  j["mf1_no_background"] = r.mf1_fg;
  if (!std::isnan(r.loss)) j["loss"] = r.loss;
  std::cout << j.dump(2) << "\n";
}

std::vector<fs::path> find_runs(const std::vector<std::string>& roots) {
  std::set<fs::path> found;
  for (const auto& r : roots) {
    if (fs::exists(fs::path(r) / "run.json")) {
      found.insert(r);
      continue;
    }
    if (!fs::is_directory(r)) throw IoError("no run record under " + r);
    for (const auto& e : fs::recursive_directory_iterator(r))
      if (e.is_regular_file() && e.path().filename() == "run.json") found.insert(e.path().parent_path());
  }
  return {found.begin(), found.end()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-input fusion segmentation: data, training and evaluation"};
  app.require_subcommand(1);

  // gen-data
  Common gen;
  std::size_t n_train = 64, n_val = 16, n_test = 16;
  bool no_signal = false;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic paired dataset");
  add_common(gen_cmd, gen);
  gen_cmd->get_option("--out")->required();
  gen_cmd->add_option("--train", n_train, "training pairs");
  gen_cmd->add_option("--val", n_val, "validation pairs");
  gen_cmd->add_option("--test", n_test, "test pairs");
  gen_cmd->add_flag("--no-sat-signal", no_signal, "satellite bands carry pure noise");

  // preprocess
  Common pre;
  std::vector<std::string> aerial_in, label_in, sat_in;
  std::string pre_split = "train", parent_prefix = "p";
  std::size_t tile = 0, sat_size = 0;
  auto* pre_cmd = app.add_subcommand("preprocess", "tile aerial parents and crop 17-band satellite rasters");
  add_common(pre_cmd, pre);
  pre_cmd->get_option("--out")->required();
  pre_cmd->add_option("--aerial", aerial_in, "aerial RGB RSTX (repeatable)")->required();
  pre_cmd->add_option("--label", label_in, "label RSTX, one per aerial")->required();
  pre_cmd->add_option("--sat", sat_in, "17-band satellite RSTX, one per aerial")->required();
  pre_cmd->add_option("--split", pre_split, "split name for every pair");
  pre_cmd->add_option("--tile", tile, "tile size (default from profile)");
  pre_cmd->add_option("--sat-size", sat_size, "satellite crop size (default from profile)");
  pre_cmd->add_option("--parent-prefix", parent_prefix, "parent id prefix");

  // stats
  std::string stats_data, stats_split = "train";
  auto* stats_cmd = app.add_subcommand("stats", "class counts, frequencies and weights of a split");
  stats_cmd->add_option("--data", stats_data, "dataset directory")->required();
  stats_cmd->add_option("--split", stats_split, "split");

  // train
  Common tr;
  std::string tr_data, tr_run_id, tr_variant, tr_bands;
  std::size_t tr_epochs = 0, tr_steps = 0;
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  add_common(train_cmd, tr);
  train_cmd->add_option("--data", tr_data, "dataset directory (overrides config)");
  train_cmd->add_option("--run-id", tr_run_id, "run id");
  train_cmd->add_option("--variant", tr_variant, "UpConvT, UpNearest, UpBilinear, UpPS, AerialOnly or SatOnly");
  train_cmd->add_option("--bands", tr_bands, "4B, 7B, 10B or 17B");
  train_cmd->add_option("--max-epochs", tr_epochs, "epoch cap");
  train_cmd->add_option("--max-steps", tr_steps, "optimisation step cap");

  // eval
  Common ev;
  std::string ev_ckpt, ev_run, ev_data, ev_split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a split");
  add_common(eval_cmd, ev);
  eval_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint file");
  eval_cmd->add_option("--run", ev_run, "run directory (config, weights and class weights)");
  eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
  eval_cmd->add_option("--split", ev_split, "split");

  // ablate
  Common ab;
  std::string ab_data, ab_rows;
  std::size_t ab_epochs = 0;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score the design-ablation matrix");
  add_common(ablate_cmd, ab);
  ablate_cmd->get_option("--out")->required();
  ablate_cmd->add_option("--data", ab_data, "dataset directory")->required();
  ablate_cmd->add_option("--rows", ab_rows, "comma-separated row ids (default: all)");
  ablate_cmd->add_option("--max-epochs", ab_epochs, "epoch cap per row");

  // report
  std::vector<std::string> rep_runs;
  std::string rep_out;
  auto* report_cmd = app.add_subcommand("report", "markdown, CSV and SVG plots from run records");
  report_cmd->add_option("--runs", rep_runs, "run directories or roots to search");
  report_cmd->add_option("--out", rep_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) {
      auto spec = synth_spec(gen.profile);
      if (!gen.config.empty()) {
        std::ifstream in(gen.config);
        if (!in) throw IoError("cannot open " + gen.config);
        spec = data::SynthSpec::from_json(nlohmann::json::parse(in));
      }
      if (no_signal) spec.satellite_signal = false;
      std::vector<data::SplitPair> all;
      for (auto& p : tag(data::synth_generate(gen.seed, n_train, spec, "train"), "train")) all.push_back(std::move(p));
      for (auto& p : tag(data::synth_generate(gen.seed + 1, n_val, spec, "val"), "val")) all.push_back(std::move(p));
      for (auto& p : tag(data::synth_generate(gen.seed + 2, n_test, spec, "test"), "test")) all.push_back(std::move(p));
      nlohmann::json generation = {{"generator", "synthetic"}, {"seed", gen.seed}, {"spec", spec.to_json()}};
      data::write_dataset(gen.out, all, generation);
      std::cout << "wrote " << all.size() << " pairs to " << gen.out << "\n";
    } else if (*pre_cmd) {
      if (aerial_in.size() != label_in.size() || aerial_in.size() != sat_in.size()) {
        throw ConfigError("--aerial, --label and --sat must be given the same number of times");
      }
      const auto cfg = run_config(pre);
      if (tile == 0) tile = cfg.model.aerial_size;
      if (sat_size == 0) sat_size = cfg.model.sat_plan.sat_size;
      std::vector<data::SplitPair> all;
      for (std::size_t i = 0; i < aerial_in.size(); ++i) {
        const auto sat = data::read_rstx(sat_in[i]);
        if (sat.bands != data::kCatalogBands) throw DataError(sat_in[i] + ": expected 17 catalog bands");
        auto pairs = data::make_pairs(data::read_rstx(aerial_in[i]), data::read_rstx(label_in[i]), sat, tile, sat_size,
                                      parent_prefix + std::to_string(i));
        for (auto& p : tag(pairs, pre_split)) all.push_back(std::move(p));
      }
      if (all.empty()) throw DataError("no complete tiles in the inputs");
      data::write_dataset(pre.out, all, {{"generator", "preprocess"}, {"tile", tile}, {"sat_size", sat_size}});
      std::cout << "wrote " << all.size() << " pairs to " << pre.out << "\n";
    } else if (*stats_cmd) {
      const auto man = data::read_manifest(stats_data);
      std::vector<data::Raster> labels;
      for (const auto& rec : man.split(stats_split)) labels.push_back(data::load_pair(stats_data, man, rec).label);
      const auto counts = data::class_counts(labels);
      const auto s = metrics::class_weights(counts);
      nlohmann::json j;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        j[kClassNames[c]] = {{"count", counts[c]}, {"frequency", s.frequencies[c]}, {"weight", s.weights[c]}};
      }
      std::cout << j.dump(2) << "\n";
    } else if (*train_cmd) {
      auto cfg = run_config(tr);
      if (!tr_data.empty()) cfg.data_dir = tr_data;
      if (!tr.out.empty()) cfg.out_dir = tr.out;
      if (!tr_run_id.empty()) cfg.run_id = tr_run_id;
      if (!tr_variant.empty()) cfg.model.variant = model::variant_from_string(tr_variant);
      if (!tr_bands.empty()) cfg.with_bands(tr_bands);
      if (tr_epochs) cfg.max_epochs = tr_epochs;
      if (tr_steps) cfg.max_steps = tr_steps;
      cfg.validate();
      const auto result = harness::train_from_dataset(cfg);
      const auto& r = result.record;
      std::cout << nlohmann::json{{"run_id", r.run_id},          {"fingerprint", r.fingerprint},
                                  {"epochs", r.epochs},          {"steps", r.steps},
                                  {"stop_reason", to_string(r.stop_reason)}, {"best_epoch", r.best_epoch},
                                  {"best_val_miou", r.best_miou}, {"checkpoint", r.best_checkpoint}}
                       .dump(2)
                << "\n";
    } else if (*eval_cmd) {
      harness::RunConfig cfg = run_config(ev);
      std::optional<std::vector<double>> weights;
      if (!ev_run.empty()) {
        const auto rec = harness::load_run_record(ev_run);
        cfg = harness::RunConfig::from_json(rec.config, cfg);
        if (!rec.class_weights.empty()) weights = rec.class_weights;
        if (ev_ckpt.empty()) ev_ckpt = (fs::path(ev_run) / "best.ckpt").string();
      }
      if (ev_ckpt.empty()) throw ConfigError("eval needs --checkpoint or --run");
      const auto man = data::read_manifest(ev_data);
      const auto pairs = data::load_split(ev_data, man, ev_split);
      const auto report = harness::evaluate_checkpoint(ev_ckpt, cfg, harness::prepare(pairs, cfg), weights);
      print_report(report);
      if (!ev.out.empty()) {
        fs::create_directories(ev.out);
        harness::write_metrics_csv(fs::path(ev.out) / "eval.csv", {report.row(cfg.run_id, 0, ev_split)});
      }
    } else if (*ablate_cmd) {
      auto base = run_config(ab);
      if (ab_epochs) base.max_epochs = ab_epochs;
      base.run_id = "ablate";
      auto specs = harness::standard_matrix(base);
      if (!ab_rows.empty()) {
        std::set<std::string> keep;
        std::stringstream ss(ab_rows);
        for (std::string id; std::getline(ss, id, ',');) keep.insert(id);
        std::erase_if(specs, [&](const harness::AblationSpec& s) { return !keep.count(s.id); });
        if (specs.empty()) throw ConfigError("--rows selects no ablation row");
      }
      const auto man = data::read_manifest(ab_data);
      const auto table = harness::ablate(specs, data::load_split(ab_data, man, base.train_split),
                                         data::load_split(ab_data, man, base.val_split),
                                         data::load_split(ab_data, man, base.test_split), ab.out);
      std::vector<harness::RunRecord> records;
      for (const auto& dir : find_runs({ab.out})) records.push_back(harness::load_run_record(dir));
      harness::write_report(ab.out, records, table);
      std::cout << table.summary_markdown();
    } else if (*report_cmd) {
      std::vector<harness::RunRecord> records;
      if (!rep_runs.empty())
        for (const auto& dir : find_runs(rep_runs)) records.push_back(harness::load_run_record(dir));
      harness::write_report(rep_out, records);
      std::cout << "report with " << records.size() << " run(s) written to " << rep_out << "\n";
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 0;
}
