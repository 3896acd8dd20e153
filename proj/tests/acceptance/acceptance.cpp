// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: difd_acceptance [criterion ids...]   (default: all)

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "difd/data/synth.hpp"
#include "difd/harness/train.hpp"
#include "difd/metrics/confusion.hpp"
#include "difd/metrics/losses.hpp"
#include "difd/nn/blocks.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace difd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

LabelMap random_labels(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  LabelMap y(1, h, w);
  for (auto& v : y.data) v = static_cast<std::uint8_t>(rng() % kNumClasses);
  return y;
}

// 1
Outcome class_weights_table() {
  const auto t0 = Clock::now();
  // Published frequencies in class-code order: background, building, woodland, water, road.
  const auto s = metrics::class_weights(std::vector<double>{0.5792, 0.0086, 0.3314, 0.0646, 0.0162});
  const double published[] = {0.00869, 0.58794, 0.01520, 0.07797, 0.31017};
  double worst = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) worst = std::max(worst, std::abs(s.weights[c] - published[c]));
  const double t = seconds_since(t0);
  return {worst <= 2e-3 && t < 1.0, fmt("max |w - published| = %.2e", worst) + fmt(", %.3f s", t)};
}

// 2
Outcome shape_sweep() {
  using model::Variant;
  std::mt19937_64 rng(2);
  std::size_t bad = 0, passes = 0;
  double slowest_ref = 0, slowest_toy = 0;
  for (auto v : {Variant::UpConvT, Variant::UpNearest, Variant::UpBilinear, Variant::UpPS, Variant::AerialOnly,
                 Variant::SatOnly}) {
    for (const char* bands : {"4B", "7B", "10B"}) {
      const std::size_t c2 = data::BandSelection::by_name(bands).size();
      for (bool reference : {true, false}) {
        const auto cfg = reference ? model::DifdConfig::reference(v, c2) : model::DifdConfig::toy(v, c2);
        model::DifdModel<float> m(cfg, 1);
        NoGradGuard ng;
        const std::size_t k = cfg.aerial_size, s = cfg.sat_plan.sat_size;
        Var<float> in1, in2;
        if (cfg.uses_aerial()) in1 = Var<float>::constant(oracle::random_tensor({1, 3, k, k}, rng).cast<float>());
        if (cfg.uses_second()) in2 = Var<float>::constant(oracle::random_tensor({1, c2, s, s}, rng).cast<float>());
        const auto t0 = Clock::now();
        const auto y = m.forward(in1, in2, model::Mode::Eval);
        const double t = seconds_since(t0);
        (reference ? slowest_ref : slowest_toy) = std::max(reference ? slowest_ref : slowest_toy, t);
        ++passes;
        if (y.shape() != Shape{1, kNumClasses, k, k} || !y.value().all_finite()) ++bad;
        if (reference && k != 512) ++bad;
      }
    }
  }
  return {bad == 0 && slowest_ref < 60 && slowest_toy < 1,
          std::to_string(passes) + " passes, " + std::to_string(bad) + " wrong" +
              fmt(", slowest reference %.2f s", slowest_ref) + fmt(", slowest toy %.3f s", slowest_toy)};
}

// 3
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  auto cfg = model::DifdConfig::toy(model::Variant::UpConvT, 4);
  cfg.aerial_size = 32;
  cfg.sat_plan = {8, 2, 2, 8};
  model::DifdModel<double> m(cfg, 5);
  std::mt19937_64 rng(33);
  auto x1 = Var<double>::leaf(oracle::random_tensor({2, 3, 32, 32}, rng));
  auto x2 = Var<double>::leaf(oracle::random_tensor({2, 4, 8, 8}, rng));
  Tensor<double> proj;
  {
    NoGradGuard ng;
    proj = oracle::random_tensor(m.forward(x1, x2, model::Mode::Train).shape(), rng);
  }
  auto loss = [&] { return gradcheck::project(m.forward(x1, x2, model::Mode::Train), proj); };
  double worst = 0;
  std::size_t checked = 0;
  bool enough = true;
  std::string where;
  for (const std::string family : {"encoder", "decoder", "second", "head"}) {
    std::vector<std::pair<std::string, Var<double>>> leaves;
    for (auto& e : m.params().entries())
      if (e.trainable && e.name.rfind(family + ".", 0) == 0) leaves.emplace_back(e.name, e.var);
    const auto r = gradcheck::check_probes(loss, gradcheck::sample_probes(leaves, 20, rng));
    enough = enough && r.checked >= 20;
    checked += r.checked;
    if (r.max_rel_error >= worst) worst = r.max_rel_error, where = r.worst;
  }
  const double t = seconds_since(t0);
  return {enough && worst <= 1e-3 && t < 300,
          std::to_string(checked) + " parameters over 4 families" + fmt(", max rel error %.2e", worst) +
              fmt(", %.1f s", t) + (worst > 1e-3 ? " (" + where + ")" : "")};
}

// 4
Outcome loss_identities() {
  std::mt19937_64 rng(4);
  LabelMap y(2, 4, 4);
  for (auto& v : y.data) v = static_cast<std::uint8_t>(rng() % kNumClasses);
  const auto onehot = one_hot<double>(y, kNumClasses);
  const double perfect = metrics::dice_loss(Var<double>::constant(onehot), onehot).value()[0];

  const Tensor<double> half(Shape{1, 2, 1, 1}, std::vector<double>{0.5, 0.5});
  const double one_px =
      metrics::dice_loss(Var<double>::constant(half), one_hot<double>(LabelMap(1, 1, 1, 0), 2))
          .value()[0];

  const Tensor<double> uniform(onehot.shape(), 0.2);
  const std::vector<double> ones(kNumClasses, 1.0);
  const double ce_uniform = metrics::weighted_ce(Var<double>::constant(uniform), onehot, ones).value()[0];

  bool sum_exact = true;
  const std::vector<double> w{0.00869, 0.58794, 0.01520, 0.07797, 0.31017};
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = metrics::softmax_channels(Var<double>::constant(oracle::random_tensor({2, 5, 4, 4}, rng, -3, 3)));
    const double d = metrics::dice_loss(p, onehot).value()[0], c = metrics::weighted_ce(p, onehot, w).value()[0];
    sum_exact = sum_exact && metrics::dice_ce(p, onehot, w).value()[0] == d + c;
  }
  const bool pass = perfect <= 1e-6 && std::abs(one_px - 2.0 / 3.0) <= 1e-6 &&
                    std::abs(ce_uniform - std::log(5.0)) <= 1e-6 && sum_exact;
  return {pass, fmt("dice(perfect) = %.1e", perfect) + fmt(", dice(1 px) - 2/3 = %.1e", one_px - 2.0 / 3.0) +
                    fmt(", ce(uniform) - ln 5 = %.1e", ce_uniform - std::log(5.0)) +
                    (sum_exact ? ", dice_ce == dice + ce" : ", dice_ce != dice + ce")};
}

// 5
Outcome metric_oracle() {
  std::mt19937_64 rng(5);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto pred = random_labels(16, 16, rng), truth = random_labels(16, 16, rng);
    const auto cm = metrics::accumulate_confusion(pred, truth, kNumClasses, metrics::ConfusionMatrix(kNumClasses));
    std::vector<double> tp(kNumClasses), fp(kNumClasses), fn(kNumClasses);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const bool p = pred.data[i] == c, t = truth.data[i] == c;
        tp[c] += p && t;
        fp[c] += p && !t;
        fn[c] += !p && t;
      }
    }
    const auto iou = metrics::iou_per_class(cm), f1 = metrics::f1_per_class(cm);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double u = tp[c] + fp[c] + fn[c];
      if (u == 0) {
        mismatches += iou[c].has_value();
        continue;
      }
      if (!iou[c] || !f1[c]) {
        ++mismatches;
        continue;
      }
      mismatches += *iou[c] != tp[c] / u;
      mismatches += *f1[c] != 2 * tp[c] / (2 * tp[c] + fp[c] + fn[c]);
      mismatches += std::abs(*f1[c] - 2 * *iou[c] / (1 + *iou[c])) > 1e-12;
    }
  }
  return {mismatches == 0, "100 random 16x16 pairs, " + std::to_string(mismatches) + " mismatches"};
}

// 6
Outcome pixel_shuffle_bijection() {
  std::mt19937_64 rng(6);
  std::size_t bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + rng() % 4, c = 1 + rng() % 3, h = 1 + rng() % 5, w = 1 + rng() % 5;
    const auto x = oracle::random_tensor({2, c * r * r, h, w}, rng);
    const auto y = nn::pixel_shuffle_forward(x, r);
    bad += y.values() != oracle::pixel_shuffle(x, r).values();
    bad += nn::pixel_unshuffle_forward(y, r).values() != x.values();
  }
  const Tensor<double> x(Shape{1, 4, 1, 1}, std::vector<double>{10, 20, 30, 40});
  const auto y = nn::pixel_shuffle_forward(x, 2);
  const bool enumeration = y.shape() == Shape{1, 1, 2, 2} && y.values() == std::vector<double>{10, 20, 30, 40};
  return {bad == 0 && enumeration, "50 random round trips, " + std::to_string(bad) + " failures; (4,1,1) -> (2,2) " +
                                       (enumeration ? "matches" : "differs")};
}

// 7
Outcome upsampler_values() {
  std::mt19937_64 rng(7);
  std::size_t bad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng() % 9, w = 1 + rng() % 9, oh = h + rng() % 20, ow = w + rng() % 20;
    const auto x = oracle::random_tensor({1, 3, h, w}, rng, -5, 5);
    const auto yn = nn::resize_nearest_forward(x, oh, ow), yb = nn::resize_bilinear_forward(x, oh, ow);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::set<double> values(x.plane(0, c), x.plane(0, c) + h * w);
      const auto [lo, hi] = std::minmax_element(x.plane(0, c), x.plane(0, c) + h * w);
      for (std::size_t i = 0; i < oh * ow; ++i) {
        bad += values.count(yn.plane(0, c)[i]) != 1;
        bad += yb.plane(0, c)[i] < *lo || yb.plane(0, c)[i] > *hi;
      }
    }
  }
  const auto plan = model::DifdConfig::reference(model::Variant::UpNearest, 7).sat_plan;
  const auto in = Var<float>::constant(oracle::random_tensor({1, 7, plan.sat_size, plan.sat_size}, rng).cast<float>());
  const auto n = nn::nearest_upsample(in, plan.target_size), b = nn::bilinear_upsample(in, plan.target_size);
  const bool sized = plan.sat_size == 26 && plan.target_size == 128 && n.shape() == Shape{1, 7, 128, 128} &&
                     b.shape() == Shape{1, 7, 128, 128};
  return {bad == 0 && sized, std::to_string(bad) + " value violations over 20 random resizes; 26 -> 128 " +
                                 (sized ? "ok" : "wrong")};
}

// 8
Outcome overfit() {
  const auto t0 = Clock::now();
  const auto pairs = data::synth_generate(3407, 8, data::SynthSpec::toy());
  auto cfg = harness::RunConfig::toy();
  cfg.run_id = "overfit";
  cfg.max_steps = 300;
  cfg.max_epochs = 1000;
  cfg.patience = 1000;
  // Validation on the training pairs themselves: eval-mode mIoU on the training set.
  const auto r = harness::train(cfg, pairs, pairs);
  std::size_t first = 0;
  for (const auto& row : r.record.split_rows("val"))
    if (row.miou >= 0.95) {
      first = row.epoch;
      break;
    }
  const std::size_t steps_per_epoch = (pairs.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double t = seconds_since(t0);
  return {first > 0 && r.record.steps <= 300 && t < 600,
          fmt("best training mIoU %.4f", r.record.best_miou) +
              (first ? ", >= 0.95 first at step " + std::to_string(first * steps_per_epoch) : ", never >= 0.95") +
              ", " + std::to_string(r.record.steps) + " steps" + fmt(", %.1f s", t)};
}

// 9
Outcome fusion_benefit() {
  const auto t0 = Clock::now();
  std::vector<double> gaps;
  std::string detail;
  for (std::uint64_t seed : {3407ull, 1ull, 2ull}) {
    const auto all = data::synth_generate(seed, 64, data::SynthSpec::toy());
    const std::vector<data::TilePair> tr(all.begin(), all.begin() + 48), va(all.begin() + 48, all.end());
    double miou[2];
    int i = 0;
    for (auto v : {model::Variant::UpConvT, model::Variant::AerialOnly}) {
      auto cfg = harness::RunConfig::toy(v);
      cfg.seed = seed;
      cfg.max_epochs = 60;
      cfg.patience = 15;
      miou[i++] = harness::train(cfg, tr, va).record.best_miou;
    }
    gaps.push_back(100 * (miou[0] - miou[1]));
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) +
              fmt(": %.2f", 100 * miou[0]) + fmt(" vs %.2f", 100 * miou[1]);
  }
  std::sort(gaps.begin(), gaps.end());
  const double t = seconds_since(t0);
  return {gaps[1] >= 5 && t < 1800, detail + fmt("; median gap %.2f points", gaps[1]) + fmt(", %.0f s", t)};
}

// 10
Outcome pipeline_arithmetic() {
  const data::Geotransform gt{500000.0, 5800000.0, 0.25, -0.25};
  const data::Raster img(3, 4200, 4700, data::DType::U8, gt), lab(1, 4200, 4700, data::DType::U8, gt);
  const auto tiles = data::tile_aerial(img, lab, 512);
  double worst = 0;
  for (const auto& t : tiles) {
    const double ox = gt.origin_x + static_cast<double>(t.col * 512) * gt.pixel_w;
    const double oy = gt.origin_y + static_cast<double>(t.row * 512) * gt.pixel_h;
    worst = std::max({worst, std::abs(t.image.gt.origin_x - ox), std::abs(t.image.gt.origin_y - oy)});
    for (double c : {0.0, 100.5, 511.75}) {
      const auto [x, y] = t.image.gt.pixel_to_world(c, 511.0 - c);
      const auto [pc, pr] = t.image.gt.world_to_pixel(x, y);
      const auto [qc, qr] = gt.world_to_pixel(x, y);
      worst = std::max({worst, std::abs(pc - c) * gt.pixel_w, std::abs(pr - (511.0 - c)) * gt.pixel_w,
                        std::abs(qc - c - static_cast<double>(t.col * 512)) * gt.pixel_w,
                        std::abs(qr - (511.0 - c) - static_cast<double>(t.row * 512)) * gt.pixel_w});
    }
  }
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<float> d(0.f, 1.f);
  std::vector<float> a(10000), b(10000);
  for (auto& v : a) v = d(rng);
  for (auto& v : b) v = d(rng);
  for (std::size_t i = 0; i < 100; ++i) b[i] = a[i];
  a[100] = b[100] = 0.f;
  bool ranged = true, zero = true;
  for (const auto& idx : {data::ndvi(a, b), data::ndwi(a, b)}) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ranged = ranged && idx[i] >= -1.f && idx[i] <= 1.f;
      if (i <= 100) zero = zero && idx[i] == 0.f;
    }
  }
  return {tiles.size() == 72 && worst <= 1e-9 && ranged && zero,
          std::to_string(tiles.size()) + " tiles" + fmt(", max geotransform error %.1e m", worst) +
              (ranged ? ", indices in [-1, 1]" : ", index out of range") +
              (zero ? ", equal bands give 0" : ", equal bands nonzero")};
}

// 11
Outcome determinism_and_early_stop() {
  const auto pairs = data::synth_generate(3407, 12, data::SynthSpec::toy());
  const std::vector<data::TilePair> tr(pairs.begin(), pairs.begin() + 8), va(pairs.begin() + 8, pairs.end());
  auto cfg = harness::RunConfig::toy();
  cfg.max_epochs = 3;
  cfg.workers = 1;
  std::string csv[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = fs::temp_directory_path() / ("difd_acceptance_det" + std::to_string(i));
    fs::remove_all(dir);
    harness::train(cfg, tr, va, dir);
    std::ifstream in(dir / "metrics.csv", std::ios::binary);
    csv[i] = std::string(std::istreambuf_iterator<char>(in), {});
    fs::remove_all(dir);
  }
  const bool same = !csv[0].empty() && csv[0] == csv[1];

  // Improves through epoch 4, then never again.
  std::vector<double> seq{0.1, 0.2, 0.3, 0.4};
  for (int i = 0; i < 40; ++i) seq.push_back(i % 2 ? 0.4 : 0.35);
  const auto r = harness::train_loop(100, 15, [&](std::size_t e) { return seq[e - 1]; });
  const bool stop = r.reason == harness::StopReason::EarlyStop && r.best_epoch == 4 && r.epochs_run == 4 + 15;
  return {same && stop, std::string(same ? "identical metric CSVs" : "metric CSVs differ") + "; scripted run stopped at epoch " +
                            std::to_string(r.epochs_run) + " (best " + std::to_string(r.best_epoch) + ", patience 15)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("ids", only, "criterion ids to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"class-weight reproduction", class_weights_table},
      {"shape contract sweep", shape_sweep},
      {"gradient suite", gradient_suite},
      {"loss identities", loss_identities},
      {"metric oracle equivalence", metric_oracle},
      {"pixel-shuffle bijectivity", pixel_shuffle_bijection},
      {"upsampler value properties", upsampler_values},
      {"overfit", overfit},
      {"fusion benefit", fusion_benefit},
      {"pipeline arithmetic", pipeline_arithmetic},
      {"determinism and early stop", determinism_and_early_stop},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
