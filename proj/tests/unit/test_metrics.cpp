#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "difd/metrics/confusion.hpp"
#include "difd/metrics/losses.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace difd;
using namespace difd::metrics;

namespace {

Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }

LabelMap random_labels(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng, std::size_t classes = 5) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(classes) - 1);
  LabelMap y(n, h, w);
  for (auto& v : y.data) v = static_cast<std::uint8_t>(d(rng));
  return y;
}

// Direct per-pixel counting, independent of the confusion matrix.
struct Counts {
  std::vector<double> tp, fp, fn;
};
Counts brute_force(const LabelMap& pred, const LabelMap& truth, std::size_t classes) {
  Counts k{std::vector<double>(classes), std::vector<double>(classes), std::vector<double>(classes)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      const bool p = pred.data[i] == c, t = truth.data[i] == c;
      if (p && t) k.tp[c] += 1;
      if (p && !t) k.fp[c] += 1;
      if (!p && t) k.fn[c] += 1;
    }
  }
  return k;
}

}  // namespace

TEST_CASE("class_weights reproduces the published class-weight table") {
  // building, woodland, water, road, background as published.
  const auto s = class_weights(std::vector<double>{0.0086, 0.3314, 0.0646, 0.0162, 0.5792});
  const double published[] = {0.58794, 0.01520, 0.07797, 0.31017, 0.00869};
  for (int i = 0; i < 5; ++i) CHECK(std::abs(s.weights[i] - published[i]) <= 2e-3);
  double fs = 0, ws = 0;
  for (int i = 0; i < 5; ++i) fs += s.frequencies[i], ws += s.weights[i];
  CHECK(std::abs(fs - 1) < 1e-9);
  CHECK(std::abs(ws - 1) < 1e-9);
}

TEST_CASE("class_weights: symmetric and two-class cases") {
  auto a = class_weights(std::vector<std::uint64_t>{10, 10});
  CHECK(a.weights[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a.weights[1] == doctest::Approx(0.5).epsilon(1e-15));
  auto b = class_weights(std::vector<double>{0.25, 0.75});
  CHECK(b.weights[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(b.weights[1] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("class_weights errors") {
  CHECK_THROWS_AS(class_weights(std::vector<std::uint64_t>{}), DataError);
  CHECK_THROWS_AS(class_weights(std::vector<std::uint64_t>{5, 0, 3}), DataError);
  CHECK_THROWS_AS(class_weights(std::vector<double>{1.0, -1.0}), DataError);
}

TEST_CASE("class_weights: scale invariance and inverse ordering") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint64_t> d(1, 1000000);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint64_t> c(5);
    for (auto& v : c) v = d(rng);
    std::vector<std::uint64_t> scaled = c;
    for (auto& v : scaled) v *= 37;
    const auto a = class_weights(c), b = class_weights(scaled);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(a.weights[i] - b.weights[i]) <= 1e-12);
      for (int j = 0; j < 5; ++j)
        if (c[i] < c[j]) CHECK(a.weights[i] > a.weights[j]);
    }
  }
}

TEST_CASE("dice_loss values") {
  SUBCASE("perfect overlap") {
    std::mt19937_64 rng(1);
    auto y = one_hot<double>(random_labels(2, 4, 4, rng), 5);
    CHECK(dice_loss(cst(y), y).value()[0] <= 1e-6);
  }
  SUBCASE("two classes, fully wrong") {
    LabelMap t(1, 2, 2, 0), p(1, 2, 2, 1);
    auto loss = dice_loss(cst(one_hot<double>(p, 2)), one_hot<double>(t, 2)).value()[0];
    CHECK(std::abs(loss - 1.0) <= 1e-6);
  }
  SUBCASE("1-pixel half/half case is 2/3") {
    Tensor<double> probs(Shape{1, 2, 1, 1}, std::vector<double>{0.5, 0.5});
    auto loss = dice_loss(cst(probs), one_hot<double>(LabelMap(1, 1, 1, 0), 2)).value()[0];
    CHECK(std::abs(loss - 2.0 / 3.0) <= 1e-6);
    const double e = kDiceEps;
    const double exact = ((1 - (1 + e) / (1.5 + e)) + (1 - e / (0.5 + e))) / 2;
    CHECK(loss == doctest::Approx(exact).epsilon(1e-14));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(dice_loss(cst(Tensor<double>(Shape{1, 2, 2, 2})), Tensor<double>(Shape{1, 3, 2, 2})),
                    ConfigError);
  }
}

TEST_CASE("weighted_ce values") {
  SUBCASE("near-perfect prediction") {
    std::mt19937_64 rng(2);
    auto y = one_hot<double>(random_labels(1, 4, 4, rng), 5);
    Tensor<double> p = y;
    for (auto& v : p.values()) v = v == 1.0 ? 1.0 - 1e-12 : 1e-12 / 4;
    CHECK(weighted_ce(cst(p), y, std::vector<double>(5, 1.0)).value()[0] <= 1e-6);
  }
  SUBCASE("uniform over 5 classes gives ln 5") {
    std::mt19937_64 rng(3);
    auto y = one_hot<double>(random_labels(2, 3, 3, rng), 5);
    Tensor<double> p(y.shape(), 0.2);
    CHECK(std::abs(weighted_ce(cst(p), y, std::vector<double>(5, 1.0)).value()[0] - std::log(5.0)) <= 1e-6);
  }
  SUBCASE("linear in the weights") {
    std::mt19937_64 rng(4);
    auto logits = oracle::random_tensor({1, 5, 3, 3}, rng);
    auto p = softmax_channels(cst(logits));
    auto y = one_hot<double>(random_labels(1, 3, 3, rng), 5);
    const std::vector<double> w{0.1, 0.2, 0.3, 0.15, 0.25}, w2{0.2, 0.4, 0.6, 0.3, 0.5};
    CHECK(weighted_ce(p, y, w2).value()[0] == doctest::Approx(2 * weighted_ce(p, y, w).value()[0]).epsilon(1e-14));
  }
  SUBCASE("weight count mismatch") {
    Tensor<double> p(Shape{1, 5, 1, 1}, 0.2);
    CHECK_THROWS_AS(weighted_ce(cst(p), p, std::vector<double>(4, 1.0)), ConfigError);
  }
}

TEST_CASE("dice_ce is exactly dice + ce") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = softmax_channels(cst(oracle::random_tensor({2, 5, 4, 4}, rng, -3, 3)));
    auto y = one_hot<double>(random_labels(2, 4, 4, rng), 5);
    const std::vector<double> w{0.58794, 0.01520, 0.07797, 0.31017, 0.00869};
    CHECK(dice_ce(p, y, w).value()[0] == dice_loss(p, y).value()[0] + weighted_ce(p, y, w).value()[0]);
  }
  // 1-pixel composition: dice 2/3 plus -log 0.5 with unit weights.
  Tensor<double> probs(Shape{1, 2, 1, 1}, std::vector<double>{0.5, 0.5});
  auto v = dice_ce(cst(probs), one_hot<double>(LabelMap(1, 1, 1, 0), 2), {1.0, 1.0}).value()[0];
  CHECK(std::abs(v - (2.0 / 3.0 + std::log(2.0))) <= 1e-6);
  auto perfect = one_hot<double>(LabelMap(1, 2, 2, 1), 2);
  CHECK(dice_ce(cst(perfect), perfect, {1.0, 1.0}).value()[0] <= 1e-6);
}

TEST_CASE("softmax sums to one per pixel") {
  std::mt19937_64 rng(6);
  auto p = softmax_channels(cst(oracle::random_tensor({2, 5, 3, 4}, rng, -30, 30))).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 12; ++k) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += p.plane(b, c)[k];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("segmentation loss gradient w.r.t. logits matches finite differences") {
  std::mt19937_64 rng(7);
  auto logits = Var<double>::leaf(oracle::random_tensor({2, 5, 3, 3}, rng, -2, 2));
  auto labels = random_labels(2, 3, 3, rng);
  const std::vector<double> w{0.3, 0.1, 0.2, 0.25, 0.15};
  auto r = gradcheck::check([&] { return segmentation_loss(logits, labels, w); }, {{"logits", logits}}, 90, rng);
  INFO(r.worst);
  CHECK(r.checked == 90);
  CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("segmentation loss rejects bad labels and non-finite logits") {
  auto logits = Var<double>::constant(Tensor<double>(Shape{1, 5, 2, 2}, 0.0));
  LabelMap y(1, 2, 2, 0);
  y.data[3] = 7;
  CHECK_THROWS_AS(segmentation_loss(logits, y, std::vector<double>(5, 1.0)), DataError);
  logits.mutable_value()[0] = std::nan("");
  CHECK_THROWS_AS(segmentation_loss(logits, LabelMap(1, 2, 2, 0), std::vector<double>(5, 1.0)), NumericError);
}

TEST_CASE("accumulate_confusion examples") {
  SUBCASE("identical maps of class 2") {
    auto cm = accumulate_confusion(LabelMap(1, 2, 2, 2), LabelMap(1, 2, 2, 2), 5, ConfusionMatrix(5));
    CHECK(cm(2, 2) == 4);
    CHECK(cm.total() == 4);
  }
  SUBCASE("pred all 0, true all 1 on 10 pixels") {
    auto cm = accumulate_confusion(LabelMap(1, 2, 5, 0), LabelMap(1, 2, 5, 1), 5, ConfusionMatrix(5));
    CHECK(cm(1, 0) == 10);
    CHECK(cm(0, 1) == 0);
  }
  SUBCASE("out-of-range label names the value") {
    LabelMap bad(1, 1, 2, 0);
    bad.data[1] = 9;
    try {
      accumulate_confusion(bad, LabelMap(1, 1, 2, 0), 5, ConfusionMatrix(5));
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("9") != std::string::npos);
    }
  }
}

TEST_CASE("IoU and F1 match brute-force counting on random label pairs") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    auto pred = random_labels(1, 16, 16, rng), truth = random_labels(1, 16, 16, rng);
    auto cm = accumulate_confusion(pred, truth, 5, ConfusionMatrix(5));
    CHECK(cm.total() == 256);
    const auto k = brute_force(pred, truth, 5);
    const auto iou = iou_per_class(cm), f1 = f1_per_class(cm);
    for (std::size_t c = 0; c < 5; ++c) {
      REQUIRE(iou[c].has_value());
      CHECK(*iou[c] == k.tp[c] / (k.tp[c] + k.fp[c] + k.fn[c]));
      CHECK(*f1[c] == 2 * k.tp[c] / (2 * k.tp[c] + k.fp[c] + k.fn[c]));
      CHECK(*f1[c] == doctest::Approx(2 * *iou[c] / (1 + *iou[c])).epsilon(1e-14));
    }
  }
}

TEST_CASE("IoU / F1 hand counts") {
  ConfusionMatrix cm(2);
  cm.at(1, 1) = 6;  // TP
  cm.at(0, 1) = 2;  // FP
  cm.at(1, 0) = 4;  // FN
  CHECK(*iou_per_class(cm)[1] == 0.5);
  CHECK(*f1_per_class(cm)[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  ConfusionMatrix perfect(5);
  for (std::size_t c = 0; c < 5; ++c) perfect.at(c, c) = 3;
  CHECK(mean_iou(perfect) == 1.0);
  CHECK(mean_f1(perfect) == 1.0);
}

TEST_CASE("zero-union classes are excluded; missed classes score zero") {
  ConfusionMatrix cm(5);
  cm.at(0, 0) = 10;
  cm.at(3, 0) = 5;  // water never predicted
  const auto iou = iou_per_class(cm);
  CHECK(*iou[0] == doctest::Approx(10.0 / 15.0));
  CHECK(*iou[3] == 0.0);
  CHECK_FALSE(iou[1].has_value());
  CHECK(mean_iou(cm) == doctest::Approx((10.0 / 15.0 + 0.0) / 2));
  CHECK(mean_iou(cm, 1) == 0.0);
}

TEST_CASE("confusion merge is order independent and metric bounds hold") {
  std::mt19937_64 rng(9);
  std::vector<ConfusionMatrix> parts;
  for (int i = 0; i < 8; ++i) {
    auto p = random_labels(1, 5, 7, rng, 3), t = random_labels(1, 5, 7, rng, 3);
    // Skew so that some classes are rare.
    for (auto& v : p.data) v = v == 2 && rng() % 3 ? 0 : v;
    parts.push_back(accumulate_confusion(p, t, 5, ConfusionMatrix(5)));
  }
  ConfusionMatrix forward(5), backward(5);
  for (auto& m : parts) forward += m;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) backward += *it;
  std::shuffle(parts.begin(), parts.end(), rng);
  ConfusionMatrix shuffled(5);
  for (auto& m : parts) shuffled += m;
  CHECK(forward == backward);
  CHECK(forward == shuffled);
  CHECK(forward.total() == 8 * 35);
  const auto iou = iou_per_class(forward), f1 = f1_per_class(forward);
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(iou[c].has_value() == f1[c].has_value());
    if (!iou[c]) continue;
    CHECK(*iou[c] >= 0.0);
    CHECK(*iou[c] <= *f1[c]);
    CHECK(*f1[c] <= 1.0);
  }
  CHECK(mean_iou(forward) <= mean_f1(forward));
}
