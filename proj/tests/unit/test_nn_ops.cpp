#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "difd/nn/blocks.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace difd;
using namespace difd::nn;

namespace {

const Tensor<double>* const kNoBias = nullptr;

Var<double> leaf(const Tensor<double>& t) { return Var<double>::leaf(t); }
Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }

void randomize(Var<double>& v, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  v.mutable_value() = oracle::random_tensor(v.shape(), rng, lo, hi);
}

void randomize_bn(BatchNorm2d<double>& bn, std::mt19937_64& rng) {
  randomize(bn.gamma, rng, 0.5, 1.5);
  randomize(bn.beta, rng, -0.5, 0.5);
  randomize(bn.running_mean, rng, -0.2, 0.2);
  randomize(bn.running_var, rng, 0.5, 2.0);
}

std::vector<double> vec(const Var<double>& v) { return v.value().values(); }

Tensor<double> bn_eval_oracle(const Tensor<double>& x, const BatchNorm2d<double>& bn) {
  return oracle::batch_norm(x, vec(bn.running_mean), vec(bn.running_var), vec(bn.gamma), vec(bn.beta), bn.opts.eps);
}

Tensor<double> conv_oracle(const Tensor<double>& x, const Conv2d<double>& c) {
  const auto& g = c.geom;
  return oracle::conv2d(x, c.weight.value(), c.bias.defined() ? &c.bias.value() : nullptr, g.stride_h, g.stride_w,
                        static_cast<long>(g.pad.top), static_cast<long>(g.pad.bottom), static_cast<long>(g.pad.left),
                        static_cast<long>(g.pad.right), g.dilation_h, g.dilation_w, g.depthwise);
}

template <typename Block>
std::vector<std::pair<std::string, Var<double>>> all_params(ParamStore<double>& store) {
  std::vector<std::pair<std::string, Var<double>>> out;
  for (auto& e : store.entries())
    if (e.trainable) out.emplace_back(e.name, e.var);
  return out;
}

}  // namespace

TEST_CASE("conv2d: ones kernel over ones input sums to 9") {
  Tensor<double> x(Shape{1, 1, 3, 3}, 1.0), w(Shape{1, 1, 3, 3}, 1.0);
  auto y = conv2d_forward(x, w, kNoBias, ConvGeometry::square(3));
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 9.0);
}

TEST_CASE("conv2d: output size follows floor((in + pad - k) / stride) + 1") {
  Tensor<double> x(Shape{1, 1, 4, 4}, 1.0), w(Shape{1, 1, 2, 2}, 1.0);
  CHECK(conv2d_forward(x, w, kNoBias, ConvGeometry::square(2, 2)).shape() == Shape{1, 1, 2, 2});
  CHECK(conv_output_size(5, 3, 2, 2, 1) == 3);
  CHECK(conv_output_size(7, 3, 1, 0, 3) == 1);
  CHECK_THROWS_AS(conv_output_size(4, 3, 1, 0, 2), ConfigError);
}

TEST_CASE("conv2d matches direct-loop oracle exactly on random input") {
  std::mt19937_64 rng(11);
  auto x = oracle::random_tensor({1, 2, 5, 5}, rng);
  auto w = oracle::random_tensor({3, 2, 3, 3}, rng);
  auto b = oracle::random_tensor({1, 3, 1, 1}, rng);
  SUBCASE("valid") {
    auto y = conv2d_forward(x, w, &b, ConvGeometry::square(3));
    CHECK(oracle::max_abs_diff(y, oracle::conv2d(x, w, &b, 1, 1, 0, 0, 0, 0, 1, 1, false)) < 1e-13);
  }
  SUBCASE("strided, asymmetric pad, dilated") {
    ConvGeometry g = ConvGeometry::square(3, 2, Padding{1, 2, 0, 1});
    g.dilation_h = 2;
    auto y = conv2d_forward(x, w, &b, g);
    CHECK(oracle::max_abs_diff(y, oracle::conv2d(x, w, &b, 2, 2, 1, 2, 0, 1, 2, 1, false)) < 1e-13);
  }
  SUBCASE("depthwise dilated") {
    auto wd = oracle::random_tensor({2, 1, 3, 3}, rng);
    ConvGeometry g = ConvGeometry::square(3, 1, Padding::same(3, 3, 2, 1));
    g.dilation_h = 2;
    g.depthwise = true;
    auto y = conv2d_forward(x, wd, kNoBias, g);
    CHECK(y.shape() == Shape{1, 2, 5, 5});
    CHECK(oracle::max_abs_diff(y, oracle::conv2d(x, wd, nullptr, 1, 1, 2, 2, 1, 1, 2, 1, true)) < 1e-13);
  }
}

TEST_CASE("conv2d errors") {
  Tensor<double> x(Shape{1, 2, 4, 4}, 1.0), w(Shape{1, 3, 3, 3}, 1.0);
  CHECK_THROWS_AS(conv2d_forward(x, w, kNoBias, ConvGeometry::square(3)), ConfigError);
  Tensor<double> w2(Shape{1, 2, 3, 3}, 1.0);
  x[3] = std::nan("");
  CHECK_THROWS_AS(conv2d_forward(x, w2, kNoBias, ConvGeometry::square(3)), NumericError);
}

TEST_CASE("conv_transpose2d: ones kernel copies each value into a 2x2 block") {
  Tensor<double> x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor<double> w(Shape{1, 1, 2, 2}, 1.0);
  auto y = conv_transpose2d_forward(x, w, kNoBias);
  REQUIRE(y.shape() == Shape{1, 1, 4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(y(0, 0, i, j) == x(0, 0, i / 2, j / 2));
}

TEST_CASE("conv_transpose2d: zeros stay zeros with zero bias") {
  Tensor<double> x(Shape{1, 1, 3, 3}, 0.0), w(Shape{1, 1, 2, 2}, 0.7), b(Shape{1, 1, 1, 1}, 0.0);
  auto y = conv_transpose2d_forward(x, w, &b);
  CHECK(y.shape() == Shape{1, 1, 6, 6});
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("conv_transpose2d matches scatter oracle and is the adjoint of strided conv") {
  std::mt19937_64 rng(5);
  auto x = oracle::random_tensor({1, 2, 4, 4}, rng);
  auto w = oracle::random_tensor({2, 3, 2, 2}, rng);
  auto b = oracle::random_tensor({1, 3, 1, 1}, rng);
  auto y = conv_transpose2d_forward(x, w, &b);
  CHECK(oracle::max_abs_diff(y, oracle::conv_transpose2d(x, w, &b)) < 1e-13);

  // <convT(x), z> == <x, conv(z)> with the same kernel viewed as (C_in, C_out).
  auto yz = conv_transpose2d_forward(x, w, kNoBias);
  auto z = oracle::random_tensor(yz.shape(), rng);
  auto cz = conv2d_forward(z, w, kNoBias, ConvGeometry::square(2, 2));
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < yz.size(); ++i) lhs += yz[i] * z[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * cz[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("batch_norm eval with identity stats is identity up to eps") {
  ParamStore<double> store;
  std::mt19937_64 rng(1);
  ParamBuilder<double> pb(store, rng);
  BatchNorm2d<double> bn(pb, 2);
  std::mt19937_64 r2(3);
  auto x = oracle::random_tensor({2, 2, 3, 3}, r2);
  auto y = bn(cst(x), Mode::Eval);
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == doctest::Approx(x[i] * s).epsilon(1e-14));
}

TEST_CASE("batch_norm train normalises to zero mean / unit variance") {
  ParamStore<double> store;
  std::mt19937_64 rng(1);
  ParamBuilder<double> pb(store, rng);
  BatchNorm2d<double> bn(pb, 1);
  // Values 3 and 7 in equal numbers: mean 5, variance 4.
  Tensor<double> x(Shape{2, 1, 2, 2}, std::vector<double>{3, 7, 3, 7, 7, 3, 7, 3});
  auto y = bn(cst(x), Mode::Train);
  std::vector<double> m, v;
  oracle::channel_stats(y.value(), m, v);
  CHECK(std::abs(m[0]) < 1e-5);
  CHECK(std::abs(v[0] - 1.0) < 1e-5);
  // Running stats: momentum 0.1 towards mean 5 and unbiased variance 32/7.
  CHECK(bn.running_mean.value()[0] == doctest::Approx(0.5));
  CHECK(bn.running_var.value()[0] == doctest::Approx(0.9 + 0.1 * 32.0 / 7.0));
}

TEST_CASE("batch_norm train matches two-pass statistics oracle") {
  ParamStore<double> store;
  std::mt19937_64 rng(2);
  ParamBuilder<double> pb(store, rng);
  BatchNorm2d<double> bn(pb, 3);
  randomize_bn(bn, rng);
  auto x = oracle::random_tensor({4, 3, 5, 5}, rng, -3, 4);
  auto y = bn(cst(x), Mode::Train);
  std::vector<double> m, v;
  oracle::channel_stats(x, m, v);
  auto expect = oracle::batch_norm(x, m, v, vec(bn.gamma), vec(bn.beta), 1e-5);
  CHECK(oracle::max_abs_diff(y.value(), expect) < 1e-10);
}

TEST_CASE("batch_norm: constant channel does not divide by zero") {
  ParamStore<double> store;
  std::mt19937_64 rng(2);
  ParamBuilder<double> pb(store, rng);
  BatchNorm2d<double> bn(pb, 1);
  Tensor<double> x(Shape{1, 1, 2, 2}, 4.0);
  auto y = bn(cst(x), Mode::Train);
  CHECK(y.value().all_finite());
  for (double v : y.value().values()) CHECK(v == 0.0);
}

TEST_CASE("elu values") {
  Tensor<double> x(Shape{1, 1, 1, 3}, std::vector<double>{0.0, 2.5, -1.0});
  auto y = elu(cst(x));
  CHECK(y.value()[0] == 0.0);
  CHECK(y.value()[1] == 2.5);
  CHECK(y.value()[2] == doctest::Approx(-0.6321205588285577).epsilon(1e-12));
}

TEST_CASE("elu derivative at zero is one") {
  auto x = leaf(Tensor<double>(Shape{}, 0.0));
  backward(elu(x));
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("up_convt_stage shapes and composition") {
  std::mt19937_64 rng(7);
  SUBCASE("decoder schedule doubles (256, 32, 32) to (256, 64, 64)") {
    ParamStore<float> store;
    ParamBuilder<float> pb(store, rng);
    UpConvTStage<float> st(pb, 256, 256, StageConv::Pointwise);
    NoGradGuard ng;
    auto y = up_convt_stage(Var<float>::constant(Tensor<float>(Shape{1, 256, 32, 32}, 0.1f)), st, Mode::Eval);
    CHECK(y.shape() == Shape{1, 256, 64, 64});
  }
  SUBCASE("zero input, zero biases, identity BN gives zero") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    UpConvTStage<double> st(pb, 3, 4, StageConv::Same2x2);
    auto y = st(cst(Tensor<double>(Shape{2, 3, 5, 5}, 0.0)), Mode::Eval);
    CHECK(y.shape() == Shape{2, 4, 10, 10});
    for (double v : y.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("2-channel 3x3 input against primitive oracles") {
    for (auto kind : {StageConv::Pointwise, StageConv::Same2x2}) {
      ParamStore<double> store;
      ParamBuilder<double> pb(store, rng);
      UpConvTStage<double> st(pb, 2, 3, kind);
      randomize(st.up.bias, rng);
      randomize(st.conv.bias, rng);
      randomize_bn(st.bn, rng);
      auto x = oracle::random_tensor({1, 2, 3, 3}, rng);
      auto y = st(cst(x), Mode::Eval);
      auto e = oracle::conv_transpose2d(x, st.up.weight.value(), &st.up.bias.value());
      e = conv_oracle(e, st.conv);
      e = oracle::elu(bn_eval_oracle(e, st.bn));
      REQUIRE(y.shape() == Shape{1, 3, 6, 6});
      CHECK(oracle::max_abs_diff(y.value(), e) < 1e-12);
    }
  }
}

TEST_CASE("tcl_upsample") {
  std::mt19937_64 rng(9);
  SUBCASE("reference plan: 7 and 10 bands reach (48, 128, 128)") {
    for (std::size_t c2 : {7u, 10u}) {
      ParamStore<float> store;
      ParamBuilder<float> pb(store, rng);
      TclUpsampler<float> tcl(pb, c2, 48, SpatialPlan::reference());
      NoGradGuard ng;
      auto y = tcl_upsample(Var<float>::constant(Tensor<float>(Shape{1, c2, 26, 26}, 0.3f)), tcl, Mode::Eval);
      CHECK(y.shape() == Shape{1, 48, 128, 128});
    }
  }
  SUBCASE("invalid plan is rejected") {
    ParamStore<float> store;
    ParamBuilder<float> pb(store, rng);
    CHECK_THROWS_AS(TclUpsampler<float>(pb, 7, 48, SpatialPlan{26, 26, 3, 128}), ConfigError);
  }
  SUBCASE("toy plan (8, 4, 1, 8) against primitive composition") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    const SpatialPlan plan{8, 4, 1, 8};
    TclUpsampler<double> tcl(pb, 2, 3, plan);
    for (auto& e : store.entries())
      if (e.name.find("bias") != std::string::npos) randomize(e.var, rng);
    randomize_bn(tcl.entry_bn, rng);
    randomize_bn(tcl.stages[0].bn, rng);
    auto x = oracle::random_tensor({1, 2, 8, 8}, rng);
    auto y = tcl(cst(x), Mode::Eval);
    auto e = conv_oracle(x, tcl.dw);
    e = bn_eval_oracle(conv_oracle(e, tcl.entry), tcl.entry_bn);
    e = oracle::nearest(e, 4, 4);
    auto& st = tcl.stages[0];
    e = oracle::conv_transpose2d(e, st.up.weight.value(), &st.up.bias.value());
    e = oracle::elu(bn_eval_oracle(conv_oracle(e, st.conv), st.bn));
    REQUIRE(y.shape() == Shape{1, 3, 8, 8});
    CHECK(oracle::max_abs_diff(y.value(), e) < 1e-12);
  }
}

TEST_CASE("tcl channel schedule ends at the requested depth") {
  auto d = tcl_channel_schedule(7, 48, 3);
  REQUIRE(d.size() == 4);
  CHECK(d.front() == 56);
  CHECK(d.back() == 48);
}

TEST_CASE("nearest_upsample") {
  SUBCASE("2x2 duplicates into 2x2 blocks") {
    Tensor<double> x(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    auto y = resize_nearest_forward(x, 4, 4);
    const std::vector<double> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
    CHECK(y.values() == expect);
  }
  SUBCASE("(7, 26, 26) to 128") {
    auto y = nearest_upsample(Var<float>::constant(Tensor<float>(Shape{1, 7, 26, 26}, 1.f)), 128);
    CHECK(y.shape() == Shape{1, 7, 128, 128});
  }
  SUBCASE("3x3 to 7x7 matches floor-mapping oracle") {
    std::mt19937_64 rng(4);
    auto x = oracle::random_tensor({1, 2, 3, 3}, rng);
    CHECK(resize_nearest_forward(x, 7, 7).values() == oracle::nearest(x, 7, 7).values());
  }
  SUBCASE("zero target") {
    CHECK_THROWS_AS(resize_nearest_forward(Tensor<double>(Shape{1, 1, 2, 2}), 0, 4), ConfigError);
  }
}

TEST_CASE("bilinear_upsample") {
  SUBCASE("constant stays constant") {
    auto y = resize_bilinear_forward(Tensor<double>(Shape{1, 2, 3, 5}, 0.25), 11, 13);
    for (double v : y.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("[0, 1] to 4 samples with half-pixel centres") {
    Tensor<double> x(Shape{1, 1, 1, 2}, std::vector<double>{0, 1});
    auto y = resize_bilinear_forward(x, 1, 4);
    const std::vector<double> expect{0, 0.25, 0.75, 1};
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  }
  SUBCASE("(7, 26, 26) to 128") {
    auto y = bilinear_upsample(Var<float>::constant(Tensor<float>(Shape{1, 7, 26, 26}, 1.f)), 128);
    CHECK(y.shape() == Shape{1, 7, 128, 128});
  }
}

TEST_CASE("pixel_shuffle") {
  SUBCASE("(64, 16, 16), r = 8 gives (1, 128, 128)") {
    auto y = pixel_shuffle_forward(Tensor<float>(Shape{1, 64, 16, 16}), 8);
    CHECK(y.shape() == Shape{1, 1, 128, 128});
  }
  SUBCASE("(4, 1, 1) enumeration") {
    Tensor<double> x(Shape{1, 4, 1, 1}, std::vector<double>{10, 20, 30, 40});
    auto y = pixel_shuffle_forward(x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.values() == std::vector<double>{10, 20, 30, 40});
  }
  SUBCASE("round trip and index-formula oracle") {
    std::mt19937_64 rng(12);
    auto x = oracle::random_tensor({2, 8, 3, 5}, rng);
    auto y = pixel_shuffle_forward(x, 2);
    CHECK(y.values() == oracle::pixel_shuffle(x, 2).values());
    CHECK(pixel_unshuffle_forward(y, 2).values() == x.values());
  }
  SUBCASE("indivisible channels") {
    CHECK_THROWS_AS(pixel_shuffle_forward(Tensor<double>(Shape{1, 6, 2, 2}), 2), ConfigError);
  }
}

TEST_CASE("ps_upsample") {
  std::mt19937_64 rng(21);
  SUBCASE("reference plan: pre-shuffle (48*64, 16, 16), output (48, 128, 128)") {
    ParamStore<float> store;
    ParamBuilder<float> pb(store, rng);
    PsUpsampler<float> ps(pb, 7, 64, 48, SpatialPlan::reference());
    NoGradGuard ng;
    auto x = Var<float>::constant(Tensor<float>(Shape{1, 7, 26, 26}, 0.5f));
    CHECK(ps.pre_shuffle(x).shape() == Shape{1, 48 * 64, 16, 16});
    CHECK(ps_upsample(x, ps).shape() == Shape{1, 48, 128, 128});
  }
  SUBCASE("zero input and biases give zero") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    PsUpsampler<double> ps(pb, 3, 4, 2, SpatialPlan{8, 4, 1, 8});
    auto y = ps(cst(Tensor<double>(Shape{1, 3, 8, 8}, 0.0)));
    CHECK(y.shape() == Shape{1, 2, 8, 8});
    for (double v : y.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("toy plan (8, 4, 1, 8), r = 2 against oracles") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    PsUpsampler<double> ps(pb, 2, 3, 2, SpatialPlan{8, 4, 1, 8});
    randomize(ps.up.bias, rng);
    randomize(ps.reduce.bias, rng);
    randomize(ps.expand.bias, rng);
    auto x = oracle::random_tensor({1, 2, 8, 8}, rng);
    auto e = oracle::conv_transpose2d(x, ps.up.weight.value(), &ps.up.bias.value());
    e = oracle::nearest(e, 8, 8);
    e = conv_oracle(conv_oracle(e, ps.reduce), ps.expand);
    e = oracle::pixel_shuffle(e, 2);
    auto y = ps(cst(x));
    REQUIRE(y.shape() == Shape{1, 2, 8, 8});
    CHECK(oracle::max_abs_diff(y.value(), e) < 1e-12);
  }
}

TEST_CASE("dpc_refine") {
  std::mt19937_64 rng(31);
  SUBCASE("reference head: (512, 32, 32) to (256, 32, 32)") {
    ParamStore<float> store;
    ParamBuilder<float> pb(store, rng);
    DpcHead<float> dpc(pb, 512, 256, DpcConfig::reference());
    NoGradGuard ng;
    auto y = dpc_refine(Var<float>::constant(Tensor<float>(Shape{1, 512, 32, 32}, 0.1f)), dpc, Mode::Eval);
    CHECK(y.shape() == Shape{1, 256, 32, 32});
  }
  SUBCASE("single (1,1) branch reduces to separable conv + 1x1 conv") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    DpcConfig cfg;
    cfg.branch_channels = 3;
    cfg.branches = {{-1, 1, 1}};
    DpcHead<double> dpc(pb, 2, 4, cfg);
    for (auto& e : store.entries())
      if (e.name.find("bias") != std::string::npos) randomize(e.var, rng);
    randomize_bn(dpc.branch_bns[0], rng);
    randomize_bn(dpc.project_bn, rng);
    auto x = oracle::random_tensor({1, 2, 4, 4}, rng);
    auto e = conv_oracle(conv_oracle(x, dpc.branch_convs[0].depthwise), dpc.branch_convs[0].pointwise);
    e = oracle::elu(bn_eval_oracle(e, dpc.branch_bns[0]));
    e = oracle::elu(bn_eval_oracle(conv_oracle(e, dpc.project), dpc.project_bn));
    auto y = dpc(cst(x), Mode::Eval);
    CHECK(oracle::max_abs_diff(y.value(), e) < 1e-12);
  }
  SUBCASE("projection depth independent of branch count") {
    for (std::size_t nb : {1u, 2u, 4u}) {
      ParamStore<double> store;
      ParamBuilder<double> pb(store, rng);
      DpcConfig cfg;
      cfg.branch_channels = 2;
      for (std::size_t i = 0; i < nb; ++i) cfg.branches.push_back({i == 0 ? -1 : 0, i % 2 + 1, i % 2 + 1});
      DpcHead<double> dpc(pb, 4, 6, cfg);
      CHECK(dpc(cst(Tensor<double>(Shape{1, 4, 4, 4}, 0.5)), Mode::Eval).shape() == Shape{1, 6, 4, 4});
    }
  }
  SUBCASE("branch reading a later branch is rejected") {
    DpcConfig cfg;
    cfg.branch_channels = 2;
    cfg.branches = {{-1, 1, 1}, {1, 1, 1}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

// ---------------------------------------------------------------------------
// Invariants.

TEST_CASE("block gradients agree with central finite differences") {
  std::mt19937_64 rng(1234);
  auto run = [&](ParamStore<double>& store, Var<double>& x, const std::function<Var<double>()>& fwd) {
    Tensor<double> proj;
    {
      NoGradGuard ng;
      proj = oracle::random_tensor(fwd().shape(), rng);
    }
    auto leaves = all_params<void>(store);
    leaves.emplace_back("input", x);
    auto r = gradcheck::check([&] { return gradcheck::project(fwd(), proj); }, leaves, 6, rng);
    INFO(r.worst);
    CHECK(r.max_rel_error <= 1e-3);
    CHECK(r.checked > 0);
  };
  SUBCASE("conv2d (strided, padded, dilated) and depthwise") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    ConvGeometry g = ConvGeometry::square(3, 2, Padding{1, 0, 2, 1});
    g.dilation_w = 2;
    Conv2d<double> c(pb.sub("a"), 2, 3, g);
    ConvGeometry dg = ConvGeometry::square(3, 1, Padding::same(3, 3));
    dg.depthwise = true;
    Conv2d<double> d(pb.sub("b"), 3, 3, dg);
    randomize(c.bias, rng);
    auto x = leaf(oracle::random_tensor({2, 2, 6, 7}, rng));
    run(store, x, [&] { return d(c(x)); });
  }
  SUBCASE("conv_transpose2d") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    ConvTranspose2d<double> t(pb, 3, 2);
    auto x = leaf(oracle::random_tensor({2, 3, 3, 4}, rng));
    run(store, x, [&] { return t(x); });
  }
  SUBCASE("batch_norm train + elu") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    BatchNorm2d<double> bn(pb, 3);
    randomize(bn.gamma, rng, 0.5, 1.5);
    auto x = leaf(oracle::random_tensor({3, 3, 3, 3}, rng, -2, 2));
    run(store, x, [&] { return elu(bn(x, Mode::Train)); });
  }
  SUBCASE("batch_norm eval") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    BatchNorm2d<double> bn(pb, 2);
    randomize_bn(bn, rng);
    auto x = leaf(oracle::random_tensor({2, 2, 3, 3}, rng));
    run(store, x, [&] { return bn(x, Mode::Eval); });
  }
  SUBCASE("up_convt_stage") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    UpConvTStage<double> st(pb, 2, 3, StageConv::Same2x2);
    auto x = leaf(oracle::random_tensor({2, 2, 3, 3}, rng));
    run(store, x, [&] { return st(x, Mode::Train); });
  }
  SUBCASE("tcl_upsample") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    TclUpsampler<double> tcl(pb, 2, 3, SpatialPlan{5, 2, 2, 8});
    auto x = leaf(oracle::random_tensor({2, 2, 5, 5}, rng));
    run(store, x, [&] { return tcl(x, Mode::Train); });
  }
  SUBCASE("ps_upsample") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    PsUpsampler<double> ps(pb, 2, 3, 2, SpatialPlan{5, 2, 2, 8});
    auto x = leaf(oracle::random_tensor({1, 2, 5, 5}, rng));
    run(store, x, [&] { return ps(x); });
  }
  SUBCASE("nearest and bilinear resize") {
    ParamStore<double> store;
    auto x = leaf(oracle::random_tensor({1, 2, 3, 4}, rng));
    run(store, x, [&] { return add(resize_nearest(x, 7, 5), resize_bilinear(x, 7, 5)); });
  }
  SUBCASE("dpc_refine") {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    DpcConfig cfg;
    cfg.branch_channels = 2;
    cfg.branches = {{-1, 1, 2}, {0, 2, 1}, {0, 1, 1}};
    DpcHead<double> dpc(pb, 3, 4, cfg);
    auto x = leaf(oracle::random_tensor({2, 3, 4, 4}, rng));
    run(store, x, [&] { return dpc(x, Mode::Train); });
  }
}

TEST_CASE("spatial contracts hold for any valid plan") {
  std::mt19937_64 rng(77);
  for (SpatialPlan plan : {SpatialPlan{3, 2, 1, 4}, SpatialPlan{6, 4, 2, 16}, SpatialPlan{5, 1, 3, 8}}) {
    ParamStore<double> store;
    ParamBuilder<double> pb(store, rng);
    TclUpsampler<double> tcl(pb.sub("tcl"), 2, 3, plan);
    PsUpsampler<double> ps(pb.sub("ps"), 2, 2, 3, plan);
    NoGradGuard ng;
    auto x = cst(oracle::random_tensor({1, 2, plan.sat_size, plan.sat_size}, rng));
    const Shape expect{1, 3, plan.target_size, plan.target_size};
    CHECK(tcl(x, Mode::Eval).shape() == expect);
    CHECK(ps(x).shape() == expect);
    CHECK(nearest_upsample(x, plan.target_size).shape().h == plan.target_size);
    CHECK(bilinear_upsample(x, plan.target_size).shape().w == plan.target_size);
  }
}

TEST_CASE("nearest emits only input values; bilinear stays within channel bounds") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> sz(1, 9);
    const std::size_t h = sz(rng), w = sz(rng);
    auto x = oracle::random_tensor({1, 3, h, w}, rng, -5, 5);
    const std::size_t oh = h + sz(rng), ow = w + sz(rng);
    auto yn = resize_nearest_forward(x, oh, ow);
    auto yb = resize_bilinear_forward(x, oh, ow);
    for (std::size_t c = 0; c < 3; ++c) {
      std::set<double> values(x.plane(0, c), x.plane(0, c) + h * w);
      const auto [lo, hi] = std::minmax_element(x.plane(0, c), x.plane(0, c) + h * w);
      for (std::size_t i = 0; i < oh * ow; ++i) {
        CHECK(values.count(yn.plane(0, c)[i]) == 1);
        CHECK(yb.plane(0, c)[i] >= *lo - 1e-12);
        CHECK(yb.plane(0, c)[i] <= *hi + 1e-12);
      }
    }
  }
}

TEST_CASE("conv2d and conv_transpose2d are linear with zero bias") {
  std::mt19937_64 rng(8);
  auto x = oracle::random_tensor({2, 3, 6, 6}, rng);
  auto y = oracle::random_tensor({2, 3, 6, 6}, rng);
  const double a = 0.7, b = -1.3;
  Tensor<double> mix(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
  auto check_linear = [&](auto f) {
    auto fx = f(x), fy = f(y), fm = f(mix);
    double worst = 0;
    for (std::size_t i = 0; i < fm.size(); ++i) worst = std::max(worst, std::abs(fm[i] - (a * fx[i] + b * fy[i])));
    CHECK(worst < 1e-10);
  };
  auto w = oracle::random_tensor({4, 3, 3, 3}, rng);
  check_linear([&](const Tensor<double>& t) { return conv2d_forward(t, w, kNoBias, ConvGeometry::square(3, 2, Padding::uniform(1))); });
  auto wt = oracle::random_tensor({3, 2, 2, 2}, rng);
  check_linear([&](const Tensor<double>& t) { return conv_transpose2d_forward(t, wt, kNoBias); });
}
