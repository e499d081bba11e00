#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <random>

#include "ofpnet/errors.h"
#include "ofpnet/model.h"
#include "projection_fixture.h"
#include "test_util.h"

namespace ofpnet {
namespace {

using testing::random_tensor;

ModelConfig small_config(int channels = 4, int depth = 1, int fusion = 1) {
  ModelConfig c;
  c.channels = channels;
  c.projection_depth = depth;
  c.fusion_blocks = fusion;
  return c;
}

Tensor<float> y_input(int u, int v, int h, int w, std::uint64_t seed) {
  return random_tensor<float>(Shape{1, u, v, 1, h, w}, seed, 0.0, 1.0);
}

TEST(Decompose, ScaleLadder) {
  Model<float> model(ModelConfig{}, 1);
  const auto t = model.decompose(ag::constant<float>(y_input(5, 5, 64, 64, 2)));
  EXPECT_EQ(t.f_high->value.shape(), (Shape{1, 5, 5, 32, 64, 64}));
  EXPECT_EQ(t.f_mid->value.shape(), (Shape{1, 5, 5, 32, 32, 32}));
  EXPECT_EQ(t.f_low->value.shape(), (Shape{1, 5, 5, 32, 16, 16}));
  EXPECT_FALSE(t.enhanced);
}

TEST(Decompose, RejectsSizesNotDivisibleBy4) {
  Model<float> model(small_config(), 1);
  EXPECT_THROW(model.decompose(ag::constant<float>(y_input(5, 5, 62, 64, 3))), SizeError);
  EXPECT_THROW(model.decompose(ag::constant<float>(y_input(5, 5, 64, 66, 3))), SizeError);
}

TEST(Decompose, HomogeneousOfDegreeOne) {
  // Biases start at zero, so the decomposition is purely linear.
  Model<float> model(small_config(8), 4);
  const auto x = y_input(3, 3, 16, 16, 5);
  Tensor<float> x2 = x;
  for (std::size_t i = 0; i < x2.size(); ++i) x2[i] *= 2.f;
  const auto a = model.decompose(ag::constant<float>(x));
  const auto b = model.decompose(ag::constant<float>(x2));
  for (auto [pa, pb] : {std::pair{a.f_high, b.f_high}, {a.f_mid, b.f_mid}, {a.f_low, b.f_low}}) {
    for (std::size_t i = 0; i < pa->value.size(); ++i) {
      ASSERT_NEAR(pb->value[i], 2.f * pa->value[i], 1e-5);
    }
  }
}

// conv_a = identity tap, conv_b = conv_c = 2x2 average on a 4x4 ramp.
TEST(Decompose, HandComputedRamp) {
  ModelConfig c = small_config(1);
  c.angular_u = c.angular_v = 1;
  Model<double> model(c, 0);
  auto set = [](nn::Conv2d<double>& conv, std::initializer_list<int> taps, double w) {
    conv.weight.value.fill(0.0);
    conv.bias.value.fill(0.0);
    for (int t : taps) conv.weight.value[t] = w;
  };
  set(model.conv_full(), {4}, 1.0);
  set(model.conv_half(), {4, 5, 7, 8}, 0.25);
  set(*model.conv_quarter(), {4, 5, 7, 8}, 0.25);

  Tensor<double> ramp(Shape{1, 1, 1, 1, 4, 4});
  std::iota(ramp.data(), ramp.data() + 16, 0.0);
  const auto t = model.decompose(ag::constant<double>(ramp));

  // avg2(ramp) = [[2.5, 4.5], [10.5, 12.5]]; its bilinear x2 rows are
  // [2.5 3 4 4.5], [4.5 5 6 6.5], [8.5 9 10 10.5], [10.5 11 12 12.5].
  const double high[16] = {-2.5, -2, -2, -1.5, -0.5, 0, 0, 0.5,
                           -0.5, 0,  0,  0.5,  1.5,  2, 2, 2.5};
  for (int i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(t.f_high->value[i], high[i]) << i;
  const double mid[4] = {-5, -3, 3, 5};
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(t.f_mid->value[i], mid[i]);
  EXPECT_DOUBLE_EQ(t.f_low->value[0], 7.5);
}

TEST(ScaleBlocks, ShapesAndZeroInput) {
  nn::ScaleUp<float> up(8, 2);
  nn::ScaleDown<float> down(8, 2);
  std::mt19937_64 rng(6);
  for (auto* ps : {&up.fusion, &down.fusion}) {
    nn::ParamRefs<float> refs;
    ps->collect("f", refs);
    for (auto* p : refs)
      if (p->name.find(".weight") != std::string::npos)
        for (std::size_t i = 0; i < p->size(); ++i) p->value[i] = std::normal_distribution<float>(0, 0.1f)(rng);
  }
  up.project.weight.value = random_tensor<float>(up.project.weight.value.shape(), 7);
  down.reduce.weight.value = random_tensor<float>(down.reduce.weight.value.shape(), 8);

  const auto x = ag::constant<float>(random_tensor<float>(Shape{1, 5, 5, 8, 16, 16}, 9));
  const auto lifted = up.forward(x);
  EXPECT_EQ(lifted->value.shape(), (Shape{1, 5, 5, 8, 32, 32}));
  const auto back = down.forward(lifted);
  EXPECT_EQ(back->value.shape(), x->value.shape());

  const auto zero = ag::constant<float>(Tensor<float>(Shape{1, 5, 5, 8, 16, 16}));
  const auto up_zero = up.forward(zero);
  const auto down_zero = down.forward(zero);
  for (float s : up_zero->value.span()) ASSERT_EQ(s, 0.f);
  for (float s : down_zero->value.span()) ASSERT_EQ(s, 0.f);

  const auto odd = ag::constant<float>(Tensor<float>(Shape{1, 5, 5, 8, 15, 16}));
  EXPECT_THROW(down.forward(odd), SizeError);
}

TEST(ScaleBlocks, ClosedFormCounts) {
  EXPECT_EQ(nn::SpatialAngularBlock<float>::count(32), 18496u);
  EXPECT_EQ(nn::ScaleUp<float>::count(32, 2), 38048u);
  EXPECT_EQ(nn::ScaleDown<float>::count(32, 2), 53408u);
  for (int c : {1, 4, 32}) {
    for (int fb : {0, 1, 2}) {
      nn::ScaleUp<float> up(c, fb);
      nn::ParamRefs<float> refs;
      up.collect("up", refs);
      std::size_t n = 0;
      for (auto* p : refs) n += p->size();
      EXPECT_EQ(n, nn::ScaleUp<float>::count(c, fb));
      EXPECT_EQ(n, static_cast<std::size_t>(fb) * (18 * c * c + 2 * c) + c * c + c);
    }
  }
}

// Up weight p (bilinear x2 of a 1x1 map replicates it, then 1x1 conv) and
// Down weight q (the four in-bounds taps of the 4x4 kernel share q/4).
template <typename Unit>
void set_scalar(Unit& unit, double p, double q) {
  auto up = [p](nn::ScaleUp<double>& s) {
    s.project.weight.value[0] = p;
    s.project.bias.value[0] = 0;
  };
  auto down = [q](nn::ScaleDown<double>& s) {
    s.reduce.weight.value.fill(0);
    s.reduce.bias.value[0] = 0;
    for (int t : {5, 6, 9, 10}) s.reduce.weight.value[t] = q / 4;
  };
  if constexpr (std::is_same_v<Unit, nn::UpProjection<double>>) {
    up(unit.up);
    down(unit.down);
    up(unit.up_residual);
  } else {
    down(unit.down);
    up(unit.up);
    down(unit.down_residual);
  }
}

TEST(UpProjectionUnit, ScalarToy) {
  nn::UpProjection<double> unit(1, 0);
  const double p = 1.7, q = 0.6, f = -0.8;
  set_scalar(unit, p, q);
  Tensor<double> x(Shape{1, 1, 1, 1, 1, 1}, f);
  const auto st = unit.forward(ag::constant<double>(x));
  ASSERT_EQ(st.hr_feature->value.shape(), (Shape{1, 1, 1, 1, 2, 2}));
  const double expect = p * (q * p - 1) * f + p * f;
  for (double s : st.hr_feature->value.span()) EXPECT_NEAR(s, expect, 1e-15);
  EXPECT_NEAR(st.residual->value[0], (q * p - 1) * f, 1e-15);
}

TEST(DownProjectionUnit, ScalarToy) {
  nn::DownProjection<double> unit(1, 0);
  const double p = 1.7, q = 0.6, u = 0.45;
  set_scalar(unit, p, q);
  Tensor<double> x(Shape{1, 1, 1, 1, 2, 2}, u);
  const auto st = unit.forward(ag::constant<double>(x));
  ASSERT_EQ(st.lr_feature->value.shape(), (Shape{1, 1, 1, 1, 1, 1}));
  EXPECT_NEAR(st.lr_feature->value[0], q * (p * q - 1) * u + q * u, 1e-15);
  for (double s : st.residual->value.span()) EXPECT_NEAR(s, (p * q - 1) * u, 1e-15);
}

TEST(UpProjectionUnit, FixedPointGivesZeroResidual) {
  const int c = 4;
  nn::UpProjection<float> unit(c, 2);
  testing::make_fixed_point(unit, c);
  const auto f = ag::constant<float>(testing::bordered_dyadic<float>(Shape{1, 3, 3, c, 8, 8}, 10));
  const auto st = unit.forward(f);
  for (float e : st.residual->value.span()) ASSERT_EQ(e, 0.f);
  const auto direct = unit.up.forward(f);
  EXPECT_EQ(max_abs_diff(st.hr_feature->value, direct->value), 0.f);
  EXPECT_EQ(st.hr_feature->value.shape(), (Shape{1, 3, 3, c, 16, 16}));
}

TEST(DownProjectionUnit, MirroredFixedPoint) {
  const int c = 4;
  nn::DownProjection<float> unit(c, 2);
  testing::make_fixed_point(unit, c);
  nn::ScaleUp<float> lift(c, 0);
  testing::make_identity_up(lift, c);
  // u lies in the range of Up, so Up(Down(u)) == u.
  const auto g = ag::constant<float>(testing::bordered_dyadic<float>(Shape{1, 2, 2, c, 6, 6}, 11));
  const auto u = lift.forward(g);
  const auto st = unit.forward(u);
  for (float e : st.residual->value.span()) ASSERT_EQ(e, 0.f);
  EXPECT_EQ(max_abs_diff(st.lr_feature->value, unit.down.forward(u)->value), 0.f);
  EXPECT_EQ(max_abs_diff(st.lr_feature->value, g->value), 0.f);
  EXPECT_THROW(unit.forward(ag::constant<float>(Tensor<float>(Shape{1, 1, 1, c, 5, 6}))),
               SizeError);
}

TEST(FrequencyProjectionOp, PreservesResolution) {
  nn::FrequencyProjection<float> fp(8, 2, 1);
  const auto x = ag::constant<float>(random_tensor<float>(Shape{1, 2, 2, 8, 16, 16}, 12));
  EXPECT_EQ(fp.forward(x)->value.shape(), x->value.shape());
  EXPECT_EQ(nn::FrequencyProjection<float>::count(8, 2, 1),
            2u * 3 * (nn::ScaleUp<float>::count(8, 1) + nn::ScaleDown<float>::count(8, 1)));
}

TEST(FrequencyProjectionOp, CascadedFixedPointIsIdentity) {
  const int c = 3;
  nn::FrequencyProjection<float> fp(c, 2, 1);
  for (auto& u : fp.up_units) testing::make_fixed_point(*u, c);
  for (auto& d : fp.down_units) testing::make_fixed_point(*d, c);
  const auto x = ag::constant<float>(testing::bordered_dyadic<float>(Shape{1, 2, 2, c, 8, 8}, 13));
  EXPECT_EQ(max_abs_diff(fp.forward(x)->value, x->value), 0.f);
}

TEST(FrequencyProjectionOp, GradientMatchesFiniteDifferences) {
  nn::FrequencyProjection<double> fp(32, 2, 1);
  nn::ParamRefs<double> params;
  fp.collect("fp", params);
  std::mt19937_64 rng(14);
  for (auto* p : params) {
    const Shape& s = p->value.shape();
    const double bound = 1.0 / std::sqrt(double(s.channels * s.height * s.width));
    std::uniform_real_distribution<double> d(-bound, bound);
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] = d(rng);
  }
  const auto x = random_tensor<double>(Shape{1, 1, 1, 32, 8, 8}, 15);
  auto output_sum = [&]() {
    const auto y = fp.forward(ag::constant<double>(x))->value;
    return std::accumulate(y.data(), y.data() + y.size(), 0.0);
  };
  ag::Tape<double> tape;
  const auto y = fp.forward(tape.input(x));
  // l1 against a target far below the output is mean(y) + const.
  Tensor<double> target = y->value;
  for (std::size_t i = 0; i < target.size(); ++i) target[i] -= 100.0;
  tape.backward(ag::l1_loss<double>(y, target));
  const double n = static_cast<double>(target.size());

  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  for (int probe = 0; probe < 8; ++probe) {
    auto* p = params[pick_param(rng)];
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p->size() - 1)(rng);
    const double keep = p->value[i], h = 1e-5;
    p->value[i] = keep + h;
    const double up = output_sum();
    p->value[i] = keep - h;
    const double down = output_sum();
    p->value[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double analytic = p->grad[i] * n;
    EXPECT_LT(std::abs(analytic - numeric), 1e-4 * std::max(std::abs(numeric), 1e-3))
        << p->name << "[" << i << "] " << analytic << " vs " << numeric;
  }
}

TEST(Interact, WiringWithIdentityStubs) {
  ModelConfig c = small_config(3);
  c.use_fp = false;
  c.fp_replacement_blocks = 1;
  Model<double> model(c, 16);
  for (auto* p : model.parameters()) {
    if (p->name.rfind("enhance.", 0) == 0) p->value.fill(0.0);
  }
  // Reducers keep the first half of the concatenated channels.
  for (auto* conv : {model.mid_reduce(), model.high_reduce()}) {
    conv->weight.value.fill(0.0);
    for (int o = 0; o < 3; ++o) conv->weight.value[o * 6 + o] = 1.0;
  }
  const auto in = model.decompose(ag::constant<double>(
      random_tensor<double>(Shape{1, 5, 5, 1, 8, 8}, 17)));
  const auto out = model.interact(in);
  EXPECT_TRUE(out.enhanced);
  EXPECT_EQ(max_abs_diff(out.f_low->value, in.f_low->value), 0.0);
  EXPECT_EQ(max_abs_diff(out.f_mid->value, in.f_mid->value), 0.0);
  EXPECT_EQ(max_abs_diff(out.f_high->value, in.f_high->value), 0.0);

  // Switching the reducers to the second half routes the aligned lower
  // branch through instead.
  for (auto* conv : {model.mid_reduce(), model.high_reduce()}) {
    conv->weight.value.fill(0.0);
    for (int o = 0; o < 3; ++o) conv->weight.value[o * 6 + 3 + o] = 1.0;
  }
  const auto routed = model.interact(in);
  const auto up_low = ag::upsample<double>(in.f_low, 2);
  EXPECT_EQ(max_abs_diff(routed.f_mid->value, up_low->value), 0.0);
  EXPECT_THROW(model.interact(out), StateError);
}

TEST(Reconstruct, NeedsEnhancedTriple) {
  Model<float> model(small_config(), 18);
  const auto x = ag::constant<float>(y_input(5, 5, 8, 8, 19));
  EXPECT_THROW(model.reconstruct(model.decompose(x), x), StateError);
}

TEST(Forward, OutputShapeEqualsInput) {
  Model<float> model(small_config(), 20);
  for (auto [h, w] : {std::pair{64, 64}, {128, 96}}) {
    const auto x = y_input(5, 5, h, w, 21);
    EXPECT_EQ(model.forward(x).shape(), x.shape());
  }
}

TEST(Forward, ZeroHeadIsIdentity) {
  Model<float> model(small_config(), 22);
  const auto x = y_input(5, 5, 16, 16, 23);
  const auto y = model.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_EQ(y[i], x[i]);
}

TEST(Forward, Deterministic) {
  Model<float> model(small_config(), 24);
  model.head().weight.value = random_tensor<float>(model.head().weight.value.shape(), 25);
  const auto x = y_input(5, 5, 16, 16, 26);
  const auto a = model.forward(x), b = model.forward(x);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
  EXPECT_GT(max_abs_diff(a, x), 0.f);
}

TEST(Forward, EveryParameterGetsGradient) {
  for (const std::string& variant : ablation_variants()) {
    Model<float> model(make_ablation(small_config(), variant), 27);
    model.head().weight.value = random_tensor<float>(model.head().weight.value.shape(), 28);
    for (auto* p : model.parameters())
      if (p->name.find(".bias") != std::string::npos)
        p->value = random_tensor<float>(p->value.shape(), 29, -0.05, 0.05);
    ag::Tape<float> tape;
    const auto x = y_input(5, 5, 8, 8, 30);
    const auto y = model.forward(tape.input(x));
    for (float s : y->value.span()) ASSERT_TRUE(std::isfinite(s));
    tape.backward(ag::l1_loss<float>(y, random_tensor<float>(x.shape(), 31, 0.0, 1.0)));
    for (auto* p : model.parameters()) {
      float mag = 0;
      for (float g : p->grad.span()) mag = std::max(mag, std::abs(g));
      EXPECT_GT(mag, 0.f) << variant << ": " << p->name;
    }
  }
}

TEST(Params, ClosedFormMatchesInstantiatedModel) {
  std::vector<ModelConfig> configs;
  for (const auto& v : ablation_variants()) configs.push_back(make_ablation(small_config(4, 2, 2), v));
  ModelConfig shared = small_config(4, 1, 1);
  shared.share_fp_instances = true;
  configs.push_back(shared);
  ModelConfig padded = small_config(4, 1, 0);
  padded.padding_blocks = 2;
  configs.push_back(padded);
  for (const ModelConfig& c : configs) {
    Model<float> m(c, 0);
    EXPECT_EQ(m.num_params(), count_params(c)) << c.variant;
  }
}

TEST(Params, DefaultsAndMonotonicity) {
  const ModelConfig base;
  const std::size_t full = count_params(base);
  EXPECT_EQ(full, 3346849u);
  ModelConfig wide = base;
  wide.channels = 64;
  EXPECT_GT(count_params(wide), 2 * full);
  ModelConfig shared = base;
  shared.share_fp_instances = true;
  EXPECT_LT(count_params(shared), full);
}

TEST(Params, AblationParityWithinOnePercent) {
  for (int ch : {8, 32}) {
    for (int m : {1, 2}) {
      ModelConfig base = small_config(ch, m, 2);
      const double full = static_cast<double>(count_params(base));
      for (const auto& v : ablation_variants()) {
        const double n = static_cast<double>(count_params(make_ablation(base, v)));
        EXPECT_LE(std::abs(n - full) / full, 0.01) << v << " ch" << ch << " m" << m;
      }
    }
  }
}

TEST(Ablation, IdentityVariantsAndErrors) {
  const ModelConfig base = small_config(8, 2, 2);
  EXPECT_TRUE(make_ablation(base, "freq:lmh").same_architecture(base));
  EXPECT_TRUE(make_ablation(base, "proj:full").same_architecture(base));
  EXPECT_EQ(make_ablation(base, "freq:h").branch_mode, BranchMode::kHighOnly);
  EXPECT_EQ(make_ablation(base, "freq:mh").branch_mode, BranchMode::kMidHigh);
  const ModelConfig none = make_ablation(base, "proj:none");
  EXPECT_FALSE(none.use_fp);
  EXPECT_FALSE(none.interaction);
  const ModelConfig fp_only = make_ablation(base, "proj:fp");
  EXPECT_TRUE(fp_only.use_fp);
  EXPECT_FALSE(fp_only.interaction);
  EXPECT_FALSE(make_ablation(base, "proj:interact").use_fp);
  EXPECT_THROW(make_ablation(base, "proj:bogus"), ConfigError);
}

TEST(Params, StableHierarchicalNames) {
  Model<float> model(small_config(4, 1, 1), 0);
  EXPECT_NE(model.find("decompose.full.weight"), nullptr);
  EXPECT_NE(model.find("enhance.low1.stage0.fupu.up.fusion.block0.spatial.weight"), nullptr);
  EXPECT_NE(model.find("enhance.high3.stage0.fdpu.down_residual.reduce.bias"), nullptr);
  EXPECT_NE(model.find("interact.mid_reduce.weight"), nullptr);
  EXPECT_NE(model.find("reconstruct.head.weight"), nullptr);
  std::set<std::string> names;
  for (auto* p : model.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;

  ModelConfig sc = small_config(4, 1, 1);
  sc.share_fp_instances = true;
  Model<float> shared(sc, 0);
  EXPECT_NE(shared.find("enhance.shared1.stage0.fupu.up.project.weight"), nullptr);
  EXPECT_NE(shared.find("enhance.shared3.stage0.fdpu.down_residual.reduce.bias"), nullptr);
  EXPECT_EQ(shared.find("enhance.shared4.stage0.fupu.up.project.weight"), nullptr);
  EXPECT_EQ(shared.find("enhance.low1.stage0.fupu.up.project.weight"), nullptr);
}

// Permutes the (u, v) views of a tensor.
Tensor<float> permute_views(const Tensor<float>& t, const std::vector<int>& perm) {
  Tensor<float> out(t.shape());
  const std::size_t vs = t.shape().view_size();
  for (std::size_t n = 0; n < perm.size(); ++n) {
    std::copy(t.view(perm[n]), t.view(perm[n]) + vs, out.view(static_cast<int>(n)));
  }
  return out;
}

TEST(AngularEquivariance, PerViewStagesCommuteWithViewPermutation) {
  std::vector<int> perm(25);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(32));
  const auto x = random_tensor<float>(Shape{1, 5, 5, 4, 8, 8}, 33);

  nn::ScaleUp<float> per_view(4, 0);
  per_view.project.weight.value = random_tensor<float>(per_view.project.weight.value.shape(), 34);
  const auto a = permute_views(per_view.forward(ag::constant<float>(x))->value, perm);
  const auto b = per_view.forward(ag::constant<float>(permute_views(x, perm)))->value;
  EXPECT_EQ(max_abs_diff(a, b), 0.f);

  nn::ScaleUp<float> fused(4, 1);
  nn::ParamRefs<float> refs;
  fused.collect("f", refs);
  std::uint64_t seed = 35;
  for (auto* p : refs) p->value = random_tensor<float>(p->value.shape(), seed++, -0.3, 0.3);
  const auto c = permute_views(fused.forward(ag::constant<float>(x))->value, perm);
  const auto d = fused.forward(ag::constant<float>(permute_views(x, perm)))->value;
  EXPECT_GT(max_abs_diff(c, d), 1e-3f);
}

TEST(ModelConfigJson, RoundTrip) {
  ModelConfig c = make_ablation(small_config(8, 2, 1), "freq:mh");
  const ModelConfig back = model_config_from_json(to_json(c));
  EXPECT_TRUE(back.same_architecture(c));
  EXPECT_EQ(back.variant, "freq:mh");
  nlohmann::json broken = to_json(c);
  broken.erase("channels");
  EXPECT_THROW(model_config_from_json(broken), ConfigError);
}

}  // namespace
}  // namespace ofpnet
