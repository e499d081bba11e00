#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ofpnet/errors.h"
#include "ofpnet/metrics.h"
#include "metric_oracle.h"
#include "test_util.h"

namespace ofpnet::metrics {
namespace {

using ofpnet::testing::random_field;

TEST(Psnr, MatchesOracleOnRandomPairs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const LightField a = random_field(1, 1, 32, 32, Colorspace::kY, 100 + trial);
    LightField b = a;
    std::normal_distribution<float> noise(0.f, 0.02f + 0.002f * trial);
    for (float& s : b.data()) s = std::clamp(s + noise(rng), 0.f, 1.f);
    EXPECT_NEAR(psnr_y(b, a), ofpnet::testing::oracle_psnr(b.data().data(), a.data().data(), 1024), 1e-6);
  }
}

TEST(Ssim, MatchesOracleOnRandomPairs) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const LightField a = random_field(1, 1, 32, 32, Colorspace::kY, 200 + trial);
    LightField b = a;
    std::normal_distribution<float> noise(0.f, 0.01f + 0.01f * (trial % 10));
    for (float& s : b.data()) s = std::clamp(s + noise(rng), 0.f, 1.f);
    EXPECT_NEAR(ssim_y(b, a), ofpnet::testing::oracle_ssim(b.data().data(), a.data().data(), 32, 32), 1e-4);
  }
}

TEST(Psnr, UniformOneLevelError) {
  LightField gt(5, 5, 16, 16, Colorspace::kY, ScaleTag::kGT, 0.5f);
  LightField sr = gt;
  for (float& s : sr.data()) s += 1.f / 255.f;
  // 20 log10(255) = 48.1308...
  EXPECT_NEAR(psnr_y(sr, gt), 48.13, 0.01);
  EXPECT_NEAR(psnr_y(sr, gt), 20 * std::log10(255.0), 1e-4);
}

TEST(Psnr, CapSymmetryShiftAndMonotonicity) {
  const LightField a = random_field(2, 2, 12, 12, Colorspace::kY, 3);
  EXPECT_EQ(psnr_y(a, a), kPsnrCap);
  const LightField b = random_field(2, 2, 12, 12, Colorspace::kY, 4);
  EXPECT_DOUBLE_EQ(psnr_y(a, b), psnr_y(b, a));

  LightField base(1, 1, 8, 8, Colorspace::kY, ScaleTag::kGT, 0.25f);
  double prev = kPsnrCap;
  for (float e : {0.001f, 0.01f, 0.05f, 0.2f}) {
    LightField off = base;
    for (float& s : off.data()) s += e;
    const double p = psnr_y(off, base);
    EXPECT_LT(p, prev);
    prev = p;
    LightField base2 = base, off2 = off;
    for (float& s : base2.data()) s += 0.125f;
    for (float& s : off2.data()) s += 0.125f;
    EXPECT_NEAR(psnr_y(off2, base2), p, 1e-4);
  }
}

TEST(Psnr, PerViewValuesInRowMajorOrder) {
  LightField gt(2, 3, 4, 4, Colorspace::kY, ScaleTag::kGT, 0.5f);
  LightField sr = gt;
  for (float& s : sr.view(1, 2)) s += 0.1f;
  const auto pv = psnr_views(sr, gt);
  ASSERT_EQ(pv.size(), 6u);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(pv[i], kPsnrCap);
  EXPECT_NEAR(pv[5], 20.0, 1e-4);
  EXPECT_NEAR(psnr_y(sr, gt), (5 * kPsnrCap + pv[5]) / 6, 1e-9);
}

TEST(Ssim, IdentitySymmetryAndNoise) {
  const LightField a = random_field(1, 2, 20, 20, Colorspace::kY, 5);
  EXPECT_NEAR(ssim_y(a, a), 1.0, 1e-12);
  const LightField b = random_field(1, 2, 20, 20, Colorspace::kY, 6);
  EXPECT_NEAR(ssim_y(a, b), ssim_y(b, a), 1e-12);

  const LightField noise = random_field(1, 1, 64, 64, Colorspace::kY, 7);
  const LightField flat(1, 1, 64, 64, Colorspace::kY, ScaleTag::kGT, 0.5f);
  EXPECT_LT(std::abs(ssim_y(noise, flat)), 0.05);
}

TEST(Metrics, Errors) {
  const LightField a = random_field(1, 1, 8, 8, Colorspace::kY, 8);
  const LightField b = random_field(1, 1, 8, 9, Colorspace::kY, 9);
  EXPECT_THROW(psnr_y(a, b), SizeError);
  EXPECT_THROW(ssim_y(a, a), SizeError);
  const LightField rgb = random_field(1, 1, 8, 8, Colorspace::kRGB, 10);
  EXPECT_THROW(psnr_y(rgb, rgb), ColorspaceError);
}

}  // namespace
}  // namespace ofpnet::metrics
