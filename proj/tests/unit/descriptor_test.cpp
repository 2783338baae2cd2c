#include <numbers>

#include <gtest/gtest.h>

#include "cmfd/descriptor.hpp"
#include "support.hpp"

using namespace cmfd;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double relative_gap(const Descriptor& a, const Descriptor& b) {
  return feature_distance(a, b) / norm(a.magnitudes);
}

Descriptor unit(std::size_t dim, std::size_t hot) {
  Descriptor d;
  d.magnitudes.assign(dim, 0.0);
  d.magnitudes[hot] = 1.0;
  return d;
}

// Keypoint position after rotate90(img, q) of a w x h image.
Keypoint turned(const Keypoint& k, int q, int w, int h) {
  switch (((q % 4) + 4) % 4) {
    case 1: return {h - 1 - k.y, k.x, k.sigma};
    case 2: return {w - 1 - k.x, h - 1 - k.y, k.sigma};
    case 3: return {k.y, w - 1 - k.x, k.sigma};
  }
  return k;
}

}  // namespace

TEST(DescriptorConfig, DimensionAndValidation) {
  DescriptorConfig c;
  EXPECT_EQ(c.dimension(), 25);
  c.resample_size = 7;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.patch_radius_multiplier = 0.0;
  EXPECT_THROW(MomentDescriber{c}, ArgumentError);
}

TEST(Describe, UnitNormAndFinite) {
  const GrayImage img = test::texture(160, 120, 7, 1);
  Rng rng(2);
  const MomentDescriber md;
  for (int i = 0; i < 200; ++i) {
    const Keypoint k{rng.uniform(0, 159), rng.uniform(0, 119), rng.uniform(0.5, 8.0)};
    const Descriptor d = md.describe(img, k);
    ASSERT_EQ(d.magnitudes.size(), 25u);
    for (double m : d.magnitudes) ASSERT_TRUE(std::isfinite(m) && m >= 0.0);
    ASSERT_NEAR(norm(d.magnitudes), 1.0, 1e-9);
  }
}

TEST(Describe, ConstantPatchWithoutMeanRemoval) {
  DescriptorConfig c;
  c.zero_mean = false;
  const Descriptor d = describe(GrayImage(64, 64, 0.6), {32, 32, 3}, c);
  double top = 0.0;
  for (int n = 0; n <= c.n_max; ++n)
    for (int m = 0; m <= c.m_max; ++m) {
      const double v = d.magnitudes[c.index(n, m)];
      // The square sampling grid is four-fold symmetric: m = 1..3 cancel exactly, m = 4
      // keeps a small discretization residue of the disk rim.
      if (m % 4 != 0) { EXPECT_LT(v, 1e-9) << n << "," << m; }
      if (m == 4) { EXPECT_LT(v, 0.01) << n << "," << m; }
      top = std::max(top, v);
    }
  EXPECT_EQ(d.magnitudes[c.index(0, 0)], top);
}

TEST(Describe, ConstantPatchHasNoSignalAfterMeanRemoval) {
  EXPECT_THROW(describe(GrayImage(64, 64, 0.6), {32, 32, 3}), DescribeError);
}

TEST(Describe, RegionOutsideImage) {
  const GrayImage img = test::texture(40, 40, 5, 3);
  EXPECT_THROW(describe(img, {-100, 20, 2}), DescribeError);
  EXPECT_THROW(describe(img, {20, 20, 0}), DescribeError);
  EXPECT_NO_THROW(describe(img, {-3, 20, 2}));  // partly inside
}

TEST(Describe, QuarterTurnRotationInvariance) {
  const MomentDescriber md;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GrayImage img = test::texture(101, 87, 6, seed);
    for (const Keypoint k : {Keypoint{50, 43, 4}, Keypoint{30, 60, 2.5}, Keypoint{71, 20, 3}}) {
      const Descriptor a = md.describe(img, k);
      for (int q = 1; q < 4; ++q) {
        const Descriptor b = md.describe(rotate90(img, q), turned(k, q, img.width(), img.height()));
        for (std::size_t i = 0; i < a.magnitudes.size(); ++i)
          ASSERT_LE(std::abs(a.magnitudes[i] - b.magnitudes[i]), 0.01 * a.magnitudes[i] + 1e-9)
              << "seed " << seed << " q " << q << " entry " << i;
      }
    }
  }
}

TEST(Describe, TwofoldRescaleInvariance) {
  const MomentDescriber md;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GrayImage img = test::texture(101, 101, 6, seed);
    const GrayImage big = resize_bicubic(img, 2.0);
    for (double s : {3.0, 4.0, 6.0}) {
      const Descriptor a = md.describe(img, {50, 50, s});
      const Descriptor b = md.describe(big, {100.5, 100.5, 2 * s});
      EXPECT_LE(relative_gap(a, b), 0.03) << "seed " << seed << " sigma " << s;
    }
  }
}

TEST(FeatureDistance, Examples) {
  EXPECT_DOUBLE_EQ(feature_distance(unit(25, 0), unit(25, 1)), std::sqrt(2.0));
  EXPECT_THROW(feature_distance(unit(25, 0), unit(24, 0)), ArgumentError);
}

TEST(FeatureDistance, MetricAxioms) {
  const GrayImage img = test::texture(120, 120, 6, 9);
  Rng rng(10);
  auto pick = [&] { return describe(img, {rng.uniform(10, 110), rng.uniform(10, 110), rng.uniform(1, 5)}); };
  for (int i = 0; i < 100; ++i) {
    const auto a = pick(), b = pick(), c = pick();
    EXPECT_EQ(feature_distance(a, a), 0.0);
    EXPECT_EQ(feature_distance(a, b), feature_distance(b, a));
    EXPECT_LE(feature_distance(a, c), feature_distance(a, b) + feature_distance(b, c) + 1e-12);
    EXPECT_LE(feature_distance(a, b), 2.0);
  }
}

TEST(PhaseSignature, SelfIsZeroAngleFullConsistency) {
  const auto a = describe(test::texture(64, 64, 5, 4), {32, 32, 3});
  const auto s = relative_phase_signature(a, a);
  EXPECT_NEAR(s.angle, 0.0, 1e-9);
  EXPECT_NEAR(s.consistency, 1.0, 1e-9);
}

TEST(PhaseSignature, QuarterTurnRecovered) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GrayImage img = test::texture(65, 65, 5, seed);
    const auto a = describe(img, {32, 32, 3});
    const auto b = describe(rotate90(img, 1), {32, 32, 3});
    const auto s = relative_phase_signature(a, b);
    EXPECT_NEAR(s.angle, std::numbers::pi / 2, 0.05) << seed;
    EXPECT_GE(s.consistency, 0.9) << seed;
  }
}

TEST(PhaseSignature, IndependentNoiseIsInconsistent) {
  int low = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const GrayImage p(test::random_field(41, 41, rng)), q(test::random_field(41, 41, rng));
    low += relative_phase_signature(describe(p, {20, 20, 3}), describe(q, {20, 20, 3})).consistency < 0.5;
  }
  EXPECT_GE(low, 90);
}

TEST(PhaseSignature, DegenerateInputScoresZero) {
  DescriptorConfig c;
  c.m_max = 0;
  const auto a = describe(test::texture(64, 64, 5, 4), {32, 32, 3}, c);
  EXPECT_EQ(relative_phase_signature(a, a).consistency, 0.0);
}

TEST(DescribeAll, UnsmoothedMatchesDescribeAndSkipsFailures) {
  DescriptorConfig c;
  c.smoothing = 0.0;
  const MomentDescriber md(c);
  const GrayImage img = test::texture(80, 60, 5, 5);
  const std::vector<Keypoint> kps{{10, 10, 2}, {-500, 0, 1}, {40, 30, 3}, {70, 50, 1.2}};
  const auto all = md.describe_all(img, kps);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].keypoint, kps[0]);
  EXPECT_EQ(all[1].keypoint, kps[2]);
  EXPECT_EQ(all[2].magnitudes, md.describe(img, kps[3]).magnitudes);
}

TEST(DescribeAll, SmoothedPathSamplesBlurredImage) {
  const MomentDescriber md;  // blur = sigma by default
  const GrayImage img = test::texture(80, 60, 5, 6);
  const Keypoint k{40, 30, 2};  // 2 = 0.25 * 2^(12/4): an exact stack level
  const auto all = md.describe_all(img, std::vector<Keypoint>{k});
  ASSERT_EQ(all.size(), 1u);
  const auto ref = md.describe(gaussian_blur(img.field(), 2.0), k);
  for (std::size_t i = 0; i < ref.magnitudes.size(); ++i) EXPECT_NEAR(all[0].magnitudes[i], ref.magnitudes[i], 1e-12);
}
