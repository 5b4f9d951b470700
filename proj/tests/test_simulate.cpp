#include <gtest/gtest.h>

#include <cmath>

#include "pagan/rf.hpp"
#include "pagan/simulate.hpp"

using namespace pagan;

namespace {

AcquisitionGeometry paper_geom() {
  AcquisitionGeometry g;  // 128 x 2000 x 260 @ 40 MHz, 1480 m/s
  return g;
}

AcquisitionGeometry desk_geom() {
  AcquisitionGeometry g;
  g.n_elements = 32;
  g.n_samples = 700;
  g.n_frames = 8;
  return g;
}

SourceSpec centered_source(double axial = 0.02) {
  SourceSpec s;
  s.lateral_m = 0.0;
  s.axial_m = axial;
  return s;
}

}  // namespace

TEST(SynthesizeClean, ApexSampleIndexMatchesTimeOfFlight) {
  auto g = paper_geom();
  SourceSpec s = centered_source(0.03);
  // closest element is one of the two center ones; distance ~ axial there
  int apex = g.n_samples;
  for (int e = 0; e < g.n_elements; ++e) apex = std::min(apex, arrival_sample(g, s, e));
  // round((0.03 / 1480) * 40e6) = 811, plus the half-pitch lateral offset of
  // the nearest element (array is centered between elements 63 and 64)
  const double half_pitch = 0.5 * g.element_pitch_m;
  const double dist = std::sqrt(0.03 * 0.03 + half_pitch * half_pitch);
  EXPECT_EQ(apex, static_cast<int>(std::lround(dist / 1480.0 * 40e6)));
  EXPECT_NEAR(apex, 811, 1);
}

TEST(SynthesizeClean, ExactApexForOnElementSource) {
  auto g = paper_geom();
  SourceSpec s = centered_source(0.03);
  s.lateral_m = g.element_x(64);  // directly above element 64
  EXPECT_EQ(arrival_sample(g, s, 64), 811);  // round((0.03/1480)*40e6)
}

TEST(SynthesizeClean, SymmetricArrivalCurve) {
  auto g = desk_geom();
  auto s = centered_source(0.02);
  int earliest = g.n_samples + 1;
  for (int e = 0; e < g.n_elements; ++e) {
    const int a = arrival_sample(g, s, e);
    const int mirror = arrival_sample(g, s, g.n_elements - 1 - e);
    EXPECT_EQ(a, mirror);
    earliest = std::min(earliest, a);
  }
  // the closest (center) elements are in the argmin set; rounding can widen
  // the plateau but never move it off-center
  EXPECT_EQ(arrival_sample(g, s, g.n_elements / 2), earliest);
  EXPECT_EQ(arrival_sample(g, s, g.n_elements / 2 - 1), earliest);
  EXPECT_GT(arrival_sample(g, s, 0), earliest);
}

TEST(SynthesizeClean, DoublingDepthIncreasesAllArrivals) {
  auto g = paper_geom();
  auto near = centered_source(0.03);
  auto far = centered_source(0.06);
  for (int e = 0; e < g.n_elements; ++e)
    EXPECT_GT(arrival_sample(g, far, e), arrival_sample(g, near, e));
}

TEST(SynthesizeClean, OutOfViewThrows) {
  auto g = desk_geom();
  g.n_samples = 100;  // window ends before a 5 cm arrival (~1351 samples)
  EXPECT_THROW(synthesize_clean(g, centered_source(0.05)), OutOfView);
}

TEST(SynthesizeClean, ArrivalCurveConvexUpToQuantization) {
  auto g = paper_geom();
  SourceSpec s = centered_source(0.04);
  s.lateral_m = 0.002;
  for (int e = 1; e + 1 < g.n_elements; ++e) {
    const int d2 = arrival_sample(g, s, e + 1) - 2 * arrival_sample(g, s, e) +
                   arrival_sample(g, s, e - 1);
    EXPECT_GE(d2, -1);
  }
}

TEST(SynthesizeStack, ZeroNoiseReproducesClean) {
  auto g = desk_geom();
  auto s = centered_source(0.02);
  NoiseSpec noise;
  noise.white_noise_std = 0;
  noise.channel_offset_std = 0;
  noise.spike_rate = 0;
  auto clean = synthesize_clean(g, s);
  auto stack = synthesize_stack(g, s, noise);
  ASSERT_EQ(stack.count(), g.n_frames);
  for (const auto& f : stack.frames) EXPECT_EQ(f.samples, clean.samples);
  ASSERT_TRUE(stack.source_truth.has_value());
  EXPECT_DOUBLE_EQ(stack.source_truth->axial_m, 0.02);
}

TEST(SynthesizeStack, SameSeedBitIdentical) {
  auto g = desk_geom();
  auto s = centered_source(0.025);
  NoiseSpec noise;
  noise.seed = 1234;
  auto a = synthesize_stack(g, s, noise);
  auto b = synthesize_stack(g, s, noise);
  ASSERT_EQ(a.count(), b.count());
  for (int i = 0; i < a.count(); ++i) EXPECT_EQ(a.frames[i].samples, b.frames[i].samples);
}

TEST(SynthesizeStack, EmpiricalSnrMatchesSpec) {
  auto g = desk_geom();
  g.n_frames = 100;
  auto s = centered_source(0.02);
  NoiseSpec noise;
  noise.white_noise_std = 0.5;
  noise.channel_offset_std = 0;
  noise.spike_rate = 0;
  noise.seed = 5;
  auto clean = synthesize_clean(g, s);
  auto stack = synthesize_stack(g, s, noise);
  const double peak = clean.samples.max_abs();
  double var = 0.0;
  int64_t n = 0;
  for (const auto& f : stack.frames) {
    for (size_t i = 0; i < f.samples.size(); ++i) {
      const double d = f.samples.v[i] - clean.samples.v[i];
      var += d * d;
      ++n;
    }
  }
  const double snr = peak / std::sqrt(var / n);
  EXPECT_NEAR(snr, 2.0, 0.4);  // within 20%
}

TEST(SynthesizeStack, CrossFrameNoiseUncorrelated) {
  auto g = desk_geom();
  g.n_frames = 100;
  auto s = centered_source(0.02);
  NoiseSpec noise;
  noise.white_noise_std = 0.5;
  noise.channel_offset_std = 0;
  noise.spike_rate = 0;
  noise.seed = 6;
  auto clean = synthesize_clean(g, s);
  auto stack = synthesize_stack(g, s, noise);
  // correlation between consecutive frames' noise components
  for (int f = 0; f + 1 < 20; ++f) {
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < clean.samples.size(); ++i) {
      const double x = stack.frames[f].samples.v[i] - clean.samples.v[i];
      const double y = stack.frames[f + 1].samples.v[i] - clean.samples.v[i];
      sxy += x * y;
      sxx += x * x;
      syy += y * y;
    }
    EXPECT_LT(std::abs(sxy / std::sqrt(sxx * syy)), 0.1);
  }
}

TEST(SynthesizeStack, ReferenceRecoversClean) {
  auto g = desk_geom();
  g.n_frames = 64;
  auto s = centered_source(0.02);
  NoiseSpec noise;
  noise.white_noise_std = 0.5;
  noise.channel_offset_std = 0;
  noise.spike_rate = 0;
  noise.seed = 11;
  auto clean = synthesize_clean(g, s);
  auto stack = synthesize_stack(g, s, noise);
  auto ref = build_reference(stack, 5);
  double num = 0, den = 0;
  for (size_t i = 0; i < clean.samples.size(); ++i) {
    const double d = ref.samples.v[i] - clean.samples.v[i];
    num += d * d;
    den += clean.samples.v[i] * clean.samples.v[i];
  }
  const double rel_l2 = std::sqrt(num / den);
  const double rms = std::sqrt(den / clean.samples.size());
  const double bound = 3.0 * (noise.white_noise_std * clean.samples.max_abs() /
                              std::sqrt(static_cast<double>(g.n_frames))) /
                       rms;
  EXPECT_LT(rel_l2, bound);
}

TEST(GroundTruthMask, CleanSupportInsideSignalRegion) {
  auto g = desk_geom();
  auto s = centered_source(0.02);
  auto clean = synthesize_clean(g, s);
  auto mask = ground_truth_mask(g, s, pulse_support_samples(g, s));
  for (int i = 0; i < g.n_samples; ++i)
    for (int e = 0; e < g.n_elements; ++e)
      if (std::abs(clean.samples.at(i, e)) > 1e-9f) EXPECT_EQ(mask.mask.at(i, e), 0);
}

TEST(GroundTruthMask, WholeFrameMarginRejected) {
  auto g = desk_geom();
  auto s = centered_source(0.02);
  EXPECT_THROW(ground_truth_mask(g, s, g.n_samples + 10), InvalidArgument);
}

TEST(GroundTruthMask, MarginSmallerThanSupportRejected) {
  auto g = desk_geom();
  auto s = centered_source(0.02);
  EXPECT_THROW(ground_truth_mask(g, s, pulse_support_samples(g, s) - 1), InvalidArgument);
}

TEST(GroundTruthMask, MarginMonotonicity) {
  auto g = desk_geom();
  auto s = centered_source(0.02);
  const int m0 = pulse_support_samples(g, s);
  auto a = ground_truth_mask(g, s, m0);
  auto b = ground_truth_mask(g, s, m0 + 15);
  for (size_t i = 0; i < a.mask.size(); ++i)
    if (a.mask.v[i] == 0) EXPECT_EQ(b.mask.v[i], 0);  // signal never reverts
}

TEST(SourceSpec, Validation) {
  SourceSpec s;
  s.axial_m = -1;
  EXPECT_THROW(s.validate(), InvalidArgument);
  NoiseSpec n;
  n.spike_rate = 1.5;
  EXPECT_THROW(n.validate(), InvalidArgument);
}
