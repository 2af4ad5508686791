// Copyright 2026 The codebook-forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace cbforge;
using cbforge::fixtures::random_beam;
using cbforge::fixtures::random_channel;

TEST(PhaseSet, Levels) {
  const PhaseSet ps(2);
  ASSERT_EQ(ps.size(), 4u);
  EXPECT_DOUBLE_EQ(ps[0], -kPi / 2);
  EXPECT_DOUBLE_EQ(ps[1], 0.0);
  EXPECT_DOUBLE_EQ(ps[2], kPi / 2);
  EXPECT_EQ(ps[3], kPi);
  for (unsigned r = 1; r <= 8; ++r) {
    const PhaseSet p(r);
    EXPECT_EQ(p[p.zero_index()], 0.0);
    EXPECT_EQ(p.levels().back(), kPi);
    EXPECT_GT(p.levels().front(), -kPi);
    for (std::size_t i = 1; i < p.size(); ++i) EXPECT_NEAR(p[i] - p[i - 1], p.step(), 1e-12);
  }
  EXPECT_THROW(PhaseSet(0), ConfigError);
}

TEST(Weights, Examples) {
  const PhaseSet ps(2);
  const CVec w = weights(Beam{{1, 1}}, ps);
  EXPECT_NEAR(std::abs(w[0] - Complex(1 / std::sqrt(2.0), 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(w[1] - Complex(1 / std::sqrt(2.0), 0)), 0.0, 1e-15);

  const CVec one = weights(Beam{{3}}, ps);
  EXPECT_NEAR(std::abs(one[0] - Complex(-1.0, 0.0)), 0.0, 1e-15);

  Rng rng(1);
  const PhaseSet p4(4);
  double norm2 = 0.0;
  for (const auto& v : weights(random_beam(32, p4, rng), p4)) norm2 += std::norm(v);
  EXPECT_NEAR(std::sqrt(norm2), 1.0, 1e-12);
}

TEST(Quantize, Examples) {
  const PhaseSet ps(2);
  const std::vector<double> in{0.3, -3.0};
  const Beam b = quantize_phases(in, ps);
  EXPECT_EQ(ps[b.phase_indices[0]], 0.0);
  EXPECT_EQ(ps[b.phase_indices[1]], kPi);
}

TEST(Quantize, TiesGoToLowerIndex) {
  const PhaseSet ps(2);
  // pi/4 is halfway between 0 (index 1) and pi/2 (index 2).
  EXPECT_EQ(ps.nearest(kPi / 4), 1u);
  // -3pi/4 is halfway between -pi/2 (index 0) and pi (index 3).
  EXPECT_EQ(ps.nearest(-3 * kPi / 4), 0u);
}

TEST(Quantize, ResidualAndIdempotence) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (unsigned r = 1; r <= 6; ++r) {
    const PhaseSet ps(r);
    std::vector<double> ph(64);
    for (auto& x : ph) x = u(rng);
    const Beam b = quantize_phases(ph, ps);
    const auto levels = beam_phases(b, ps);
    for (std::size_t m = 0; m < ph.size(); ++m) {
      EXPECT_LE(std::abs(wrap_phase(ph[m] - levels[m])), kPi / ps.size() + 1e-12);
      // Brute-force nearest level.
      double best = 1e9;
      for (std::size_t i = 0; i < ps.size(); ++i) best = std::min(best, std::abs(wrap_phase(ph[m] - ps[i])));
      EXPECT_NEAR(std::abs(wrap_phase(ph[m] - levels[m])), best, 1e-12);
    }
    EXPECT_EQ(quantize_phases(levels, ps), b);
  }
}

TEST(Gain, Examples) {
  const double s = 1 / std::sqrt(2.0);
  const CVec w{s, s};
  EXPECT_NEAR(gain(w, CVec{1.0, 1.0}), 2.0, 1e-12);
  EXPECT_NEAR(gain(w, CVec{1.0, -1.0}), 0.0, 1e-12);
  EXPECT_THROW(gain(w, CVec{1.0}), DimensionError);
}

TEST(Gain, MatchesScalarLoop) {
  Rng rng(3);
  const CVec w = random_channel(4, rng), h = random_channel(4, rng);
  double re = 0.0, im = 0.0;
  for (std::size_t m = 0; m < 4; ++m) {
    // conj(w) * h
    re += w[m].real() * h[m].real() + w[m].imag() * h[m].imag();
    im += w[m].real() * h[m].imag() - w[m].imag() * h[m].real();
  }
  EXPECT_NEAR(gain(w, h), re * re + im * im, 1e-12);
}

TEST(Gain, GlobalPhaseInvariance) {
  Rng rng(4);
  const PhaseSet ps(3);
  for (int t = 0; t < 50; ++t) {
    const CVec h = random_channel(8, rng);
    CVec r = h;
    for (auto& v : r) v *= std::polar(1.0, 1.234);
    const CVec w = weights(random_beam(8, ps, rng), ps);
    EXPECT_NEAR(gain(w, h), gain(w, r), 1e-12);
  }
}

TEST(ClusterGain, Examples) {
  const double s = 1 / std::sqrt(2.0);
  const CVec w{s, s};
  const std::vector<CVec> one{{1.0, 1.0}};
  EXPECT_NEAR(cluster_gain(w, one), 2.0, 1e-12);
  const std::vector<CVec> two{{1.0, 1.0}, {1.0, -1.0}};
  const std::vector<CVec> swapped{{1.0, -1.0}, {1.0, 1.0}};
  EXPECT_NEAR(cluster_gain(w, two), 1.0, 1e-12);
  EXPECT_EQ(cluster_gain(w, two), cluster_gain(w, swapped));
  EXPECT_THROW(cluster_gain(w, std::vector<CVec>{}), ConfigError);
}

TEST(EgcBound, Examples) {
  EXPECT_NEAR(egc_bound(CVec{1.0, 1.0}), 2.0, 1e-12);
  EXPECT_NEAR(egc_bound(CVec{1.0, Complex(0, 1)}), 2.0, 1e-12);
}

TEST(EgcBound, DominatesEveryBeam) {
  Rng rng(5);
  const PhaseSet ps(4);
  for (int t = 0; t < 1000; ++t) {
    const CVec h = random_channel(8, rng);
    EXPECT_LE(gain(weights(random_beam(8, ps, rng), ps), h), egc_bound(h) * (1 + 1e-12));
  }
}

TEST(Snr, Linear) {
  EXPECT_EQ(snr(2.0, 1.0), 2.0);
  EXPECT_EQ(snr(0.0, 5.0), 0.0);
  EXPECT_EQ(snr(1.5, 4.0), 2.0 * snr(1.5, 2.0));
}

TEST(BestBeam, LowestIndexOnTies) {
  const PhaseSet ps(2);
  Codebook cb{{Beam{{1, 1}}, Beam{{1, 1}}, Beam{{3, 3}}}, ps};
  const auto [idx, g] = best_beam_gain(cb, CVec{1.0, 1.0});
  EXPECT_EQ(idx, 0u);
  EXPECT_NEAR(g, 2.0, 1e-12);
}

TEST(Exhaustive, SingleAntennaReachesChannelPower) {
  Rng rng(6);
  const PhaseSet ps(3);
  for (int t = 0; t < 50; ++t) {
    const CVec h = random_channel(1, rng);
    // With one antenna every level reaches |h|^2, so only the value is pinned.
    const auto [b, g] = exhaustive_best(ps, 1, h);
    EXPECT_NEAR(g, std::norm(h[0]), 1e-12);
    EXPECT_LT(b.phase_indices[0], ps.size());
  }
}

TEST(Exhaustive, BeatsSampledBeamsAndWithinQuantizationGap) {
  Rng rng(7);
  const PhaseSet ps(2);
  const double lo = std::pow(std::cos(kPi / 4), 2);
  for (int t = 0; t < 50; ++t) {
    const CVec h = random_channel(3, rng);
    const auto [b, g] = exhaustive_best(ps, 3, h);
    EXPECT_NEAR(gain(weights(b, ps), h), g, 0.0);
    for (int k = 0; k < 20; ++k) EXPECT_GE(g, gain(weights(random_beam(3, ps, rng), ps), h));
    EXPECT_GE(g, lo * egc_bound(h) - 1e-12);
    EXPECT_LE(g, egc_bound(h) * (1 + 1e-12));
  }
  EXPECT_THROW(exhaustive_best(PhaseSet(4), 6, random_channel(6, rng)), ConfigError);
}

TEST(CodebookFile, RoundTrip) {
  Rng rng(8);
  const PhaseSet ps(4);
  Codebook cb{{}, ps};
  for (int n = 0; n < 5; ++n) cb.beams.push_back(random_beam(7, ps, rng));
  std::ostringstream os;
  write_codebook(os, cb);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "#codebook r=4 M=7 N=5");
  const Codebook back = parse_codebook(os.str());
  EXPECT_EQ(back, cb);
  std::ostringstream again;
  write_codebook(again, back);
  EXPECT_EQ(again.str(), os.str());
}

TEST(CodebookFile, ErrorsCarryLineOffset) {
  const std::string good_header = "#codebook r=2 M=2 N=2\n";
  try {
    parse_codebook(good_header + "0,1\n0,9\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), good_header.size() + 4 + 2);
  }
  EXPECT_THROW(parse_codebook(good_header + "0,1\n"), FormatError);
  EXPECT_THROW(parse_codebook(good_header + "0,1\n0\n"), FormatError);
  EXPECT_THROW(parse_codebook(good_header + "0,1\n0,1\n0,1\n"), FormatError);
  EXPECT_THROW(parse_codebook("#codebook r=2 M=2\n0,1\n"), FormatError);
  EXPECT_THROW(parse_codebook(good_header + "0,-1\n0,1\n"), FormatError);
  EXPECT_THROW(parse_codebook(""), FormatError);
}
