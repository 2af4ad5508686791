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

#pragma once

// Geometric multipath channels for a linear array: array responses with
// optional per-antenna phase mismatch, synthetic scenario generation, global
// normalization and the binary channel file format.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cbforge/core.hpp"

namespace cbforge {

inline constexpr double kSpeedOfLight = 299792458.0;

struct ArrayGeometry {
  std::size_t num_antennas = 1;
  double wavenumber = 1.0;         // rad/m
  std::vector<double> positions;   // meters, strictly increasing

  double wavelength() const { return 2.0 * kPi / wavenumber; }

  // Uniform linear array with d_m = m * lambda / 2.
  static ArrayGeometry half_wavelength(std::size_t m, double frequency_ghz) {
    if (m == 0) throw ConfigError("array needs at least one antenna");
    if (!(frequency_ghz > 0.0)) throw ConfigError("carrier frequency must be > 0");
    ArrayGeometry g;
    g.num_antennas = m;
    const double lambda = kSpeedOfLight / (frequency_ghz * 1e9);
    g.wavenumber = 2.0 * kPi / lambda;
    g.positions.resize(m);
    for (std::size_t i = 0; i < m; ++i) g.positions[i] = static_cast<double>(i) * lambda / 2.0;
    return g;
  }

  void validate() const {
    if (num_antennas == 0) throw ConfigError("array needs at least one antenna");
    if (positions.size() != num_antennas)
      throw DimensionError("geometry has " + std::to_string(positions.size()) +
                           " positions for " + std::to_string(num_antennas) +
                           " antennas");
    if (!(wavenumber > 0.0) || !std::isfinite(wavenumber))
      throw ConfigError("wavenumber must be positive and finite");
    for (std::size_t i = 1; i < positions.size(); ++i)
      if (!(positions[i] > positions[i - 1]))
        throw ConfigError("antenna positions must be strictly increasing");
  }
};

struct PathComponent {
  Complex gain;
  double aod = kPi / 2;
};

// Fixed per-antenna phase deviations; drawn once, then frozen.
struct ImpairmentProfile {
  double sigma_p = 0.0;
  std::vector<double> deviations;
  std::uint64_t seed = 0;

  // The standard-normal pattern depends only on `seed`, so profiles that
  // share a seed differ only by their scale sigma_p.
  static ImpairmentProfile draw(double sigma_p, std::size_t m, std::uint64_t seed) {
    if (!(sigma_p >= 0.0) || !std::isfinite(sigma_p))
      throw ConfigError("sigma_p must be finite and >= 0");
    ImpairmentProfile p;
    p.sigma_p = sigma_p;
    p.seed = seed;
    p.deviations.assign(m, 0.0);
    Rng rng = make_rng(seed, Stream::kImpairment);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& d : p.deviations) {
      const double z = normal(rng);
      d = sigma_p == 0.0 ? 0.0 : sigma_p * z;
    }
    return p;
  }
};

enum class GainProfile { kDominantPath, kEqualPower };

struct ScenarioConfig {
  std::size_t antennas = 32;
  std::size_t users = 256;
  std::size_t num_clusters = 4;
  std::size_t paths_per_user = 5;
  double aod_spread = 0.05;  // rad, half-width around the cluster direction
  GainProfile gain_profile = GainProfile::kDominantPath;
  double rho = 1.0;
  double frequency_ghz = 60.0;
  std::string label = "LoS";
  std::uint64_t seed = 0;

  static ScenarioConfig los() { return ScenarioConfig{}; }
  static ScenarioConfig nlos() {
    ScenarioConfig c;
    c.gain_profile = GainProfile::kEqualPower;
    c.frequency_ghz = 28.0;
    c.label = "NLoS";
    return c;
  }

  void validate() const {
    if (antennas == 0) throw ConfigError("antennas must be >= 1");
    if (users == 0) throw ConfigError("users must be >= 1");
    if (paths_per_user == 0) throw ConfigError("paths_per_user must be >= 1");
    if (num_clusters == 0 || num_clusters > users)
      throw ConfigError("num_clusters must be in [1, users]");
    if (!(rho > 0.0)) throw ConfigError("rho must be > 0");
    if (!(aod_spread >= 0.0)) throw ConfigError("aod_spread must be >= 0");
    if (!(frequency_ghz > 0.0)) throw ConfigError("frequency_ghz must be > 0");
  }
};

class ChannelSet {
 public:
  ChannelSet() = default;
  ChannelSet(std::size_t users, std::size_t antennas)
      : users_(users), antennas_(antennas), entries_(users * antennas) {
    if (users == 0 || antennas == 0)
      throw ConfigError("channel set needs U >= 1 and M >= 1");
  }

  std::size_t users() const { return users_; }
  std::size_t antennas() const { return antennas_; }

  std::span<const Complex> user(std::size_t u) const {
    return {entries_.data() + u * antennas_, antennas_};
  }
  std::span<Complex> user(std::size_t u) {
    return {entries_.data() + u * antennas_, antennas_};
  }
  Complex& at(std::size_t u, std::size_t m) { return entries_[u * antennas_ + m]; }
  const Complex& at(std::size_t u, std::size_t m) const { return entries_[u * antennas_ + m]; }

  const std::vector<Complex>& entries() const { return entries_; }
  std::vector<Complex>& entries() { return entries_; }

  CVec user_vector(std::size_t u) const {
    auto s = user(u);
    return CVec(s.begin(), s.end());
  }

  double delta = 1.0;
  double frequency_ghz = 0.0;
  std::string label;

  friend bool operator==(const ChannelSet&, const ChannelSet&) = default;

 private:
  std::size_t users_ = 0;
  std::size_t antennas_ = 0;
  std::vector<Complex> entries_;
};

// [a(phi)]_m = exp(j (k d_m cos(phi) + dtheta_m)).
inline CVec array_response(const ArrayGeometry& geom, double phi,
                           const ImpairmentProfile* imp = nullptr) {
  if (!(phi > 0.0 && phi < kPi)) throw ConfigError("angle of departure must lie in (0, pi)");
  if (geom.positions.size() != geom.num_antennas)
    throw DimensionError("geometry positions do not match antenna count");
  if (imp && imp->deviations.size() != geom.num_antennas)
    throw DimensionError("impairment profile has " + std::to_string(imp->deviations.size()) +
                         " deviations for " + std::to_string(geom.num_antennas) + " antennas");
  CVec a(geom.num_antennas);
  const double c = std::cos(phi);
  for (std::size_t m = 0; m < geom.num_antennas; ++m) {
    double arg = geom.wavenumber * geom.positions[m] * c;
    if (imp) arg += imp->deviations[m];
    a[m] = std::polar(1.0, arg);
  }
  return a;
}

// h = sum_l alpha_l a(phi_l).
inline CVec path_sum(const ArrayGeometry& geom, std::span<const PathComponent> paths,
                     const ImpairmentProfile* imp = nullptr) {
  CVec h(geom.num_antennas, Complex{});
  for (const auto& p : paths) {
    if (!(std::abs(p.gain) > 0.0) || !std::isfinite(std::abs(p.gain)))
      throw ConfigError("path gain must be finite and nonzero");
    const CVec a = array_response(geom, p.aod, imp);
    for (std::size_t m = 0; m < h.size(); ++m) h[m] += p.gain * a[m];
  }
  return h;
}

// Per-user path lists for a scenario. Users are dealt round-robin to
// clusters; every cluster owns one direction per path index (the first is
// the cluster center), and each user perturbs those directions by up to
// +/- aod_spread.
inline std::vector<std::vector<PathComponent>> synth_paths(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, Stream::kChannels);
  std::uniform_real_distribution<double> angle(0.0, kPi);
  std::uniform_real_distribution<double> jitter(-cfg.aod_spread, cfg.aod_spread);
  std::uniform_real_distribution<double> phase(-kPi, kPi);

  const std::size_t L = cfg.paths_per_user;
  std::vector<std::vector<double>> directions(cfg.num_clusters, std::vector<double>(L));
  for (auto& cluster : directions)
    for (auto& d : cluster) d = angle(rng);

  std::vector<double> power(L, 1.0 / static_cast<double>(L));
  if (cfg.gain_profile == GainProfile::kDominantPath && L > 1) {
    // Dominant path carries 10x the combined power of the rest.
    power.assign(L, 0.1 / static_cast<double>(L - 1));
    power[0] = 1.0;
  } else if (L == 1) {
    power[0] = 1.0;
  }

  constexpr double kEdge = 1e-3;
  std::vector<std::vector<PathComponent>> out(cfg.users);
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const auto& dirs = directions[u % cfg.num_clusters];
    out[u].resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      const double aod = std::clamp(dirs[l] + jitter(rng), kEdge, kPi - kEdge);
      double ph = phase(rng);
      if (ph == -kPi) ph = kPi;
      out[u][l] = PathComponent{std::polar(std::sqrt(power[l]), ph), aod};
    }
  }
  return out;
}

// Unnormalized channels (delta = 1) for a synthetic scenario.
inline ChannelSet synth_channels(const ScenarioConfig& cfg, const ArrayGeometry& geom,
                                 const ImpairmentProfile* imp = nullptr) {
  geom.validate();
  if (geom.num_antennas != cfg.antennas)
    throw DimensionError("geometry has " + std::to_string(geom.num_antennas) +
                         " antennas, scenario asks for " + std::to_string(cfg.antennas));
  const auto paths = synth_paths(cfg);
  ChannelSet cs(cfg.users, cfg.antennas);
  cs.frequency_ghz = cfg.frequency_ghz;
  cs.label = cfg.label;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    const CVec h = path_sum(geom, paths[u], imp);
    std::copy(h.begin(), h.end(), cs.user(u).begin());
  }
  return cs;
}

inline ChannelSet synth_channels(const ScenarioConfig& cfg) {
  return synth_channels(cfg, ArrayGeometry::half_wavelength(cfg.antennas, cfg.frequency_ghz));
}

// Divides every entry by max |h_{u,m}|. The recorded delta accumulates, so
// it always relates the stored entries to the original scale.
inline ChannelSet normalize(const ChannelSet& cs) {
  double peak = 0.0;
  for (const auto& v : cs.entries()) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw DegenerateError("cannot normalize an all-zero channel set");
  ChannelSet out = cs;
  if (peak == 1.0) return out;
  for (auto& v : out.entries()) v /= peak;
  out.delta = cs.delta * peak;
  return out;
}

// Element-wise rotation h_m <- h_m e^{j dtheta_m}; magnitudes are untouched.
inline ChannelSet impair_channels(const ChannelSet& cs, const ImpairmentProfile& imp) {
  if (imp.deviations.size() != cs.antennas())
    throw DimensionError("impairment profile has " + std::to_string(imp.deviations.size()) +
                         " deviations for " + std::to_string(cs.antennas()) + " antennas");
  CVec rot(cs.antennas());
  for (std::size_t m = 0; m < rot.size(); ++m) rot[m] = std::polar(1.0, imp.deviations[m]);
  ChannelSet out = cs;
  for (std::size_t u = 0; u < out.users(); ++u) {
    auto h = out.user(u);
    for (std::size_t m = 0; m < h.size(); ++m)
      if (imp.deviations[m] != 0.0) h[m] *= rot[m];
  }
  return out;
}

// Binary layout: "CHNL", u16 version, u32 U, u32 M, f64 frequency_ghz,
// f64 delta, u16 label length, label bytes, then U*M (re, im) f64 pairs,
// row-major by user. Little-endian throughout.
inline constexpr std::uint16_t kChannelFileVersion = 1;

inline void write_channels(std::ostream& os, const ChannelSet& cs) {
  if (cs.label.size() > std::numeric_limits<std::uint16_t>::max())
    throw ConfigError("channel label longer than 65535 bytes");
  if (cs.users() > std::numeric_limits<std::uint32_t>::max() ||
      cs.antennas() > std::numeric_limits<std::uint32_t>::max())
    throw ConfigError("channel set too large for the file format");
  os.write("CHNL", 4);
  le::put_u16(os, kChannelFileVersion);
  le::put_u32(os, static_cast<std::uint32_t>(cs.users()));
  le::put_u32(os, static_cast<std::uint32_t>(cs.antennas()));
  le::put_f64(os, cs.frequency_ghz);
  le::put_f64(os, cs.delta);
  le::put_u16(os, static_cast<std::uint16_t>(cs.label.size()));
  os.write(cs.label.data(), static_cast<std::streamsize>(cs.label.size()));
  for (const auto& v : cs.entries()) {
    le::put_f64(os, v.real());
    le::put_f64(os, v.imag());
  }
}

inline ChannelSet parse_channels(std::vector<unsigned char> bytes) {
  le::Reader r(std::move(bytes));
  if (r.bytes(4, "magic") != "CHNL") throw FormatError("bad magic, expected CHNL", 0);
  const auto version_at = r.offset();
  const auto version = r.u16("version");
  if (version != kChannelFileVersion)
    throw FormatError("unsupported channel file version " + std::to_string(version), version_at);
  const auto users_at = r.offset();
  const std::uint64_t users = r.u32("user count");
  if (users == 0) throw FormatError("user count must be >= 1", users_at);
  const auto antennas_at = r.offset();
  const std::uint64_t antennas = r.u32("antenna count");
  if (antennas == 0) throw FormatError("antenna count must be >= 1", antennas_at);
  const double freq = r.f64("frequency");
  const auto delta_at = r.offset();
  const double delta = r.f64("delta");
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw FormatError("normalization scale must be positive and finite", delta_at);
  const auto label_len = r.u16("label length");
  std::string label = r.bytes(label_len, "label");
  const std::uint64_t count = users * antennas;  // both < 2^32, cannot overflow
  if (count > r.remaining() / 16)
    throw FormatError("dimension overflow: " + std::to_string(users) + "x" +
                          std::to_string(antennas) + " entries exceed file size",
                      r.offset());
  ChannelSet cs(users, antennas);
  cs.frequency_ghz = freq;
  cs.delta = delta;
  cs.label = std::move(label);
  for (auto& v : cs.entries()) {
    const auto at = r.offset();
    const double re = r.f64("entry");
    const double im = r.f64("entry");
    if (!std::isfinite(re) || !std::isfinite(im)) throw FormatError("non-finite channel entry", at);
    v = Complex(re, im);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after channel entries", r.offset());
  return cs;
}

inline void save_channels(const ChannelSet& cs, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open file for writing: " + path);
  write_channels(os, cs);
  if (!os) throw Error("failed writing " + path);
}

inline ChannelSet load_channels(const std::string& path) {
  return parse_channels(read_file_bytes(path));
}

}  // namespace cbforge
