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

// Constant-modulus beams over a uniformly quantized phase set, beamforming
// gain, the equal-gain-combining bound, and the codebook text format.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cbforge/core.hpp"

namespace cbforge {

// 2^r levels -pi + i * 2pi / 2^r for i = 1..2^r, i.e. (-pi, pi] with pi
// included. Index 0 holds -pi + step, the last index holds pi.
class PhaseSet {
 public:
  PhaseSet() : PhaseSet(1) {}
  explicit PhaseSet(unsigned bits) : bits_(bits) {
    if (bits == 0 || bits > 16) throw ConfigError("phase bits must be in [1, 16]");
    const std::size_t n = std::size_t{1} << bits;
    step_ = 2.0 * kPi / static_cast<double>(n);
    levels_.resize(n);
    for (std::size_t i = 0; i < n; ++i) levels_[i] = -kPi + static_cast<double>(i + 1) * step_;
    levels_.back() = kPi;
  }

  unsigned bits() const { return bits_; }
  std::size_t size() const { return levels_.size(); }
  double step() const { return step_; }
  double operator[](std::size_t i) const { return levels_[i]; }
  const std::vector<double>& levels() const { return levels_; }

  // Index of the zero-phase level.
  std::uint32_t zero_index() const { return static_cast<std::uint32_t>(size() / 2 - 1); }

  // Nearest level under circular distance; exact ties go to the lower index.
  std::uint32_t nearest(double phase) const {
    const double x = wrap_phase(phase);
    const auto n = static_cast<long>(size());
    const long lo = static_cast<long>(std::floor((x + kPi) / step_)) - 1;
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (long k = lo - 1; k <= lo + 2; ++k) {
      const auto idx = static_cast<std::uint32_t>(((k % n) + n) % n);
      const double d = std::abs(wrap_phase(x - levels_[idx]));
      if (d < best_d || (d == best_d && idx < best)) {
        best_d = d;
        best = idx;
      }
    }
    return best;
  }

  friend bool operator==(const PhaseSet& a, const PhaseSet& b) { return a.bits_ == b.bits_; }

 private:
  unsigned bits_;
  double step_;
  std::vector<double> levels_;
};

struct Beam {
  std::vector<std::uint32_t> phase_indices;

  std::size_t antennas() const { return phase_indices.size(); }
  friend bool operator==(const Beam&, const Beam&) = default;
};

struct Codebook {
  std::vector<Beam> beams;
  PhaseSet phase_set;

  std::size_t size() const { return beams.size(); }
  std::size_t antennas() const { return beams.empty() ? 0 : beams.front().antennas(); }

  void validate() const {
    if (beams.empty()) throw ConfigError("codebook must contain at least one beam");
    const std::size_t m = beams.front().antennas();
    if (m == 0) throw ConfigError("beams must have at least one antenna");
    for (const auto& b : beams) {
      if (b.antennas() != m) throw DimensionError("codebook beams have differing antenna counts");
      for (auto idx : b.phase_indices)
        if (idx >= phase_set.size()) throw ConfigError("phase index out of range for phase set");
    }
  }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

inline std::vector<double> beam_phases(const Beam& beam, const PhaseSet& ps) {
  std::vector<double> out(beam.antennas());
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = ps[beam.phase_indices[m]];
  return out;
}

// w_m = exp(j theta_m) / sqrt(M).
inline CVec weights(const Beam& beam, const PhaseSet& ps) {
  const std::size_t m = beam.antennas();
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  CVec w(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto idx = beam.phase_indices[i];
    if (idx >= ps.size()) throw ConfigError("phase index out of range for phase set");
    w[i] = std::polar(scale, ps[idx]);
  }
  return w;
}

inline Beam quantize_phases(std::span<const double> phases, const PhaseSet& ps) {
  Beam b;
  b.phase_indices.resize(phases.size());
  for (std::size_t m = 0; m < phases.size(); ++m) {
    if (!std::isfinite(phases[m])) throw ConfigError("cannot quantize a non-finite phase");
    b.phase_indices[m] = ps.nearest(phases[m]);
  }
  return b;
}

// |w^H h|^2
inline double gain(std::span<const Complex> w, std::span<const Complex> h) {
  if (w.size() != h.size())
    throw DimensionError("beam has " + std::to_string(w.size()) + " weights, channel has " +
                         std::to_string(h.size()) + " antennas");
  Complex acc{};
  for (std::size_t m = 0; m < w.size(); ++m) acc += std::conj(w[m]) * h[m];
  return std::norm(acc);
}

// Mean gain of one beam over a user cluster.
inline double cluster_gain(std::span<const Complex> w, std::span<const CVec> cluster) {
  if (cluster.empty()) throw ConfigError("cluster gain of an empty cluster is undefined");
  double sum = 0.0;
  for (const auto& h : cluster) sum += gain(w, h);
  return sum / static_cast<double>(cluster.size());
}

// Best phase-only gain: (sum_m |h_m|)^2 / M.
inline double egc_bound(std::span<const Complex> h) {
  if (h.empty()) throw DimensionError("empty channel vector");
  double s = 0.0;
  for (const auto& v : h) s += std::abs(v);
  return s * s / static_cast<double>(h.size());
}

inline double snr(double g, double rho) { return g * rho; }

// Serving beam for a user: highest gain, lowest index on ties.
inline std::pair<std::size_t, double> best_beam_gain(const Codebook& cb,
                                                     std::span<const Complex> h) {
  if (cb.beams.empty()) throw ConfigError("codebook is empty");
  std::size_t best = 0;
  double best_g = -1.0;
  for (std::size_t n = 0; n < cb.beams.size(); ++n) {
    const double g = gain(weights(cb.beams[n], cb.phase_set), h);
    if (g > best_g) {
      best_g = g;
      best = n;
    }
  }
  return {best, best_g};
}

// Precomputed weight vectors for repeated evaluation of a fixed codebook.
inline std::vector<CVec> codebook_weights(const Codebook& cb) {
  std::vector<CVec> out;
  out.reserve(cb.beams.size());
  for (const auto& b : cb.beams) out.push_back(weights(b, cb.phase_set));
  return out;
}

inline constexpr std::size_t kExhaustiveLimitLog2 = 20;

// Enumerates every quantized beam. Test oracle; limited to 2^20 beams.
inline std::pair<Beam, double> exhaustive_best(const PhaseSet& ps, std::size_t m,
                                               std::span<const Complex> h) {
  if (m == 0 || h.size() != m) throw DimensionError("exhaustive search dimension mismatch");
  if (ps.bits() * m > kExhaustiveLimitLog2)
    throw ConfigError("exhaustive search limited to 2^20 candidate beams");
  Beam cur;
  cur.phase_indices.assign(m, 0);
  Beam best = cur;
  double best_g = -1.0;
  const auto n = static_cast<std::uint32_t>(ps.size());
  while (true) {
    const double g = gain(weights(cur, ps), h);
    if (g > best_g) {
      best_g = g;
      best = cur;
    }
    // Odometer with the last antenna varying fastest (lexicographic order).
    std::size_t pos = m;
    while (pos > 0) {
      --pos;
      if (++cur.phase_indices[pos] < n) break;
      cur.phase_indices[pos] = 0;
      if (pos == 0) return {best, best_g};
    }
  }
}

// Text format: "#codebook r=<r> M=<M> N=<N>" then one comma-separated line
// of phase indices per beam.
inline void write_codebook(std::ostream& os, const Codebook& cb) {
  cb.validate();
  os << "#codebook r=" << cb.phase_set.bits() << " M=" << cb.antennas() << " N=" << cb.size()
     << "\n";
  for (const auto& b : cb.beams) {
    for (std::size_t m = 0; m < b.phase_indices.size(); ++m) {
      if (m) os << ',';
      os << b.phase_indices[m];
    }
    os << '\n';
  }
}

namespace detail {

inline unsigned long parse_uint(const std::string& tok, std::uint64_t offset, const char* what) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError(std::string("expected unsigned integer for ") + what + ", got '" + tok + "'",
                      offset);
  try {
    return std::stoul(tok);
  } catch (const std::exception&) {
    throw FormatError(std::string("integer out of range for ") + what, offset);
  }
}

}  // namespace detail

inline Codebook parse_codebook(const std::string& text) {
  std::uint64_t offset = 0;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= text.size()) return false;
    offset = pos;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    return true;
  };

  std::string line;
  if (!next_line(line)) throw FormatError("empty codebook file", 0);
  unsigned long r = 0, m = 0, n = 0;
  {
    std::istringstream hs(line);
    std::string tag, rt, mt, nt, extra;
    hs >> tag >> rt >> mt >> nt;
    if (tag != "#codebook" || rt.rfind("r=", 0) != 0 || mt.rfind("M=", 0) != 0 ||
        nt.rfind("N=", 0) != 0 || (hs >> extra))
      throw FormatError("bad header, expected '#codebook r=<r> M=<M> N=<N>'", 0);
    r = detail::parse_uint(rt.substr(2), 0, "r");
    m = detail::parse_uint(mt.substr(2), 0, "M");
    n = detail::parse_uint(nt.substr(2), 0, "N");
  }
  if (r == 0 || r > 16) throw FormatError("phase bits out of range", 0);
  if (m == 0 || n == 0) throw FormatError("codebook needs M >= 1 and N >= 1", 0);

  Codebook cb;
  cb.phase_set = PhaseSet(static_cast<unsigned>(r));
  while (next_line(line)) {
    if (line.empty()) continue;
    if (cb.beams.size() == n) throw FormatError("more beams than the header declares", offset);
    Beam b;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string tok = line.substr(start, comma == std::string::npos ? std::string::npos
                                                                            : comma - start);
      const auto v = detail::parse_uint(tok, offset + start, "phase index");
      if (v >= cb.phase_set.size()) throw FormatError("phase index out of range", offset + start);
      b.phase_indices.push_back(static_cast<std::uint32_t>(v));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (b.phase_indices.size() != m)
      throw FormatError("beam has " + std::to_string(b.phase_indices.size()) +
                            " entries, header declares M=" + std::to_string(m),
                        offset);
    cb.beams.push_back(std::move(b));
  }
  if (cb.beams.size() != n)
    throw FormatError("header declares N=" + std::to_string(n) + " beams, found " +
                          std::to_string(cb.beams.size()),
                      text.size());
  return cb;
}

inline void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open file for writing: " + path);
  write_codebook(os, cb);
}

inline Codebook load_codebook(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_codebook(std::string(bytes.begin(), bytes.end()));
}

}  // namespace cbforge
