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

// Impairment and feedback-noise sweeps over learners and codebook sizes,
// with the %EGC and retention metrics.

#include <algorithm>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "cbforge/agents.hpp"
#include "cbforge/beamform.hpp"
#include "cbforge/channel.hpp"
#include "cbforge/core.hpp"

namespace cbforge {

// Mean over users of the serving (best) beam gain.
inline double mean_best_gain(const Codebook& cb, const ChannelSet& cs) {
  cb.validate();
  if (cb.antennas() != cs.antennas())
    throw DimensionError("codebook has M=" + std::to_string(cb.antennas()) + ", channels have M=" +
                         std::to_string(cs.antennas()));
  const auto w = codebook_weights(cb);
  double sum = 0.0;
  for (std::size_t u = 0; u < cs.users(); ++u) {
    double best = 0.0;
    for (const auto& wn : w) best = std::max(best, gain(wn, cs.user(u)));
    sum += best;
  }
  return sum / static_cast<double>(cs.users());
}

inline double mean_egc_bound(const ChannelSet& cs) {
  double sum = 0.0;
  for (std::size_t u = 0; u < cs.users(); ++u) sum += egc_bound(cs.user(u));
  return sum / static_cast<double>(cs.users());
}

// 100 * mean best-beam gain / mean EGC bound.
inline double percent_egc(const Codebook& cb, const ChannelSet& cs) {
  const double bound = mean_egc_bound(cs);
  if (!(bound > 0.0)) throw DegenerateError("EGC bound is zero for this channel set");
  return 100.0 * mean_best_gain(cb, cs) / bound;
}

// Number of users served by each beam.
inline std::vector<std::size_t> beam_user_counts(const Codebook& cb, const ChannelSet& cs) {
  std::vector<std::size_t> counts(cb.size(), 0);
  for (std::size_t u = 0; u < cs.users(); ++u) ++counts[best_beam_gain(cb, cs.user(u)).first];
  return counts;
}

struct SweepSpec {
  std::vector<AgentKind> kinds{AgentKind::kDdpg, AgentKind::kTd3, AgentKind::kSac};
  std::vector<std::size_t> sizes{4, 8, 16};
  std::vector<double> sigma_grid{0.0};
  std::vector<double> eta_grid{0.0};
  std::vector<std::uint64_t> seeds{0};
  std::size_t iters = 2000;
  std::size_t sensing = 32;
  unsigned phase_bits = 4;
  ScenarioConfig scenario;     // used when channel_file is empty
  std::string channel_file;
  AgentHyper hyper;            // `kind` is overridden per cell
  bool holdout = false;        // train on even-indexed users, score on odd-indexed ones
  unsigned threads = 1;

  void validate() const {
    if (kinds.empty() || sizes.empty() || sigma_grid.empty() || eta_grid.empty() || seeds.empty())
      throw ConfigError("sweep grids must be non-empty");
    for (double s : sigma_grid)
      if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("sigma_p values must be >= 0");
    for (double e : eta_grid)
      if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("eta values must be >= 0");
    for (auto n : sizes)
      if (n == 0) throw ConfigError("codebook sizes must be >= 1");
  }
};

struct SweepRow {
  AgentKind kind = AgentKind::kSac;
  std::size_t n = 0;
  double sigma_p = 0.0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  double mean_gain = 0.0;
  double pct_egc = 0.0;
  std::optional<double> retention;  // vs the (sigma_p = 0, eta = 0) row of the same kind/N/seed
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
  auto key() const { return std::tuple(kind, n, sigma_p, eta, seed); }
};

struct SweepResult {
  std::vector<SweepRow> rows;  // canonical (kind, N, sigma_p, eta, seed) order
};

inline constexpr const char* kSweepHeader = "kind,N,sigma_p,eta,seed,mean_gain,pct_egc,retention,status";

inline void write_sweep_row(std::ostream& os, const SweepRow& r) {
  os << to_string(r.kind) << ',' << r.n << ',' << format_double(r.sigma_p) << ','
     << format_double(r.eta) << ',' << r.seed << ',' << format_double(r.mean_gain) << ','
     << format_double(r.pct_egc) << ',' << (r.retention ? format_double(*r.retention) : "") << ','
     << r.status << '\n';
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& res) {
  os << kSweepHeader << '\n';
  for (const auto& r : res.rows) write_sweep_row(os, r);
}

inline SweepResult read_sweep_csv(std::istream& is) {
  SweepResult res;
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(is, line) || line != kSweepHeader)
    throw FormatError("missing sweep CSV header", 0);
  offset += line.size() + 1;
  while (std::getline(is, line)) {
    const std::uint64_t at = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 9) throw FormatError("sweep row needs 9 fields", at);
    try {
      SweepRow r;
      r.kind = parse_agent_kind(f[0]);
      r.n = std::stoul(f[1]);
      r.sigma_p = std::stod(f[2]);
      r.eta = std::stod(f[3]);
      r.seed = std::stoull(f[4]);
      r.mean_gain = std::stod(f[5]);
      r.pct_egc = std::stod(f[6]);
      if (!f[7].empty()) r.retention = std::stod(f[7]);
      r.status = f[8];
      res.rows.push_back(std::move(r));
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(std::string("bad sweep row: ") + e.what(), at);
    }
  }
  return res;
}

struct RetentionCell {
  double sigma_p = 0.0;
  double eta = 0.0;
  double value = 0.0;
};

// Seed-averaged mean gain of each (sigma_p, eta) cell over the seed-averaged
// noise-free, impairment-free cell, for one kind and codebook size.
inline std::vector<RetentionCell> retention(const SweepResult& res, AgentKind kind, std::size_t n) {
  std::map<std::pair<double, double>, std::pair<double, std::size_t>> cells;
  for (const auto& r : res.rows) {
    if (r.kind != kind || r.n != n || !r.ok()) continue;
    auto& c = cells[{r.sigma_p, r.eta}];
    c.first += r.mean_gain;
    ++c.second;
  }
  const auto base = cells.find({0.0, 0.0});
  if (base == cells.end())
    throw ConfigError("retention needs a sigma_p = 0, eta = 0 baseline for " + to_string(kind) +
                      " N=" + std::to_string(n));
  const double base_mean = base->second.first / static_cast<double>(base->second.second);
  if (!(base_mean > 0.0)) throw DegenerateError("baseline mean gain is zero");
  std::vector<RetentionCell> out;
  for (const auto& [key, acc] : cells)
    out.push_back({key.first, key.second,
                   acc.first / static_cast<double>(acc.second) / base_mean});
  return out;
}

// Users u with u % stride == offset, metadata kept.
inline ChannelSet user_subset(const ChannelSet& cs, std::size_t stride, std::size_t offset) {
  if (stride == 0 || offset >= stride || offset >= cs.users())
    throw ConfigError("user subset is empty");
  ChannelSet out((cs.users() - offset + stride - 1) / stride, cs.antennas());
  out.delta = cs.delta;
  out.frequency_ghz = cs.frequency_ghz;
  out.label = cs.label;
  for (std::size_t u = offset, k = 0; u < cs.users(); u += stride, ++k)
    std::copy(cs.user(u).begin(), cs.user(u).end(), out.user(k).begin());
  return out;
}

// The environment all sweep cells share, before impairment.
inline ChannelSet sweep_channels(const SweepSpec& spec) {
  if (!spec.channel_file.empty()) return load_channels(spec.channel_file);
  return synth_channels(spec.scenario);
}

// Trains and evaluates one cell on the impaired, normalized channels.
inline SweepRow run_cell(const SweepSpec& spec, const ChannelSet& base, AgentKind kind,
                         std::size_t n, double sigma_p, double eta, std::uint64_t seed) {
  SweepRow row;
  row.kind = kind;
  row.n = n;
  row.sigma_p = sigma_p;
  row.eta = eta;
  row.seed = seed;
  try {
    // One profile per (sigma_p, seed), shared by every learner and size.
    const auto imp = ImpairmentProfile::draw(sigma_p, base.antennas(), seed);
    const ChannelSet cs = normalize(impair_channels(base, imp));
    MultiConfig cfg;
    cfg.beams = n;
    cfg.sensing = spec.sensing;
    cfg.phase_bits = spec.phase_bits;
    cfg.eta = eta;
    cfg.iters = spec.iters;
    cfg.seed = seed;
    cfg.hyper = spec.hyper;
    cfg.hyper.kind = kind;
    if (spec.holdout) {
      const ChannelSet train = user_subset(cs, 2, 0);
      const ChannelSet test = user_subset(cs, 2, 1);
      const MultiResult mr = train_multi(train, cfg);
      row.mean_gain = mean_best_gain(mr.codebook, test);
      row.pct_egc = percent_egc(mr.codebook, test);
    } else {
      const MultiResult mr = train_multi(cs, cfg);
      row.mean_gain = mean_best_gain(mr.codebook, cs);
      row.pct_egc = percent_egc(mr.codebook, cs);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    row.status = "error: " + msg;
  }
  return row;
}

// Runs every grid cell. Rows are emitted to `csv` (when given) in canonical
// order as soon as all earlier rows are done, so partial sweeps survive an
// interruption. Failed cells become rows with an error status.
inline SweepResult run_sweep(const SweepSpec& spec, std::ostream* csv = nullptr) {
  spec.validate();
  auto kinds = spec.kinds;
  auto sizes = spec.sizes;
  auto sigmas = spec.sigma_grid;
  auto etas = spec.eta_grid;
  auto seeds = spec.seeds;
  auto canon = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  canon(kinds);
  canon(sizes);
  canon(sigmas);
  canon(etas);
  canon(seeds);

  SweepResult res;
  for (auto k : kinds)
    for (auto n : sizes)
      for (double s : sigmas)
        for (double e : etas)
          for (auto seed : seeds) {
            SweepRow r;
            r.kind = k;
            r.n = n;
            r.sigma_p = s;
            r.eta = e;
            r.seed = seed;
            res.rows.push_back(r);
          }

  const ChannelSet base = sweep_channels(spec);
  if (csv) *csv << kSweepHeader << '\n' << std::flush;

  std::mutex mu;
  std::vector<char> done(res.rows.size(), false);
  std::size_t emitted = 0;
  std::map<std::tuple<AgentKind, std::size_t, std::uint64_t>, double> baselines;

  auto emit_ready = [&] {
    while (emitted < res.rows.size() && done[emitted]) {
      SweepRow& r = res.rows[emitted];
      if (r.ok()) {
        if (r.sigma_p == 0.0 && r.eta == 0.0) baselines[{r.kind, r.n, r.seed}] = r.mean_gain;
        const auto it = baselines.find({r.kind, r.n, r.seed});
        if (it != baselines.end() && it->second > 0.0) r.retention = r.mean_gain / it->second;
      }
      if (csv) {
        write_sweep_row(*csv, r);
        csv->flush();
      }
      ++emitted;
    }
  };

  parallel_for(res.rows.size(), spec.threads, [&](std::size_t i) {
    const SweepRow& key = res.rows[i];
    SweepRow row = run_cell(spec, base, key.kind, key.n, key.sigma_p, key.eta, key.seed);
    std::lock_guard lock(mu);
    res.rows[i] = std::move(row);
    done[i] = true;
    emit_ready();
  });
  return res;
}

}  // namespace cbforge
