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

// User clustering from sensing-beam power patterns, and the optimal
// cluster-to-agent assignment.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cbforge/beamform.hpp"
#include "cbforge/channel.hpp"
#include "cbforge/core.hpp"

namespace cbforge {

struct SensingSet {
  std::vector<Beam> beams;
  std::vector<CVec> weights;  // cached weights(beams[i])
  PhaseSet phase_set;
  std::uint64_t seed = 0;

  std::size_t size() const { return beams.size(); }
};

// S random quantized beams, phase indices uniform over the phase set.
inline SensingSet make_sensing(std::size_t s, std::size_t m, const PhaseSet& ps,
                               std::uint64_t seed) {
  if (s < 2) throw ConfigError("need at least 2 sensing beams");
  if (m == 0) throw ConfigError("sensing beams need at least one antenna");
  SensingSet out;
  out.phase_set = ps;
  out.seed = seed;
  Rng rng = make_rng(seed, Stream::kSensing);
  std::uniform_int_distribution<std::uint32_t> level(0, static_cast<std::uint32_t>(ps.size() - 1));
  for (std::size_t i = 0; i < s; ++i) {
    Beam b;
    b.phase_indices.resize(m);
    for (auto& idx : b.phase_indices) idx = level(rng);
    out.weights.push_back(weights(b, ps));
    out.beams.push_back(std::move(b));
  }
  return out;
}

inline std::size_t feature_dimension(std::size_t s) { return s * (s - 1) / 2; }

// Pairwise sensing-power differences over total sensing power, pairs (i, j)
// with i < j in lexicographic order. Invariant to the channel's scale.
inline std::vector<double> features(std::span<const Complex> h, const SensingSet& sensing) {
  const std::size_t s = sensing.size();
  std::vector<double> power(s);
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    power[i] = gain(sensing.weights[i], h);
    total += power[i];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw DegenerateError("user has zero total sensing power");
  std::vector<double> out;
  out.reserve(feature_dimension(s));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) out.push_back((power[i] - power[j]) / total);
  return out;
}

struct FeatureTable {
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> user_ids;    // rows[k] belongs to user_ids[k]
  std::vector<std::size_t> degenerate;  // users excluded from clustering
};

inline FeatureTable extract_features(const ChannelSet& cs, const SensingSet& sensing) {
  if (!sensing.weights.empty() && sensing.weights.front().size() != cs.antennas())
    throw DimensionError("sensing beams and channels disagree on antenna count");
  FeatureTable t;
  for (std::size_t u = 0; u < cs.users(); ++u) {
    try {
      t.rows.push_back(features(cs.user(u), sensing));
      t.user_ids.push_back(u);
    } catch (const DegenerateError&) {
      t.degenerate.push_back(u);
    }
  }
  return t;
}

struct ClusterModel {
  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> sizes;
  std::vector<double> objective_trace;  // sum of squared distances after each iteration
  std::size_t iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline std::size_t nearest_centroid(std::span<const double> x,
                                    const std::vector<std::vector<double>>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline double objective(const std::vector<std::vector<double>>& pts,
                        const std::vector<std::size_t>& labels,
                        const std::vector<std::vector<double>>& centroids) {
  double j = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) j += sq_dist(pts[i], centroids[labels[i]]);
  return j;
}

}  // namespace detail

// Lloyd iterations from k-means++ seeding. An emptied cluster takes over the
// point of the largest cluster that lies farthest from its centroid.
inline ClusterModel kmeans(const std::vector<std::vector<double>>& pts, std::size_t n,
                           std::uint64_t seed, std::size_t max_iters = 300, double tol = 1e-9) {
  if (n == 0) throw ConfigError("k-means needs at least one cluster");
  if (pts.size() < n)
    throw ConfigError("cannot form " + std::to_string(n) + " clusters from " +
                      std::to_string(pts.size()) + " users");
  const std::size_t dim = pts.front().size();
  for (const auto& p : pts)
    if (p.size() != dim) throw DimensionError("feature vectors have differing dimensions");

  Rng rng = make_rng(seed, Stream::kClustering);
  ClusterModel model;
  auto& centroids = model.centroids;

  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  centroids.push_back(pts[pick(rng)]);
  std::vector<double> d2(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d2[i] = detail::sq_dist(pts[i], centroids[0]);
  while (centroids.size() < n) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> weighted(d2.begin(), d2.end());
      chosen = weighted(rng);
    } else {
      chosen = pick(rng);
    }
    centroids.push_back(pts[chosen]);
    for (std::size_t i = 0; i < pts.size(); ++i)
      d2[i] = std::min(d2[i], detail::sq_dist(pts[i], centroids.back()));
  }

  auto& labels = model.labels;
  labels.assign(pts.size(), 0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < pts.size(); ++i) labels[i] = detail::nearest_centroid(pts[i], centroids);

    std::vector<std::size_t> sizes(n, 0);
    for (auto l : labels) ++sizes[l];
    for (std::size_t c = 0; c < n; ++c) {
      if (sizes[c] != 0) continue;
      const auto largest = static_cast<std::size_t>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (labels[i] != largest) continue;
        const double d = detail::sq_dist(pts[i], centroids[largest]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      labels[far] = c;
      centroids[c] = pts[far];
      --sizes[largest];
      sizes[c] = 1;
    }

    std::vector<std::vector<double>> next(n, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t k = 0; k < dim; ++k) next[labels[i]][k] += pts[i][k];
    double movement = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      for (auto& v : next[c]) v /= static_cast<double>(sizes[c]);
      movement = std::max(movement, std::sqrt(detail::sq_dist(next[c], centroids[c])));
    }
    centroids = std::move(next);
    model.sizes = sizes;
    model.objective_trace.push_back(detail::objective(pts, labels, centroids));
    model.iterations = it + 1;
    if (movement < tol) break;
  }
  if (model.sizes.empty()) {
    model.sizes.assign(n, 0);
    for (auto l : labels) ++model.sizes[l];
  }
  return model;
}

using Matrix = std::vector<std::vector<double>>;

// Agent n serves cluster perm[n].
struct Assignment {
  std::vector<std::size_t> perm;

  double total(const Matrix& z) const {
    double s = 0.0;
    for (std::size_t n = 0; n < perm.size(); ++n) s += z[n][perm[n]];
    return s;
  }
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

// Z(n, n') = mean gain of beam n over cluster n'.
inline Matrix cost_matrix(const Codebook& cb, const std::vector<std::vector<CVec>>& clusters) {
  cb.validate();
  if (clusters.size() != cb.size())
    throw DimensionError("cost matrix needs as many clusters as beams");
  Matrix z(cb.size(), std::vector<double>(clusters.size()));
  for (std::size_t n = 0; n < cb.size(); ++n) {
    const CVec w = weights(cb.beams[n], cb.phase_set);
    for (std::size_t c = 0; c < clusters.size(); ++c) z[n][c] = cluster_gain(w, clusters[c]);
  }
  return z;
}

namespace detail {

inline double validate_square(const Matrix& z) {
  if (z.empty()) throw ConfigError("assignment matrix is empty");
  double scale = 1.0;
  for (const auto& row : z) {
    if (row.size() != z.size()) throw DimensionError("assignment matrix must be square");
    for (double v : row) {
      if (!std::isfinite(v)) throw ConfigError("assignment matrix has non-finite entries");
      scale = std::max(scale, std::abs(v));
    }
  }
  return scale;
}

inline constexpr double kTieTolerance = 1e-9;

}  // namespace detail

// Maximum-total assignment via the O(N^3) Hungarian method. Among optimal
// permutations the lexicographically smallest one is returned: optimal
// permutations are exactly the perfect matchings on the tight edges of an
// optimal dual, and the smallest one is built row by row with alternating
// path searches over that edge set.
inline Assignment assign(const Matrix& z) {
  const double scale = detail::validate_square(z);
  const std::size_t n = z.size();
  const double inf = std::numeric_limits<double>::infinity();

  // Shortest-augmenting-path Hungarian on cost = -Z, 1-based.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -z[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> row_to(n), col_to(n);
  for (std::size_t j = 1; j <= n; ++j) {
    row_to[p[j] - 1] = j - 1;
    col_to[j - 1] = p[j] - 1;
  }
  const double tol = detail::kTieTolerance * scale;
  std::vector<std::vector<char>> tight(n, std::vector<char>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      tight[i][j] = (-z[i][j] - u[i + 1] - v[j + 1]) <= tol;

  std::vector<char> row_fixed(n, false), col_fixed(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t target = row_to[i];

    // Rows (other than i) with an alternating path ending at column `target`.
    std::vector<char> reaches(n, false), col_seen(n, false);
    std::vector<std::size_t> queue{target};
    col_seen[target] = true;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const std::size_t c = queue[q];
      for (std::size_t x = 0; x < n; ++x) {
        if (x == i || row_fixed[x] || reaches[x] || !tight[x][c] || row_to[x] == c) continue;
        reaches[x] = true;
        if (!col_seen[row_to[x]]) {
          col_seen[row_to[x]] = true;
          queue.push_back(row_to[x]);
        }
      }
    }

    std::size_t choice = target;
    for (std::size_t j = 0; j < target; ++j) {
      if (!col_fixed[j] && tight[i][j] && reaches[col_to[j]]) {
        choice = j;
        break;
      }
    }

    if (choice != target) {
      // Rewire: i takes `choice`; its old owner walks an alternating path to `target`.
      const std::size_t start = col_to[choice];
      std::vector<std::size_t> parent(n, kNone);
      std::vector<char> row_seen(n, false);
      std::vector<std::size_t> rows{start};
      row_seen[start] = true;
      bool found = false;
      for (std::size_t q = 0; q < rows.size() && !found; ++q) {
        const std::size_t x = rows[q];
        for (std::size_t c = 0; c < n && !found; ++c) {
          if (col_fixed[c] || c == choice || !tight[x][c] || row_to[x] == c || parent[c] != kNone)
            continue;
          parent[c] = x;
          if (c == target) {
            found = true;
          } else {
            const std::size_t y = col_to[c];
            if (y != i && !row_seen[y]) {
              row_seen[y] = true;
              rows.push_back(y);
            }
          }
        }
      }
      if (!found) throw Error("internal error: alternating path vanished");
      for (std::size_t c = target;;) {
        const std::size_t x = parent[c];
        const std::size_t old = row_to[x];
        row_to[x] = c;
        col_to[c] = x;
        if (x == start) break;
        c = old;
      }
      row_to[i] = choice;
      col_to[choice] = i;
    }
    row_fixed[i] = true;
    col_fixed[row_to[i]] = true;
  }
  return Assignment{row_to};
}

// Exhaustive search over all N! permutations in lexicographic order.
// Test oracle; N <= 8.
inline Assignment brute_force_assign(const Matrix& z) {
  const double scale = detail::validate_square(z);
  if (z.size() > 8) throw ConfigError("brute-force assignment limited to N <= 8");
  std::vector<std::size_t> perm(z.size());
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best{perm};
  double best_total = best.total(z);
  const double eps = detail::kTieTolerance * scale;
  while (std::next_permutation(perm.begin(), perm.end())) {
    const Assignment cand{perm};
    const double t = cand.total(z);
    if (t > best_total + eps) {
      best_total = t;
      best = cand;
    }
  }
  return best;
}

inline void write_clusters_csv(std::ostream& os, const std::vector<std::size_t>& user_ids,
                               const std::vector<std::size_t>& labels) {
  os << "user_id,cluster_id\n";
  for (std::size_t k = 0; k < user_ids.size(); ++k) os << user_ids[k] << ',' << labels[k] << '\n';
}

inline void write_assignment_csv(std::ostream& os, const Assignment& a) {
  os << "agent_id,cluster_id\n";
  for (std::size_t n = 0; n < a.perm.size(); ++n) os << n << ',' << a.perm[n] << '\n';
}

}  // namespace cbforge
