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

// Beam-search MDP with ternary rewards, the three off-policy learners
// (DDPG, TD3, SAC) and the single- and multi-agent training loops.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <ranges>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cbforge/beamform.hpp"
#include "cbforge/channel.hpp"
#include "cbforge/cluster.hpp"
#include "cbforge/core.hpp"
#include "cbforge/neural.hpp"

namespace cbforge {

using Eigen::RowVectorXd;

enum class AgentKind { kDdpg, kTd3, kSac };

inline std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kDdpg:
      return "DDPG";
    case AgentKind::kTd3:
      return "TD3";
    case AgentKind::kSac:
      return "SAC";
  }
  return "?";
}

inline AgentKind parse_agent_kind(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s == "DDPG") return AgentKind::kDdpg;
  if (s == "TD3") return AgentKind::kTd3;
  if (s == "SAC") return AgentKind::kSac;
  throw ConfigError("unknown agent kind '" + s + "' (expected DDPG, TD3 or SAC)");
}

struct OuParams {
  double theta = 0.15;
  double sigma = 0.5 * kPi;
  double sigma_min = 0.01 * kPi;
  double decay = 0.9995;
};

struct AgentHyper {
  AgentKind kind = AgentKind::kSac;
  double discount = 0.99;
  double tau = 0.005;
  double lr = 3e-3;
  double alpha_lr = 3e-3;
  double actor_weight_decay = 1e-2;
  double critic_weight_decay = 1e-3;
  std::size_t batch = 1024;
  std::size_t buffer_capacity = 8192;
  std::size_t policy_delay = 2;
  double target_noise_scale = 0.2;
  double target_noise_clip = 0.5;
  std::optional<double> target_entropy;  // -M when unset
  double initial_alpha = 1.0;
  bool learn_alpha = true;
  std::size_t actor_hidden_per_antenna = 16;
  std::size_t critic_hidden_per_antenna = 32;
  double actor_output_scale = 0.01;
  double preact_penalty = 0.0;  // DDPG/TD3 actor: weight on mean squared pre-squash output
  OuParams ou;
  bool delta_actions = false;  // actions add to the current phases instead of replacing them

  void validate() const {
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("discount must be in (0, 1)");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0, 1]");
    if (!(lr > 0.0) || !(alpha_lr > 0.0)) throw ConfigError("learning rates must be > 0");
    if (actor_weight_decay < 0.0 || critic_weight_decay < 0.0)
      throw ConfigError("weight decay must be >= 0");
    if (batch == 0) throw ConfigError("batch must be >= 1");
    if (buffer_capacity < batch) throw ConfigError("replay capacity must be >= batch size");
    if (policy_delay == 0) throw ConfigError("policy_delay must be >= 1");
    if (target_noise_scale < 0.0 || target_noise_clip < 0.0)
      throw ConfigError("target noise parameters must be >= 0");
    if (initial_alpha < 0.0 || (learn_alpha && !(initial_alpha > 0.0)))
      throw ConfigError("a learned temperature needs initial_alpha > 0");
    if (!(preact_penalty >= 0.0)) throw ConfigError("preact_penalty must be >= 0");
    if (actor_hidden_per_antenna == 0 || critic_hidden_per_antenna == 0)
      throw ConfigError("hidden layer multipliers must be >= 1");
    if (!(ou.theta > 0.0 && ou.theta <= 2.0)) throw ConfigError("ou theta must be in (0, 2]");
    if (ou.sigma < 0.0 || ou.sigma_min < 0.0 || !(ou.decay > 0.0 && ou.decay <= 1.0))
      throw ConfigError("invalid OU schedule");
  }
};

// Ternary feedback reward: +1 beats the best-so-far threshold (which moves
// up), 0 improves on the previous step, -1 otherwise.
struct RewardOutcome {
  int reward;
  double beta;
};

inline RewardOutcome reward(double g, double g_prev, double beta) {
  if (g > beta) return {+1, g};
  if (g > g_prev) return {0, beta};
  return {-1, beta};
}

struct Transition {
  std::vector<double> s;
  std::vector<double> a;
  int r = 0;
  std::vector<double> s_next;
};

struct Batch {
  MatrixXd s;       // M x B
  MatrixXd a;       // M x B
  RowVectorXd r;    // 1 x B
  MatrixXd s_next;  // M x B
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t dim)
      : capacity_(capacity), dim_(dim), s_(dim, capacity), a_(dim, capacity),
        s_next_(dim, capacity), r_(capacity) {
    if (capacity == 0 || dim == 0) throw ConfigError("replay buffer needs capacity and dim >= 1");
  }

  std::size_t size() const { return std::min<std::size_t>(inserted_, capacity_); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }

  void push(std::span<const double> s, std::span<const double> a, int r,
            std::span<const double> s_next) {
    if (s.size() != dim_ || a.size() != dim_ || s_next.size() != dim_)
      throw DimensionError("transition dimension mismatch");
    const auto slot = static_cast<Eigen::Index>(inserted_ % capacity_);
    for (std::size_t i = 0; i < dim_; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      s_(k, slot) = s[i];
      a_(k, slot) = a[i];
      s_next_(k, slot) = s_next[i];
    }
    r_[slot] = r;
    ++inserted_;
  }

  // Raw storage slot; slot k holds insertion number k, k + capacity, ...
  Transition at(std::size_t slot) const {
    if (slot >= size()) throw ConfigError("replay slot out of range");
    const auto c = static_cast<Eigen::Index>(slot);
    Transition t;
    t.s.assign(s_.col(c).data(), s_.col(c).data() + dim_);
    t.a.assign(a_.col(c).data(), a_.col(c).data() + dim_);
    t.s_next.assign(s_next_.col(c).data(), s_next_.col(c).data() + dim_);
    t.r = r_[c];
    return t;
  }

  // Uniform minibatch, without replacement within the batch.
  Batch sample(std::size_t batch, Rng& rng) const {
    if (batch == 0 || batch > size()) throw ConfigError("cannot sample more transitions than stored");
    std::vector<std::uint32_t> idx(batch);
    std::ranges::sample(std::views::iota(std::uint32_t{0}, static_cast<std::uint32_t>(size())),
                        idx.begin(), static_cast<std::ptrdiff_t>(batch), rng);
    const auto n = static_cast<Eigen::Index>(batch);
    const auto d = static_cast<Eigen::Index>(dim_);
    Batch b{MatrixXd(d, n), MatrixXd(d, n), RowVectorXd(n), MatrixXd(d, n)};
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto c = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]);
      b.s.col(j) = s_.col(c);
      b.a.col(j) = a_.col(c);
      b.s_next.col(j) = s_next_.col(c);
      b.r[j] = r_[c];
    }
    return b;
  }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  MatrixXd s_, a_, s_next_;
  Eigen::VectorXi r_;
  std::uint64_t inserted_ = 0;
};

struct OUState {
  double theta;
  double sigma;
  double sigma_min;
  double decay;
  VectorXd x;

  OUState(std::size_t dim, const OuParams& p)
      : theta(p.theta), sigma(p.sigma), sigma_min(p.sigma_min), decay(p.decay),
        x(VectorXd::Zero(static_cast<Eigen::Index>(dim))) {}
};

// x <- x - theta x + sigma N(0, I), then sigma decays toward sigma_min.
inline VectorXd ou_sample(OUState& ou, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < ou.x.size(); ++i)
    ou.x[i] = ou.x[i] - ou.theta * ou.x[i] + ou.sigma * normal(rng);
  ou.sigma = std::max(ou.sigma_min, ou.sigma * ou.decay);
  return ou.x;
}

struct StepOutcome {
  std::vector<double> s_next;
  Beam beam;
  int reward = 0;
  double g_noisy = 0.0;
  double g_true = 0.0;
};

// One user cluster seen through scalar gain feedback. The state is the
// current quantized phase vector; feedback is the cluster-mean gain with
// per-user multiplicative Gaussian noise of relative intensity eta.
class BeamEnv {
 public:
  BeamEnv(std::vector<CVec> cluster, PhaseSet ps, double eta, std::uint64_t seed,
          const Beam& initial, bool delta_actions = false)
      : cluster_(std::move(cluster)), ps_(std::move(ps)), eta_(eta),
        rng_(make_rng(seed, Stream::kFeedback)), delta_actions_(delta_actions) {
    if (cluster_.empty()) throw ConfigError("environment needs a non-empty user cluster");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("noise intensity must be >= 0");
    const std::size_t m = cluster_.front().size();
    for (const auto& h : cluster_)
      if (h.size() != m) throw DimensionError("cluster users have differing antenna counts");
    if (initial.antennas() != m) throw DimensionError("initial beam does not match the array");
    beam_ = initial;
    state_ = beam_phases(beam_, ps_);
    const auto [g_true, g_noisy] = measure(beam_);
    (void)g_true;
    beta_ = g_noisy;
    prev_ = g_noisy;
  }

  std::size_t antennas() const { return state_.size(); }
  const std::vector<double>& state() const { return state_; }
  const Beam& beam() const { return beam_; }
  double beta() const { return beta_; }
  double prev_gain() const { return prev_; }
  double eta() const { return eta_; }
  const PhaseSet& phase_set() const { return ps_; }
  const std::vector<CVec>& cluster() const { return cluster_; }

  // (noise-free cluster gain, noisy feedback clamped at 0)
  std::pair<double, double> measure(const Beam& beam) {
    const CVec w = weights(beam, ps_);
    double sum_true = 0.0;
    double sum_noisy = 0.0;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& h : cluster_) {
      const double g = gain(w, h);
      sum_true += g;
      sum_noisy += eta_ == 0.0 ? g : g + eta_ * g * normal(rng_);
    }
    const double n = static_cast<double>(cluster_.size());
    return {sum_true / n, std::max(0.0, sum_noisy / n)};
  }

  StepOutcome step(std::span<const double> action) {
    if (action.size() != antennas()) throw DimensionError("action length does not match the array");
    std::vector<double> target(action.begin(), action.end());
    for (std::size_t m = 0; m < target.size(); ++m) {
      if (!std::isfinite(target[m])) throw ConfigError("action must be finite");
      if (delta_actions_) target[m] += state_[m];
    }
    StepOutcome out;
    out.beam = quantize_phases(target, ps_);
    const auto [g_true, g_noisy] = measure(out.beam);
    const auto [r, beta_next] = reward(g_noisy, prev_, beta_);
    out.reward = r;
    out.g_true = g_true;
    out.g_noisy = g_noisy;
    out.s_next = beam_phases(out.beam, ps_);
    beta_ = beta_next;
    prev_ = g_noisy;
    beam_ = out.beam;
    state_ = out.s_next;
    return out;
  }

 private:
  std::vector<CVec> cluster_;
  PhaseSet ps_;
  double eta_;
  Rng rng_;
  bool delta_actions_;
  Beam beam_;
  std::vector<double> state_;
  double beta_ = 0.0;
  double prev_ = 0.0;
};

// Network bundles per algorithm.
struct DdpgNets {
  TargetPair actor, critic;
  AdamState actor_opt, critic_opt;
};

struct Td3Nets {
  TargetPair actor, critic1, critic2;
  AdamState actor_opt, critic1_opt, critic2_opt;
};

struct SacNets {
  DenseNet actor;
  TargetPair critic1, critic2;
  AdamState actor_opt, critic1_opt, critic2_opt;
  double log_alpha = 0.0;
  ScalarAdam alpha_opt;

  double alpha() const { return std::exp(log_alpha); }
};

inline DenseNet make_actor(std::size_t m, const AgentHyper& h, Rng& rng, bool gaussian) {
  const std::size_t hidden = h.actor_hidden_per_antenna * m;
  return DenseNet({m, hidden, hidden, gaussian ? 2 * m : m},
                  gaussian ? Head::kGaussian : Head::kSquash, rng, h.actor_output_scale);
}

inline DenseNet make_critic(std::size_t m, const AgentHyper& h, Rng& rng) {
  const std::size_t hidden = h.critic_hidden_per_antenna * m;
  return DenseNet({2 * m, hidden, hidden, 1}, Head::kLinear, rng);
}

inline DdpgNets make_ddpg_nets(std::size_t m, const AgentHyper& h, Rng& rng) {
  DdpgNets n{TargetPair(make_actor(m, h, rng, false), h.tau),
             TargetPair(make_critic(m, h, rng), h.tau), {}, {}};
  n.actor_opt = AdamState(n.actor.online, h.lr, h.actor_weight_decay);
  n.critic_opt = AdamState(n.critic.online, h.lr, h.critic_weight_decay);
  return n;
}

inline Td3Nets make_td3_nets(std::size_t m, const AgentHyper& h, Rng& rng) {
  Td3Nets n;
  n.actor = TargetPair(make_actor(m, h, rng, false), h.tau);
  n.critic1 = TargetPair(make_critic(m, h, rng), h.tau);
  n.critic2 = TargetPair(make_critic(m, h, rng), h.tau);
  n.actor_opt = AdamState(n.actor.online, h.lr, h.actor_weight_decay);
  n.critic1_opt = AdamState(n.critic1.online, h.lr, h.critic_weight_decay);
  n.critic2_opt = AdamState(n.critic2.online, h.lr, h.critic_weight_decay);
  return n;
}

inline SacNets make_sac_nets(std::size_t m, const AgentHyper& h, Rng& rng) {
  SacNets n;
  n.actor = make_actor(m, h, rng, true);
  n.critic1 = TargetPair(make_critic(m, h, rng), h.tau);
  n.critic2 = TargetPair(make_critic(m, h, rng), h.tau);
  n.actor_opt = AdamState(n.actor, h.lr, h.actor_weight_decay);
  n.critic1_opt = AdamState(n.critic1.online, h.lr, h.critic_weight_decay);
  n.critic2_opt = AdamState(n.critic2.online, h.lr, h.critic_weight_decay);
  n.log_alpha = std::log(h.initial_alpha);
  n.alpha_opt.lr = h.alpha_lr;
  return n;
}

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  bool actor_updated = false;
  double entropy = 0.0;  // SAC only: -mean log-prob of fresh actions
  double alpha = 0.0;    // SAC only: temperature after the update
};

inline MatrixXd critic_input(const MatrixXd& s, const MatrixXd& a) {
  MatrixXd x(s.rows() + a.rows(), s.cols());
  x << s, a;
  return x;
}

namespace detail {

// One Adam step of the critic toward targets y; returns the MSE before the step.
inline double regress_critic(TargetPair& critic, AdamState& opt, const MatrixXd& x,
                             const RowVectorXd& y) {
  DenseNet::Cache cache;
  const MatrixXd q = critic.online.forward(x, &cache);
  const RowVectorXd err = q.row(0) - y;
  const double n = static_cast<double>(y.size());
  const MatrixXd up = (2.0 / n) * err;
  adam_step(critic.online, critic.online.backward(cache, up), opt);
  return err.squaredNorm() / n;
}

// Ascend Q(s, mu(s)) for a deterministic actor; returns -mean Q. `preact`
// weighs a mean-square penalty on the pre-squash output, which keeps the
// actor off the flat ends of tanh.
inline double deterministic_actor_step(TargetPair& actor, AdamState& opt, const DenseNet& critic,
                                       const MatrixXd& s, double preact = 0.0) {
  DenseNet::Cache ac, cc;
  const MatrixXd a = actor.online.forward(s, &ac);
  const MatrixXd q = critic.forward(critic_input(s, a), &cc);
  const double n = static_cast<double>(s.cols());
  const MatrixXd up = MatrixXd::Constant(1, s.cols(), -1.0 / n);
  const NetGrad cg = critic.backward(cc, up, false);
  if (preact > 0.0) {
    const MatrixXd extra = (2.0 * preact / n) * ac.pre_head;
    adam_step(actor.online, actor.online.backward(ac, cg.input.bottomRows(s.rows()), true, &extra),
              opt);
  } else {
    adam_step(actor.online, actor.online.backward(ac, cg.input.bottomRows(s.rows())), opt);
  }
  return -q.mean();
}

inline MatrixXd wrap(const MatrixXd& a) {
  return a.unaryExpr([](double x) { return wrap_phase(x); });
}

}  // namespace detail

// r + gamma Q'(s', mu'(s'))
inline RowVectorXd ddpg_target(const DdpgNets& n, const Batch& b, const AgentHyper& h) {
  const MatrixXd a2 = n.actor.target.forward(b.s_next);
  const MatrixXd q2 = n.critic.target.forward(critic_input(b.s_next, a2));
  return b.r + h.discount * q2.row(0);
}

inline UpdateStats ddpg_update(DdpgNets& n, const Batch& b, const AgentHyper& h) {
  UpdateStats st;
  const RowVectorXd y = ddpg_target(n, b, h);
  st.critic_loss = detail::regress_critic(n.critic, n.critic_opt, critic_input(b.s, b.a), y);
  st.actor_loss = detail::deterministic_actor_step(n.actor, n.actor_opt, n.critic.online, b.s,
                                                   h.preact_penalty);
  st.actor_updated = true;
  n.actor.soft_update();
  n.critic.soft_update();
  return st;
}

// Target policy smoothing plus clipped double-Q: r + gamma min_i Q_i'(s', a~)
// with a~ = wrap(mu'(s') + clip(N(0, scale^2), -clip, clip)).
inline RowVectorXd td3_target(const Td3Nets& n, const Batch& b, const AgentHyper& h, Rng& rng) {
  MatrixXd a2 = n.actor.target.forward(b.s_next);
  if (h.target_noise_scale > 0.0) {
    std::normal_distribution<double> normal(0.0, h.target_noise_scale);
    for (Eigen::Index i = 0; i < a2.size(); ++i)
      a2.data()[i] += std::clamp(normal(rng), -h.target_noise_clip, h.target_noise_clip);
    a2 = detail::wrap(a2);
  }
  const MatrixXd x = critic_input(b.s_next, a2);
  const MatrixXd q1 = n.critic1.target.forward(x);
  const MatrixXd q2 = n.critic2.target.forward(x);
  return b.r + h.discount * q1.row(0).cwiseMin(q2.row(0));
}

// `step` counts critic updates from 0; the actor and all targets move when
// step % policy_delay == 0.
inline UpdateStats td3_update(Td3Nets& n, const Batch& b, const AgentHyper& h, std::size_t step,
                              Rng& rng) {
  UpdateStats st;
  const RowVectorXd y = td3_target(n, b, h, rng);
  const MatrixXd x = critic_input(b.s, b.a);
  st.critic_loss = 0.5 * (detail::regress_critic(n.critic1, n.critic1_opt, x, y) +
                          detail::regress_critic(n.critic2, n.critic2_opt, x, y));
  if (step % h.policy_delay == 0) {
    st.actor_loss = detail::deterministic_actor_step(n.actor, n.actor_opt, n.critic1.online, b.s,
                                                     h.preact_penalty);
    st.actor_updated = true;
    n.actor.soft_update();
    n.critic1.soft_update();
    n.critic2.soft_update();
  }
  return st;
}

inline double sac_target_entropy(const AgentHyper& h, std::size_t m) {
  return h.target_entropy.value_or(-static_cast<double>(m));
}

// r + gamma (min_i Q_i'(s', a') - alpha log pi(a'|s')), a' ~ pi(.|s').
inline RowVectorXd sac_target(const SacNets& n, const Batch& b, const AgentHyper& h, Rng& rng) {
  const GaussianDraw d = gaussian_draw(n.actor.forward(b.s_next), rng);
  const MatrixXd x = critic_input(b.s_next, d.action);
  const MatrixXd q1 = n.critic1.target.forward(x);
  const MatrixXd q2 = n.critic2.target.forward(x);
  const double alpha = h.learn_alpha ? n.alpha() : h.initial_alpha;
  RowVectorXd soft = q1.row(0).cwiseMin(q2.row(0));
  if (alpha != 0.0) soft -= alpha * d.log_prob.transpose();
  return b.r + h.discount * soft;
}

inline UpdateStats sac_update(SacNets& n, const Batch& b, const AgentHyper& h, Rng& rng) {
  UpdateStats st;
  const double alpha = h.learn_alpha ? n.alpha() : h.initial_alpha;
  const RowVectorXd y = sac_target(n, b, h, rng);
  const MatrixXd xq = critic_input(b.s, b.a);
  st.critic_loss = 0.5 * (detail::regress_critic(n.critic1, n.critic1_opt, xq, y) +
                          detail::regress_critic(n.critic2, n.critic2_opt, xq, y));

  // Reparameterized actor step on alpha log pi(a|s) - min_i Q_i(s, a).
  const auto m = b.s.rows();
  const auto batch = b.s.cols();
  const double inv_n = 1.0 / static_cast<double>(batch);
  DenseNet::Cache ac, c1, c2;
  const MatrixXd head = n.actor.forward(b.s, &ac);
  const GaussianDraw d = gaussian_draw(head, rng);
  const MatrixXd x = critic_input(b.s, d.action);
  const MatrixXd q1 = n.critic1.online.forward(x, &c1);
  const MatrixXd q2 = n.critic2.online.forward(x, &c2);
  MatrixXd up1 = MatrixXd::Zero(1, batch), up2 = MatrixXd::Zero(1, batch);
  double qmin_sum = 0.0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    if (q1(0, j) <= q2(0, j)) {
      up1(0, j) = -inv_n;
      qmin_sum += q1(0, j);
    } else {
      up2(0, j) = -inv_n;
      qmin_sum += q2(0, j);
    }
  }
  const MatrixXd d_action = n.critic1.online.backward(c1, up1, false).input.bottomRows(m) +
                            n.critic2.online.backward(c2, up2, false).input.bottomRows(m);
  const Eigen::ArrayXXd t = d.pre.array().tanh();
  const Eigen::ArrayXXd sigma =
      head.bottomRows(m).array().max(kLogStdMin).min(kLogStdMax).exp();
  const Eigen::ArrayXXd g_pre = d_action.array() * kPi * (1.0 - t.square()) + (alpha * inv_n) * 2.0 * t;
  MatrixXd up(2 * m, batch);
  up.topRows(m) = g_pre.matrix();
  up.bottomRows(m) = (g_pre * sigma * d.noise.array() - alpha * inv_n).matrix();
  adam_step(n.actor, n.actor.backward(ac, up), n.actor_opt);
  const double mean_logp = d.log_prob.mean();
  st.actor_loss = alpha * mean_logp - qmin_sum * inv_n;
  st.actor_updated = true;
  st.entropy = -mean_logp;

  if (h.learn_alpha) {
    // d/d(log alpha) of -log_alpha * (log pi + target_entropy)
    const double grad = -(mean_logp + sac_target_entropy(h, static_cast<std::size_t>(m)));
    n.log_alpha = n.alpha_opt.update(n.log_alpha, grad);
  }
  st.alpha = h.learn_alpha ? n.alpha() : h.initial_alpha;
  n.critic1.soft_update();
  n.critic2.soft_update();
  return st;
}

// Owns one agent's networks and exploration state.
class Learner {
 public:
  Learner(std::size_t antennas, const AgentHyper& hyper, std::uint64_t seed)
      : hyper_(hyper), antennas_(antennas) {
    hyper_.validate();
    if (antennas == 0) throw ConfigError("learner needs at least one antenna");
    Rng init = make_rng(seed, Stream::kAgent, 0);
    switch (hyper_.kind) {
      case AgentKind::kDdpg:
        nets_ = make_ddpg_nets(antennas, hyper_, init);
        ou_.emplace(antennas, hyper_.ou);
        break;
      case AgentKind::kTd3:
        nets_ = make_td3_nets(antennas, hyper_, init);
        ou_.emplace(antennas, hyper_.ou);
        break;
      case AgentKind::kSac:
        nets_ = make_sac_nets(antennas, hyper_, init);
        break;
    }
  }

  AgentKind kind() const { return hyper_.kind; }
  const AgentHyper& hyper() const { return hyper_; }
  std::size_t antennas() const { return antennas_; }
  std::size_t updates() const { return updates_; }

  // Noise-free action: mu(s), or pi * tanh(mean) for SAC.
  std::vector<double> greedy(std::span<const double> state) const {
    const MatrixXd s = column(state);
    MatrixXd a;
    if (const auto* sac = std::get_if<SacNets>(&nets_)) {
      const MatrixXd head = sac->actor.forward(s);
      a = head.topRows(static_cast<Eigen::Index>(antennas_))
              .unaryExpr([](double z) { return detail::squash(z); });
    } else if (const auto* td3 = std::get_if<Td3Nets>(&nets_)) {
      a = td3->actor.online.forward(s);
    } else {
      a = std::get<DdpgNets>(nets_).actor.online.forward(s);
    }
    return {a.data(), a.data() + a.size()};
  }

  // Behaviour action stored in replay: wrapped mu(s) + OU noise, or a
  // fresh draw from the SAC policy.
  std::vector<double> explore(std::span<const double> state, Rng& rng) {
    if (const auto* sac = std::get_if<SacNets>(&nets_)) {
      const GaussianDraw d = gaussian_draw(sac->actor.forward(column(state)), rng);
      return {d.action.data(), d.action.data() + d.action.size()};
    }
    std::vector<double> a = greedy(state);
    const VectorXd noise = ou_sample(*ou_, rng);
    for (std::size_t i = 0; i < a.size(); ++i)
      a[i] = wrap_phase(a[i] + noise[static_cast<Eigen::Index>(i)]);
    return a;
  }

  UpdateStats update(const Batch& b, Rng& rng) {
    UpdateStats st;
    if (auto* ddpg = std::get_if<DdpgNets>(&nets_)) {
      st = ddpg_update(*ddpg, b, hyper_);
    } else if (auto* td3 = std::get_if<Td3Nets>(&nets_)) {
      st = td3_update(*td3, b, hyper_, updates_, rng);
    } else {
      st = sac_update(std::get<SacNets>(nets_), b, hyper_, rng);
    }
    ++updates_;
    return st;
  }

  // OU scale for the deterministic learners, temperature for SAC.
  double exploration_scalar() const {
    if (const auto* sac = std::get_if<SacNets>(&nets_))
      return hyper_.learn_alpha ? sac->alpha() : hyper_.initial_alpha;
    return ou_->sigma;
  }

  bool finite() const {
    return std::visit(
        [](const auto& n) {
          if constexpr (std::is_same_v<std::decay_t<decltype(n)>, SacNets>)
            return n.actor.finite() && n.critic1.online.finite() && n.critic2.online.finite() &&
                   std::isfinite(n.log_alpha);
          else if constexpr (std::is_same_v<std::decay_t<decltype(n)>, Td3Nets>)
            return n.actor.online.finite() && n.critic1.online.finite() &&
                   n.critic2.online.finite();
          else
            return n.actor.online.finite() && n.critic.online.finite();
        },
        nets_);
  }

  const std::variant<DdpgNets, Td3Nets, SacNets>& nets() const { return nets_; }

 private:
  MatrixXd column(std::span<const double> state) const {
    if (state.size() != antennas_) throw DimensionError("state length does not match the array");
    MatrixXd s(static_cast<Eigen::Index>(antennas_), 1);
    for (std::size_t i = 0; i < antennas_; ++i) s(static_cast<Eigen::Index>(i), 0) = state[i];
    return s;
  }

  AgentHyper hyper_;
  std::size_t antennas_;
  std::variant<DdpgNets, Td3Nets, SacNets> nets_;
  std::optional<OUState> ou_;
  std::size_t updates_ = 0;
};

// The all-zero-phase beam that every agent starts from.
inline std::vector<double> zero_state(std::size_t m) { return std::vector<double>(m, 0.0); }

// Quantized greedy action at the zero-phase state.
inline Beam initial_beam(const Learner& learner, const PhaseSet& ps) {
  return quantize_phases(learner.greedy(zero_state(learner.antennas())), ps);
}

struct LogRow {
  std::size_t iter = 0;
  double g_true = 0.0;
  double g_noisy = 0.0;
  int reward = 0;
  double beta = 0.0;
  double explore = 0.0;

  friend bool operator==(const LogRow&, const LogRow&) = default;
};

struct TrainLog {
  std::vector<LogRow> rows;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

inline void write_train_log(std::ostream& os, const TrainLog& log) {
  os << "iter,g_true,g_noisy,reward,beta,explore\n";
  for (const auto& r : log.rows)
    os << r.iter << ',' << format_double(r.g_true) << ',' << format_double(r.g_noisy) << ','
       << r.reward << ',' << format_double(r.beta) << ',' << format_double(r.explore) << '\n';
}

struct TrainResult {
  Beam best_beam;     // beam that last raised the threshold
  Beam initial_beam;
  double best_beta = 0.0;
  double initial_explore = 0.0;
  double final_explore = 0.0;
  TrainLog log;
  bool finite = true;
};

// Interacts for `iters` steps, one learner update per step once the replay
// holds a full batch. Returns the beam that set the final threshold.
inline TrainResult train_agent(Learner& learner, BeamEnv& env, std::size_t iters,
                               std::uint64_t seed) {
  if (env.antennas() != learner.antennas())
    throw DimensionError("learner and environment disagree on antenna count");
  const AgentHyper& h = learner.hyper();
  Rng act_rng = make_rng(seed, Stream::kAgent, 1);
  Rng update_rng = make_rng(seed, Stream::kAgent, 2);
  Rng replay_rng = make_rng(seed, Stream::kReplay);
  ReplayBuffer replay(h.buffer_capacity, env.antennas());

  TrainResult res;
  res.initial_beam = env.beam();
  res.best_beam = env.beam();
  res.best_beta = env.beta();
  res.initial_explore = learner.exploration_scalar();
  res.log.rows.reserve(iters);
  for (std::size_t t = 0; t < iters; ++t) {
    const std::vector<double> s = env.state();
    const std::vector<double> a = learner.explore(s, act_rng);
    const StepOutcome out = env.step(a);
    replay.push(s, a, out.reward, out.s_next);
    if (out.reward > 0) {
      res.best_beam = out.beam;
      res.best_beta = env.beta();
    }
    if (replay.size() >= h.batch) learner.update(replay.sample(h.batch, replay_rng), update_rng);
    res.log.rows.push_back(
        {t, out.g_true, out.g_noisy, out.reward, env.beta(), learner.exploration_scalar()});
  }
  res.final_explore = learner.exploration_scalar();
  res.finite = learner.finite();
  return res;
}

// Builds the learner and environment for one cluster and trains it. The
// environment starts at the learner's initial beam.
inline TrainResult train_agent(std::vector<CVec> cluster, const PhaseSet& ps, double eta,
                               const AgentHyper& hyper, std::size_t iters, std::uint64_t seed) {
  if (cluster.empty()) throw ConfigError("cannot train on an empty cluster");
  Learner learner(cluster.front().size(), hyper, seed);
  BeamEnv env(std::move(cluster), ps, eta, seed, initial_beam(learner, ps), hyper.delta_actions);
  return train_agent(learner, env, iters, seed);
}

struct MultiConfig {
  std::size_t beams = 4;     // N agents / codebook size
  std::size_t sensing = 32;  // S sensing beams
  unsigned phase_bits = 4;
  double eta = 0.0;
  std::size_t iters = 2000;
  std::uint64_t seed = 0;
  std::size_t kmeans_iters = 300;
  unsigned threads = 1;
  AgentHyper hyper;
};

struct MultiResult {
  Codebook codebook;  // beam n comes from agent n
  Codebook initial;   // agents' initial beams
  SensingSet sensing;
  FeatureTable features;
  ClusterModel clusters;
  std::vector<std::vector<CVec>> cluster_channels;
  Matrix cost;
  Assignment assignment;
  std::vector<TrainResult> agents;
};

// Agent n is seeded with derive_seed(seed, Stream::kAgent, n).
inline std::uint64_t agent_seed(std::uint64_t seed, std::size_t n) {
  return derive_seed(seed, Stream::kAgent, n);
}

// Everything before training: sensing -> features -> k-means -> initial
// beams -> cost matrix -> assignment. `agents` and `codebook` stay empty.
inline MultiResult plan_multi(const ChannelSet& cs, const MultiConfig& cfg) {
  cfg.hyper.validate();
  if (cfg.beams == 0) throw ConfigError("need at least one beam");
  const PhaseSet ps(cfg.phase_bits);
  const std::size_t m = cs.antennas();

  MultiResult res;
  res.sensing = make_sensing(cfg.sensing, m, ps, cfg.seed);
  res.features = extract_features(cs, res.sensing);
  if (res.features.rows.size() < cfg.beams)
    throw ConfigError("only " + std::to_string(res.features.rows.size()) +
                      " usable users for " + std::to_string(cfg.beams) + " beams");
  res.clusters = kmeans(res.features.rows, cfg.beams, cfg.seed, cfg.kmeans_iters);
  res.cluster_channels.assign(cfg.beams, {});
  for (std::size_t k = 0; k < res.features.user_ids.size(); ++k)
    res.cluster_channels[res.clusters.labels[k]].push_back(cs.user_vector(res.features.user_ids[k]));

  res.initial.phase_set = ps;
  for (std::size_t n = 0; n < cfg.beams; ++n)
    res.initial.beams.push_back(initial_beam(Learner(m, cfg.hyper, agent_seed(cfg.seed, n)), ps));
  res.cost = cost_matrix(res.initial, res.cluster_channels);
  res.assignment = assign(res.cost);
  res.codebook.phase_set = ps;
  return res;
}

// Plans, then trains every agent independently on its assigned cluster.
// Agents share no mutable state, so results do not depend on cfg.threads.
inline MultiResult train_multi(const ChannelSet& cs, const MultiConfig& cfg) {
  MultiResult res = plan_multi(cs, cfg);
  const PhaseSet& ps = res.initial.phase_set;
  res.agents.resize(cfg.beams);
  parallel_for(cfg.beams, cfg.threads, [&](std::size_t n) {
    const std::uint64_t s = agent_seed(cfg.seed, n);
    Learner learner(cs.antennas(), cfg.hyper, s);
    BeamEnv env(res.cluster_channels[res.assignment.perm[n]], ps, cfg.eta, s, res.initial.beams[n],
                cfg.hyper.delta_actions);
    res.agents[n] = train_agent(learner, env, cfg.iters, s);
  });
  for (const auto& a : res.agents) res.codebook.beams.push_back(a.best_beam);
  return res;
}

}  // namespace cbforge
