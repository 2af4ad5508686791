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
using cbforge::fixtures::random_channel;

namespace {

AgentHyper small(AgentKind kind) {
  AgentHyper h;
  h.kind = kind;
  h.batch = 16;
  h.buffer_capacity = 64;
  h.actor_hidden_per_antenna = 4;
  h.critic_hidden_per_antenna = 4;
  return h;
}

Batch random_batch(std::size_t m, Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> ph(-kPi, kPi);
  std::uniform_int_distribution<int> r(-1, 1);
  const auto d = static_cast<Eigen::Index>(m);
  Batch b{MatrixXd(d, n), MatrixXd(d, n), RowVectorXd(n), MatrixXd(d, n)};
  for (Eigen::Index i = 0; i < b.s.size(); ++i) {
    b.s.data()[i] = ph(rng);
    b.a.data()[i] = ph(rng);
    b.s_next.data()[i] = ph(rng);
  }
  for (Eigen::Index j = 0; j < n; ++j) b.r[j] = r(rng);
  return b;
}

double max_diff(const DenseNet& a, const DenseNet& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.layers(); ++l) {
    d = std::max(d, (a.weights()[l] - b.weights()[l]).cwiseAbs().maxCoeff());
    d = std::max(d, (a.biases()[l] - b.biases()[l]).cwiseAbs().maxCoeff());
  }
  return d;
}

std::vector<CVec> fixture_cluster(std::size_t users, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CVec> out;
  for (std::size_t u = 0; u < users; ++u) out.push_back(random_channel(m, rng));
  return out;
}

std::string log_text(const TrainLog& log) {
  std::ostringstream os;
  write_train_log(os, log);
  return os.str();
}

}  // namespace

TEST(Reward, ThreeCases) {
  EXPECT_EQ(reward(2.0, 1.0, 1.5).reward, 1);
  EXPECT_EQ(reward(2.0, 1.0, 1.5).beta, 2.0);
  EXPECT_EQ(reward(1.2, 1.0, 1.5).reward, 0);
  EXPECT_EQ(reward(1.2, 1.0, 1.5).beta, 1.5);
  EXPECT_EQ(reward(0.9, 1.0, 1.5).reward, -1);
  // Equality is not an improvement.
  EXPECT_EQ(reward(1.5, 1.5, 1.5).reward, -1);
  EXPECT_EQ(reward(1.0, 1.0, 1.5).reward, -1);
}

TEST(Reward, RandomTriples) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int t = 0; t < 100000; ++t) {
    const double g = u(rng), p = u(rng), b = u(rng);
    const auto out = reward(g, p, b);
    const int want = g > b ? 1 : (g > p ? 0 : -1);
    ASSERT_EQ(out.reward, want);
    ASSERT_EQ(out.beta, g > b ? g : b);
  }
}

TEST(Replay, WrapsAroundOverwritingOldest) {
  ReplayBuffer rb(4, 1);
  for (int k = 0; k < 6; ++k) {
    const std::vector<double> v{static_cast<double>(k)};
    rb.push(v, v, 0, v);
  }
  EXPECT_EQ(rb.size(), 4u);
  EXPECT_EQ(rb.inserted(), 6u);
  EXPECT_EQ(rb.at(0).s[0], 4.0);
  EXPECT_EQ(rb.at(1).s[0], 5.0);
  EXPECT_EQ(rb.at(2).s[0], 2.0);
  EXPECT_EQ(rb.at(3).s[0], 3.0);
}

TEST(Replay, SamplesWithoutReplacement) {
  ReplayBuffer rb(50, 1);
  for (int k = 0; k < 50; ++k) {
    const std::vector<double> v{static_cast<double>(k)};
    rb.push(v, v, k % 3 - 1, v);
  }
  Rng rng(2);
  const Batch b = rb.sample(50, rng);
  std::vector<double> seen(b.s.data(), b.s.data() + 50);
  std::sort(seen.begin(), seen.end());
  for (int k = 0; k < 50; ++k) EXPECT_EQ(seen[static_cast<std::size_t>(k)], k);
  EXPECT_THROW(rb.sample(51, rng), ConfigError);
}

TEST(OrnsteinUhlenbeck, CollapsesWithoutNoise) {
  OUState ou(3, OuParams{1.0, 0.0, 0.0, 1.0});
  ou.x = VectorXd::Constant(3, 5.0);
  Rng rng(3);
  EXPECT_EQ(ou_sample(ou, rng), VectorXd::Zero(3));
}

TEST(OrnsteinUhlenbeck, ScaleNeverBelowFloor) {
  OUState ou(2, OuParams{0.15, 1.0, 0.2, 0.5});
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    ou_sample(ou, rng);
    EXPECT_GE(ou.sigma, 0.2);
  }
  EXPECT_EQ(ou.sigma, 0.2);
}

TEST(OrnsteinUhlenbeck, StationaryVariance) {
  const double theta = 0.15, sigma = 0.7;
  OUState ou(1, OuParams{theta, sigma, sigma, 1.0});
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) ou_sample(ou, rng);
  double s2 = 0.0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) s2 += std::pow(ou_sample(ou, rng)[0], 2);
  const double want = sigma * sigma / (2 * theta - theta * theta);
  EXPECT_NEAR(s2 / n, want, 0.1 * want);
}

TEST(BeamEnv, NoiseFreeFeedbackIsExact) {
  const PhaseSet ps(4);
  BeamEnv env(fixture_cluster(5, 6, 1), ps, 0.0, 9, Beam{std::vector<std::uint32_t>(6, ps.zero_index())});
  Rng rng(6);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(6);
    for (auto& x : a) x = u(rng);
    const StepOutcome out = env.step(a);
    EXPECT_EQ(out.g_noisy, out.g_true);
  }
}

TEST(BeamEnv, NoisyFeedbackIsSeeded) {
  const PhaseSet ps(3);
  const Beam init{std::vector<std::uint32_t>(4, 0)};
  BeamEnv a(fixture_cluster(3, 4, 2), ps, 0.1, 5, init), b(fixture_cluster(3, 4, 2), ps, 0.1, 5, init);
  const std::vector<double> act{0.1, 0.2, 0.3, 0.4};
  bool differs = false;
  for (int t = 0; t < 20; ++t) {
    const auto x = a.step(act), y = b.step(act);
    EXPECT_EQ(x.g_noisy, y.g_noisy);
    differs |= x.g_noisy != x.g_true;
  }
  EXPECT_TRUE(differs);
}

TEST(BeamEnv, QuantizedActionIsItsOwnNextState) {
  const PhaseSet ps(4);
  BeamEnv env(fixture_cluster(2, 5, 3), ps, 0.0, 0, Beam{std::vector<std::uint32_t>(5, 0)});
  const std::vector<double> a{ps[1], ps[15], ps[7], ps[0], ps[9]};
  EXPECT_EQ(env.step(a).s_next, a);
}

TEST(BeamEnv, ThresholdStartsAtInitialBeamAndRises) {
  const PhaseSet ps(2);
  auto cluster = fixture_cluster(4, 3, 4);
  const Beam init{{1, 1, 1}};
  BeamEnv env(cluster, ps, 0.0, 0, init);
  const double g0 = cluster_gain(weights(init, ps), cluster);
  EXPECT_EQ(env.beta(), g0);
  EXPECT_EQ(env.prev_gain(), g0);
  Rng rng(7);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  double beta = env.beta();
  for (int t = 0; t < 200; ++t) {
    const auto out = env.step(std::vector<double>{u(rng), u(rng), u(rng)});
    EXPECT_GE(env.beta(), beta);
    EXPECT_EQ(out.reward == 1, env.beta() > beta);
    beta = env.beta();
  }
}

TEST(BeamEnv, RejectsBadInput) {
  const PhaseSet ps(2);
  EXPECT_THROW(BeamEnv({}, ps, 0.0, 0, Beam{{0}}), ConfigError);
  EXPECT_THROW(BeamEnv(fixture_cluster(2, 3, 0), ps, -0.1, 0, Beam{{0, 0, 0}}), ConfigError);
  BeamEnv env(fixture_cluster(2, 3, 0), ps, 0.0, 0, Beam{{0, 0, 0}});
  EXPECT_THROW(env.step(std::vector<double>{0.0, 0.0}), DimensionError);
  EXPECT_THROW(env.step(std::vector<double>{0.0, std::nan(""), 0.0}), ConfigError);
}

TEST(Ddpg, CriticLearnsBandit) {
  AgentHyper h = small(AgentKind::kDdpg);
  h.discount = 1e-3;
  Rng rng(8);
  DdpgNets n = make_ddpg_nets(3, h, rng);
  Batch b = random_batch(3, 64, rng);
  for (Eigen::Index j = 0; j < 64; ++j) b.r[j] = b.a(0, j) > 0 ? 1 : -1;
  double first = 0.0, last = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double loss = ddpg_update(n, b, h).critic_loss;
    if (t < 20) first += loss;
    if (t >= 180) last += loss;
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST(Ddpg, FrozenTargetsWithZeroTau) {
  AgentHyper h = small(AgentKind::kDdpg);
  h.tau = 0.0;
  Rng rng(9);
  DdpgNets n = make_ddpg_nets(3, h, rng);
  const DdpgNets before = n;
  const Batch b = random_batch(3, 16, rng);
  for (int t = 0; t < 5; ++t) ddpg_update(n, b, h);
  EXPECT_EQ(n.actor.target, before.actor.target);
  EXPECT_EQ(n.critic.target, before.critic.target);
  EXPECT_FALSE(n.actor.online == before.actor.online);
}

TEST(Ddpg, TargetsMoveOnlyBySoftUpdate) {
  AgentHyper h = small(AgentKind::kDdpg);
  h.tau = 0.25;
  Rng rng(10);
  DdpgNets n = make_ddpg_nets(3, h, rng);
  DenseNet expect = n.critic.target;
  ddpg_update(n, random_batch(3, 16, rng), h);
  soft_update(expect, n.critic.online, 0.25);
  EXPECT_EQ(n.critic.target, expect);
}

TEST(Td3, TargetUsesSmallerCritic) {
  AgentHyper h = small(AgentKind::kTd3);
  h.discount = 0.5;
  Rng rng(11);
  Td3Nets n = make_td3_nets(2, h, rng);
  n.critic1.target = DenseNet::zeros(n.critic1.target.sizes(), Head::kLinear);
  n.critic2.target = n.critic1.target;
  n.critic1.target.biases().back()(0) = 3.0;
  n.critic2.target.biases().back()(0) = 5.0;
  Batch b = random_batch(2, 8, rng);
  b.r.setZero();
  const RowVectorXd y = td3_target(n, b, h, rng);
  for (Eigen::Index j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(y[j], 1.5);
}

TEST(Td3, ActorWaitsForPolicyDelay) {
  AgentHyper h = small(AgentKind::kTd3);
  h.policy_delay = 3;
  Rng rng(12);
  Td3Nets n = make_td3_nets(3, h, rng);
  const Batch b = random_batch(3, 16, rng);
  for (std::size_t step = 0; step < 7; ++step) {
    const DenseNet actor = n.actor.online, target = n.actor.target;
    const UpdateStats st = td3_update(n, b, h, step, rng);
    EXPECT_EQ(st.actor_updated, step % 3 == 0);
    EXPECT_EQ(n.actor.online == actor, step % 3 != 0);
    EXPECT_EQ(n.actor.target == target, step % 3 != 0);
  }
}

TEST(Td3, ReducesToDdpgWithoutItsExtras) {
  AgentHyper h = small(AgentKind::kTd3);
  h.target_noise_scale = 0.0;
  h.policy_delay = 1;
  Rng rng(13);
  Td3Nets t = make_td3_nets(3, h, rng);
  t.critic2 = t.critic1;
  t.critic2_opt = t.critic1_opt;
  DdpgNets d{t.actor, t.critic1, t.actor_opt, t.critic1_opt};
  for (int k = 0; k < 3; ++k) {
    const Batch b = random_batch(3, 16, rng);
    td3_update(t, b, h, static_cast<std::size_t>(k), rng);
    ddpg_update(d, b, h);
  }
  EXPECT_LT(max_diff(t.actor.online, d.actor.online), 1e-12);
  EXPECT_LT(max_diff(t.critic1.online, d.critic.online), 1e-12);
  EXPECT_LT(max_diff(t.critic1.target, d.critic.target), 1e-12);
}

TEST(Sac, DegeneratesToTwinCriticDeterministicUpdate) {
  AgentHyper h = small(AgentKind::kSac);
  h.initial_alpha = 0.0;
  h.learn_alpha = false;
  h.target_noise_scale = 0.0;
  h.policy_delay = 1;
  const std::size_t m = 3;
  Rng rng(14);
  Td3Nets t = make_td3_nets(m, h, rng);
  t.critic2 = t.critic1;
  t.critic2_opt = t.critic1_opt;

  // Same hidden layers and mean rows; log-std rows pinned far below the clamp.
  SacNets s = make_sac_nets(m, h, rng);
  s.actor = DenseNet::zeros({m, 4 * m, 4 * m, 2 * m}, Head::kGaussian);
  for (std::size_t l = 0; l < t.actor.online.layers(); ++l) {
    const auto& w = t.actor.online.weights()[l];
    const auto& bias = t.actor.online.biases()[l];
    s.actor.weights()[l].topRows(w.rows()) = w;
    s.actor.biases()[l].head(bias.size()) = bias;
  }
  s.actor.biases().back().tail(static_cast<Eigen::Index>(m)).setConstant(-30.0);
  s.actor_opt = AdamState(s.actor, h.lr, h.actor_weight_decay);
  s.critic1 = t.critic1;
  s.critic2 = t.critic1;
  s.critic1_opt = s.critic2_opt = t.critic1_opt;

  const DenseNet actor0 = t.actor.online, critic0 = t.critic1.online;
  const DenseNet sac_actor0 = s.actor;
  const Batch b = random_batch(m, 16, rng);
  td3_update(t, b, h, 0, rng);
  sac_update(s, b, h, rng);

  for (std::size_t l = 0; l < actor0.layers(); ++l) {
    const auto rows = actor0.weights()[l].rows();
    const MatrixXd dt = t.actor.online.weights()[l] - actor0.weights()[l];
    const MatrixXd ds = (s.actor.weights()[l] - sac_actor0.weights()[l]).topRows(rows);
    EXPECT_LT((dt - ds).cwiseAbs().maxCoeff(), 1e-6) << "layer " << l;
    const VectorXd bt = t.actor.online.biases()[l] - actor0.biases()[l];
    const VectorXd bs = (s.actor.biases()[l] - sac_actor0.biases()[l]).head(rows);
    EXPECT_LT((bt - bs).cwiseAbs().maxCoeff(), 1e-6) << "layer " << l;
  }
  EXPECT_LT(max_diff(t.critic1.online, s.critic1.online), 1e-6);
  EXPECT_LT(max_diff(t.critic2.online, s.critic2.online), 1e-6);
  EXPECT_GT(max_diff(critic0, s.critic1.online), 0.0);
}

TEST(Sac, TemperatureFollowsEntropyGap) {
  const std::size_t m = 2;
  Rng rng(15);
  for (double target : {-50.0, 50.0}) {
    AgentHyper h = small(AgentKind::kSac);
    h.target_entropy = target;
    SacNets n = make_sac_nets(m, h, rng);
    const double before = n.log_alpha;
    const UpdateStats st = sac_update(n, random_batch(m, 16, rng), h, rng);
    // Entropy above a very low target lowers alpha; below a very high target raises it.
    if (target < 0) {
      EXPECT_GT(st.entropy, target);
      EXPECT_LT(n.log_alpha, before);
    } else {
      EXPECT_LT(st.entropy, target);
      EXPECT_GT(n.log_alpha, before);
    }
    EXPECT_GT(n.alpha(), 0.0);
  }
}

TEST(Sac, StaysFiniteOverManyUpdates) {
  AgentHyper h = small(AgentKind::kSac);
  h.batch = 8;
  Rng rng(16);
  SacNets n = make_sac_nets(2, h, rng);
  for (int t = 0; t < 10000; ++t) sac_update(n, random_batch(2, 8, rng), h, rng);
  EXPECT_TRUE(std::isfinite(n.log_alpha));
  EXPECT_TRUE(n.actor.finite() && n.critic1.online.finite() && n.critic2.online.finite());
}

TEST(Learner, InitialBeamStartsNearZeroPhase) {
  const PhaseSet ps(4);
  for (auto kind : {AgentKind::kDdpg, AgentKind::kTd3, AgentKind::kSac}) {
    const Learner l(8, AgentHyper{.kind = kind}, 3);
    EXPECT_EQ(initial_beam(l, ps), Beam{std::vector<std::uint32_t>(8, ps.zero_index())});
  }
}

TEST(Learner, SacExplorationIsInsideRange) {
  Learner l(4, small(AgentKind::kSac), 0);
  Rng rng(17);
  for (int t = 0; t < 1000; ++t)
    for (double a : l.explore(std::vector<double>(4, 0.5), rng)) EXPECT_LT(std::abs(a), kPi);
}

TEST(TrainAgent, ZeroIterationsReturnsInitialBeam) {
  const PhaseSet ps(4);
  for (auto kind : {AgentKind::kDdpg, AgentKind::kTd3, AgentKind::kSac}) {
    const TrainResult r = train_agent(fixture_cluster(3, 4, 5), ps, 0.0, small(kind), 0, 1);
    EXPECT_EQ(r.best_beam, r.initial_beam);
    EXPECT_TRUE(r.log.rows.empty());
  }
}

TEST(TrainAgent, SameSeedSameLog) {
  const PhaseSet ps(3);
  for (auto kind : {AgentKind::kDdpg, AgentKind::kTd3, AgentKind::kSac}) {
    const auto a = train_agent(fixture_cluster(3, 4, 6), ps, 0.2, small(kind), 60, 11);
    const auto b = train_agent(fixture_cluster(3, 4, 6), ps, 0.2, small(kind), 60, 11);
    const auto c = train_agent(fixture_cluster(3, 4, 6), ps, 0.2, small(kind), 60, 12);
    EXPECT_EQ(log_text(a.log), log_text(b.log));
    EXPECT_NE(log_text(a.log), log_text(c.log));
    EXPECT_EQ(a.best_beam, b.best_beam);
  }
}

TEST(TrainAgent, ThresholdNeverFallsAndBestBeamMatchesIt) {
  const PhaseSet ps(4);
  auto cluster = fixture_cluster(4, 6, 7);
  const auto r = train_agent(cluster, ps, 0.0, small(AgentKind::kTd3), 200, 2);
  double beta = -1.0;
  for (const auto& row : r.log.rows) {
    EXPECT_GE(row.beta, beta);
    beta = row.beta;
  }
  EXPECT_EQ(cluster_gain(weights(r.best_beam, ps), cluster), r.best_beta);
  EXPECT_EQ(r.best_beta, r.log.rows.back().beta);
  EXPECT_TRUE(r.finite);
}

TEST(TrainAgent, LogLayout) {
  TrainLog log;
  log.rows.push_back({0, 1.5, 1.25, -1, 2.0, 0.5});
  EXPECT_EQ(log_text(log), "iter,g_true,g_noisy,reward,beta,explore\n0,1.5,1.25,-1,2,0.5\n");
}

TEST(TrainMulti, SingleBeamIsPlainTraining) {
  ScenarioConfig sc;
  sc.antennas = 4;
  sc.users = 12;
  sc.seed = 3;
  const ChannelSet cs = normalize(synth_channels(sc));
  MultiConfig cfg;
  cfg.beams = 1;
  cfg.sensing = 6;
  cfg.iters = 40;
  cfg.seed = 21;
  cfg.hyper = small(AgentKind::kSac);
  const MultiResult res = train_multi(cs, cfg);
  std::vector<CVec> all;
  for (std::size_t u = 0; u < cs.users(); ++u) all.push_back(cs.user_vector(u));
  const auto direct = train_agent(all, PhaseSet(4), 0.0, cfg.hyper, 40, agent_seed(21, 0));
  EXPECT_EQ(log_text(res.agents[0].log), log_text(direct.log));
  EXPECT_EQ(res.codebook.beams[0], direct.best_beam);
}

TEST(TrainMulti, ThreadCountDoesNotChangeResults) {
  ScenarioConfig sc;
  sc.antennas = 4;
  sc.users = 24;
  sc.seed = 4;
  const ChannelSet cs = normalize(synth_channels(sc));
  MultiConfig cfg;
  cfg.beams = 3;
  cfg.sensing = 8;
  cfg.iters = 40;
  cfg.eta = 0.1;
  cfg.hyper = small(AgentKind::kTd3);
  cfg.threads = 1;
  const MultiResult a = train_multi(cs, cfg);
  cfg.threads = 3;
  const MultiResult b = train_multi(cs, cfg);
  EXPECT_EQ(a.codebook, b.codebook);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(log_text(a.agents[n].log), log_text(b.agents[n].log));

  // The optimal assignment is at least as good as the identity.
  double identity = 0.0;
  for (std::size_t n = 0; n < 3; ++n) identity += a.cost[n][n];
  EXPECT_GE(a.assignment.total(a.cost), identity);
  std::size_t assigned = 0;
  for (const auto& c : a.cluster_channels) assigned += c.size();
  EXPECT_EQ(assigned, cs.users());
}

TEST(TrainMulti, TooFewUsers) {
  ScenarioConfig sc;
  sc.antennas = 4;
  sc.users = 2;
  sc.num_clusters = 2;
  MultiConfig cfg;
  cfg.beams = 3;
  cfg.hyper = small(AgentKind::kSac);
  EXPECT_THROW(train_multi(normalize(synth_channels(sc)), cfg), ConfigError);
}
