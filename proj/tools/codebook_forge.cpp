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

// codebook_forge: command-line front end.
//
//   gen       synthesize a channel file
//   cluster   sensing features, k-means clusters and the agent assignment
//   train     learn a codebook with one agent per cluster
//   eval      score a codebook against a channel file
//   sweep     impairment / feedback-noise sweep to CSV
//   defaults  list every default and where it comes from

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cbforge.hpp"

namespace fs = std::filesystem;
using namespace cbforge;

namespace {

// Flags common to every command plus the per-command overrides. Every
// override is optional so that precedence is flags > config file > defaults.
struct Flags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string config;

  std::optional<std::string> preset;
  std::optional<std::size_t> antennas, users, clusters, paths;
  std::optional<double> spread, rho, freq;
  std::optional<std::string> profile, label;

  std::optional<std::string> channels, codebook, spec;
  std::optional<std::size_t> beams, sensing, iters;
  std::optional<unsigned> bits;
  std::optional<double> eta, sigma_p;

  std::optional<std::string> agent;
  std::optional<std::size_t> batch, buffer;
  std::optional<double> lr, tau;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--seed", f.seed, "Global random seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--config", f.config, "JSON config file (flags override it)");
}

void add_agent_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--agent", f.agent, "Learner: DDPG, TD3 or SAC");
  cmd->add_option("--batch", f.batch, "Minibatch size");
  cmd->add_option("--buffer", f.buffer, "Replay capacity");
  cmd->add_option("--lr", f.lr, "Actor/critic learning rate");
  cmd->add_option("--tau", f.tau, "Target network Polyak factor");
}

template <class T, class U>
void override_with(const std::optional<T>& flag, U& field) {
  if (flag) field = *flag;
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) apply_json(load_json_file(f.config), c);
  if (f.preset) {
    if (*f.preset == "los") c.scenario = ScenarioConfig::los();
    else if (*f.preset == "nlos") c.scenario = ScenarioConfig::nlos();
    else throw ConfigError("--preset must be los or nlos");
  }
  override_with(f.seed, c.seed);
  override_with(f.out, c.out);
  override_with(f.antennas, c.scenario.antennas);
  override_with(f.users, c.scenario.users);
  override_with(f.clusters, c.scenario.num_clusters);
  override_with(f.paths, c.scenario.paths_per_user);
  override_with(f.spread, c.scenario.aod_spread);
  override_with(f.rho, c.scenario.rho);
  override_with(f.freq, c.scenario.frequency_ghz);
  override_with(f.label, c.scenario.label);
  if (f.profile) c.scenario.gain_profile = detail::parse_gain_profile(*f.profile);
  override_with(f.channels, c.train.channels);
  override_with(f.codebook, c.train.codebook);
  override_with(f.beams, c.train.beams);
  override_with(f.sensing, c.train.sensing);
  override_with(f.iters, c.train.iters);
  override_with(f.bits, c.train.phase_bits);
  override_with(f.eta, c.train.eta);
  override_with(f.sigma_p, c.train.sigma_p);
  if (f.agent) c.agent.kind = parse_agent_kind(*f.agent);
  override_with(f.batch, c.agent.batch);
  override_with(f.buffer, c.agent.buffer_capacity);
  override_with(f.lr, c.agent.lr);
  override_with(f.tau, c.agent.tau);
  return c;
}

std::string prepare_out(const RunConfig& c) {
  fs::create_directories(c.out);
  save_json_file(to_json(c), (fs::path(c.out) / "config.json").string());
  return c.out;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
  const auto path = (fs::path(dir) / name).string();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open file for writing: " + path);
  return os;
}

ChannelSet load_required_channels(const RunConfig& c) {
  if (c.train.channels.empty()) throw ConfigError("--channels is required");
  return load_channels(c.train.channels);
}

MultiConfig multi_config(const RunConfig& c) {
  MultiConfig m;
  m.beams = c.train.beams;
  m.sensing = c.train.sensing;
  m.phase_bits = c.train.phase_bits;
  m.eta = c.train.eta;
  m.iters = c.train.iters;
  m.seed = c.seed;
  m.kmeans_iters = c.train.kmeans_iters;
  m.threads = worker_count();
  m.hyper = c.agent;
  return m;
}

// Impairment drawn from the run seed, then global normalization.
ChannelSet deployment_channels(const RunConfig& c) {
  const ChannelSet raw = load_required_channels(c);
  const auto imp = ImpairmentProfile::draw(c.train.sigma_p, raw.antennas(), c.seed);
  return normalize(impair_channels(raw, imp));
}

int cmd_gen(const RunConfig& c) {
  ScenarioConfig sc = c.scenario;
  sc.seed = c.seed;
  const ChannelSet cs = synth_channels(sc);
  const auto dir = prepare_out(c);
  const auto path = (fs::path(dir) / "channels.bin").string();
  save_channels(cs, path);
  std::printf("U=%zu M=%zu delta=%s -> %s\n", cs.users(), cs.antennas(),
              format_double(cs.delta).c_str(), path.c_str());
  return 0;
}

int cmd_cluster(const RunConfig& c) {
  const ChannelSet cs = deployment_channels(c);
  const MultiResult plan = plan_multi(cs, multi_config(c));
  for (auto u : plan.features.degenerate)
    std::cerr << "warning: user " << u << " has zero sensing power; excluded from clustering\n";
  const auto dir = prepare_out(c);
  auto cl = open_out(dir, "clusters.csv");
  write_clusters_csv(cl, plan.features.user_ids, plan.clusters.labels);
  auto as = open_out(dir, "assignment.csv");
  write_assignment_csv(as, plan.assignment);
  std::printf("clustered %zu users into %zu clusters (%zu degenerate)\n",
              plan.features.user_ids.size(), plan.clusters.sizes.size(),
              plan.features.degenerate.size());
  for (std::size_t k = 0; k < plan.clusters.sizes.size(); ++k)
    std::printf("  cluster %zu: %zu users\n", k, plan.clusters.sizes[k]);
  return 0;
}

int cmd_train(const RunConfig& c) {
  const ChannelSet cs = deployment_channels(c);
  const MultiResult res = train_multi(cs, multi_config(c));
  for (auto u : res.features.degenerate)
    std::cerr << "warning: user " << u << " has zero sensing power; excluded from clustering\n";
  const auto dir = prepare_out(c);
  save_codebook(res.codebook, (fs::path(dir) / "codebook.txt").string());
  for (std::size_t n = 0; n < res.agents.size(); ++n) {
    auto os = open_out(dir, "agent_" + std::to_string(n) + ".csv");
    write_train_log(os, res.agents[n].log);
  }
  auto cl = open_out(dir, "clusters.csv");
  write_clusters_csv(cl, res.features.user_ids, res.clusters.labels);
  auto as = open_out(dir, "assignment.csv");
  write_assignment_csv(as, res.assignment);
  std::printf("%s codebook: N=%zu M=%zu mean_gain=%.6f pct_egc=%.2f\n",
              to_string(c.agent.kind).c_str(), res.codebook.size(), cs.antennas(),
              mean_best_gain(res.codebook, cs), percent_egc(res.codebook, cs));
  return 0;
}

int cmd_eval(const RunConfig& c) {
  if (c.train.codebook.empty()) throw ConfigError("--codebook is required");
  const Codebook cb = load_codebook(c.train.codebook);
  const ChannelSet cs = deployment_channels(c);
  if (cb.antennas() != cs.antennas())
    throw DimensionError("codebook has M=" + std::to_string(cb.antennas()) +
                         " but channels have M=" + std::to_string(cs.antennas()));
  const double mg = mean_best_gain(cb, cs);
  const double pct = percent_egc(cb, cs);
  const auto counts = beam_user_counts(cb, cs);
  std::printf("mean_gain=%.6f pct_egc=%.2f mean_egc=%.6f\n", mg, pct, mean_egc_bound(cs));
  for (std::size_t n = 0; n < counts.size(); ++n) std::printf("  beam %zu: %zu users\n", n, counts[n]);
  const auto dir = prepare_out(c);
  auto os = open_out(dir, "eval.csv");
  os << "mean_gain,pct_egc,mean_egc\n"
     << format_double(mg) << ',' << format_double(pct) << ',' << format_double(mean_egc_bound(cs))
     << '\n';
  auto bc = open_out(dir, "beam_users.csv");
  bc << "beam_id,users\n";
  for (std::size_t n = 0; n < counts.size(); ++n) bc << n << ',' << counts[n] << '\n';
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  SweepSpec spec = c.sweep;
  spec.scenario = c.scenario;
  spec.scenario.seed = c.seed;
  spec.hyper = c.agent;
  spec.threads = worker_count();
  const auto dir = prepare_out(c);
  auto os = open_out(dir, "sweep.csv");
  const SweepResult res = run_sweep(spec, &os);
  std::size_t failed = 0;
  for (const auto& r : res.rows) failed += r.ok() ? 0 : 1;
  std::printf("%zu rows written to %s (%zu failed)\n", res.rows.size(),
              (fs::path(dir) / "sweep.csv").string().c_str(), failed);
  return 0;
}

int cmd_defaults() {
  const AgentHyper h;
  const ScenarioConfig s;
  const TrainSettings t;
  struct Entry {
    const char* key;
    std::string value;
    const char* source;
  };
  const Entry entries[] = {
      {"agent.buffer_capacity", std::to_string(h.buffer_capacity), "reference"},
      {"agent.batch", std::to_string(h.batch), "reference"},
      {"agent.lr", format_double(h.lr), "reference"},
      {"agent.actor_weight_decay", format_double(h.actor_weight_decay), "reference"},
      {"agent.critic_weight_decay", format_double(h.critic_weight_decay), "reference"},
      {"agent.alpha_lr", format_double(h.alpha_lr), "reference"},
      {"agent.actor_hidden_per_antenna", std::to_string(h.actor_hidden_per_antenna), "reference"},
      {"agent.critic_hidden_per_antenna", std::to_string(h.critic_hidden_per_antenna), "reference"},
      {"agent.discount", format_double(h.discount), "chosen"},
      {"agent.tau", format_double(h.tau), "chosen"},
      {"agent.policy_delay", std::to_string(h.policy_delay), "chosen"},
      {"agent.target_noise_scale", format_double(h.target_noise_scale), "chosen"},
      {"agent.target_noise_clip", format_double(h.target_noise_clip), "chosen"},
      {"agent.target_entropy", "-M", "chosen"},
      {"agent.initial_alpha", format_double(h.initial_alpha), "chosen"},
      {"agent.actor_output_scale", format_double(h.actor_output_scale), "chosen"},
      {"agent.preact_penalty", format_double(h.preact_penalty), "chosen"},
      {"agent.ou.theta", format_double(h.ou.theta), "chosen"},
      {"agent.ou.sigma", format_double(h.ou.sigma), "chosen"},
      {"agent.ou.sigma_min", format_double(h.ou.sigma_min), "chosen"},
      {"agent.ou.decay", format_double(h.ou.decay), "chosen"},
      {"train.phase_bits", std::to_string(t.phase_bits), "reference"},
      {"train.sensing", std::to_string(t.sensing), "reference"},
      {"train.beams", std::to_string(t.beams), "chosen"},
      {"train.iters", std::to_string(t.iters), "chosen"},
      {"scenario.antennas", std::to_string(s.antennas), "reference"},
      {"scenario.paths_per_user", std::to_string(s.paths_per_user), "reference"},
      {"scenario.frequency_ghz", format_double(s.frequency_ghz), "reference"},
      {"scenario.users", std::to_string(s.users), "chosen"},
      {"scenario.num_clusters", std::to_string(s.num_clusters), "chosen"},
      {"scenario.aod_spread", format_double(s.aod_spread), "chosen"},
      {"scenario.rho", format_double(s.rho), "chosen"},
  };
  std::printf("%-34s %-22s %s\n", "key", "default", "source");
  for (const auto& e : entries) std::printf("%-34s %-22s %s\n", e.key, e.value.c_str(), e.source);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"codebook_forge: learn and stress-test analog beam codebooks"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen", "Synthesize a channel file");
  add_common(gen, f);
  gen->add_option("--preset", f.preset, "Scenario preset: los or nlos");
  gen->add_option("--antennas", f.antennas, "Array size M");
  gen->add_option("--users", f.users, "Number of users U");
  gen->add_option("--clusters", f.clusters, "Number of angular user clusters");
  gen->add_option("--paths", f.paths, "Paths per user L");
  gen->add_option("--spread", f.spread, "AoD spread around each cluster direction (rad)");
  gen->add_option("--profile", f.profile, "Path gains: dominant or equal");
  gen->add_option("--rho", f.rho, "Transmit power to noise ratio (linear)");
  gen->add_option("--freq", f.freq, "Carrier frequency in GHz");
  gen->add_option("--label", f.label, "Free-text scenario label");

  auto* cluster = app.add_subcommand("cluster", "Cluster users and assign agents");
  add_common(cluster, f);
  add_agent_flags(cluster, f);
  cluster->add_option("--channels", f.channels, "Channel file");
  cluster->add_option("--beams", f.beams, "Number of clusters / agents N");
  cluster->add_option("--sensing", f.sensing, "Number of sensing beams S");
  cluster->add_option("--bits", f.bits, "Phase-shifter resolution r");
  cluster->add_option("--sigma-p", f.sigma_p, "Phase mismatch std-dev (rad)");

  auto* train = app.add_subcommand("train", "Learn a codebook");
  add_common(train, f);
  add_agent_flags(train, f);
  train->add_option("--channels", f.channels, "Channel file");
  train->add_option("--beams", f.beams, "Codebook size N");
  train->add_option("--sensing", f.sensing, "Number of sensing beams S");
  train->add_option("--bits", f.bits, "Phase-shifter resolution r");
  train->add_option("--iters", f.iters, "Environment steps per agent");
  train->add_option("--eta", f.eta, "Feedback noise intensity");
  train->add_option("--sigma-p", f.sigma_p, "Phase mismatch std-dev (rad)");

  auto* eval = app.add_subcommand("eval", "Evaluate a codebook");
  add_common(eval, f);
  eval->add_option("--channels", f.channels, "Channel file");
  eval->add_option("--codebook", f.codebook, "Codebook file");
  eval->add_option("--sigma-p", f.sigma_p, "Phase mismatch std-dev (rad), drawn from --seed");

  auto* sweep = app.add_subcommand("sweep", "Run a robustness sweep");
  add_common(sweep, f);
  sweep->add_option("spec", f.spec, "Sweep spec file (same schema as --config)");

  auto* defaults = app.add_subcommand("defaults", "Show defaults and their provenance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (defaults->parsed()) return cmd_defaults();
    if (sweep->parsed() && f.spec) {
      if (!f.config.empty()) throw ConfigError("give the sweep spec either positionally or via --config");
      f.config = *f.spec;
    }
    const RunConfig c = resolve(f);
    if (gen->parsed()) return cmd_gen(c);
    if (cluster->parsed()) return cmd_cluster(c);
    if (train->parsed()) return cmd_train(c);
    if (eval->parsed()) return cmd_eval(c);
    if (sweep->parsed()) return cmd_sweep(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
