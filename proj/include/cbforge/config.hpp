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

// Run configuration: JSON schema shared by every CLI command. Keys mirror
// the fields of ScenarioConfig, AgentHyper, the training settings and
// SweepSpec. Loading a file only overrides the keys it contains; unknown
// keys are rejected.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cbforge/agents.hpp"
#include "cbforge/channel.hpp"
#include "cbforge/core.hpp"
#include "cbforge/robustness.hpp"

namespace cbforge {

using nlohmann::json;

struct TrainSettings {
  std::string channels;  // input channel file
  std::string codebook;  // input codebook file (eval)
  std::size_t beams = 4;
  std::size_t sensing = 32;
  unsigned phase_bits = 4;
  double eta = 0.0;
  double sigma_p = 0.0;
  std::size_t iters = 2000;
  std::size_t kmeans_iters = 300;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = ".";
  ScenarioConfig scenario;
  AgentHyper agent;
  TrainSettings train;
  SweepSpec sweep;
};

namespace detail {

inline void check_keys(const json& j, const char* section, std::set<std::string> allowed) {
  if (!j.is_object()) throw ConfigError(std::string("config section '") + section + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k))
      throw ConfigError(std::string("unknown config key '") + section + "." + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for config key '") + key + "': " + e.what());
  }
}

inline std::string gain_profile_name(GainProfile g) {
  return g == GainProfile::kDominantPath ? "dominant" : "equal";
}

inline GainProfile parse_gain_profile(const std::string& s) {
  if (s == "dominant") return GainProfile::kDominantPath;
  if (s == "equal") return GainProfile::kEqualPower;
  throw ConfigError("gain_profile must be 'dominant' or 'equal', got '" + s + "'");
}

}  // namespace detail

inline json to_json(const ScenarioConfig& c) {
  return {{"antennas", c.antennas},          {"users", c.users},
          {"num_clusters", c.num_clusters},  {"paths_per_user", c.paths_per_user},
          {"aod_spread", c.aod_spread},      {"gain_profile", detail::gain_profile_name(c.gain_profile)},
          {"rho", c.rho},                    {"frequency_ghz", c.frequency_ghz},
          {"label", c.label}};
}

inline void apply_json(const json& j, ScenarioConfig& c) {
  detail::check_keys(j, "scenario",
                     {"antennas", "users", "num_clusters", "paths_per_user", "aod_spread",
                      "gain_profile", "rho", "frequency_ghz", "label", "preset"});
  if (j.contains("preset")) {
    const auto p = j.at("preset").get<std::string>();
    if (p == "los") c = ScenarioConfig::los();
    else if (p == "nlos") c = ScenarioConfig::nlos();
    else throw ConfigError("scenario.preset must be 'los' or 'nlos'");
  }
  detail::read(j, "antennas", c.antennas);
  detail::read(j, "users", c.users);
  detail::read(j, "num_clusters", c.num_clusters);
  detail::read(j, "paths_per_user", c.paths_per_user);
  detail::read(j, "aod_spread", c.aod_spread);
  if (j.contains("gain_profile")) c.gain_profile = detail::parse_gain_profile(j.at("gain_profile").get<std::string>());
  detail::read(j, "rho", c.rho);
  detail::read(j, "frequency_ghz", c.frequency_ghz);
  detail::read(j, "label", c.label);
}

inline json to_json(const AgentHyper& h) {
  json j = {{"kind", to_string(h.kind)},
            {"discount", h.discount},
            {"tau", h.tau},
            {"lr", h.lr},
            {"alpha_lr", h.alpha_lr},
            {"actor_weight_decay", h.actor_weight_decay},
            {"critic_weight_decay", h.critic_weight_decay},
            {"batch", h.batch},
            {"buffer_capacity", h.buffer_capacity},
            {"policy_delay", h.policy_delay},
            {"target_noise_scale", h.target_noise_scale},
            {"target_noise_clip", h.target_noise_clip},
            {"target_entropy", nullptr},
            {"initial_alpha", h.initial_alpha},
            {"learn_alpha", h.learn_alpha},
            {"actor_hidden_per_antenna", h.actor_hidden_per_antenna},
            {"critic_hidden_per_antenna", h.critic_hidden_per_antenna},
            {"actor_output_scale", h.actor_output_scale},
            {"preact_penalty", h.preact_penalty},
            {"delta_actions", h.delta_actions},
            {"ou",
             {{"theta", h.ou.theta},
              {"sigma", h.ou.sigma},
              {"sigma_min", h.ou.sigma_min},
              {"decay", h.ou.decay}}}};
  if (h.target_entropy) j["target_entropy"] = *h.target_entropy;
  return j;
}

inline void apply_json(const json& j, AgentHyper& h) {
  detail::check_keys(j, "agent",
                     {"kind", "discount", "tau", "lr", "alpha_lr", "actor_weight_decay",
                      "critic_weight_decay", "batch", "buffer_capacity", "policy_delay",
                      "target_noise_scale", "target_noise_clip", "target_entropy", "initial_alpha",
                      "learn_alpha", "actor_hidden_per_antenna", "critic_hidden_per_antenna",
                      "actor_output_scale", "preact_penalty", "delta_actions", "ou"});
  if (j.contains("kind")) h.kind = parse_agent_kind(j.at("kind").get<std::string>());
  detail::read(j, "discount", h.discount);
  detail::read(j, "tau", h.tau);
  detail::read(j, "lr", h.lr);
  detail::read(j, "alpha_lr", h.alpha_lr);
  detail::read(j, "actor_weight_decay", h.actor_weight_decay);
  detail::read(j, "critic_weight_decay", h.critic_weight_decay);
  detail::read(j, "batch", h.batch);
  detail::read(j, "buffer_capacity", h.buffer_capacity);
  detail::read(j, "policy_delay", h.policy_delay);
  detail::read(j, "target_noise_scale", h.target_noise_scale);
  detail::read(j, "target_noise_clip", h.target_noise_clip);
  if (j.contains("target_entropy")) {
    if (j.at("target_entropy").is_null()) h.target_entropy.reset();
    else h.target_entropy = j.at("target_entropy").get<double>();
  }
  detail::read(j, "initial_alpha", h.initial_alpha);
  detail::read(j, "learn_alpha", h.learn_alpha);
  detail::read(j, "actor_hidden_per_antenna", h.actor_hidden_per_antenna);
  detail::read(j, "critic_hidden_per_antenna", h.critic_hidden_per_antenna);
  detail::read(j, "actor_output_scale", h.actor_output_scale);
  detail::read(j, "preact_penalty", h.preact_penalty);
  detail::read(j, "delta_actions", h.delta_actions);
  if (j.contains("ou")) {
    const json& o = j.at("ou");
    detail::check_keys(o, "agent.ou", {"theta", "sigma", "sigma_min", "decay"});
    detail::read(o, "theta", h.ou.theta);
    detail::read(o, "sigma", h.ou.sigma);
    detail::read(o, "sigma_min", h.ou.sigma_min);
    detail::read(o, "decay", h.ou.decay);
  }
}

inline json to_json(const TrainSettings& t) {
  return {{"channels", t.channels}, {"codebook", t.codebook},   {"beams", t.beams},
          {"sensing", t.sensing},   {"phase_bits", t.phase_bits}, {"eta", t.eta},
          {"sigma_p", t.sigma_p},   {"iters", t.iters},          {"kmeans_iters", t.kmeans_iters}};
}

inline void apply_json(const json& j, TrainSettings& t) {
  detail::check_keys(j, "train",
                     {"channels", "codebook", "beams", "sensing", "phase_bits", "eta", "sigma_p",
                      "iters", "kmeans_iters"});
  detail::read(j, "channels", t.channels);
  detail::read(j, "codebook", t.codebook);
  detail::read(j, "beams", t.beams);
  detail::read(j, "sensing", t.sensing);
  detail::read(j, "phase_bits", t.phase_bits);
  detail::read(j, "eta", t.eta);
  detail::read(j, "sigma_p", t.sigma_p);
  detail::read(j, "iters", t.iters);
  detail::read(j, "kmeans_iters", t.kmeans_iters);
}

inline json to_json(const SweepSpec& s) {
  std::vector<std::string> kinds;
  for (auto k : s.kinds) kinds.push_back(to_string(k));
  return {{"kinds", kinds},         {"sizes", s.sizes},       {"sigma_grid", s.sigma_grid},
          {"eta_grid", s.eta_grid}, {"seeds", s.seeds},       {"iters", s.iters},
          {"sensing", s.sensing},   {"phase_bits", s.phase_bits}, {"channel_file", s.channel_file},
          {"holdout", s.holdout}};
}

inline void apply_json(const json& j, SweepSpec& s) {
  detail::check_keys(j, "sweep",
                     {"kinds", "sizes", "sigma_grid", "eta_grid", "seeds", "iters", "sensing",
                      "phase_bits", "channel_file", "holdout"});
  if (j.contains("kinds")) {
    s.kinds.clear();
    for (const auto& k : j.at("kinds")) s.kinds.push_back(parse_agent_kind(k.get<std::string>()));
  }
  detail::read(j, "sizes", s.sizes);
  detail::read(j, "sigma_grid", s.sigma_grid);
  detail::read(j, "eta_grid", s.eta_grid);
  detail::read(j, "seeds", s.seeds);
  detail::read(j, "iters", s.iters);
  detail::read(j, "sensing", s.sensing);
  detail::read(j, "phase_bits", s.phase_bits);
  detail::read(j, "channel_file", s.channel_file);
  detail::read(j, "holdout", s.holdout);
}

inline json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"out", c.out},
          {"scenario", to_json(c.scenario)},
          {"agent", to_json(c.agent)},
          {"train", to_json(c.train)},
          {"sweep", to_json(c.sweep)}};
}

inline void apply_json(const json& j, RunConfig& c) {
  detail::check_keys(j, "<root>", {"seed", "out", "scenario", "agent", "train", "sweep"});
  detail::read(j, "seed", c.seed);
  detail::read(j, "out", c.out);
  if (j.contains("scenario")) apply_json(j.at("scenario"), c.scenario);
  if (j.contains("agent")) apply_json(j.at("agent"), c.agent);
  if (j.contains("train")) apply_json(j.at("train"), c.train);
  if (j.contains("sweep")) apply_json(j.at("sweep"), c.sweep);
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("invalid JSON in " + path + ": " + e.what(), e.byte);
  }
}

inline void save_json_file(const json& j, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open file for writing: " + path);
  os << j.dump(2) << '\n';
}

}  // namespace cbforge
