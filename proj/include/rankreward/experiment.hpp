/*
 * Copyright 2026 The rankreward Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Run configuration and the three experiment drivers: the online loop
// (rollouts, rating sessions, reward updates, replay relabeling), the
// offline pipeline (pool -> balanced dataset -> frozen reward -> agent) and
// pool generation from a controller trained on ground truth.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rankreward/agent.hpp"
#include "rankreward/dataset.hpp"
#include "rankreward/envs.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/feedback.hpp"
#include "rankreward/metrics_io.hpp"
#include "rankreward/objectives.hpp"
#include "rankreward/rating_service.hpp"
#include "rankreward/reward_model.hpp"
#include "rankreward/rng.hpp"
#include "rankreward/teacher.hpp"

namespace rankreward {

enum class RewardSource { rmse, rbrl, ground_truth };
enum class SamplingKind { stratified, uniform };
enum class TeacherMode { simulated, live };

inline std::string_view to_string(RewardSource r) {
  switch (r) {
    case RewardSource::rmse: return "rmse";
    case RewardSource::rbrl: return "rbrl";
    case RewardSource::ground_truth: return "ground_truth";
  }
  return "rmse";
}

inline RewardSource reward_source_from_string(std::string_view s) {
  if (s == "rmse") return RewardSource::rmse;
  if (s == "rbrl") return RewardSource::rbrl;
  if (s == "ground_truth") return RewardSource::ground_truth;
  throw ConfigError("unknown reward source '" + std::string(s) + "'");
}

inline std::string_view to_string(SamplingKind k) { return k == SamplingKind::stratified ? "stratified" : "uniform"; }

inline SamplingKind sampling_kind_from_string(std::string_view s) {
  if (s == "stratified") return SamplingKind::stratified;
  if (s == "uniform") return SamplingKind::uniform;
  throw ConfigError("unknown sampling '" + std::string(s) + "'");
}

inline std::string_view to_string(TeacherMode m) { return m == TeacherMode::simulated ? "simulated" : "live"; }

inline TeacherMode teacher_mode_from_string(std::string_view s) {
  if (s == "simulated") return TeacherMode::simulated;
  if (s == "live") return TeacherMode::live;
  throw ConfigError("unknown teacher mode '" + std::string(s) + "'");
}

inline constexpr const char* kConfigSchema = "rankreward.config/v1";

struct ExperimentConfig {
  std::string env = "grid-nav";
  std::uint64_t seed = 0;
  std::string output_dir;
  RewardSource reward = RewardSource::rmse;

  struct Model {
    ModelPreset preset = ModelPreset::large_online;
    std::size_t ensemble_size = 3;
    double learning_rate = 3e-4;
    std::size_t batch_size = 64;
    double regularization = 1.0;
    double l2_beta = 0.0;
    double gamma = 1.0;
    double rbrl_sharpness = 10.0;
    std::vector<double> rbrl_boundaries;  // empty: uniform
    double ood_weight = 0.0;
    std::size_t ood_samples = 64;
    // Scale agent-facing rewards to unit spread over the rated steps after
    // every reward update.
    bool standardize = true;
  } model;

  struct Teacher {
    TeacherSpec spec;
    TeacherMode mode = TeacherMode::simulated;
    double session_timeout_s = 600.0;
  } teacher;

  struct Online {
    std::size_t total_env_steps = 30000;
    std::size_t budget = 60;
    std::size_t per_session = 10;
    std::size_t warmup_steps = 1000;
    ScheduleKind schedule = ScheduleKind::geometric;
    double schedule_fraction = 0.6;
    SamplingKind sampling = SamplingKind::stratified;
    std::size_t segment_length = 0;  // 0 rates whole episodes
    std::size_t buffer_capacity = 50;
    std::size_t reward_updates = 1000;
    double update_scale = 1.0;
    bool warm_start = true;
    std::size_t held_out_episodes = 100;
    // grid-nav: hold the agent at the goal until the horizon.
    bool absorbing_goal = false;
  } online;

  struct Offline {
    std::string pool;
    std::vector<double> thresholds;
    double noise = 0.0;
    ModelPreset preset = ModelPreset::medium;
    std::size_t per_class = 100;
    std::size_t reward_updates = 3000;
    std::size_t agent_env_steps = 30000;
    // Applies to pool generation too.
    bool absorbing_goal = true;
    double regularization = 0.1;
    std::size_t updates_per_step = 4;
  } offline;

  struct Pool {
    std::vector<double> thresholds;  // return cells to fill
    std::size_t per_class = 150;
    std::size_t controller_steps = 30000;
    std::size_t max_episodes = 200000;
  } pool;

  struct Agent {
    double gamma = 0.99;
    double q_learning_rate = 0.1;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_fraction = 0.5;  // of the run's env steps
    std::size_t q_batch = 32;
    ActorCriticConfig actor_critic;
    std::size_t replay_capacity = 100000;
    std::size_t updates_per_step = 1;
    std::size_t random_steps = 1000;  // uniform actions before learning starts
  } agent;

  struct Service {
    std::string host = "127.0.0.1";
    int port = 8080;
  } service;

  std::size_t updates_per_session() const {
    return static_cast<std::size_t>(std::llround(online.update_scale * static_cast<double>(online.reward_updates)));
  }

  RewardTrainingConfig training() const {
    RewardTrainingConfig t;
    t.loss = reward == RewardSource::rbrl ? LossKind::rbrl : LossKind::rmse;
    t.batch_size = model.batch_size;
    t.regularization = model.regularization;
    t.learning_rate = model.learning_rate;
    t.l2_beta = model.l2_beta;
    t.gamma = model.gamma;
    t.rbrl.boundaries = model.rbrl_boundaries;
    t.rbrl.sharpness = model.rbrl_sharpness;
    t.ood_weight = model.ood_weight;
    t.ood_samples = model.ood_samples;
    return t;
  }
};

// Environment-specific defaults: teacher thresholds, segment length and
// run lengths. Grid-nav episode returns lie in [-1, 0.87] (failure -1,
// success 1.01 - 0.01 L for path length L >= 14). Point-mass returns are
// sums of -distance, so a 50-step segment lies in [-107, 0] and a full
// 200-step episode in [-425, 0].
inline ExperimentConfig default_config(const std::string& env) {
  ExperimentConfig c;
  c.env = env;
  if (env == "grid-nav") {
    c.teacher.spec.start_thresholds = {-1.0, 0.0, 0.2, 0.4, 0.6, 0.7, 0.8};
    c.teacher.spec.end_thresholds = {-1.0, 0.4, 0.7, 0.8};
    c.teacher.spec.switch_point = 40;
    c.teacher.spec.extend_range = true;
    c.online.segment_length = 0;
    c.offline.thresholds = {-1.0, 0.0, 0.5, 0.75, 1.0};
    c.pool.thresholds = c.offline.thresholds;
  } else if (env == "point-mass") {
    c.teacher.spec.start_thresholds = {-110.0, -60.0, -40.0, -25.0, -15.0, -8.0, -4.0};
    c.teacher.spec.end_thresholds = {-110.0, -40.0, -15.0, -4.0};
    c.teacher.spec.switch_point = 60;
    c.teacher.spec.extend_range = true;
    c.online.total_env_steps = 20000;
    c.online.budget = 100;
    c.online.segment_length = 50;
    c.online.reward_updates = 200;
    c.model.batch_size = 16;
    c.offline.thresholds = {-450.0, -250.0, -150.0, -80.0, 0.0};
    c.offline.agent_env_steps = 20000;
    c.pool.thresholds = c.offline.thresholds;
    c.pool.controller_steps = 20000;
    c.pool.per_class = 120;
  } else {
    throw ConfigError("unknown environment '" + env + "'");
  }
  return c;
}

inline void validate_config(const ExperimentConfig& c) {
  (void)make_environment(c.env);
  validate(c.teacher.spec);
  if (c.model.ensemble_size == 0) throw ConfigError("model.ensemble_size must be positive");
  if (c.model.batch_size == 0) throw ConfigError("model.batch_size must be positive");
  if (!(c.model.learning_rate >= 0.0)) throw ConfigError("model.learning_rate must be non-negative");
  if (!(c.model.regularization > 0.0)) throw ConfigError("model.regularization must be positive");
  if (!(c.offline.regularization > 0.0)) throw ConfigError("offline.regularization must be positive");
  if (c.offline.updates_per_step == 0) throw ConfigError("offline.updates_per_step must be positive");
  if (!(c.model.gamma >= 0.0 && c.model.gamma <= 1.0)) throw ConfigError("model.gamma must lie in [0, 1]");
  if (!(c.model.rbrl_sharpness > 0.0)) throw ConfigError("model.rbrl_sharpness must be positive");
  if (c.online.per_session == 0) throw ConfigError("online.per_session must be positive");
  if (c.online.buffer_capacity == 0) throw ConfigError("online.buffer_capacity must be positive");
  if (!(c.online.schedule_fraction > 0.0 && c.online.schedule_fraction <= 1.0)) {
    throw ConfigError("online.schedule_fraction must lie in (0, 1]");
  }
  if (!(c.online.update_scale >= 0.0)) throw ConfigError("online.update_scale must be non-negative");
  if (c.online.held_out_episodes == 1) throw ConfigError("online.held_out_episodes must be 0 or at least 2");
  if (!(c.teacher.session_timeout_s > 0.0)) throw ConfigError("teacher.session_timeout_s must be positive");
  detail::check_ascending(c.offline.thresholds, "offline thresholds");
  detail::check_ascending(c.pool.thresholds, "pool thresholds");
  if (!(c.offline.noise >= 0.0 && c.offline.noise <= 1.0)) throw ConfigError("offline.noise must lie in [0, 1]");
  if (c.offline.per_class == 0) throw ConfigError("offline.per_class must be positive");
  if (!(c.agent.epsilon_fraction >= 0.0 && c.agent.epsilon_fraction <= 1.0)) {
    throw ConfigError("agent.epsilon_fraction must lie in [0, 1]");
  }
  if (c.agent.replay_capacity == 0) throw ConfigError("agent.replay_capacity must be positive");
  if (c.agent.q_batch == 0 || c.agent.actor_critic.batch_size == 0) throw ConfigError("agent batch sizes must be positive");
  if (c.service.port < 0 || c.service.port > 65535) throw ConfigError("service.port outside [0, 65535]");
  if (!c.model.rbrl_boundaries.empty()) {
    RbRLConfig r;
    r.boundaries = c.model.rbrl_boundaries;
    try {
      (void)resolve_boundaries(r, c.model.rbrl_boundaries.size() - 1);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model.rbrl_boundaries: ") + e.what());
    }
  }
}

// -- JSON ----------------------------------------------------------------

namespace detail {

// Reads known keys and rejects anything left over.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      const bool ok = it->is_number_unsigned() || (it->is_number_integer() && it->template get<std::int64_t>() >= 0);
      if (!ok) throw ConfigError(path(key) + ": expected a non-negative integer");
    }
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  template <class F>
  void read_string(const char* key, F&& convert) {
    std::string s;
    const bool present = j_.contains(key);
    read(key, s);
    if (present) convert(s);
  }

  std::optional<ConfigReader> section(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    seen_.insert(key);
    return ConfigReader(*it, path(key));
  }

  const nlohmann::json& raw() const { return j_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown configuration key '" + path(it.key().c_str()) + "'");
    }
  }

 private:
  std::string path(const char* key) const { return where_ + "." + key; }

  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  const auto& ac = c.agent.actor_critic;
  nlohmann::json teacher = teacher_to_json(c.teacher.spec);
  teacher["mode"] = std::string(to_string(c.teacher.mode));
  teacher["session_timeout_s"] = c.teacher.session_timeout_s;
  return {
      {"schema", kConfigSchema},
      {"env", c.env},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"reward", std::string(to_string(c.reward))},
      {"model",
       {{"preset", std::string(to_string(c.model.preset))},
        {"ensemble_size", c.model.ensemble_size},
        {"learning_rate", c.model.learning_rate},
        {"batch_size", c.model.batch_size},
        {"regularization", c.model.regularization},
        {"l2_beta", c.model.l2_beta},
        {"gamma", c.model.gamma},
        {"rbrl_sharpness", c.model.rbrl_sharpness},
        {"rbrl_boundaries", c.model.rbrl_boundaries},
        {"ood_weight", c.model.ood_weight},
        {"ood_samples", c.model.ood_samples},
        {"standardize", c.model.standardize}}},
      {"teacher", teacher},
      {"online",
       {{"total_env_steps", c.online.total_env_steps},
        {"budget", c.online.budget},
        {"per_session", c.online.per_session},
        {"warmup_steps", c.online.warmup_steps},
        {"schedule", std::string(to_string(c.online.schedule))},
        {"schedule_fraction", c.online.schedule_fraction},
        {"sampling", std::string(to_string(c.online.sampling))},
        {"segment_length", c.online.segment_length},
        {"buffer_capacity", c.online.buffer_capacity},
        {"reward_updates", c.online.reward_updates},
        {"update_scale", c.online.update_scale},
        {"warm_start", c.online.warm_start},
        {"held_out_episodes", c.online.held_out_episodes},
        {"absorbing_goal", c.online.absorbing_goal}}},
      {"offline",
       {{"pool", c.offline.pool},
        {"thresholds", c.offline.thresholds},
        {"noise", c.offline.noise},
        {"preset", std::string(to_string(c.offline.preset))},
        {"per_class", c.offline.per_class},
        {"reward_updates", c.offline.reward_updates},
        {"agent_env_steps", c.offline.agent_env_steps},
        {"absorbing_goal", c.offline.absorbing_goal},
        {"regularization", c.offline.regularization},
        {"updates_per_step", c.offline.updates_per_step}}},
      {"pool",
       {{"thresholds", c.pool.thresholds},
        {"per_class", c.pool.per_class},
        {"controller_steps", c.pool.controller_steps},
        {"max_episodes", c.pool.max_episodes}}},
      {"agent",
       {{"gamma", c.agent.gamma},
        {"q_learning_rate", c.agent.q_learning_rate},
        {"epsilon_start", c.agent.epsilon_start},
        {"epsilon_end", c.agent.epsilon_end},
        {"epsilon_fraction", c.agent.epsilon_fraction},
        {"q_batch", c.agent.q_batch},
        {"ac_hidden", ac.hidden},
        {"ac_actor_lr", ac.actor_lr},
        {"ac_critic_lr", ac.critic_lr},
        {"ac_alpha", ac.alpha},
        {"ac_tau", ac.tau},
        {"ac_batch", ac.batch_size},
        {"replay_capacity", c.agent.replay_capacity},
        {"updates_per_step", c.agent.updates_per_step},
        {"random_steps", c.agent.random_steps}}},
      {"service", {{"host", c.service.host}, {"port", c.service.port}}},
  };
}

// Accepts a config file or a run manifest (its resolved config). Keys that
// are absent keep the environment defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& in) {
  const nlohmann::json* jp = &in;
  if (in.is_object() && in.value("schema", "") == kManifestSchema) jp = &in.at("config");
  const nlohmann::json& j = *jp;
  if (!j.is_object()) throw ConfigError("config: expected an object");
  if (j.contains("schema") && j.at("schema") != kConfigSchema) {
    throw ConfigError("config: unexpected schema " + j.at("schema").dump());
  }
  std::string env = "grid-nav";
  if (j.contains("env")) {
    if (!j.at("env").is_string()) throw ConfigError("config.env: expected a string");
    env = j.at("env").get<std::string>();
  }
  ExperimentConfig c = default_config(env);
  detail::ConfigReader r(j, "config");
  std::string schema;
  r.read("schema", schema);
  r.read("env", c.env);
  r.read("seed", c.seed);
  r.read("output_dir", c.output_dir);
  r.read_string("reward", [&](const std::string& s) { c.reward = reward_source_from_string(s); });

  const auto wrap = [](auto&& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  };

  if (auto m = r.section("model")) {
    m->read_string("preset", [&](const std::string& s) { wrap([&] { c.model.preset = preset_from_string(s); }); });
    m->read("ensemble_size", c.model.ensemble_size);
    m->read("learning_rate", c.model.learning_rate);
    m->read("batch_size", c.model.batch_size);
    m->read("regularization", c.model.regularization);
    m->read("l2_beta", c.model.l2_beta);
    m->read("gamma", c.model.gamma);
    m->read("rbrl_sharpness", c.model.rbrl_sharpness);
    m->read("rbrl_boundaries", c.model.rbrl_boundaries);
    m->read("ood_weight", c.model.ood_weight);
    m->read("ood_samples", c.model.ood_samples);
    m->read("standardize", c.model.standardize);
    m->finish();
  }
  if (auto t = r.section("teacher")) {
    auto& s = c.teacher.spec;
    t->read("start_thresholds", s.start_thresholds);
    if (t->raw().contains("start_thresholds") && !t->raw().contains("end_thresholds")) {
      s.end_thresholds = s.start_thresholds;
    }
    t->read("end_thresholds", s.end_thresholds);
    t->read("switch_point", s.switch_point);
    t->read("noise", s.noise);
    t->read("gamma", s.gamma);
    t->read("extend_range", s.extend_range);
    t->read_string("mode", [&](const std::string& v) { c.teacher.mode = teacher_mode_from_string(v); });
    t->read("session_timeout_s", c.teacher.session_timeout_s);
    t->finish();
  }
  if (auto o = r.section("online")) {
    o->read("total_env_steps", c.online.total_env_steps);
    o->read("budget", c.online.budget);
    o->read("per_session", c.online.per_session);
    o->read("warmup_steps", c.online.warmup_steps);
    o->read_string("schedule",
                   [&](const std::string& s) { wrap([&] { c.online.schedule = schedule_kind_from_string(s); }); });
    o->read("schedule_fraction", c.online.schedule_fraction);
    o->read_string("sampling", [&](const std::string& s) { c.online.sampling = sampling_kind_from_string(s); });
    o->read("segment_length", c.online.segment_length);
    o->read("buffer_capacity", c.online.buffer_capacity);
    o->read("reward_updates", c.online.reward_updates);
    o->read("update_scale", c.online.update_scale);
    o->read("warm_start", c.online.warm_start);
    o->read("held_out_episodes", c.online.held_out_episodes);
    o->read("absorbing_goal", c.online.absorbing_goal);
    o->finish();
  }
  if (auto o = r.section("offline")) {
    o->read("pool", c.offline.pool);
    o->read("thresholds", c.offline.thresholds);
    o->read("noise", c.offline.noise);
    o->read_string("preset", [&](const std::string& s) { wrap([&] { c.offline.preset = preset_from_string(s); }); });
    o->read("per_class", c.offline.per_class);
    o->read("reward_updates", c.offline.reward_updates);
    o->read("agent_env_steps", c.offline.agent_env_steps);
    o->read("absorbing_goal", c.offline.absorbing_goal);
    o->read("regularization", c.offline.regularization);
    o->read("updates_per_step", c.offline.updates_per_step);
    o->finish();
  }
  if (auto p = r.section("pool")) {
    p->read("thresholds", c.pool.thresholds);
    p->read("per_class", c.pool.per_class);
    p->read("controller_steps", c.pool.controller_steps);
    p->read("max_episodes", c.pool.max_episodes);
    p->finish();
  }
  if (auto a = r.section("agent")) {
    auto& ac = c.agent.actor_critic;
    a->read("gamma", c.agent.gamma);
    a->read("q_learning_rate", c.agent.q_learning_rate);
    a->read("epsilon_start", c.agent.epsilon_start);
    a->read("epsilon_end", c.agent.epsilon_end);
    a->read("epsilon_fraction", c.agent.epsilon_fraction);
    a->read("q_batch", c.agent.q_batch);
    a->read("ac_hidden", ac.hidden);
    a->read("ac_actor_lr", ac.actor_lr);
    a->read("ac_critic_lr", ac.critic_lr);
    a->read("ac_alpha", ac.alpha);
    a->read("ac_tau", ac.tau);
    a->read("ac_batch", ac.batch_size);
    a->read("replay_capacity", c.agent.replay_capacity);
    a->read("updates_per_step", c.agent.updates_per_step);
    a->read("random_steps", c.agent.random_steps);
    a->finish();
  }
  if (auto s = r.section("service")) {
    s->read("host", c.service.host);
    s->read("port", c.service.port);
    s->finish();
  }
  r.finish();
  c.agent.actor_critic.gamma = c.agent.gamma;
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

// -- learners --------------------------------------------------------------

// Tabular Q-learning for environments with a state index, the actor-critic
// otherwise. Holds a pointer to `env`, which must outlive the learner.
class Learner {
 public:
  Learner(const Environment& env, const ExperimentConfig::Agent& cfg, std::size_t total_steps, std::uint64_t seed)
      : action_(env.action_space()), random_steps_(cfg.random_steps) {
    if (env.state_count() > 0) {
      QConfig q;
      q.gamma = cfg.gamma;
      q.learning_rate = cfg.q_learning_rate;
      q.batch_size = cfg.q_batch;
      q.epsilon = {cfg.epsilon_start, cfg.epsilon_end,
                   static_cast<std::size_t>(cfg.epsilon_fraction * static_cast<double>(total_steps))};
      const Environment* e = &env;
      index_ = [e](const std::vector<double>& s) { return e->state_index(s); };
      q_.emplace(env.state_count(), action_.size, index_, q);
    } else {
      ActorCriticConfig ac = cfg.actor_critic;
      ac.gamma = cfg.gamma;
      ac_.emplace(env.state_dim(), action_.size, seed, ac);
    }
  }

  bool tabular() const { return q_.has_value(); }
  const QAgent& q_agent() const { return *q_; }
  const ActorCritic& actor_critic() const { return *ac_; }

  // Training-time action at global step `step`.
  std::vector<double> act(const std::vector<double>& s, std::size_t step, std::mt19937_64& rng) const {
    if (step < random_steps_) return random_action(rng);
    if (q_) return q_->act(s, true, step, rng);
    return ac_->act(s, true, rng);
  }

  // Uniformly random with probability `eps`, greedy otherwise.
  std::vector<double> act_mixed(const std::vector<double>& s, double eps, std::mt19937_64& rng) const {
    if (q_) return {static_cast<double>(q_->act_index(index_(s), eps, rng))};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (eps > 0.0 && u(rng) < eps) return random_action(rng);
    return ac_->act(s, false, rng);
  }

  bool update(const ReplayBuffer& replay, std::mt19937_64& rng) {
    return q_ ? q_->update(replay, rng) : ac_->update(replay, rng);
  }

  std::vector<double> random_action(std::mt19937_64& rng) const {
    if (action_.kind == ActionSpace::Kind::discrete) {
      std::uniform_int_distribution<std::size_t> d(0, action_.size - 1);
      return {static_cast<double>(d(rng))};
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> a(action_.size);
    for (double& x : a) x = u(rng);
    return a;
  }

 private:
  ActionSpace action_;
  std::size_t random_steps_;
  std::optional<QAgent> q_;
  std::optional<ActorCritic> ac_;
  QAgent::StateIndex index_;
};

using RewardFn = std::function<double(const Step&)>;

// Adapts a RewardFn to the StepReward concept.
struct FnReward {
  const RewardFn* fn;
  double reward(const Step& s) const { return (*fn)(s); }
};

// Rollout driver shared by all experiments. Every environment step goes
// into the replay buffer labeled by `reward`, followed by
// `updates_per_step` learner updates.
class AgentLoop {
 public:
  AgentLoop(Environment& env, const GroundTruthOracle& oracle, Learner& learner, ReplayBuffer& replay,
            RewardFn reward, std::uint64_t seed, std::size_t updates_per_step)
      : env_(env),
        oracle_(oracle),
        learner_(learner),
        replay_(replay),
        reward_(std::move(reward)),
        env_seed_(derive_seed(seed, 1)),
        act_rng_(derive_seed(seed, 3)),
        update_rng_(derive_seed(seed, 4)),
        updates_per_step_(updates_per_step) {}

  std::size_t env_steps() const { return env_steps_; }
  std::size_t episodes() const { return episode_; }
  const RunLog& log() const { return log_; }
  RunLog& log() { return log_; }
  const RewardFn& reward() const { return reward_; }

  // While held, actions are uniform regardless of the learner.
  void hold_uniform(bool on) { uniform_ = on; }
  // Exploration schedules count steps from here on.
  void restart_schedule() { origin_ = env_steps_; }

  // Runs one training episode and logs its ground-truth return.
  Trajectory episode(std::size_t budget_used, std::size_t ensemble_version) {
    Trajectory traj;
    traj.env = env_.name();
    traj.id = episode_;
    std::vector<double> s = env_.reset(derive_seed(env_seed_, episode_));
    bool done = false;
    while (!done) {
      std::vector<double> a =
          uniform_ ? learner_.random_action(act_rng_) : learner_.act(s, env_steps_ - origin_, act_rng_);
      const StepResult r = env_.step(a);
      Step step{s, a};
      Transition tr{s, a, r.state, r.terminal, reward_(step)};
      traj.steps.push_back(std::move(step));
      replay_.push(std::move(tr));
      ++env_steps_;
      for (std::size_t u = 0; u < updates_per_step_; ++u) learner_.update(replay_, update_rng_);
      s = r.state;
      done = r.done;
    }
    const double g = oracle_.trajectory_return(AccessRole::metrics, traj, 1.0);
    log_.episodes.push_back({episode_, env_steps_, g, budget_used, ensemble_version});
    ++episode_;
    return traj;
  }

 private:
  Environment& env_;
  const GroundTruthOracle& oracle_;
  Learner& learner_;
  ReplayBuffer& replay_;
  RewardFn reward_;
  std::uint64_t env_seed_;
  std::mt19937_64 act_rng_;
  std::mt19937_64 update_rng_;
  std::size_t updates_per_step_;
  std::size_t env_steps_ = 0;
  std::size_t episode_ = 0;
  std::size_t origin_ = 0;
  bool uniform_ = false;
  RunLog log_;
};

// One evaluation episode without learning.
inline Trajectory evaluation_episode(Environment& env, const Learner& learner, double eps, std::uint64_t seed,
                                     std::mt19937_64& rng, std::uint64_t id = 0) {
  Trajectory traj;
  traj.env = env.name();
  traj.id = id;
  std::vector<double> s = env.reset(seed);
  bool done = false;
  while (!done) {
    std::vector<double> a = learner.act_mixed(s, eps, rng);
    const StepResult r = env.step(a);
    traj.steps.push_back({s, std::move(a)});
    s = r.state;
    done = r.done;
  }
  return traj;
}

// Encoded (state, action) pairs drawn uniformly over the state and action
// ranges.
inline std::function<std::vector<double>(std::mt19937_64&)> ood_sampler(const Environment& env) {
  const InputEncoder enc = env.encoder();
  if (env.name() == "grid-nav") {
    return [enc](std::mt19937_64& rng) {
      std::uniform_int_distribution<int> c(0, GridNav::kSize - 1);
      std::uniform_int_distribution<int> a(0, 3);
      const int x = c(rng);
      const int y = c(rng);
      std::vector<double> out(enc.input_dim());
      enc.encode(Step{GridNav::encode_cell(x, y), {static_cast<double>(a(rng))}}, out);
      return out;
    };
  }
  return [enc](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> out(enc.input_dim());
    for (double& x : out) x = u(rng);
    return out;
  };
}

// -- online ------------------------------------------------------------------

struct SessionRecord {
  std::size_t session = 0;
  std::size_t env_steps = 0;
  std::size_t requested = 0;
  std::size_t rated = 0;
  std::size_t skipped = 0;
  std::size_t classes = 0;
  bool trained = false;
  std::size_t ensemble_version = 0;
};

struct OnlineResult {
  RunLog log;
  RewardEnsemble ensemble;
  RatingDataset dataset;
  std::vector<LossRecord> losses;
  std::vector<SessionRecord> sessions;
  std::size_t scheduled_sessions = 0;
  std::size_t teacher_ratings = 0;
  std::size_t agent_ground_truth_accesses = 0;
  std::size_t ensemble_version = 0;
  // Largest |stored - recomputed| reward over the replay buffer right after
  // each relabel pass.
  double relabel_max_error = 0.0;
  std::vector<double> final_thresholds;
  std::vector<double> held_out_true;
  std::vector<double> held_out_pred;
  double held_out_tac = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline RewardEnsemble fresh_ensemble(const Environment& env, ModelPreset preset, std::size_t size,
                                     std::uint64_t seed) {
  return RewardEnsemble::from_layers(env.encoder(), preset_layers(preset), size, seed);
}

// Rescales the ensemble to unit standard deviation over every step of the
// dataset. No offset is removed: with terminating episodes a constant shift
// changes which policy is optimal.
inline void standardize(RewardEnsemble& ensemble, const RatingDataset& dataset) {
  double sum = 0.0;
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& cls : dataset.classes()) {
    for (const Trajectory& t : cls) {
      for (const Step& s : t.steps) {
        const double r = ensemble.raw_reward(s);
        sum += r;
        sq += r * r;
        ++n;
      }
    }
  }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  ensemble.calibrate(0.0, sd > 1e-12 ? sd : 1.0);
}

inline double relabel_error(const ReplayBuffer& replay, const RewardEnsemble& ensemble) {
  double worst = 0.0;
  for (std::size_t i = 0; i < replay.size(); ++i) {
    const Transition& t = replay.at(i);
    worst = std::max(worst, std::abs(t.reward - ensemble.reward(Step{t.state, t.action})));
  }
  return worst;
}

inline void held_out(Environment& env, const Learner& learner, const GroundTruthOracle& oracle,
                     const RewardEnsemble& ensemble, std::size_t episodes, double gamma, std::uint64_t seed,
                     std::vector<double>& truth, std::vector<double>& pred) {
  std::mt19937_64 rng(derive_seed(seed, 9));
  const std::uint64_t env_seed = derive_seed(seed, 0x4e1d);
  for (std::size_t i = 0; i < episodes; ++i) {
    const double eps = episodes > 1 ? static_cast<double>(i) / static_cast<double>(episodes - 1) : 0.0;
    const Trajectory t = evaluation_episode(env, learner, eps, derive_seed(env_seed, i), rng, i);
    truth.push_back(oracle.trajectory_return(AccessRole::metrics, t, gamma));
    pred.push_back(predicted_return(ensemble, t, gamma));
  }
}

}  // namespace detail

// Online loop. With `live` set and teacher.mode == live, rating sessions
// are published on the queue and the loop blocks until they resolve or time
// out; otherwise the simulated teacher rates from ground truth.
inline OnlineResult run_online(const ExperimentConfig& cfg, RatingQueue* live = nullptr) {
  validate_config(cfg);
  const bool human = cfg.teacher.mode == TeacherMode::live;
  if (human && live == nullptr) throw ConfigError("live teacher mode needs a rating queue");
  const bool ground_truth = cfg.reward == RewardSource::ground_truth;

  std::unique_ptr<Environment> env = make_environment(cfg.env, cfg.online.absorbing_goal);
  GroundTruthOracle oracle(*env);
  Learner learner(*env, cfg.agent, cfg.online.total_env_steps, derive_seed(cfg.seed, 2));
  ReplayBuffer replay(cfg.agent.replay_capacity);

  OnlineResult res;
  res.ensemble = detail::fresh_ensemble(*env, cfg.model.preset, cfg.model.ensemble_size, derive_seed(cfg.seed, 5));
  const RewardTrainingConfig training = [&] {
    RewardTrainingConfig t = cfg.training();
    if (t.ood_weight > 0.0) t.ood_sampler = ood_sampler(*env);
    return t;
  }();
  auto trainer = std::make_unique<RewardTrainer>(training, derive_seed(cfg.seed, 6));

  RewardFn reward;
  if (ground_truth) {
    reward = [&oracle](const Step& s) { return oracle.reward(AccessRole::control, s); };
  } else {
    reward = [&res](const Step& s) { return res.ensemble.reward(s); };
  }
  AgentLoop loop(*env, oracle, learner, replay, reward, cfg.seed, cfg.agent.updates_per_step);
  // Without any feedback the learned reward is arbitrary, so the agent
  // explores uniformly until the first reward update.
  if (!ground_truth) loop.hold_uniform(true);

  const std::size_t budget = ground_truth ? 0 : cfg.online.budget;
  res.dataset = RatingDataset(cfg.teacher.spec.class_count(Phase::start), budget);
  SimulatedTeacher teacher(cfg.teacher.spec, derive_seed(cfg.seed, 7));
  FeedbackSchedule schedule = FeedbackSchedule::make(cfg.online.schedule, budget, cfg.online.per_session,
                                                     cfg.online.warmup_steps, cfg.online.total_env_steps,
                                                     cfg.online.schedule_fraction);
  res.scheduled_sessions = schedule.thresholds().size();
  TrajectoryBuffer buffer(cfg.online.buffer_capacity);
  std::mt19937_64 sample_rng(derive_seed(cfg.seed, 8));
  const std::size_t updates = cfg.updates_per_session();

  const auto publish = [&](bool finished) {
    if (!live) return;
    live->set_status({loop.episodes(), loop.env_steps(), res.dataset.budget_used(),
                      res.dataset.budget_remaining() == RatingDataset::kUnlimited ? 0 : res.dataset.budget_remaining(),
                      describe_classes(teacher.active_thresholds()), finished});
  };

  const auto sync_phase = [&] {
    if (auto map = teacher.update_phase(res.dataset.budget_used())) {
      res.dataset.relabel(*map, teacher.class_count());
    }
  };

  const auto session = [&] {
    SessionRecord rec;
    rec.session = res.sessions.size();
    rec.env_steps = loop.env_steps();
    const std::size_t count = std::min(cfg.online.per_session, res.dataset.budget_remaining());
    std::vector<SampledSegment> segs;
    if (cfg.online.sampling == SamplingKind::stratified) {
      segs = stratified_sample(buffer, count, cfg.online.segment_length, res.ensemble, cfg.model.gamma, sample_rng);
    } else {
      segs = uniform_sample(buffer, count, cfg.online.segment_length, sample_rng);
    }
    rec.requested = segs.size();
    if (human) {
      sync_phase();
      std::vector<Trajectory> trajs;
      for (const auto& s : segs) trajs.push_back(s.segment);
      live->enqueue(trajs, describe_classes(teacher.active_thresholds()), env->render_hints());
      publish(false);
      const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(cfg.teacher.session_timeout_s * 1000));
      for (const RatingRequest& r : live->wait_session(timeout)) {
        if (r.resolution != Resolution::rated) {
          ++rec.skipped;
          continue;
        }
        if (res.dataset.ingest(r.segment, r.class_index) == IngestStatus::accepted) ++rec.rated;
      }
    } else {
      for (const auto& s : segs) {
        sync_phase();
        const double g = oracle.trajectory_return(AccessRole::teacher, s.segment, cfg.teacher.spec.gamma);
        const TeacherEvent ev = teacher.label(g);
        if (ev.new_class_count > res.dataset.class_count()) {
          res.dataset.add_classes(ev.new_class_count - res.dataset.class_count());
        }
        if (res.dataset.ingest(s.segment, ev.label) == IngestStatus::accepted) ++rec.rated;
      }
    }
    res.teacher_ratings += rec.rated;
    rec.classes = res.dataset.class_count();

    const auto [train_set, kept] = res.dataset.compacted();
    if (train_set.class_count() >= 2 && updates > 0) {
      if (!cfg.online.warm_start) {
        res.ensemble = detail::fresh_ensemble(*env, cfg.model.preset, cfg.model.ensemble_size,
                                              derive_seed(cfg.seed, 0x100 + rec.session));
        trainer = std::make_unique<RewardTrainer>(training, derive_seed(cfg.seed, 0x200 + rec.session));
      }
      const auto hist = trainer->train(train_set, res.ensemble, updates);
      res.losses.insert(res.losses.end(), hist.begin(), hist.end());
      if (cfg.model.standardize) detail::standardize(res.ensemble, train_set);
      if (res.ensemble_version == 0) {
        loop.hold_uniform(false);
        loop.restart_schedule();
      }
      ++res.ensemble_version;
      replay.relabel(res.ensemble);
      res.relabel_max_error = std::max(res.relabel_max_error, detail::relabel_error(replay, res.ensemble));
      rec.trained = true;
    }
    rec.ensemble_version = res.ensemble_version;
    res.sessions.push_back(rec);
    publish(false);
  };

  while (loop.env_steps() < cfg.online.total_env_steps) {
    Trajectory t = loop.episode(res.dataset.budget_used(), res.ensemble_version);
    buffer.push(std::move(t));
    while (!ground_truth && schedule.should_query(loop.env_steps(), res.dataset.budget_remaining())) session();
    publish(false);
  }
  publish(true);

  res.log = loop.log();
  res.final_thresholds = teacher.active_thresholds();
  res.agent_ground_truth_accesses = oracle.accesses(AccessRole::agent);
  if (cfg.online.held_out_episodes > 1) {
    detail::held_out(*env, learner, oracle, res.ensemble, cfg.online.held_out_episodes, cfg.model.gamma, cfg.seed,
                     res.held_out_true, res.held_out_pred);
    res.held_out_tac = tac(res.held_out_true, res.held_out_pred);
  }
  return res;
}

// -- offline ---------------------------------------------------------------

struct OfflineResult {
  RunLog log;
  RewardEnsemble ensemble;
  RatingDataset dataset;
  std::vector<LossRecord> losses;
  std::vector<std::size_t> pool_class_sizes;
  std::vector<double> pool_class_means;  // ground-truth mean per class
  double pool_tac = std::numeric_limits<double>::quiet_NaN();
  std::size_t agent_ground_truth_accesses = 0;
};

// Rates a pool with the offline thresholds and groups it by class. Copies
// drop any attached rewards.
inline std::vector<std::vector<Trajectory>> bin_pool(const std::vector<Trajectory>& pool,
                                                     const std::vector<double>& thresholds,
                                                     const GroundTruthOracle& oracle, double gamma,
                                                     std::vector<double>* means = nullptr) {
  std::vector<std::vector<Trajectory>> by_class(thresholds.size() - 1);
  std::vector<double> sums(by_class.size(), 0.0);
  for (const Trajectory& t : pool) {
    const double g = oracle.trajectory_return(AccessRole::teacher, t, gamma);
    const auto k = static_cast<std::size_t>(rate(thresholds, g));
    Trajectory c = t;
    c.true_rewards.clear();
    by_class[k].push_back(std::move(c));
    sums[k] += g;
  }
  if (means) {
    means->assign(by_class.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      if (!by_class[k].empty()) (*means)[k] = sums[k] / static_cast<double>(by_class[k].size());
    }
  }
  return by_class;
}

inline OfflineResult run_offline(const ExperimentConfig& cfg, const std::vector<Trajectory>& pool) {
  validate_config(cfg);
  std::unique_ptr<Environment> env = make_environment(cfg.env, cfg.offline.absorbing_goal);
  GroundTruthOracle oracle(*env);
  for (const Trajectory& t : pool) {
    if (t.env != env->name()) throw ConfigError("pool trajectory from '" + t.env + "' in a " + env->name() + " run");
    if (t.empty()) throw ConfigError("pool contains an empty trajectory");
  }

  OfflineResult res;
  const auto by_class = bin_pool(pool, cfg.offline.thresholds, oracle, 1.0, &res.pool_class_means);
  for (const auto& c : by_class) res.pool_class_sizes.push_back(c.size());
  std::mt19937_64 pick_rng(derive_seed(cfg.seed, 10));
  RatingDataset clean = balanced_offline_dataset(by_class, cfg.offline.per_class, pick_rng);
  if (cfg.offline.noise > 0.0) {
    std::mt19937_64 noise_rng(derive_seed(cfg.seed, 11));
    RatingDataset noisy(clean.class_count());
    const int n = static_cast<int>(clean.class_count());
    for (std::size_t k = 0; k < clean.class_count(); ++k) {
      for (const Trajectory& t : clean.members(k)) {
        noisy.insert(t, static_cast<std::size_t>(inject_noise(cfg.offline.noise, static_cast<int>(k), n, noise_rng)));
      }
    }
    res.dataset = std::move(noisy);
  } else {
    res.dataset = std::move(clean);
  }

  res.ensemble = detail::fresh_ensemble(*env, cfg.offline.preset, cfg.model.ensemble_size, derive_seed(cfg.seed, 5));
  if (cfg.reward != RewardSource::ground_truth && cfg.offline.reward_updates > 0) {
    RewardTrainingConfig training = cfg.training();
    training.regularization = cfg.offline.regularization;
    if (training.ood_weight > 0.0) training.ood_sampler = ood_sampler(*env);
    const auto [train_set, kept] = res.dataset.compacted();
    if (train_set.class_count() < 2) throw ConfigError("offline dataset has fewer than two non-empty classes");
    res.losses = train_reward(train_set, res.ensemble, cfg.offline.reward_updates, training, derive_seed(cfg.seed, 6));
    if (cfg.model.standardize) detail::standardize(res.ensemble, train_set);
  }

  // Fresh environment seed for the downstream agent.
  const std::uint64_t agent_seed = derive_seed(cfg.seed, 0xA6E7);
  Learner learner(*env, cfg.agent, cfg.offline.agent_env_steps, derive_seed(agent_seed, 2));
  ReplayBuffer replay(cfg.agent.replay_capacity);
  const RewardEnsemble& frozen = res.ensemble;
  RewardFn reward;
  if (cfg.reward == RewardSource::ground_truth) {
    reward = [&oracle](const Step& s) { return oracle.reward(AccessRole::control, s); };
  } else {
    reward = [&frozen](const Step& s) { return frozen.reward(s); };
  }
  AgentLoop loop(*env, oracle, learner, replay, reward, agent_seed, cfg.offline.updates_per_step);
  while (loop.env_steps() < cfg.offline.agent_env_steps) loop.episode(res.dataset.size(), 1);
  res.log = loop.log();

  if (pool.size() >= 2) {
    std::vector<double> truth;
    std::vector<double> pred;
    for (const Trajectory& t : pool) {
      truth.push_back(oracle.trajectory_return(AccessRole::metrics, t, cfg.model.gamma));
      pred.push_back(predicted_return(res.ensemble, t, cfg.model.gamma));
    }
    res.pool_tac = tac(truth, pred);
  }
  res.agent_ground_truth_accesses = oracle.accesses(AccessRole::agent);
  return res;
}

// -- pool generation -------------------------------------------------------

struct PoolResult {
  std::vector<Trajectory> pool;  // with hidden rewards attached
  std::vector<std::size_t> cell_counts;
  RunLog controller_log;
  std::size_t episodes_tried = 0;
  bool complete = false;
};

// Trains a controller on ground truth, then rolls it out with a random
// exploration rate per episode until every return cell under
// pool.thresholds holds pool.per_class trajectories.
inline PoolResult gen_pool(const ExperimentConfig& cfg) {
  validate_config(cfg);
  std::unique_ptr<Environment> env = make_environment(cfg.env, cfg.offline.absorbing_goal);
  GroundTruthOracle oracle(*env);
  const std::uint64_t seed = derive_seed(cfg.seed, 0x9001);
  Learner learner(*env, cfg.agent, cfg.pool.controller_steps, derive_seed(seed, 2));
  ReplayBuffer replay(cfg.agent.replay_capacity);
  AgentLoop loop(*env, oracle, learner, replay,
                 [&oracle](const Step& s) { return oracle.reward(AccessRole::control, s); }, seed,
                 cfg.offline.updates_per_step);
  while (loop.env_steps() < cfg.pool.controller_steps) loop.episode(0, 0);

  PoolResult res;
  res.controller_log = loop.log();
  const auto& cells = cfg.pool.thresholds;
  res.cell_counts.assign(cells.size() - 1, 0);
  std::mt19937_64 rng(derive_seed(seed, 12));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::uint64_t env_seed = derive_seed(seed, 13);
  const auto full = [&] {
    for (std::size_t c : res.cell_counts) {
      if (c < cfg.pool.per_class) return false;
    }
    return true;
  };
  while (!full() && res.episodes_tried < cfg.pool.max_episodes) {
    const double eps = u(rng);
    Trajectory t = evaluation_episode(*env, learner, eps, derive_seed(env_seed, res.episodes_tried), rng,
                                      res.episodes_tried);
    ++res.episodes_tried;
    const double g = oracle.trajectory_return(AccessRole::teacher, t, 1.0);
    const auto k = static_cast<std::size_t>(rate(cells, g));
    if (res.cell_counts[k] >= cfg.pool.per_class) continue;
    ++res.cell_counts[k];
    res.pool.push_back(oracle.annotate(AccessRole::teacher, std::move(t)));
  }
  res.complete = full();
  return res;
}

// -- outputs ---------------------------------------------------------------

inline nlohmann::json online_summary(const OnlineResult& r) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const SessionRecord& s : r.sessions) {
    sessions.push_back({{"session", s.session},
                        {"env_steps", s.env_steps},
                        {"requested", s.requested},
                        {"rated", s.rated},
                        {"skipped", s.skipped},
                        {"classes", s.classes},
                        {"trained", s.trained},
                        {"ensemble_version", s.ensemble_version}});
  }
  nlohmann::json j = {{"episodes", r.log.episodes.size()},
                      {"env_steps", r.log.episodes.empty() ? 0 : r.log.episodes.back().env_steps},
                      {"teacher_ratings", r.teacher_ratings},
                      {"scheduled_sessions", r.scheduled_sessions},
                      {"ensemble_version", r.ensemble_version},
                      {"agent_ground_truth_accesses", r.agent_ground_truth_accesses},
                      {"relabel_max_error", r.relabel_max_error},
                      {"class_history", r.dataset.class_history()},
                      {"final_thresholds", r.final_thresholds},
                      {"sessions", sessions}};
  if (!r.log.episodes.empty()) j["final_return_mean"] = tail_mean(r.log.returns(), std::min<std::size_t>(100, r.log.episodes.size()));
  if (std::isfinite(r.held_out_tac)) j["held_out_tac"] = r.held_out_tac;
  return j;
}

inline nlohmann::json offline_summary(const OfflineResult& r) {
  nlohmann::json j = {{"episodes", r.log.episodes.size()},
                      {"dataset_size", r.dataset.size()},
                      {"pool_class_sizes", r.pool_class_sizes},
                      {"agent_ground_truth_accesses", r.agent_ground_truth_accesses}};
  nlohmann::json means = nlohmann::json::array();
  for (double m : r.pool_class_means) {
    if (std::isfinite(m)) {
      means.push_back(m);
    } else {
      means.push_back(nullptr);
    }
  }
  j["pool_class_means"] = means;
  if (!r.log.episodes.empty()) j["final_return_mean"] = tail_mean(r.log.returns(), std::min<std::size_t>(100, r.log.episodes.size()));
  if (std::isfinite(r.pool_tac)) j["pool_tac"] = r.pool_tac;
  return j;
}

namespace detail {

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir, ec.message());
  return std::filesystem::path(dir);
}

}  // namespace detail

// log.csv, manifest.json, ensemble.json, losses.jsonl, dataset.json.
inline void write_online_outputs(const ExperimentConfig& cfg, const OnlineResult& r, const std::string& command) {
  const auto dir = detail::prepare_dir(cfg.output_dir);
  export_csv(r.log, (dir / "log.csv").string());
  export_manifest(make_manifest(command, config_to_json(cfg), online_summary(r)), (dir / "manifest.json").string());
  save_checkpoint((dir / "ensemble.json").string(), r.ensemble);
  write_loss_history((dir / "losses.jsonl").string(), r.losses);
  write_json_file((dir / "dataset.json").string(), dataset_to_json(r.dataset, false));
}

inline void write_offline_outputs(const ExperimentConfig& cfg, const OfflineResult& r) {
  const auto dir = detail::prepare_dir(cfg.output_dir);
  export_csv(r.log, (dir / "log.csv").string());
  export_manifest(make_manifest("run-offline", config_to_json(cfg), offline_summary(r)),
                  (dir / "manifest.json").string());
  save_checkpoint((dir / "ensemble.json").string(), r.ensemble);
  write_loss_history((dir / "losses.jsonl").string(), r.losses);
}

}  // namespace rankreward
