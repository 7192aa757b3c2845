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

// Small deterministic environments. The reward is private to the
// environment; the agent-facing step result carries only the next state and
// the done flag, and the reward is read through GroundTruthOracle, which
// counts accesses per caller role.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/reward_model.hpp"

namespace rankreward {

struct StepResult {
  std::vector<double> state;
  bool done = false;
  // Absorbing end (as opposed to the time limit).
  bool terminal = false;
};

class GroundTruthOracle;

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual std::size_t horizon() const = 0;
  // Replay hints for renderers.
  virtual nlohmann::json render_hints() const = 0;
  // Number of distinct states and the index of a state, for tabular
  // agents; 0 when the state space is continuous.
  virtual std::size_t state_count() const { return 0; }
  virtual std::size_t state_index(const std::vector<double>&) const {
    throw StateError(name() + " has no discrete state index");
  }

  InputEncoder encoder() const { return InputEncoder(state_dim(), action_space()); }

  std::vector<double> reset(std::uint64_t seed) {
    t_ = 0;
    done_ = false;
    state_ = initial_state(seed);
    active_ = true;
    return state_;
  }

  StepResult step(const std::vector<double>& action) {
    if (!active_) throw StateError(name() + ": step before reset");
    if (done_) throw StateError(name() + ": step after episode end");
    check_action(action);
    bool terminal = false;
    state_ = transition(state_, action, terminal);
    ++t_;
    done_ = terminal || t_ >= horizon();
    return {state_, done_, terminal};
  }

  const std::vector<double>& state() const { return state_; }
  std::size_t elapsed() const { return t_; }
  bool done() const { return done_; }

 protected:
  virtual std::vector<double> initial_state(std::uint64_t seed) const = 0;
  virtual std::vector<double> transition(const std::vector<double>& s, const std::vector<double>& a,
                                         bool& terminal) const = 0;
  // r(s, a).
  virtual double hidden_reward(const std::vector<double>& s, const std::vector<double>& a) const = 0;

  void check_action(const std::vector<double>& a) const {
    const ActionSpace sp = action_space();
    if (sp.kind == ActionSpace::Kind::discrete) {
      if (a.size() != 1 || a[0] < 0 || a[0] >= static_cast<double>(sp.size) || a[0] != std::floor(a[0])) {
        throw ArgumentError(name() + ": action outside the discrete action space");
      }
    } else {
      if (a.size() != sp.size) throw ArgumentError(name() + ": action has wrong dimension");
      for (double x : a) {
        if (!(x >= -1.0 && x <= 1.0)) throw ArgumentError(name() + ": action component outside [-1, 1]");
      }
    }
  }

  friend class GroundTruthOracle;

 private:
  std::vector<double> state_;
  std::size_t t_ = 0;
  bool done_ = false;
  bool active_ = false;
};

// 8x8 grid, start (0,0), goal (7,7), two wall segments. Moves into walls or
// off the grid leave the position unchanged. Entering the goal pays +1 and
// ends the episode; every other step pays `step_penalty`. Success after L
// steps returns 1.01 - 0.01 L (shortest path 14, so at most 0.87); failure
// returns -1.
class GridNav final : public Environment {
 public:
  static constexpr int kSize = 8;
  enum Action { up = 0, down = 1, right = 2, left = 3 };

  // With `absorbing_goal` the goal holds the agent at zero reward until the
  // horizon instead of ending the episode, so every episode has the same
  // length.
  explicit GridNav(double step_penalty = -0.01, std::size_t horizon = 100, bool absorbing_goal = false)
      : penalty_(step_penalty), horizon_(horizon), absorbing_(absorbing_goal) {}

  bool absorbing_goal() const { return absorbing_; }

  std::string name() const override { return "grid-nav"; }
  std::size_t state_dim() const override { return 2; }
  ActionSpace action_space() const override { return {ActionSpace::Kind::discrete, 4}; }
  std::size_t horizon() const override { return horizon_; }
  std::size_t state_count() const override { return kSize * kSize; }
  std::size_t state_index(const std::vector<double>& s) const override {
    const auto [x, y] = cell(s);
    return static_cast<std::size_t>(y * kSize + x);
  }
  nlohmann::json render_hints() const override {
    nlohmann::json walls = nlohmann::json::array();
    for (int x = 0; x < kSize; ++x) {
      for (int y = 0; y < kSize; ++y) {
        if (is_wall(x, y)) walls.push_back({x, y});
      }
    }
    return {{"kind", "grid"}, {"width", kSize}, {"height", kSize}, {"start", {0, 0}},
            {"goal", {kSize - 1, kSize - 1}}, {"walls", walls}, {"state_scale", kSize - 1}};
  }

  static bool is_wall(int x, int y) { return (x == 2 && y >= 2 && y <= 5) || (x == 5 && y >= 2 && y <= 5); }
  static std::vector<double> encode_cell(int x, int y) {
    return {static_cast<double>(x) / (kSize - 1), static_cast<double>(y) / (kSize - 1)};
  }
  static std::pair<int, int> cell(const std::vector<double>& s) {
    if (s.size() != 2) throw ArgumentError("grid-nav: state must have two coordinates");
    const int x = static_cast<int>(std::lround(s[0] * (kSize - 1)));
    const int y = static_cast<int>(std::lround(s[1] * (kSize - 1)));
    if (x < 0 || x >= kSize || y < 0 || y >= kSize) throw ArgumentError("grid-nav: state outside the grid");
    return {x, y};
  }
  static std::pair<int, int> move(int x, int y, int a) {
    int nx = x;
    int ny = y;
    switch (a) {
      case up: ++ny; break;
      case down: --ny; break;
      case right: ++nx; break;
      case left: --nx; break;
      default: throw ArgumentError("grid-nav: unknown action");
    }
    if (nx < 0 || nx >= kSize || ny < 0 || ny >= kSize || is_wall(nx, ny)) return {x, y};
    return {nx, ny};
  }
  static bool is_goal(int x, int y) { return x == kSize - 1 && y == kSize - 1; }

 protected:
  std::vector<double> initial_state(std::uint64_t) const override { return encode_cell(0, 0); }

  std::vector<double> transition(const std::vector<double>& s, const std::vector<double>& a,
                                 bool& terminal) const override {
    const auto [x, y] = cell(s);
    if (is_goal(x, y)) {
      terminal = false;
      return s;
    }
    const auto [nx, ny] = move(x, y, static_cast<int>(a[0]));
    terminal = !absorbing_ && is_goal(nx, ny);
    return encode_cell(nx, ny);
  }

  double hidden_reward(const std::vector<double>& s, const std::vector<double>& a) const override {
    const auto [x, y] = cell(s);
    if (is_goal(x, y)) return 0.0;
    const auto [nx, ny] = move(x, y, static_cast<int>(a[0]));
    return is_goal(nx, ny) ? 1.0 : penalty_;
  }

 private:
  double penalty_;
  std::size_t horizon_;
  bool absorbing_;
};

// Point mass in [-1, 1]^2 with explicit Euler integration:
// p' = p + dt v, v' = friction v + dt a. Hitting the arena edge clips the
// position and zeroes the velocity component. Reward is the negative
// distance from the current position to the target.
class PointMass final : public Environment {
 public:
  struct Config {
    double dt = 0.05;
    double friction = 0.95;
    std::size_t horizon = 200;
    std::array<double, 2> target{0.5, 0.5};
    std::array<double, 2> start_lo{-0.9, -0.9};
    std::array<double, 2> start_hi{-0.6, -0.6};
  };

  PointMass() = default;
  explicit PointMass(Config cfg) : cfg_(cfg) {}

  const Config& config() const { return cfg_; }
  std::string name() const override { return "point-mass"; }
  std::size_t state_dim() const override { return 4; }
  ActionSpace action_space() const override { return {ActionSpace::Kind::continuous, 2}; }
  std::size_t horizon() const override { return cfg_.horizon; }
  nlohmann::json render_hints() const override {
    return {{"kind", "arena"}, {"bounds", {-1.0, 1.0}}, {"target", cfg_.target}, {"dt", cfg_.dt}};
  }

 protected:
  std::vector<double> initial_state(std::uint64_t seed) const override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(cfg_.start_lo[0], cfg_.start_hi[0]);
    std::uniform_real_distribution<double> uy(cfg_.start_lo[1], cfg_.start_hi[1]);
    const double x = ux(rng);
    const double y = uy(rng);
    return {x, y, 0.0, 0.0};
  }

  std::vector<double> transition(const std::vector<double>& s, const std::vector<double>& a,
                                 bool& terminal) const override {
    terminal = false;
    std::vector<double> n(4);
    for (int i = 0; i < 2; ++i) {
      double p = s[i] + cfg_.dt * s[2 + i];
      double v = cfg_.friction * s[2 + i] + cfg_.dt * a[i];
      if (p > 1.0 || p < -1.0) {
        p = std::clamp(p, -1.0, 1.0);
        v = 0.0;
      }
      n[i] = p;
      n[2 + i] = v;
    }
    return n;
  }

  double hidden_reward(const std::vector<double>& s, const std::vector<double>&) const override {
    return -std::hypot(s[0] - cfg_.target[0], s[1] - cfg_.target[1]);
  }

 private:
  Config cfg_;
};

inline std::unique_ptr<Environment> make_environment(const std::string& name, bool absorbing_goal = false) {
  if (name == "grid-nav") return std::make_unique<GridNav>(-0.01, 100, absorbing_goal);
  if (name == "point-mass") return std::make_unique<PointMass>();
  throw ConfigError("unknown environment '" + name + "'");
}

enum class AccessRole { teacher, metrics, control, agent };

// Sole reader of hidden rewards. Every call names the calling role so that
// a run can assert that the agent never touched ground truth.
class GroundTruthOracle {
 public:
  explicit GroundTruthOracle(const Environment& env) : env_(&env) {}

  double reward(AccessRole role, const Step& step) const {
    count(role);
    return env_->hidden_reward(step.state, step.action);
  }

  double trajectory_return(AccessRole role, const Trajectory& traj, double gamma) const {
    if (traj.env != env_->name()) {
      throw ArgumentError("trajectory from '" + traj.env + "' given to the " + env_->name() + " oracle");
    }
    count(role);
    const std::vector<double> w = discount_weights(traj.size(), gamma);
    double g = 0.0;
    for (std::size_t t = 0; t < traj.size(); ++t) {
      g += w[t] * env_->hidden_reward(traj.steps[t].state, traj.steps[t].action);
    }
    return g;
  }

  // Copy with per-step hidden rewards attached (teacher-visible dumps).
  Trajectory annotate(AccessRole role, Trajectory traj) const {
    count(role);
    traj.true_rewards.resize(traj.size());
    for (std::size_t t = 0; t < traj.size(); ++t) {
      traj.true_rewards[t] = env_->hidden_reward(traj.steps[t].state, traj.steps[t].action);
    }
    return traj;
  }

  std::size_t accesses(AccessRole role) const { return counts_[static_cast<std::size_t>(role)].load(); }

 private:
  void count(AccessRole role) const { counts_[static_cast<std::size_t>(role)].fetch_add(1); }

  const Environment* env_;
  mutable std::array<std::atomic<std::size_t>, 4> counts_{};
};

// G(tau) = sum_t gamma^t r(s_t, a_t).
inline double ground_truth_return(const GroundTruthOracle& oracle, AccessRole role, const Trajectory& traj,
                                  double gamma) {
  return oracle.trajectory_return(role, traj, gamma);
}

}  // namespace rankreward
