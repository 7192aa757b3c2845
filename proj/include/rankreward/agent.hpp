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

// Replay-based learners that only ever see rewards stored in their replay
// buffer: a tabular Q-learner for discrete grids and a compact
// squashed-Gaussian actor-critic for continuous control.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "rankreward/errors.hpp"
#include "rankreward/nn.hpp"
#include "rankreward/reward_model.hpp"

namespace rankreward {

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  std::vector<double> next_state;
  bool terminal = false;  // true only for absorbing states, not time limits
  double reward = 0.0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity_ == 0) throw ArgumentError("ReplayBuffer: capacity must be positive");
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  // i-th entry in insertion order.
  const Transition& at(std::size_t i) const { return data_.at((head_ + i) % data_.size()); }
  const Transition& raw(std::size_t slot) const { return data_[slot]; }

  // Rewrites every stored reward with `reward` and returns the count.
  template <StepReward R>
  std::size_t relabel(const R& reward) {
    for (Transition& t : data_) t.reward = reward.reward(Step{t.state, t.action});
    return data_.size();
  }

  std::vector<std::size_t> sample_slots(std::size_t batch, std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> d(0, data_.size() - 1);
    std::vector<std::size_t> out(batch);
    for (auto& s : out) s = d(rng);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

// Linear annealing from `start` to `end` over `steps` calls.
struct LinearSchedule {
  double start = 1.0;
  double end = 0.05;
  std::size_t steps = 10000;
  double at(std::size_t t) const {
    if (steps == 0 || t >= steps) return end;
    return start + (end - start) * static_cast<double>(t) / static_cast<double>(steps);
  }
};

struct QConfig {
  double gamma = 0.99;
  double learning_rate = 0.1;
  LinearSchedule epsilon;
  std::size_t batch_size = 32;
};

// Tabular Q-learning over an indexed state space with replayed updates.
class QAgent {
 public:
  using StateIndex = std::function<std::size_t(const std::vector<double>&)>;

  QAgent(std::size_t states, std::size_t actions, StateIndex index, QConfig cfg = {})
      : states_(states), actions_(actions), index_(std::move(index)), cfg_(cfg), q_(states * actions, 0.0) {
    if (states_ == 0 || actions_ == 0) throw ArgumentError("QAgent: empty state or action space");
  }

  const QConfig& config() const { return cfg_; }
  double q(std::size_t s, std::size_t a) const { return q_[s * actions_ + a]; }
  void set_q(std::size_t s, std::size_t a, double v) { q_[s * actions_ + a] = v; }
  const std::vector<double>& table() const { return q_; }
  double epsilon(std::size_t step) const { return cfg_.epsilon.at(step); }

  std::size_t greedy(std::size_t s) const {
    const double* row = q_.data() + s * actions_;
    return static_cast<std::size_t>(std::max_element(row, row + actions_) - row);
  }

  // Epsilon-greedy at the annealed rate for `step` when exploring.
  std::vector<double> act(const std::vector<double>& state, bool explore, std::size_t step,
                          std::mt19937_64& rng) const {
    return {static_cast<double>(act_index(index_(state), explore ? epsilon(step) : 0.0, rng))};
  }

  std::size_t act_index(std::size_t s, double eps, std::mt19937_64& rng) const {
    if (eps > 0.0) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(rng) < eps) {
        std::uniform_int_distribution<std::size_t> d(0, actions_ - 1);
        return d(rng);
      }
    }
    return greedy(s);
  }

  // One sweep of TD(0) updates over a sampled batch. Returns false when the
  // buffer holds fewer than batch_size transitions.
  bool update(const ReplayBuffer& buffer, std::mt19937_64& rng) {
    if (buffer.size() < cfg_.batch_size || buffer.size() == 0) return false;
    for (std::size_t slot : buffer.sample_slots(cfg_.batch_size, rng)) td_update(buffer.raw(slot));
    return true;
  }

  void td_update(const Transition& t) {
    const std::size_t s = index_(t.state);
    const auto a = static_cast<std::size_t>(t.action[0]);
    double target = t.reward;
    if (!t.terminal) {
      const std::size_t ns = index_(t.next_state);
      const double* row = q_.data() + ns * actions_;
      target += cfg_.gamma * *std::max_element(row, row + actions_);
    }
    double& v = q_[s * actions_ + a];
    v += cfg_.learning_rate * (target - v);
  }

 private:
  std::size_t states_;
  std::size_t actions_;
  StateIndex index_;
  QConfig cfg_;
  std::vector<double> q_;
};

struct ActorCriticConfig {
  std::size_t hidden = 64;
  double gamma = 0.99;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha = 0.1;  // fixed entropy weight
  double tau = 0.005;
  std::size_t batch_size = 64;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
};

// Twin critics with Polyak-averaged targets and a tanh-squashed Gaussian
// actor, entropy weight held fixed.
class ActorCritic {
 public:
  ActorCritic(std::size_t state_dim, std::size_t action_dim, std::uint64_t seed, ActorCriticConfig cfg = {})
      : sdim_(state_dim),
        adim_(action_dim),
        cfg_(cfg),
        actor_(state_dim, layers(cfg.hidden, 2 * action_dim)),
        q1_(state_dim + action_dim, layers(cfg.hidden, 1)),
        q2_(state_dim + action_dim, layers(cfg.hidden, 1)) {
    std::seed_seq seq{seed, std::uint64_t{0xac}};
    std::array<std::uint64_t, 3> s{};
    seq.generate(s.begin(), s.end());
    actor_.initialize(s[0]);
    q1_.initialize(s[1]);
    q2_.initialize(s[2]);
    q1_target_ = q1_;
    q2_target_ = q2_;
  }

  const ActorCriticConfig& config() const { return cfg_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic(int i) const { return i == 0 ? q1_ : q2_; }
  const Mlp& target_critic(int i) const { return i == 0 ? q1_target_ : q2_target_; }

  std::vector<double> act(const std::vector<double>& state, bool explore, std::mt19937_64& rng) const {
    Mlp::Tape tape;
    actor_.forward(state, tape);
    const auto out = tape.output();
    std::vector<double> a(adim_);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < adim_; ++i) {
      double u = out[i];
      if (explore) u += std::exp(clamp_log_std(out[adim_ + i])) * n(rng);
      a[i] = std::tanh(u);
    }
    return a;
  }

  double q_value(const std::vector<double>& s, const std::vector<double>& a) const {
    std::vector<double> x = concat(s, a);
    return std::min(q1_.forward(x)[0], q2_.forward(x)[0]);
  }

  bool update(const ReplayBuffer& buffer, std::mt19937_64& rng) {
    if (buffer.size() < cfg_.batch_size || buffer.size() == 0) return false;
    const std::vector<std::size_t> slots = buffer.sample_slots(cfg_.batch_size, rng);
    const double inv_b = 1.0 / static_cast<double>(slots.size());
    std::normal_distribution<double> n(0.0, 1.0);
    Mlp::Tape tape;
    Mlp::Tape t1;
    Mlp::Tape t2;

    // Critic regression toward the soft Bellman target.
    for (std::size_t slot : slots) {
      const Transition& tr = buffer.raw(slot);
      double target = tr.reward;
      if (!tr.terminal) {
        const Sample nxt = sample(tr.next_state, n, rng, tape);
        const std::vector<double> xn = concat(tr.next_state, nxt.action);
        const double qn = std::min(q1_target_.forward(xn)[0], q2_target_.forward(xn)[0]);
        target += cfg_.gamma * (qn - cfg_.alpha * nxt.log_prob);
      }
      const std::vector<double> x = concat(tr.state, tr.action);
      q1_.forward(x, t1);
      q2_.forward(x, t2);
      const double u1[1] = {2.0 * (t1.output()[0] - target) * inv_b};
      const double u2[1] = {2.0 * (t2.output()[0] - target) * inv_b};
      q1_.backward(t1, u1);
      q2_.backward(t2, u2);
    }
    q1_.adam_step(cfg_.critic_lr);
    q2_.adam_step(cfg_.critic_lr);

    // Actor: minimize alpha log pi(a|s) - min_i Q_i(s, a), reparameterized.
    std::vector<double> dq;
    std::vector<double> up(2 * adim_);
    for (std::size_t slot : slots) {
      const Transition& tr = buffer.raw(slot);
      actor_.forward(tr.state, tape);
      const auto out = tape.output();
      std::vector<double> u(adim_);
      std::vector<double> a(adim_);
      std::vector<double> xi(adim_);
      std::vector<double> sigma(adim_);
      for (std::size_t i = 0; i < adim_; ++i) {
        xi[i] = n(rng);
        sigma[i] = std::exp(clamp_log_std(out[adim_ + i]));
        u[i] = out[i] + sigma[i] * xi[i];
        a[i] = std::tanh(u[i]);
      }
      const std::vector<double> x = concat(tr.state, a);
      q1_.forward(x, t1);
      q2_.forward(x, t2);
      Mlp& qmin = t1.output()[0] <= t2.output()[0] ? q1_ : q2_;
      const Mlp::Tape& tmin = &qmin == &q1_ ? t1 : t2;
      const double one[1] = {1.0};
      qmin.backward(tmin, one, &dq);
      for (std::size_t i = 0; i < adim_; ++i) {
        const double k = 1.0 - a[i] * a[i];
        const double dlogp_du = 2.0 * a[i] * k / (k + kSquashEps);
        const double dl_du = cfg_.alpha * dlogp_du - dq[sdim_ + i] * k;
        up[i] = dl_du * inv_b;
        const double raw = out[adim_ + i];
        const bool inside = raw > cfg_.log_std_min && raw < cfg_.log_std_max;
        up[adim_ + i] = inside ? (-cfg_.alpha + dl_du * sigma[i] * xi[i]) * inv_b : 0.0;
      }
      actor_.backward(tape, up);
    }
    q1_.zero_grad();
    q2_.zero_grad();
    actor_.adam_step(cfg_.actor_lr);

    q1_target_.soft_update_from(q1_, cfg_.tau);
    q2_target_.soft_update_from(q2_, cfg_.tau);
    return true;
  }

 private:
  static constexpr double kSquashEps = 1e-6;

  struct Sample {
    std::vector<double> action;
    double log_prob = 0.0;
  };

  static std::vector<LayerSpec> layers(std::size_t hidden, std::size_t out) {
    return {{hidden, Activation::relu}, {hidden, Activation::relu}, {out, Activation::identity}};
  }

  static std::vector<double> concat(const std::vector<double>& s, const std::vector<double>& a) {
    std::vector<double> x(s);
    x.insert(x.end(), a.begin(), a.end());
    return x;
  }

  double clamp_log_std(double v) const { return std::clamp(v, cfg_.log_std_min, cfg_.log_std_max); }

  Sample sample(const std::vector<double>& s, std::normal_distribution<double>& n, std::mt19937_64& rng,
                Mlp::Tape& tape) const {
    actor_.forward(s, tape);
    const auto out = tape.output();
    Sample r;
    r.action.resize(adim_);
    for (std::size_t i = 0; i < adim_; ++i) {
      const double ls = clamp_log_std(out[adim_ + i]);
      const double xi = n(rng);
      const double a = std::tanh(out[i] + std::exp(ls) * xi);
      r.action[i] = a;
      r.log_prob += -0.5 * xi * xi - ls - 0.5 * std::log(2.0 * std::numbers::pi) -
                    std::log(1.0 - a * a + kSquashEps);
    }
    return r;
  }

  std::size_t sdim_;
  std::size_t adim_;
  ActorCriticConfig cfg_;
  Mlp actor_;
  Mlp q1_;
  Mlp q2_;
  Mlp q1_target_;
  Mlp q2_target_;
};

}  // namespace rankreward
