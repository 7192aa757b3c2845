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


#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rankreward/agent.hpp"
#include "rankreward/envs.hpp"

namespace rankreward {
namespace {

struct ConstantReward {
  double value = 0.5;
  double reward(const Step&) const { return value; }
};

struct StateSum {
  double reward(const Step& s) const { return s.state[0] + s.action[0]; }
};

QAgent grid_agent(QConfig cfg = {}) {
  GridNav g;
  return QAgent(g.state_count(), 4, [](const std::vector<double>& s) { return GridNav{}.state_index(s); }, cfg);
}

std::vector<double> params(const Mlp& m) { return {m.parameters().begin(), m.parameters().end()}; }

TEST(QAgent, GreedyPicksUniqueArgmax) {
  QAgent a = grid_agent();
  a.set_q(0, 2, 1.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.act(GridNav::encode_cell(0, 0), false, 0, rng)[0], 2.0);
}

TEST(QAgent, FullExplorationIsUniform) {
  QAgent a = grid_agent();
  a.set_q(0, 2, 1.0);
  std::mt19937_64 rng(2);
  std::vector<int> counts(4);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[a.act_index(0, 1.0, rng)];
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(draws), 0.25, 0.02);
}

TEST(QAgent, EpsilonAnneals) {
  const LinearSchedule s{1.0, 0.05, 100};
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_NEAR(s.at(50), 0.525, 1e-12);
  EXPECT_EQ(s.at(100), 0.05);
  EXPECT_EQ(s.at(1000), 0.05);
}

TEST(QAgent, TdFixedPointWithoutDiscount) {
  QConfig cfg;
  cfg.gamma = 0.0;
  cfg.batch_size = 1;
  QAgent a = grid_agent(cfg);
  ReplayBuffer b;
  b.push({GridNav::encode_cell(3, 3), {1.0}, GridNav::encode_cell(3, 2), false, 1.0});
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) ASSERT_TRUE(a.update(b, rng));
  EXPECT_NEAR(a.q(27, 1), 1.0, 1e-3);
}

TEST(QAgent, TerminalTransitionsDoNotBootstrap) {
  QConfig cfg;
  cfg.learning_rate = 1.0;
  QAgent a = grid_agent(cfg);
  a.set_q(63, 0, 10.0);
  a.td_update({GridNav::encode_cell(7, 6), {0.0}, GridNav::encode_cell(7, 7), true, 1.0});
  EXPECT_EQ(a.q(55, 0), 1.0);
  a.td_update({GridNav::encode_cell(7, 6), {0.0}, GridNav::encode_cell(7, 7), false, 1.0});
  EXPECT_NEAR(a.q(55, 0), 1.0 + 0.99 * 10.0, 1e-12);
}

TEST(QAgent, ZeroLearningRateLeavesTable) {
  QConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 4;
  QAgent a = grid_agent(cfg);
  ReplayBuffer b;
  for (int i = 0; i < 10; ++i) b.push({GridNav::encode_cell(0, 0), {1.0}, GridNav::encode_cell(0, 0), false, 5.0});
  std::mt19937_64 rng(4);
  EXPECT_TRUE(a.update(b, rng));
  for (double v : a.table()) EXPECT_EQ(v, 0.0);
}

TEST(QAgent, UnderfilledBufferSkips) {
  QAgent a = grid_agent();
  ReplayBuffer b;
  std::mt19937_64 rng(5);
  EXPECT_FALSE(a.update(b, rng));
  b.push({GridNav::encode_cell(0, 0), {1.0}, GridNav::encode_cell(0, 0), false, 5.0});
  EXPECT_FALSE(a.update(b, rng));
}

TEST(QAgent, DeterministicGivenSeedAndBuffer) {
  ReplayBuffer b;
  std::mt19937_64 fill(6);
  for (int i = 0; i < 500; ++i) {
    const int x = static_cast<int>(fill() % 8);
    const int y = static_cast<int>(fill() % 8);
    b.push({GridNav::encode_cell(x, y), {static_cast<double>(fill() % 4)}, GridNav::encode_cell(y, x), false,
            static_cast<double>(fill() % 7) / 7.0});
  }
  QAgent a1 = grid_agent();
  QAgent a2 = grid_agent();
  std::mt19937_64 r1(7);
  std::mt19937_64 r2(7);
  for (int i = 0; i < 200; ++i) {
    a1.update(b, r1);
    a2.update(b, r2);
  }
  EXPECT_EQ(a1.table(), a2.table());
}

TEST(ReplayBuffer, EvictsOldestAndKeepsOrder) {
  ReplayBuffer b(3);
  for (int i = 0; i < 5; ++i) b.push({{static_cast<double>(i)}, {0.0}, {0.0}, false, 0.0});
  EXPECT_EQ(b.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(b.at(i).state[0], static_cast<double>(i + 2));
  EXPECT_THROW(ReplayBuffer(0), ArgumentError);
}

TEST(Relabel, ConstantStubAndCount) {
  ReplayBuffer b(20000);
  for (int i = 0; i < 10000; ++i) b.push({{i * 1e-4}, {0.0}, {0.0}, false, -3.0});
  EXPECT_EQ(b.relabel(ConstantReward{0.5}), 10000u);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.at(i).reward, 0.5);
}

TEST(Relabel, Idempotent) {
  ReplayBuffer b;
  for (int i = 0; i < 50; ++i) b.push({{i * 0.1}, {1.0}, {0.0}, false, 0.0});
  b.relabel(StateSum{});
  std::vector<double> first;
  for (std::size_t i = 0; i < b.size(); ++i) first.push_back(b.at(i).reward);
  b.relabel(StateSum{});
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.at(i).reward, first[i]);
  EXPECT_DOUBLE_EQ(first[3], 1.3);
}

TEST(ActorCritic, ActionsStayInsideForceBounds) {
  ActorCritic ac(4, 2, 1);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    for (double a : ac.act({n(rng), n(rng), n(rng), n(rng)}, i % 2 == 0, rng)) {
      EXPECT_GE(a, -1.0);
      EXPECT_LE(a, 1.0);
    }
  }
}

TEST(ActorCritic, GreedyIsDeterministic) {
  ActorCritic ac(4, 2, 3);
  std::mt19937_64 r1(1);
  std::mt19937_64 r2(2);
  EXPECT_EQ(ac.act({0.1, 0.2, 0.3, 0.4}, false, r1), ac.act({0.1, 0.2, 0.3, 0.4}, false, r2));
}

ReplayBuffer bandit_buffer(std::size_t n, std::uint64_t seed) {
  // One state, reward equal to the first action component, episodes of one
  // step.
  ReplayBuffer b;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> a{u(rng), u(rng)};
    b.push({{0.0, 0.0}, a, {0.0, 0.0}, true, a[0]});
  }
  return b;
}

TEST(ActorCritic, ZeroLearningRatesLeaveNetworks) {
  ActorCriticConfig cfg;
  cfg.actor_lr = 0.0;
  cfg.critic_lr = 0.0;
  ActorCritic ac(2, 2, 4, cfg);
  const auto actor = params(ac.actor());
  const auto critic = params(ac.critic(0));
  const ReplayBuffer b = bandit_buffer(200, 1);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(ac.update(b, rng));
  EXPECT_EQ(params(ac.actor()), actor);
  EXPECT_EQ(params(ac.critic(0)), critic);
}

TEST(ActorCritic, DeterministicGivenSeedAndBuffer) {
  const ReplayBuffer b = bandit_buffer(300, 2);
  ActorCritic a1(2, 2, 9);
  ActorCritic a2(2, 2, 9);
  std::mt19937_64 r1(3);
  std::mt19937_64 r2(3);
  for (int i = 0; i < 20; ++i) {
    a1.update(b, r1);
    a2.update(b, r2);
  }
  EXPECT_EQ(params(a1.actor()), params(a2.actor()));
  EXPECT_EQ(params(a1.critic(1)), params(a2.critic(1)));
  EXPECT_EQ(params(a1.target_critic(0)), params(a2.target_critic(0)));
}

TEST(ActorCritic, LearnsToMaximizeBanditReward) {
  const ReplayBuffer b = bandit_buffer(2000, 5);
  ActorCriticConfig cfg;
  cfg.actor_lr = 1e-3;
  cfg.critic_lr = 1e-3;
  ActorCritic ac(2, 2, 11, cfg);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1500; ++i) ac.update(b, rng);
  const auto a = ac.act({0.0, 0.0}, false, rng);
  EXPECT_GT(a[0], 0.5);
  EXPECT_NEAR(ac.q_value({0.0, 0.0}, {0.8, 0.0}), 0.8, 0.15);
}

TEST(ActorCritic, UnderfilledBufferSkips) {
  ActorCritic ac(2, 2, 1);
  const ReplayBuffer b = bandit_buffer(10, 1);
  std::mt19937_64 rng(1);
  EXPECT_FALSE(ac.update(b, rng));
}

}  // namespace
}  // namespace rankreward
