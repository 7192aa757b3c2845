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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "rankreward/objectives.hpp"
#include "rankreward/reward_model.hpp"
#include "test_util.hpp"

namespace rankreward {
namespace {

using testing::relative_error;

const InputEncoder kGridEncoder(2, {ActionSpace::Kind::discrete, 4});

// Reward equal to the first state coordinate.
struct StateReward {
  double reward(const Step& s) const { return s.state[0]; }
};

Trajectory scalar_trajectory(const std::vector<double>& rewards) {
  Trajectory t;
  for (double r : rewards) t.steps.push_back({{r, 0.0}, {0.0}});
  return t;
}

Trajectory random_trajectory(std::size_t length, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> a(0, 3);
  Trajectory t;
  for (std::size_t i = 0; i < length; ++i) t.steps.push_back({{u(rng), u(rng)}, {static_cast<double>(a(rng))}});
  return t;
}

// One identity unit with zero weights and the given bias.
RewardModel constant_model(double c) {
  RewardModel m(kGridEncoder, {{1, Activation::identity}}, 0);
  std::vector<double> p(m.net().parameter_count(), 0.0);
  p.back() = c;
  m.net().set_parameters(p);
  return m;
}

std::vector<double> params_of(const RewardModel& m) {
  const auto p = m.net().parameters();
  return {p.begin(), p.end()};
}

TEST(PredictReward, ZeroWeightsGiveZero) {
  for (ModelPreset preset : {ModelPreset::medium, ModelPreset::large_offline, ModelPreset::large_online}) {
    RewardModel m = RewardModel::from_preset(kGridEncoder, preset, 1);
    m.net().set_parameters(std::vector<double>(m.net().parameter_count(), 0.0));
    EXPECT_EQ(m.reward({0.3, 0.9}, {2.0}), 0.0);
  }
}

TEST(PredictReward, BoundedPresetStaysInsideUnitInterval) {
  RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::large_online, 4);
  ASSERT_TRUE(m.bounded());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    const double r = m.reward({u(rng), u(rng)}, {static_cast<double>(i % 4)});
    EXPECT_GT(r, -1.0);
    EXPECT_LT(r, 1.0);
  }
}

TEST(PredictReward, DeterministicForFixedSeed) {
  const RewardModel a = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 42);
  const RewardModel b = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 42);
  const Step s{{0.25, 0.75}, {1.0}};
  EXPECT_EQ(a.reward(s), a.reward(s));
  EXPECT_EQ(a.reward(s), b.reward(s));
  EXPECT_EQ(params_of(a), params_of(b));
}

TEST(PredictReward, DimensionMismatchThrows) {
  const RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 1);
  EXPECT_THROW(m.reward({0.1}, {0.0}), ArgumentError);
  EXPECT_THROW(m.reward({0.1, 0.2}, {4.0}), ArgumentError);
  EXPECT_THROW(m.reward({0.1, 0.2}, {0.0, 1.0}), ArgumentError);
  EXPECT_THROW(m.reward({0.1, 0.2}, {0.5}), ArgumentError);
}

TEST(InputEncoder, OneHotForDiscreteActions) {
  EXPECT_EQ(kGridEncoder.input_dim(), 6u);
  EXPECT_EQ(kGridEncoder.encode(Step{{0.5, 0.25}, {2.0}}), (std::vector<double>{0.5, 0.25, 0, 0, 1, 0}));
  const InputEncoder cont(4, {ActionSpace::Kind::continuous, 2});
  EXPECT_EQ(cont.encode(Step{{1, 2, 3, 4}, {-0.5, 0.5}}), (std::vector<double>{1, 2, 3, 4, -0.5, 0.5}));
}

TEST(PredictedReturn, UndiscountedAndDiscountedSums) {
  const Trajectory t = scalar_trajectory({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(predicted_return(StateReward{}, t, 1.0), 6.0);
  EXPECT_DOUBLE_EQ(predicted_return(StateReward{}, t, 0.5), 2.75);
  EXPECT_THROW(predicted_return(StateReward{}, Trajectory{}, 1.0), ArgumentError);
  EXPECT_THROW(predicted_return(StateReward{}, t, 1.5), ArgumentError);
}

TEST(PredictedReturn, EnsembleOfConstants) {
  RewardEnsemble e({constant_model(1.0), constant_model(3.0)});
  const Trajectory t = scalar_trajectory({0.1, 0.2});
  EXPECT_DOUBLE_EQ(predicted_return(e, t, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(e.reward(t.steps[0]), 2.0);
}

TEST(PredictedReturnProperty, EnsembleReturnIsMeanOfMemberReturns) {
  std::mt19937_64 rng(8);
  const RewardEnsemble e = RewardEnsemble::from_layers(kGridEncoder, preset_layers(ModelPreset::medium), 3, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const Trajectory t = random_trajectory(1 + trial % 20, rng);
    const double gamma = (trial % 5) / 4.0;
    double mean = 0.0;
    for (const RewardModel& m : e.members()) mean += predicted_return(m, t, gamma) / 3.0;
    EXPECT_NEAR(predicted_return(e, t, gamma), mean, 1e-12);
    // Summing the ensemble's per-step mean gives the same value.
    EXPECT_NEAR(predicted_return<RewardEnsemble>(e, t, gamma), mean, 1e-12);
  }
}

TEST(RewardEnsemble, CalibrationAppliesToRewardsAndReturns) {
  std::mt19937_64 rng(3);
  RewardEnsemble e = RewardEnsemble::from_layers(kGridEncoder, preset_layers(ModelPreset::medium), 2, 5);
  const Trajectory t = random_trajectory(7, rng);
  const double raw = e.reward(t.steps[2]);
  e.calibrate(0.25, 2.0);
  EXPECT_DOUBLE_EQ(e.raw_reward(t.steps[2]), raw);
  EXPECT_NEAR(e.reward(t.steps[2]), (raw - 0.25) / 2.0, 1e-15);
  EXPECT_NEAR(predicted_return(e, t, 0.9), predicted_return<RewardEnsemble>(e, t, 0.9), 1e-12);
  EXPECT_THROW(e.calibrate(0.0, 0.0), ArgumentError);
  EXPECT_THROW(e.calibrate(NAN, 1.0), ArgumentError);
  EXPECT_THROW(e.calibrate(0.0, INFINITY), ArgumentError);
  EXPECT_THROW(RewardEnsemble(std::vector<RewardModel>{}), ArgumentError);
}

TEST(BackwardReturn, ZeroUpstreamLeavesGradientUnchanged) {
  std::mt19937_64 rng(2);
  RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 3);
  const Trajectory t = random_trajectory(3, rng);
  const ReturnTape tape = m.record_return(t, 0.9);
  backward_return(m, tape, 0.0);
  for (double g : m.net().gradients()) EXPECT_EQ(g, 0.0);
}

TEST(BackwardReturn, MatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (ModelPreset preset : {ModelPreset::medium, ModelPreset::large_offline, ModelPreset::large_online}) {
    RewardModel m = RewardModel::from_preset(kGridEncoder, preset, 7);
    const Trajectory t = random_trajectory(3, rng);
    const double gamma = 0.9;
    backward_return(m, m.record_return(t, gamma), 1.0);
    const auto g = m.net().gradients();
    const std::vector<double> analytic(g.begin(), g.end());
    m.zero_grad();
    const std::vector<double> theta = params_of(m);
    const auto fd = testing::numeric_gradient(
        [&](const std::vector<double>& p) {
          m.net().set_parameters(p);
          return predicted_return(m, t, gamma);
        },
        theta);
    m.net().set_parameters(theta);
    EXPECT_LT(relative_error(analytic, fd), 1e-4) << to_string(preset);
  }
}

TEST(BackwardReturn, AccumulationIsAdditive) {
  std::mt19937_64 rng(4);
  RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 3);
  const Trajectory t = random_trajectory(5, rng);
  const ReturnTape tape = m.record_return(t, 1.0);
  backward_return(m, tape, 0.7);
  backward_return(m, tape, -0.2);
  const auto two = m.net().gradients();
  const std::vector<double> split(two.begin(), two.end());
  m.zero_grad();
  backward_return(m, tape, 0.5);
  const auto one = m.net().gradients();
  for (std::size_t i = 0; i < split.size(); ++i) EXPECT_NEAR(split[i], one[i], 1e-14);
}

TEST(BackwardReturn, MissingOrStaleTapeIsStateError) {
  std::mt19937_64 rng(4);
  RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 3);
  EXPECT_THROW(backward_return(m, ReturnTape{}, 1.0), StateError);
  const ReturnTape tape = m.record_return(random_trajectory(2, rng), 1.0);
  backward_return(m, tape, 1.0);
  m.optimizer_step(1e-3);
  EXPECT_THROW(backward_return(m, tape, 1.0), StateError);
}

TEST(OptimizerStep, ZeroGradientLeavesParameters) {
  RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 3);
  const auto before = params_of(m);
  m.optimizer_step(1e-2);
  EXPECT_EQ(params_of(m), before);
  EXPECT_EQ(m.net().step_count(), 1u);
}

TEST(OptimizerStep, ConstantGradientMovesByLearningRate) {
  Mlp net(1, {{1, Activation::identity}});
  net.set_parameters(std::vector<double>{0.0, 0.0});
  const double lr = 0.01;
  for (int step = 0; step < 200; ++step) {
    const auto before = std::vector<double>(net.parameters().begin(), net.parameters().end());
    net.mutable_gradients()[0] = 3.0;
    net.mutable_gradients()[1] = -0.5;
    net.adam_step(lr);
    const auto after = net.parameters();
    EXPECT_LT(after[0], before[0]);
    EXPECT_GT(after[1], before[1]);
    // Bias-corrected moments of a constant gradient give |step| = lr up to
    // the epsilon term.
    EXPECT_NEAR(before[0] - after[0], lr, 1e-8);
    EXPECT_NEAR(after[1] - before[1], lr, 1e-8);
    for (double g : net.gradients()) EXPECT_EQ(g, 0.0);
  }
}

TEST(OptimizerStep, ZeroLearningRateLeavesParameters) {
  std::mt19937_64 rng(4);
  RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 3);
  backward_return(m, m.record_return(random_trajectory(4, rng), 1.0), 1.0);
  const auto before = params_of(m);
  m.optimizer_step(0.0);
  EXPECT_EQ(params_of(m), before);
}

TEST(OptimizerStep, NonFiniteGradientAborts) {
  RewardModel m = RewardModel::from_preset(kGridEncoder, ModelPreset::medium, 3);
  const auto before = params_of(m);
  m.net().mutable_gradients()[0] = NAN;
  EXPECT_THROW(m.optimizer_step(1e-3), NumericError);
  EXPECT_EQ(params_of(m), before);
  EXPECT_EQ(m.net().step_count(), 0u);
}

// Returns a design with `per_class` random trajectories per class whose
// first state coordinate grows with the class.
struct ToyData {
  ReturnDesign design{kGridEncoder, 1.0};
  std::vector<std::vector<std::size_t>> class_ids;
};

ToyData toy_data(std::size_t classes, std::size_t per_class, std::mt19937_64& rng) {
  ToyData d;
  d.class_ids.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) d.class_ids[k].push_back(d.design.add(random_trajectory(4, rng)));
  }
  return d;
}

// Smallest |pre-activation| of any ReLU unit over the design inputs.
// Central differences are only meaningful when this exceeds the step.
double relu_margin(const Mlp& net, const ReturnDesign& design) {
  double margin = std::numeric_limits<double>::infinity();
  const auto p = net.parameters();
  for (std::size_t id = 0; id < design.input_count(); ++id) {
    const auto in = design.input(static_cast<std::uint32_t>(id));
    std::vector<double> x(in.begin(), in.end());
    std::size_t offset = 0;
    std::size_t fan_in = net.input_dim();
    for (const LayerSpec& l : net.layers()) {
      std::vector<double> y(l.units);
      for (std::size_t o = 0; o < l.units; ++o) {
        double acc = p[offset + l.units * fan_in + o];
        for (std::size_t i = 0; i < fan_in; ++i) acc += p[offset + o * fan_in + i] * x[i];
        if (l.activation == Activation::relu) margin = std::min(margin, std::abs(acc));
        y[o] = l.activation == Activation::relu ? std::max(acc, 0.0)
               : l.activation == Activation::tanh ? std::tanh(acc)
                                                  : acc;
      }
      offset += l.units * fan_in + l.units;
      fan_in = l.units;
      x = std::move(y);
    }
  }
  return margin;
}

TEST(LossGradientCheck, EveryPresetMatchesFiniteDifferences) {
  std::mt19937_64 rng(77);
  for (ModelPreset preset : {ModelPreset::medium, ModelPreset::large_offline, ModelPreset::large_online}) {
    for (LossKind kind : {LossKind::rmse, LossKind::rbrl}) {
      RewardModel m = RewardModel::from_preset(kGridEncoder, preset, 13);
      ToyData data = toy_data(3, 4, rng);
      for (int redraw = 0; redraw < 20 && relu_margin(m.net(), data.design) < 1e-4; ++redraw) {
        data = toy_data(3, 4, rng);
      }
      ASSERT_GE(relu_margin(m.net(), data.design), 1e-4);
      const RatedBatch batch = sample_rated_batch(data.design, data.class_ids, 8, rng);
      ReturnNormalizer norm;
      norm.observe(-50.0);
      norm.observe(50.0);
      RbRLConfig cfg;
      auto loss = [&]() {
        return kind == LossKind::rmse ? rmse_loss(batch, m, 1.0).loss : rbrl_loss(batch, m, cfg, norm).loss;
      };
      m.zero_grad();
      loss();
      const auto g = m.net().gradients();
      const std::vector<double> analytic(g.begin(), g.end());
      const std::vector<double> theta = params_of(m);
      const auto fd = testing::numeric_gradient(
          [&](const std::vector<double>& p) {
            m.net().set_parameters(p);
            const double v = loss();
            m.zero_grad();
            return v;
          },
          theta);
      m.net().set_parameters(theta);
      EXPECT_LT(relative_error(analytic, fd), 1e-4) << to_string(preset) << " " << to_string(kind);
    }
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  RewardEnsemble e = RewardEnsemble::from_layers(kGridEncoder, preset_layers(ModelPreset::large_online), 3, 2);
  e.calibrate(0.125, 3.5);
  const RewardEnsemble back = ensemble_from_json(nlohmann::json::parse(ensemble_to_json(e).dump()));
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.offset(), 0.125);
  EXPECT_EQ(back.scale(), 3.5);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(params_of(back.member(i)), params_of(e.member(i)));
    EXPECT_EQ(back.member(i).net().layers(), e.member(i).net().layers());
  }
  const Step s{{0.5, 0.5}, {3.0}};
  EXPECT_EQ(back.reward(s), e.reward(s));
  EXPECT_EQ(back.encoder(), e.encoder());
}

TEST(Checkpoint, RejectsForeignSchema) {
  EXPECT_THROW(ensemble_from_json({{"schema", "other"}}), ArgumentError);
  EXPECT_THROW(model_from_json({{"schema", "other"}}), ArgumentError);
}

}  // namespace
}  // namespace rankreward
