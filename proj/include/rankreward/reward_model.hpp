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

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/nn.hpp"

namespace rankreward {

// One agent step. Discrete actions are stored as a single-element vector
// holding the action index.
struct Step {
  std::vector<double> state;
  std::vector<double> action;

  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::vector<Step> steps;
  // Hidden per-step rewards; only present in teacher-visible copies.
  std::vector<double> true_rewards;
  std::string env;
  std::uint64_t id = 0;
  std::size_t offset = 0;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
  bool has_true_rewards() const { return !true_rewards.empty(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct ActionSpace {
  enum class Kind { discrete, continuous };
  Kind kind = Kind::discrete;
  // Arity for discrete spaces, dimension for continuous ones.
  std::size_t size = 1;

  friend bool operator==(const ActionSpace&, const ActionSpace&) = default;
};

// Concatenates the state with the action; discrete actions are one-hot.
class InputEncoder {
 public:
  InputEncoder() = default;
  InputEncoder(std::size_t state_dim, ActionSpace action)
      : state_dim_(state_dim), action_(action) {
    if (state_dim_ == 0 || action_.size == 0) {
      throw ArgumentError("InputEncoder: empty state or action space");
    }
  }

  std::size_t state_dim() const { return state_dim_; }
  const ActionSpace& action_space() const { return action_; }
  std::size_t input_dim() const { return state_dim_ + action_.size; }

  void encode(const Step& step, std::span<double> out) const {
    if (step.state.size() != state_dim_) {
      throw ArgumentError("state dimension " + std::to_string(step.state.size()) +
                          " does not match model state dimension " + std::to_string(state_dim_));
    }
    for (std::size_t i = 0; i < state_dim_; ++i) out[i] = step.state[i];
    std::span<double> tail = out.subspan(state_dim_, action_.size);
    if (action_.kind == ActionSpace::Kind::discrete) {
      if (step.action.size() != 1) throw ArgumentError("discrete action must hold one index");
      const double a = step.action[0];
      if (a < 0 || a >= static_cast<double>(action_.size) || a != std::floor(a)) {
        throw ArgumentError("discrete action index out of range");
      }
      std::fill(tail.begin(), tail.end(), 0.0);
      tail[static_cast<std::size_t>(a)] = 1.0;
    } else {
      if (step.action.size() != action_.size) {
        throw ArgumentError("action dimension " + std::to_string(step.action.size()) +
                            " does not match model action dimension " + std::to_string(action_.size));
      }
      std::copy(step.action.begin(), step.action.end(), tail.begin());
    }
  }

  std::vector<double> encode(const Step& step) const {
    std::vector<double> out(input_dim());
    encode(step, out);
    return out;
  }

  friend bool operator==(const InputEncoder&, const InputEncoder&) = default;

 private:
  std::size_t state_dim_ = 0;
  ActionSpace action_;
};

// Something that maps a single step to a scalar reward.
template <class R>
concept StepReward = requires(const R& r, const Step& s) {
  { r.reward(s) } -> std::convertible_to<double>;
};

// A reward model trainable on pre-encoded inputs.
template <class M>
concept EncodedRewardModel = requires(const M& cm, M& m, std::span<const double> x, double u) {
  { cm.encoder() } -> std::convertible_to<const InputEncoder&>;
  { cm.reward_encoded(x) } -> std::convertible_to<double>;
  m.accumulate_encoded_gradient(x, u);
};

enum class ModelPreset { medium, large_offline, large_online };

inline std::string_view to_string(ModelPreset p) {
  switch (p) {
    case ModelPreset::medium: return "medium";
    case ModelPreset::large_offline: return "large_offline";
    case ModelPreset::large_online: return "large_online";
  }
  return "medium";
}

inline ModelPreset preset_from_string(std::string_view s) {
  if (s == "medium") return ModelPreset::medium;
  if (s == "large_offline") return ModelPreset::large_offline;
  if (s == "large_online") return ModelPreset::large_online;
  throw ArgumentError("unknown model preset '" + std::string(s) + "'");
}

// Hidden and output layers for a preset. Online presets squash per-step
// rewards into (-1, 1).
inline std::vector<LayerSpec> preset_layers(ModelPreset p) {
  switch (p) {
    case ModelPreset::medium:
      return {{10, Activation::relu}, {1, Activation::identity}};
    case ModelPreset::large_offline:
      return {{100, Activation::relu}, {1, Activation::identity}};
    case ModelPreset::large_online:
      return {{100, Activation::relu}, {1, Activation::tanh}};
  }
  return {};
}

inline std::vector<LayerSpec> with_final_activation(std::vector<LayerSpec> layers, Activation a) {
  layers.back().activation = a;
  return layers;
}

// Per-step records of a trajectory's forward passes for backward_return.
struct ReturnTape {
  std::vector<Mlp::Tape> steps;
  std::vector<double> weights;
  double value = 0.0;
  std::uint64_t version = 0;
  bool empty() const { return steps.empty(); }
};

inline std::vector<double> discount_weights(std::size_t length, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ArgumentError("gamma must lie in [0, 1]");
  std::vector<double> w(length);
  double g = 1.0;
  for (std::size_t t = 0; t < length; ++t) {
    w[t] = g;
    g *= gamma;
  }
  return w;
}

class RewardModel {
 public:
  RewardModel() = default;
  RewardModel(InputEncoder encoder, std::vector<LayerSpec> layers, std::uint64_t seed)
      : encoder_(encoder), net_(encoder.input_dim(), std::move(layers)) {
    if (net_.output_dim() != 1) throw ArgumentError("RewardModel: output layer must have one unit");
    net_.initialize(seed);
  }

  static RewardModel from_preset(InputEncoder encoder, ModelPreset preset, std::uint64_t seed) {
    return RewardModel(encoder, preset_layers(preset), seed);
  }

  const InputEncoder& encoder() const { return encoder_; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  bool bounded() const { return net_.layers().back().activation == Activation::tanh; }

  double reward_encoded(std::span<const double> x) const {
    thread_local Mlp::Tape scratch;
    return net_.forward_scalar(x, scratch);
  }

  double reward(const Step& step) const {
    thread_local std::vector<double> x;
    x.resize(encoder_.input_dim());
    encoder_.encode(step, x);
    return reward_encoded(x);
  }

  double reward(const std::vector<double>& state, const std::vector<double>& action) const {
    return reward(Step{state, action});
  }

  void accumulate_encoded_gradient(std::span<const double> x, double upstream) {
    if (upstream == 0.0) return;
    thread_local Mlp::Tape tape;
    net_.forward(x, tape);
    const double up[1] = {upstream};
    net_.backward(tape, up);
  }

  void accumulate_reward_gradient(const Step& step, double upstream) {
    accumulate_encoded_gradient(encoder_.encode(step), upstream);
  }

  ReturnTape record_return(const Trajectory& traj, double gamma) const {
    if (traj.empty()) throw ArgumentError("record_return: empty trajectory");
    ReturnTape tape;
    tape.weights = discount_weights(traj.size(), gamma);
    tape.steps.resize(traj.size());
    std::vector<double> x(encoder_.input_dim());
    for (std::size_t t = 0; t < traj.size(); ++t) {
      encoder_.encode(traj.steps[t], x);
      net_.forward(x, tape.steps[t]);
      tape.value += tape.weights[t] * tape.steps[t].output()[0];
    }
    tape.version = net_.version();
    return tape;
  }

  // Accumulates upstream * dG/dtheta for the trajectory recorded in `tape`.
  void backward_return(const ReturnTape& tape, double upstream) {
    if (tape.empty()) throw StateError("backward_return: no forward pass cached");
    if (tape.version != net_.version()) {
      throw StateError("backward_return: cached forward pass is stale");
    }
    if (upstream == 0.0) return;
    for (std::size_t t = 0; t < tape.steps.size(); ++t) {
      const double up[1] = {upstream * tape.weights[t]};
      net_.backward(tape.steps[t], up);
    }
  }

  void zero_grad() { net_.zero_grad(); }
  void optimizer_step(double learning_rate, const AdamConfig& cfg = {}) {
    net_.adam_step(learning_rate, cfg);
  }

 private:
  InputEncoder encoder_;
  Mlp net_;
};

// Independently initialized members; rewards are the member mean, passed
// through an optional affine calibration (r - offset) / scale that training
// never sees.
class RewardEnsemble {
 public:
  RewardEnsemble() = default;
  explicit RewardEnsemble(std::vector<RewardModel> members) : members_(std::move(members)) {
    if (members_.empty()) throw ArgumentError("RewardEnsemble: need at least one member");
    for (const RewardModel& m : members_) {
      if (m.encoder() != members_.front().encoder()) {
        throw ArgumentError("RewardEnsemble: members disagree on input encoding");
      }
    }
  }

  static RewardEnsemble from_layers(InputEncoder encoder, const std::vector<LayerSpec>& layers,
                                    std::size_t size, std::uint64_t seed) {
    std::vector<RewardModel> members;
    std::seed_seq seq{seed, static_cast<std::uint64_t>(0x5eed)};
    std::vector<std::uint64_t> seeds(size);
    seq.generate(seeds.begin(), seeds.end());
    for (std::size_t i = 0; i < size; ++i) members.emplace_back(encoder, layers, seeds[i]);
    return RewardEnsemble(std::move(members));
  }

  std::size_t size() const { return members_.size(); }
  RewardModel& member(std::size_t i) { return members_.at(i); }
  const RewardModel& member(std::size_t i) const { return members_.at(i); }
  std::vector<RewardModel>& members() { return members_; }
  const std::vector<RewardModel>& members() const { return members_; }
  const InputEncoder& encoder() const { return members_.front().encoder(); }

  double reward_encoded(std::span<const double> x) const {
    double acc = 0.0;
    for (const RewardModel& m : members_) acc += m.reward_encoded(x);
    return (acc / static_cast<double>(members_.size()) - offset_) / scale_;
  }

  // Member mean before calibration.
  double raw_reward(const Step& step) const {
    thread_local std::vector<double> x;
    x.resize(encoder().input_dim());
    encoder().encode(step, x);
    double acc = 0.0;
    for (const RewardModel& m : members_) acc += m.reward_encoded(x);
    return acc / static_cast<double>(members_.size());
  }

  void calibrate(double offset, double scale) {
    if (!std::isfinite(offset) || !(scale > 0.0) || !std::isfinite(scale)) {
      throw ArgumentError("calibrate: need a finite offset and a positive finite scale");
    }
    offset_ = offset;
    scale_ = scale;
  }
  double offset() const { return offset_; }
  double scale() const { return scale_; }

  double reward(const Step& step) const {
    thread_local std::vector<double> x;
    x.resize(encoder().input_dim());
    encoder().encode(step, x);
    return reward_encoded(x);
  }

 private:
  std::vector<RewardModel> members_;
  double offset_ = 0.0;
  double scale_ = 1.0;
};

// Discounted predicted return sum_t gamma^t r(s_t, a_t).
template <StepReward R>
double predicted_return(const R& reward, const Trajectory& traj, double gamma) {
  if (traj.empty()) throw ArgumentError("predicted_return: empty trajectory");
  const std::vector<double> w = discount_weights(traj.size(), gamma);
  double g = 0.0;
  for (std::size_t t = 0; t < traj.size(); ++t) g += w[t] * reward.reward(traj.steps[t]);
  return g;
}

// Return of the calibrated mean reward, computed from the member returns.
inline double predicted_return(const RewardEnsemble& ensemble, const Trajectory& traj, double gamma) {
  double acc = 0.0;
  for (const RewardModel& m : ensemble.members()) acc += predicted_return(m, traj, gamma);
  const std::vector<double> w = discount_weights(traj.size(), gamma);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  return (acc / static_cast<double>(ensemble.size()) - ensemble.offset() * wsum) / ensemble.scale();
}

inline void backward_return(RewardModel& model, const ReturnTape& tape, double upstream) {
  model.backward_return(tape, upstream);
}

// -- checkpoints ---------------------------------------------------------

inline constexpr const char* kCheckpointSchema = "rankreward.checkpoint/v1";
inline constexpr const char* kEnsembleSchema = "rankreward.ensemble/v1";

inline nlohmann::json encoder_to_json(const InputEncoder& e) {
  return {{"state_dim", e.state_dim()},
          {"action_kind", e.action_space().kind == ActionSpace::Kind::discrete ? "discrete" : "continuous"},
          {"action_size", e.action_space().size}};
}

inline InputEncoder encoder_from_json(const nlohmann::json& j) {
  ActionSpace a;
  const std::string kind = j.at("action_kind").get<std::string>();
  if (kind == "discrete") {
    a.kind = ActionSpace::Kind::discrete;
  } else if (kind == "continuous") {
    a.kind = ActionSpace::Kind::continuous;
  } else {
    throw ArgumentError("unknown action kind '" + kind + "'");
  }
  a.size = j.at("action_size").get<std::size_t>();
  return InputEncoder(j.at("state_dim").get<std::size_t>(), a);
}

inline nlohmann::json model_to_json(const RewardModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : m.net().layers()) {
    layers.push_back({{"units", l.units}, {"activation", std::string(to_string(l.activation))}});
  }
  const auto p = m.net().parameters();
  return {{"schema", kCheckpointSchema},
          {"encoder", encoder_to_json(m.encoder())},
          {"input_dim", m.net().input_dim()},
          {"layers", layers},
          {"parameters", std::vector<double>(p.begin(), p.end())}};
}

inline RewardModel model_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kCheckpointSchema) throw ArgumentError("not a reward-model checkpoint");
  std::vector<LayerSpec> layers;
  for (const auto& l : j.at("layers")) {
    layers.push_back({l.at("units").get<std::size_t>(),
                      activation_from_string(l.at("activation").get<std::string>())});
  }
  RewardModel m(encoder_from_json(j.at("encoder")), layers, 0);
  if (j.at("input_dim").get<std::size_t>() != m.net().input_dim()) {
    throw ArgumentError("checkpoint input_dim disagrees with its encoder");
  }
  m.net().set_parameters(j.at("parameters").get<std::vector<double>>());
  return m;
}

inline nlohmann::json ensemble_to_json(const RewardEnsemble& e) {
  nlohmann::json members = nlohmann::json::array();
  for (const RewardModel& m : e.members()) members.push_back(model_to_json(m));
  return {{"schema", kEnsembleSchema}, {"members", members}, {"offset", e.offset()}, {"scale", e.scale()}};
}

inline RewardEnsemble ensemble_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kEnsembleSchema) throw ArgumentError("not an ensemble checkpoint");
  std::vector<RewardModel> members;
  for (const auto& m : j.at("members")) members.push_back(model_from_json(m));
  RewardEnsemble e(std::move(members));
  e.calibrate(j.value("offset", 0.0), j.value("scale", 1.0));
  return e;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open for reading");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, e.what());
  }
}

inline void save_checkpoint(const std::string& path, const RewardEnsemble& e) {
  write_json_file(path, ensemble_to_json(e));
}

inline RewardEnsemble load_checkpoint(const std::string& path) {
  return ensemble_from_json(read_json_file(path));
}

}  // namespace rankreward
