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

// Dense feed-forward network with a flat parameter vector, manual
// reverse-mode gradients and an Adam optimizer.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rankreward/errors.hpp"

namespace rankreward {

enum class Activation { identity, relu, tanh };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "identity" || s == "none") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ArgumentError("unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
  std::size_t units = 1;
  Activation activation = Activation::identity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Mlp {
 public:
  // Per-layer post-activation values of one forward pass; inputs first.
  struct Tape {
    std::vector<std::vector<double>> values;
    std::uint64_t version = 0;
    bool empty() const { return values.empty(); }
    std::span<const double> output() const { return values.back(); }
  };

  Mlp() = default;
  Mlp(std::size_t input_dim, std::vector<LayerSpec> layers)
      : input_dim_(input_dim), layers_(std::move(layers)) {
    if (input_dim_ == 0 || layers_.empty()) {
      throw ArgumentError("Mlp: need a positive input dimension and at least one layer");
    }
    std::size_t fan_in = input_dim_;
    std::size_t total = 0;
    for (const LayerSpec& l : layers_) {
      if (l.units == 0) throw ArgumentError("Mlp: layer with zero units");
      offsets_.push_back(total);
      total += l.units * fan_in + l.units;
      fan_in = l.units;
    }
    params_.assign(total, 0.0);
    grads_.assign(total, 0.0);
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return layers_.back().units; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<const double> parameters() const { return params_; }
  std::span<const double> gradients() const { return grads_; }
  std::uint64_t step_count() const { return steps_; }
  // Bumped whenever parameters change; tapes recorded earlier go stale.
  std::uint64_t version() const { return version_; }

  void set_parameters(std::span<const double> p) {
    if (p.size() != params_.size()) throw ArgumentError("Mlp: parameter size mismatch");
    params_.assign(p.begin(), p.end());
    ++version_;
  }
  std::span<double> mutable_gradients() { return grads_; }

  // Kaiming fan-in scaling (variance 2/fan_in) for rectifier layers and
  // 1/fan_in otherwise; zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t fan_in = input_dim_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const LayerSpec& l = layers_[li];
      const double gain = l.activation == Activation::relu ? 2.0 : 1.0;
      std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(fan_in)));
      double* w = params_.data() + offsets_[li];
      for (std::size_t k = 0; k < l.units * fan_in; ++k) w[k] = dist(rng);
      for (std::size_t k = 0; k < l.units; ++k) w[l.units * fan_in + k] = 0.0;
      fan_in = l.units;
    }
    ++version_;
  }

  void forward(std::span<const double> input, Tape& tape) const {
    check_input(input);
    tape.values.resize(layers_.size() + 1);
    tape.values[0].assign(input.begin(), input.end());
    std::size_t fan_in = input_dim_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const LayerSpec& l = layers_[li];
      const double* w = params_.data() + offsets_[li];
      const double* b = w + l.units * fan_in;
      const std::vector<double>& x = tape.values[li];
      std::vector<double>& y = tape.values[li + 1];
      y.resize(l.units);
      for (std::size_t o = 0; o < l.units; ++o) {
        double acc = b[o];
        const double* row = w + o * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) acc += row[i] * x[i];
        y[o] = activate(l.activation, acc);
      }
      fan_in = l.units;
    }
    tape.version = version_;
  }

  std::vector<double> forward(std::span<const double> input) const {
    Tape tape;
    forward(input, tape);
    return tape.values.back();
  }

  // Scalar-output convenience; `scratch` avoids per-call allocation.
  double forward_scalar(std::span<const double> input, Tape& scratch) const {
    forward(input, scratch);
    return scratch.values.back()[0];
  }

  // Accumulates d(upstream . output)/d(theta) into the gradient buffer and
  // optionally writes d(upstream . output)/d(input).
  void backward(const Tape& tape, std::span<const double> upstream,
                std::vector<double>* input_grad = nullptr) {
    if (tape.empty() || tape.values.size() != layers_.size() + 1) {
      throw StateError("Mlp::backward: no forward pass recorded");
    }
    if (tape.version != version_) {
      throw StateError("Mlp::backward: forward pass recorded with different parameters");
    }
    if (upstream.size() != output_dim()) throw ArgumentError("Mlp::backward: upstream size mismatch");
    std::vector<double> delta(upstream.begin(), upstream.end());
    std::vector<double> prev;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const LayerSpec& l = layers_[li];
      const std::size_t fan_in = li == 0 ? input_dim_ : layers_[li - 1].units;
      const std::vector<double>& x = tape.values[li];
      const std::vector<double>& y = tape.values[li + 1];
      for (std::size_t o = 0; o < l.units; ++o) delta[o] *= activation_slope(l.activation, y[o]);
      const double* w = params_.data() + offsets_[li];
      double* gw = grads_.data() + offsets_[li];
      double* gb = gw + l.units * fan_in;
      const bool need_prev = li > 0 || input_grad != nullptr;
      if (need_prev) prev.assign(fan_in, 0.0);
      for (std::size_t o = 0; o < l.units; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* grow = gw + o * fan_in;
        const double* row = w + o * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) {
          grow[i] += d * x[i];
          if (need_prev) prev[i] += d * row[i];
        }
      }
      if (need_prev) delta.swap(prev);
    }
    if (input_grad != nullptr) *input_grad = delta;
  }

  void zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  // Standard bias-corrected Adam; zeroes the gradient buffer afterwards.
  // Non-finite gradients abort the step before anything is modified.
  void adam_step(double learning_rate, const AdamConfig& cfg = {}) {
    for (double g : grads_) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const double g = grads_[k];
      m_[k] = cfg.beta1 * m_[k] + (1.0 - cfg.beta1) * g;
      v_[k] = cfg.beta2 * v_[k] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m_[k] / c1;
      const double vhat = v_[k] / c2;
      params_[k] -= learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    zero_grad();
    ++version_;
  }

  // Polyak averaging toward `source`: theta <- (1 - tau) theta + tau source.
  void soft_update_from(const Mlp& source, double tau) {
    if (source.params_.size() != params_.size()) throw ArgumentError("soft_update_from: shape mismatch");
    for (std::size_t k = 0; k < params_.size(); ++k) {
      params_[k] = (1.0 - tau) * params_[k] + tau * source.params_[k];
    }
    ++version_;
  }

  static double activate(Activation a, double x) {
    switch (a) {
      case Activation::identity: return x;
      case Activation::relu: return x > 0.0 ? x : 0.0;
      case Activation::tanh: return std::tanh(x);
    }
    return x;
  }

  // Derivative expressed through the activation's output.
  static double activation_slope(Activation a, double y) {
    switch (a) {
      case Activation::identity: return 1.0;
      case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
      case Activation::tanh: return 1.0 - y * y;
    }
    return 1.0;
  }

 private:
  void check_input(std::span<const double> input) const {
    if (input.size() != input_dim_) {
      throw ArgumentError("Mlp: expected input of dimension " + std::to_string(input_dim_) +
                          ", got " + std::to_string(input.size()));
    }
  }

  std::size_t input_dim_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t steps_ = 0;
  std::uint64_t version_ = 0;
};

}  // namespace rankreward
