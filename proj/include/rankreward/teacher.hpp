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

// Threshold teacher: bins ground-truth returns into ordinal classes, with
// optional symmetric label noise and a two-phase class schedule.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankreward/errors.hpp"

namespace rankreward {

enum class Phase { start, end };

struct TeacherSpec {
  std::vector<double> start_thresholds;
  std::vector<double> end_thresholds;
  std::size_t switch_point = 40;
  double noise = 0.0;
  double gamma = 1.0;
  // Append a class when a return lands above the top threshold.
  bool extend_range = false;

  std::size_t class_count(Phase p) const {
    const auto& b = p == Phase::start ? start_thresholds : end_thresholds;
    return b.empty() ? 0 : b.size() - 1;
  }
  const std::vector<double>& thresholds(Phase p) const {
    return p == Phase::start ? start_thresholds : end_thresholds;
  }
};

namespace detail {

inline void check_ascending(const std::vector<double>& b, const char* what) {
  if (b.size() < 2) throw ConfigError(std::string(what) + ": need at least two thresholds");
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!std::isfinite(b[i])) throw ConfigError(std::string(what) + ": non-finite threshold");
    if (i > 0 && !(b[i] > b[i - 1])) throw ConfigError(std::string(what) + ": thresholds must be strictly ascending");
  }
}

}  // namespace detail

// b_end must be drawn from b_start so that merging only coarsens.
inline void validate(const TeacherSpec& spec) {
  detail::check_ascending(spec.start_thresholds, "start thresholds");
  detail::check_ascending(spec.end_thresholds, "end thresholds");
  for (double t : spec.end_thresholds) {
    if (!std::binary_search(spec.start_thresholds.begin(), spec.start_thresholds.end(), t)) {
      throw ConfigError("end thresholds are not a coarsening of the start thresholds");
    }
  }
  if (!(spec.noise >= 0.0 && spec.noise <= 1.0)) throw ConfigError("teacher noise must lie in [0, 1]");
  if (!(spec.gamma >= 0.0 && spec.gamma <= 1.0)) throw ConfigError("teacher gamma must lie in [0, 1]");
}

// Index k with b[k] <= g < b[k+1]; clamped into [0, n-1] at both ends.
inline int rate(const std::vector<double>& b, double g) {
  if (!std::isfinite(g)) throw ArgumentError("rate: non-finite return");
  if (b.size() < 2) throw ArgumentError("rate: need at least two thresholds");
  const auto it = std::upper_bound(b.begin(), b.end(), g);
  const long k = static_cast<long>(it - b.begin()) - 1;
  const long top = static_cast<long>(b.size()) - 2;
  return static_cast<int>(std::clamp(k, 0L, top));
}

inline int rate(const TeacherSpec& spec, double g, Phase phase) { return rate(spec.thresholds(phase), g); }

// With probability `noise` moves the class one step up or down (0.5 each),
// clamped at the edges.
inline int inject_noise(double noise, int true_class, int n_classes, std::mt19937_64& rng) {
  if (!(noise >= 0.0 && noise <= 1.0)) throw ArgumentError("inject_noise: rate must lie in [0, 1]");
  if (true_class < 0 || true_class >= n_classes) throw ArgumentError("inject_noise: class out of range");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (noise == 0.0 || u(rng) >= noise) return true_class;
  const int shifted = u(rng) < 0.5 ? true_class - 1 : true_class + 1;
  return std::clamp(shifted, 0, n_classes - 1);
}

inline int inject_noise(const TeacherSpec& spec, int true_class, int n_classes, std::mt19937_64& rng) {
  return inject_noise(spec.noise, true_class, n_classes, rng);
}

struct PhaseState {
  Phase phase = Phase::start;
  std::vector<double> thresholds;
  // Start class -> class under the returned thresholds; identity before the
  // switch point.
  std::vector<int> relabel;
};

inline std::vector<int> coarsening_map(const std::vector<double>& fine, const std::vector<double>& coarse) {
  std::vector<int> map(fine.size() - 1);
  for (std::size_t k = 0; k + 1 < fine.size(); ++k) map[k] = rate(coarse, fine[k]);
  return map;
}

inline PhaseState advance_phase(const TeacherSpec& spec, std::size_t rated_count) {
  validate(spec);
  PhaseState s;
  if (rated_count < spec.switch_point) {
    s.phase = Phase::start;
    s.thresholds = spec.start_thresholds;
    s.relabel.resize(spec.class_count(Phase::start));
    for (std::size_t k = 0; k < s.relabel.size(); ++k) s.relabel[k] = static_cast<int>(k);
  } else {
    s.phase = Phase::end;
    s.thresholds = spec.end_thresholds;
    s.relabel = coarsening_map(spec.start_thresholds, spec.end_thresholds);
  }
  return s;
}

// Next threshold above the top one: the last interval width, doubled.
inline double extension_threshold(const std::vector<double>& b) {
  return b.back() + 2.0 * (b.back() - b[b.size() - 2]);
}

// Adds one top class when `observed` lies above the active range. Returns
// whether thresholds changed.
inline bool introduce_class(std::vector<double>& thresholds, double observed) {
  if (!std::isfinite(observed)) throw ArgumentError("introduce_class: non-finite return");
  if (observed <= thresholds.back()) return false;
  thresholds.push_back(extension_threshold(thresholds));
  return true;
}

// Extends both phase lists so the end list stays a coarsening.
inline bool introduce_class(TeacherSpec& spec, double observed, Phase phase) {
  auto& active = phase == Phase::start ? spec.start_thresholds : spec.end_thresholds;
  if (!std::isfinite(observed)) throw ArgumentError("introduce_class: non-finite return");
  if (observed <= active.back()) return false;
  const double t = extension_threshold(active);
  for (auto* b : {&spec.start_thresholds, &spec.end_thresholds}) {
    const auto at = std::lower_bound(b->begin(), b->end(), t);
    if (at == b->end() || *at != t) b->insert(at, t);
  }
  return true;
}

struct ClassDescriptor {
  int index = 0;
  std::string label;
  double lower = 0.0;
  double upper = 0.0;  // +inf for the top class
};

inline std::vector<ClassDescriptor> describe_classes(const std::vector<double>& b) {
  std::vector<ClassDescriptor> out;
  for (std::size_t k = 0; k + 1 < b.size(); ++k) {
    ClassDescriptor d;
    d.index = static_cast<int>(k);
    d.lower = b[k];
    d.upper = k + 2 == b.size() ? std::numeric_limits<double>::infinity() : b[k + 1];
    if (k == 0) {
      d.label = "worst";
    } else if (k + 2 == b.size()) {
      d.label = "best";
    } else {
      d.label = "class " + std::to_string(k);
    }
    out.push_back(d);
  }
  return out;
}

struct TeacherEvent {
  int label = 0;
  bool class_added = false;
  std::size_t new_class_count = 0;
};

// Stateful teacher used by the online loop. Tracks the phase and any
// classes introduced so far.
class SimulatedTeacher {
 public:
  SimulatedTeacher(TeacherSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed) {
    validate(spec_);
  }

  const TeacherSpec& spec() const { return spec_; }
  Phase phase() const { return phase_; }
  const std::vector<double>& active_thresholds() const { return spec_.thresholds(phase_); }
  std::size_t class_count() const { return spec_.class_count(phase_); }
  std::size_t rated() const { return rated_; }

  // Moves to the end phase once `rated_count` reaches the switch point.
  // Returns the relabel map when a switch happens.
  std::optional<std::vector<int>> update_phase(std::size_t rated_count) {
    if (phase_ == Phase::end || rated_count < spec_.switch_point) return std::nullopt;
    phase_ = Phase::end;
    return coarsening_map(spec_.start_thresholds, spec_.end_thresholds);
  }

  // Rates one ground-truth return.
  TeacherEvent label(double ground_truth_return) {
    TeacherEvent ev;
    if (spec_.extend_range) ev.class_added = introduce_class(spec_, ground_truth_return, phase_);
    const int clean = rate(active_thresholds(), ground_truth_return);
    ev.label = inject_noise(spec_.noise, clean, static_cast<int>(class_count()), rng_);
    ev.new_class_count = class_count();
    ++rated_;
    return ev;
  }

 private:
  TeacherSpec spec_;
  std::mt19937_64 rng_;
  Phase phase_ = Phase::start;
  std::size_t rated_ = 0;
};

inline nlohmann::json teacher_to_json(const TeacherSpec& s) {
  return {{"start_thresholds", s.start_thresholds}, {"end_thresholds", s.end_thresholds},
          {"switch_point", s.switch_point},         {"noise", s.noise},
          {"gamma", s.gamma},                       {"extend_range", s.extend_range}};
}

inline TeacherSpec teacher_from_json(const nlohmann::json& j) {
  TeacherSpec s;
  s.start_thresholds = j.at("start_thresholds").get<std::vector<double>>();
  s.end_thresholds = j.value("end_thresholds", s.start_thresholds);
  s.switch_point = j.value("switch_point", std::size_t{40});
  s.noise = j.value("noise", 0.0);
  s.gamma = j.value("gamma", 1.0);
  s.extend_range = j.value("extend_range", false);
  validate(s);
  return s;
}

}  // namespace rankreward
