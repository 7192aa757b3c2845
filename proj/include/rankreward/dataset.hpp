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

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/reward_model.hpp"

namespace rankreward {

enum class IngestStatus { accepted, budget_exhausted };

// Rated trajectories partitioned by ordinal class; class k holds D_k.
class RatingDataset {
 public:
  static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

  RatingDataset() = default;
  explicit RatingDataset(std::size_t n_classes, std::size_t budget = kUnlimited)
      : classes_(n_classes), budget_(budget) {
    class_history_.push_back(n_classes);
  }

  std::size_t class_count() const { return classes_.size(); }
  const std::vector<Trajectory>& members(std::size_t k) const { return classes_.at(k); }
  const std::vector<std::vector<Trajectory>>& classes() const { return classes_; }
  std::size_t size() const {
    std::size_t s = 0;
    for (const auto& c : classes_) s += c.size();
    return s;
  }
  std::size_t budget() const { return budget_; }
  std::size_t budget_used() const { return used_; }
  std::size_t budget_remaining() const { return budget_ == kUnlimited ? kUnlimited : budget_ - used_; }
  const std::vector<std::size_t>& class_history() const { return class_history_; }

  IngestStatus ingest(Trajectory segment, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes_.size()) {
      throw ArgumentError("ingest: label " + std::to_string(label) + " outside current class range [0, " +
                          std::to_string(classes_.size()) + ")");
    }
    if (used_ >= budget_) return IngestStatus::budget_exhausted;
    classes_[static_cast<std::size_t>(label)].push_back(std::move(segment));
    ++used_;
    return IngestStatus::accepted;
  }

  // Adds an entry without consuming budget (offline pools).
  void insert(Trajectory t, std::size_t label) { classes_.at(label).push_back(std::move(t)); }

  // Moves every entry of old class k into class map[k] of a new partition
  // with `new_count` classes.
  void relabel(const std::vector<int>& map, std::size_t new_count) {
    if (map.size() != classes_.size()) throw ArgumentError("relabel: map size does not match class count");
    std::vector<std::vector<Trajectory>> next(new_count);
    for (std::size_t k = 0; k < classes_.size(); ++k) {
      const int target = map[k];
      if (target < 0 || static_cast<std::size_t>(target) >= new_count) {
        throw ArgumentError("relabel: target class out of range");
      }
      for (Trajectory& t : classes_[k]) next[static_cast<std::size_t>(target)].push_back(std::move(t));
    }
    classes_ = std::move(next);
    class_history_.push_back(new_count);
  }

  // Grows the class range; existing labels are unchanged.
  void add_classes(std::size_t extra) {
    if (extra == 0) return;
    classes_.resize(classes_.size() + extra);
    class_history_.push_back(classes_.size());
  }

  // Drops empty classes and renumbers the rest in order. Returns the dataset
  // used for training together with the original index of each kept class.
  std::pair<RatingDataset, std::vector<std::size_t>> compacted() const {
    RatingDataset out;
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < classes_.size(); ++k) {
      if (classes_[k].empty()) continue;
      out.classes_.push_back(classes_[k]);
      kept.push_back(k);
    }
    out.class_history_.push_back(out.classes_.size());
    return {std::move(out), std::move(kept)};
  }

 private:
  std::vector<std::vector<Trajectory>> classes_;
  std::size_t budget_ = kUnlimited;
  std::size_t used_ = 0;
  std::vector<std::size_t> class_history_;
};

// -- serialization -------------------------------------------------------
// A dataset file holds per-class arrays of trajectories; each trajectory is
// an array of step records. Ground-truth rewards are written only when
// present (teacher-visible files).

inline constexpr const char* kDatasetSchema = "rankreward.dataset/v1";
inline constexpr const char* kPoolSchema = "rankreward.pool/v1";

inline nlohmann::json trajectory_to_json(const Trajectory& t, bool include_rewards = true) {
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    nlohmann::json s = {{"state", t.steps[i].state}, {"action", t.steps[i].action}};
    if (include_rewards && t.has_true_rewards()) s["reward"] = t.true_rewards[i];
    steps.push_back(std::move(s));
  }
  return {{"env", t.env}, {"id", t.id}, {"offset", t.offset}, {"steps", std::move(steps)}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory t;
  t.env = j.value("env", "");
  t.id = j.value("id", std::uint64_t{0});
  t.offset = j.value("offset", std::size_t{0});
  bool any_reward = false;
  for (const auto& s : j.at("steps")) any_reward = any_reward || s.contains("reward");
  for (const auto& s : j.at("steps")) {
    t.steps.push_back({s.at("state").get<std::vector<double>>(), s.at("action").get<std::vector<double>>()});
    if (any_reward) t.true_rewards.push_back(s.at("reward").get<double>());
  }
  return t;
}

inline nlohmann::json dataset_to_json(const RatingDataset& d, bool include_rewards = true) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : d.classes()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Trajectory& t : c) arr.push_back(trajectory_to_json(t, include_rewards));
    classes.push_back(std::move(arr));
  }
  nlohmann::json j = {{"schema", kDatasetSchema}, {"classes", std::move(classes)},
                      {"budget_used", d.budget_used()}};
  if (d.budget() != RatingDataset::kUnlimited) j["budget"] = d.budget();
  return j;
}

inline RatingDataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kDatasetSchema) throw ArgumentError("not a rating dataset file");
  const auto& classes = j.at("classes");
  RatingDataset d(classes.size(), j.value("budget", RatingDataset::kUnlimited));
  for (std::size_t k = 0; k < classes.size(); ++k) {
    for (const auto& t : classes[k]) d.insert(trajectory_from_json(t), k);
  }
  return d;
}

inline nlohmann::json pool_to_json(const std::vector<Trajectory>& pool) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Trajectory& t : pool) arr.push_back(trajectory_to_json(t));
  return {{"schema", kPoolSchema}, {"trajectories", std::move(arr)}};
}

inline std::vector<Trajectory> pool_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kPoolSchema) throw ArgumentError("not a trajectory pool file");
  std::vector<Trajectory> pool;
  for (const auto& t : j.at("trajectories")) pool.push_back(trajectory_from_json(t));
  return pool;
}

}  // namespace rankreward
