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

// Query selection and scheduling for the online loop, plus balanced
// dataset construction for offline pools.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rankreward/dataset.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/reward_model.hpp"

namespace rankreward {

// Most recent full episodes, oldest evicted first.
class TrajectoryBuffer {
 public:
  explicit TrajectoryBuffer(std::size_t capacity = 50) : capacity_(capacity) {
    if (capacity_ == 0) throw ArgumentError("TrajectoryBuffer: capacity must be positive");
  }

  void push(Trajectory t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const Trajectory& operator[](std::size_t i) const { return items_[i]; }
  const std::deque<Trajectory>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<Trajectory> items_;
};

enum class SegmentMode { random, max_return };

// Start of the length-`delta` window with the largest reward sum; ties go
// to the latest window.
inline std::size_t max_return_window(const std::vector<double>& rewards, std::size_t delta) {
  if (delta == 0 || delta > rewards.size()) throw ArgumentError("max_return_window: bad window length");
  double sum = 0.0;
  for (std::size_t t = 0; t < delta; ++t) sum += rewards[t];
  double best = sum;
  std::size_t best_start = 0;
  for (std::size_t s = 1; s + delta <= rewards.size(); ++s) {
    sum += rewards[s + delta - 1] - rewards[s - 1];
    if (sum >= best) {
      best = sum;
      best_start = s;
    }
  }
  return best_start;
}

inline Trajectory cut_segment(const Trajectory& t, std::size_t start, std::size_t delta) {
  Trajectory seg;
  seg.env = t.env;
  seg.id = t.id;
  seg.offset = t.offset + start;
  seg.steps.assign(t.steps.begin() + static_cast<std::ptrdiff_t>(start),
                   t.steps.begin() + static_cast<std::ptrdiff_t>(start + delta));
  if (t.has_true_rewards()) {
    seg.true_rewards.assign(t.true_rewards.begin() + static_cast<std::ptrdiff_t>(start),
                            t.true_rewards.begin() + static_cast<std::ptrdiff_t>(start + delta));
  }
  return seg;
}

namespace detail {

// Buffered trajectories long enough for a window of `delta` (0 means whole
// episodes).
inline std::vector<std::size_t> eligible(const TrajectoryBuffer& buffer, std::size_t delta) {
  if (buffer.empty()) throw ArgumentError("sampling from an empty trajectory buffer");
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (buffer[i].size() >= std::max<std::size_t>(delta, 1)) ids.push_back(i);
  }
  if (ids.empty()) {
    throw ConfigError("segment length " + std::to_string(delta) + " exceeds every buffered trajectory");
  }
  return ids;
}

inline std::vector<std::size_t> draw(const std::vector<std::size_t>& from, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  if (k == 0) return out;
  if (k <= from.size()) {
    std::vector<std::size_t> pool = from;
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, pool.size() - 1);
      std::swap(pool[i], pool[d(rng)]);
    }
    out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    std::uniform_int_distribution<std::size_t> d(0, from.size() - 1);
    for (std::size_t i = 0; i < k; ++i) out.push_back(from[d(rng)]);
  }
  return out;
}

template <StepReward R>
Trajectory segment_of(const Trajectory& t, std::size_t delta, const R& reward, std::mt19937_64& rng,
                      SegmentMode* mode_out) {
  if (delta == 0 || delta >= t.size()) {
    if (mode_out) *mode_out = SegmentMode::random;
    return delta == 0 ? t : cut_segment(t, 0, t.size());
  }
  std::bernoulli_distribution coin(0.5);
  if (coin(rng)) {
    if (mode_out) *mode_out = SegmentMode::random;
    std::uniform_int_distribution<std::size_t> d(0, t.size() - delta);
    return cut_segment(t, d(rng), delta);
  }
  if (mode_out) *mode_out = SegmentMode::max_return;
  std::vector<double> r(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) r[i] = reward.reward(t.steps[i]);
  return cut_segment(t, max_return_window(r, delta), delta);
}

}  // namespace detail

struct SampledSegment {
  Trajectory segment;
  std::size_t buffer_index = 0;
  bool from_top = false;
  SegmentMode mode = SegmentMode::random;
};

// Ranks the buffer by predicted return and draws ceil(count/3) trajectories
// from the top 30% and the rest from the remaining 70%, then cuts one
// segment from each. `delta` = 0 rates whole episodes.
template <StepReward R>
std::vector<SampledSegment> stratified_sample(const TrajectoryBuffer& buffer, std::size_t count, std::size_t delta,
                                              const R& reward, double gamma, std::mt19937_64& rng) {
  if (count == 0) throw ArgumentError("stratified_sample: count must be positive");
  std::vector<std::size_t> ids = detail::eligible(buffer, delta);
  std::vector<double> g(buffer.size());
  for (std::size_t i : ids) g[i] = predicted_return(reward, buffer[i], gamma);
  // Shuffle first so that equal returns land in random order.
  std::shuffle(ids.begin(), ids.end(), rng);
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });

  const std::size_t top_n = static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(ids.size())));
  const std::vector<std::size_t> top(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(top_n));
  std::vector<std::size_t> rest(ids.begin() + static_cast<std::ptrdiff_t>(top_n), ids.end());
  if (rest.empty()) rest = ids;
  const std::size_t quota = (count + 2) / 3;

  std::vector<SampledSegment> out;
  out.reserve(count);
  for (std::size_t i : detail::draw(top, quota, rng)) {
    SampledSegment s;
    s.buffer_index = i;
    s.from_top = true;
    s.segment = detail::segment_of(buffer[i], delta, reward, rng, &s.mode);
    out.push_back(std::move(s));
  }
  for (std::size_t i : detail::draw(rest, count - quota, rng)) {
    SampledSegment s;
    s.buffer_index = i;
    s.segment = detail::segment_of(buffer[i], delta, reward, rng, &s.mode);
    out.push_back(std::move(s));
  }
  return out;
}

// Uniform selection with uniformly placed windows.
inline std::vector<SampledSegment> uniform_sample(const TrajectoryBuffer& buffer, std::size_t count, std::size_t delta,
                                                  std::mt19937_64& rng) {
  if (count == 0) throw ArgumentError("uniform_sample: count must be positive");
  const std::vector<std::size_t> ids = detail::eligible(buffer, delta);
  std::vector<SampledSegment> out;
  for (std::size_t i : detail::draw(ids, count, rng)) {
    SampledSegment s;
    s.buffer_index = i;
    const Trajectory& t = buffer[i];
    if (delta == 0 || delta >= t.size()) {
      s.segment = t;
    } else {
      std::uniform_int_distribution<std::size_t> d(0, t.size() - delta);
      s.segment = cut_segment(t, d(rng), delta);
    }
    out.push_back(std::move(s));
  }
  return out;
}

enum class ScheduleKind { geometric, uniform };

inline std::string_view to_string(ScheduleKind k) { return k == ScheduleKind::geometric ? "geometric" : "uniform"; }

inline ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "geometric") return ScheduleKind::geometric;
  if (s == "uniform") return ScheduleKind::uniform;
  throw ArgumentError("unknown schedule '" + std::string(s) + "'");
}

// Environment-step thresholds at which rating sessions open.
class FeedbackSchedule {
 public:
  FeedbackSchedule() = default;
  FeedbackSchedule(std::vector<std::size_t> thresholds, std::size_t per_session)
      : thresholds_(std::move(thresholds)), per_session_(per_session) {
    if (per_session_ == 0) throw ConfigError("schedule: per-session count must be positive");
    for (std::size_t i = 1; i < thresholds_.size(); ++i) {
      if (thresholds_[i] <= thresholds_[i - 1]) throw ConfigError("schedule thresholds must be strictly increasing");
    }
  }

  // Sessions needed to spend `budget`, placed between `first` and
  // `last` with gaps growing by `ratio`; ratio 1 spaces them evenly.
  static FeedbackSchedule spread(std::size_t budget, std::size_t per_session, std::size_t first, std::size_t last,
                                 double ratio) {
    if (per_session == 0) throw ConfigError("schedule: per-session count must be positive");
    if (!(ratio >= 1.0)) throw ConfigError("schedule: ratio must be at least 1");
    const std::size_t sessions = (budget + per_session - 1) / per_session;
    std::vector<std::size_t> t;
    if (sessions == 0) return FeedbackSchedule(t, per_session);
    last = std::max(last, first + sessions - 1);
    if (sessions == 1) return FeedbackSchedule({first}, per_session);
    // Unit gaps g_i = ratio^i, scaled so they sum to last - first.
    std::vector<double> gaps(sessions - 1);
    for (std::size_t i = 0; i < gaps.size(); ++i) gaps[i] = std::pow(ratio, static_cast<double>(i));
    const double total = std::accumulate(gaps.begin(), gaps.end(), 0.0);
    const double span = static_cast<double>(last - first);
    t.push_back(first);
    double pos = static_cast<double>(first);
    std::size_t prev_gap = 1;
    for (double g : gaps) {
      pos += g * span / total;
      std::size_t next = static_cast<std::size_t>(std::llround(pos));
      next = std::max(next, t.back() + prev_gap);
      prev_gap = next - t.back();
      t.push_back(next);
    }
    return FeedbackSchedule(std::move(t), per_session);
  }

  static FeedbackSchedule make(ScheduleKind kind, std::size_t budget, std::size_t per_session,
                               std::size_t warmup, std::size_t total_steps, double horizon_fraction = 0.6) {
    const auto last = static_cast<std::size_t>(horizon_fraction * static_cast<double>(total_steps));
    return spread(budget, per_session, warmup, std::max(last, warmup), kind == ScheduleKind::geometric ? 2.0 : 1.0);
  }

  const std::vector<std::size_t>& thresholds() const { return thresholds_; }
  std::size_t per_session() const { return per_session_; }
  std::size_t cursor() const { return cursor_; }

  // True when `env_step` has reached the next unvisited threshold and
  // budget remains; consumes that threshold.
  bool should_query(std::size_t env_step, std::size_t budget_remaining) {
    if (budget_remaining == 0 || cursor_ >= thresholds_.size()) return false;
    if (env_step < thresholds_[cursor_]) return false;
    ++cursor_;
    return true;
  }

 private:
  std::vector<std::size_t> thresholds_;
  std::size_t per_session_ = 10;
  std::size_t cursor_ = 0;
};

// Exactly `per_class` members of every class, drawn without replacement.
inline RatingDataset balanced_offline_dataset(const std::vector<std::vector<Trajectory>>& pool_by_class,
                                              std::size_t per_class, std::mt19937_64& rng) {
  for (std::size_t k = 0; k < pool_by_class.size(); ++k) {
    if (pool_by_class[k].size() < per_class) {
      throw ConfigError("pool class " + std::to_string(k) + " has " + std::to_string(pool_by_class[k].size()) +
                        " trajectories, need " + std::to_string(per_class));
    }
  }
  RatingDataset d(pool_by_class.size());
  for (std::size_t k = 0; k < pool_by_class.size(); ++k) {
    std::vector<std::size_t> all(pool_by_class[k].size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i : detail::draw(all, per_class, rng)) d.insert(pool_by_class[k][i], k);
  }
  return d;
}

}  // namespace rankreward
