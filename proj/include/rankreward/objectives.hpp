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

// Reward-learning objectives over rated trajectories.
//
// Every loss here is linear in the per-step rewards up to the final
// nonlinearity on returns, so a batch is evaluated by interning the
// distinct encoded (state, action) inputs once, computing each return as a
// weighted sum over them, and pushing one scalar upstream per input back
// through the model.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rankreward/dataset.hpp"
#include "rankreward/errors.hpp"
#include "rankreward/reward_model.hpp"
#include "rankreward/softrank.hpp"

namespace rankreward {

// -- return design -------------------------------------------------------

struct ReturnTerm {
  std::uint32_t input = 0;
  double weight = 0.0;  // summed discount factors of this input
  double count = 0.0;   // occurrences of this input
};

// Trajectories expressed as sparse weights over interned encoded inputs.
class ReturnDesign {
 public:
  ReturnDesign(InputEncoder encoder, double gamma) : encoder_(encoder), gamma_(gamma) {}

  const InputEncoder& encoder() const { return encoder_; }
  double gamma() const { return gamma_; }

  std::size_t add(const Trajectory& traj) {
    if (traj.empty()) throw ArgumentError("ReturnDesign: empty trajectory");
    const std::vector<double> w = discount_weights(traj.size(), gamma_);
    std::vector<double> x(encoder_.input_dim());
    std::unordered_map<std::uint32_t, std::size_t> slot;
    std::vector<ReturnTerm> terms;
    for (std::size_t t = 0; t < traj.size(); ++t) {
      encoder_.encode(traj.steps[t], x);
      const std::uint32_t id = intern(x);
      auto [it, fresh] = slot.try_emplace(id, terms.size());
      if (fresh) terms.push_back({id, 0.0, 0.0});
      terms[it->second].weight += w[t];
      terms[it->second].count += 1.0;
    }
    terms_.push_back(std::move(terms));
    lengths_.push_back(traj.size());
    return terms_.size() - 1;
  }

  std::size_t trajectory_count() const { return terms_.size(); }
  std::size_t input_count() const { return inputs_.size(); }
  std::span<const ReturnTerm> terms(std::size_t traj) const { return terms_.at(traj); }
  std::size_t length(std::size_t traj) const { return lengths_.at(traj); }
  std::span<const double> input(std::uint32_t id) const { return inputs_[id]; }

 private:
  std::uint32_t intern(const std::vector<double>& x) {
    std::string key(reinterpret_cast<const char*>(x.data()), x.size() * sizeof(double));
    auto [it, fresh] = index_.try_emplace(std::move(key), static_cast<std::uint32_t>(inputs_.size()));
    if (fresh) inputs_.push_back(x);
    return it->second;
  }

  InputEncoder encoder_;
  double gamma_;
  std::vector<std::vector<double>> inputs_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<std::vector<ReturnTerm>> terms_;
  std::vector<std::size_t> lengths_;
};

// One trajectory per class with its label; labels are a permutation of
// 0..n-1.
struct RatedTuple {
  std::vector<std::size_t> trajectories;
  std::vector<int> labels;
};

struct RatedBatch {
  const ReturnDesign* design = nullptr;
  std::vector<RatedTuple> tuples;
  std::size_t n_classes = 0;

  void validate() const {
    if (design == nullptr) throw ArgumentError("RatedBatch: no design attached");
    if (tuples.empty()) throw ArgumentError("RatedBatch: empty batch");
    std::vector<char> seen(n_classes);
    for (const RatedTuple& t : tuples) {
      if (t.trajectories.size() != n_classes || t.labels.size() != n_classes) {
        throw ArgumentError("RatedBatch: tuple size does not match class count " + std::to_string(n_classes));
      }
      std::fill(seen.begin(), seen.end(), 0);
      for (int c : t.labels) {
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes || seen[static_cast<std::size_t>(c)]) {
          throw ArgumentError("RatedBatch: labels must be a permutation of 0..n-1");
        }
        seen[static_cast<std::size_t>(c)] = 1;
      }
      for (std::size_t id : t.trajectories) {
        if (id >= design->trajectory_count()) throw ArgumentError("RatedBatch: unknown trajectory id");
      }
    }
  }
};

// -- return-level losses -------------------------------------------------

struct ReturnLoss {
  double loss = 0.0;
  std::vector<double> grad;  // dloss / dreturn
};

// (1/n) sum_i (rank0_i - c_i)^2 for 0-indexed ranks.
inline double rmse_from_ranks(std::span<const double> ranks0, std::span<const int> labels) {
  if (ranks0.size() != labels.size() || ranks0.empty()) {
    throw ArgumentError("rmse_from_ranks: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < ranks0.size(); ++i) {
    const double d = ranks0[i] - static_cast<double>(labels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(ranks0.size());
}

// rMSE of one tuple of returns and its gradient with respect to the returns.
inline ReturnLoss rmse_on_returns(std::span<const double> returns, std::span<const int> labels,
                                  double regularization) {
  if (returns.size() != labels.size()) throw ArgumentError("rmse_on_returns: class-count mismatch");
  const SoftRankResult sr = soft_rank(returns, regularization);
  const std::size_t n = returns.size();
  std::vector<double> ranks0(n);
  std::vector<double> up(n);
  for (std::size_t i = 0; i < n; ++i) {
    ranks0[i] = sr.ranks[i] - 1.0;
    up[i] = 2.0 * (ranks0[i] - static_cast<double>(labels[i])) / static_cast<double>(n);
  }
  return {rmse_from_ranks(ranks0, labels), soft_rank_vjp(sr, up)};
}

struct RbRLConfig {
  // B_0 < ... < B_n over [0, 1]; empty means uniform B_i = i / n.
  std::vector<double> boundaries;
  double sharpness = 10.0;
};

inline std::vector<double> uniform_boundaries(std::size_t n) {
  if (n == 0) throw ArgumentError("uniform_boundaries: n must be positive");
  std::vector<double> b(n + 1);
  for (std::size_t i = 0; i <= n; ++i) b[i] = static_cast<double>(i) / static_cast<double>(n);
  return b;
}

inline std::vector<double> resolve_boundaries(const RbRLConfig& cfg, std::size_t n) {
  if (cfg.boundaries.empty()) return uniform_boundaries(n);
  const auto& b = cfg.boundaries;
  if (b.size() != n + 1) {
    throw ArgumentError("RbRL: " + std::to_string(b.size()) + " boundaries for " + std::to_string(n) + " classes");
  }
  if (b.front() != 0.0 || b.back() != 1.0) throw ArgumentError("RbRL: boundaries must start at 0 and end at 1");
  for (std::size_t i = 1; i < b.size(); ++i) {
    if (!(b[i] > b[i - 1])) throw ArgumentError("RbRL: boundaries must be strictly increasing");
  }
  return b;
}

namespace detail {

// Class log-probabilities log Q_j(g) with logits -k (g - B_j)(g - B_{j+1}).
inline void rbrl_log_probs(double g, std::span<const double> b, double k, std::vector<double>& logits,
                           std::vector<double>& probs) {
  const std::size_t n = b.size() - 1;
  logits.resize(n);
  probs.resize(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    logits[j] = -k * (g - b[j]) * (g - b[j + 1]);
    mx = std::max(mx, logits[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += std::exp(logits[j] - mx);
  const double lse = mx + std::log(z);
  for (std::size_t j = 0; j < n; ++j) {
    logits[j] -= lse;  // now log-probabilities
    probs[j] = std::exp(logits[j]);
  }
}

}  // namespace detail

// Mean cross-entropy over trajectories with normalized returns in [0, 1].
// The gradient is obtained by reverse accumulation through the logits and
// the log-softmax.
inline ReturnLoss rbrl_on_returns(std::span<const double> normalized, std::span<const int> labels,
                                  const RbRLConfig& cfg, std::size_t n_classes) {
  if (normalized.size() != labels.size() || normalized.empty()) {
    throw ArgumentError("rbrl_on_returns: length mismatch");
  }
  if (!(cfg.sharpness > 0.0)) throw ArgumentError("rbrl_on_returns: sharpness must be positive");
  const std::vector<double> b = resolve_boundaries(cfg, n_classes);
  const double k = cfg.sharpness;
  const double scale = 1.0 / static_cast<double>(normalized.size());
  ReturnLoss out;
  out.grad.resize(normalized.size());
  std::vector<double> logp;
  std::vector<double> q;
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const double g = normalized[i];
    if (!(g >= 0.0 && g <= 1.0)) {
      throw ArgumentError("rbrl_on_returns: normalized return outside [0, 1]");
    }
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw ArgumentError("rbrl_on_returns: label out of range");
    detail::rbrl_log_probs(g, b, k, logp, q);
    out.loss -= scale * logp[static_cast<std::size_t>(y)];
    // d(-log softmax_y)/d logit_j = q_j - [j == y];  d logit_j / dg = -k (2g - B_j - B_{j+1}).
    double dg = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double dlogit = q[j] - (static_cast<int>(j) == y ? 1.0 : 0.0);
      dg += dlogit * (-k * (2.0 * g - b[j] - b[j + 1]));
    }
    out.grad[i] = scale * dg;
  }
  return out;
}

// Closed-form derivative of the per-trajectory RbRL loss,
// k * sum_j (mu_j - Q_j) (2g - B_j - B_{j+1}), averaged like the loss.
inline std::vector<double> rbrl_closed_form_gradient(std::span<const double> normalized,
                                                     std::span<const int> labels, const RbRLConfig& cfg,
                                                     std::size_t n_classes) {
  const std::vector<double> b = resolve_boundaries(cfg, n_classes);
  const double k = cfg.sharpness;
  std::vector<double> logp;
  std::vector<double> q;
  std::vector<double> grad(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const double g = normalized[i];
    detail::rbrl_log_probs(g, b, k, logp, q);
    double acc = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double mu = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
      acc += (mu - q[j]) * (2.0 * g - b[j] - b[j + 1]);
    }
    grad[i] = k * acc / static_cast<double>(normalized.size());
  }
  return grad;
}

// Affine map of predicted returns into [0, 1] from the running min/max of
// returns seen during training; values outside are clamped.
class ReturnNormalizer {
 public:
  void observe(double g) {
    if (!seen_) {
      lo_ = hi_ = g;
      seen_ = true;
    } else {
      lo_ = std::min(lo_, g);
      hi_ = std::max(hi_, g);
    }
  }
  bool ready() const { return seen_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  // Returns the normalized value and writes its slope.
  double apply(double g, double& slope) const {
    const double span = hi_ - lo_;
    if (!seen_ || !(span > 1e-12)) {
      slope = 0.0;
      return 0.5;
    }
    const double u = (g - lo_) / span;
    if (u <= 0.0) {
      slope = 0.0;
      return 0.0;
    }
    if (u >= 1.0) {
      slope = 0.0;
      return 1.0;
    }
    slope = 1.0 / span;
    return u;
  }

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
  bool seen_ = false;
};

// -- batch evaluation ----------------------------------------------------

namespace detail {

// Rewards of the distinct inputs touched by a batch and the upstream
// gradient collected for each of them.
struct BatchEvaluation {
  std::vector<std::int64_t> local;  // design input id -> slot, -1 if unused
  std::vector<std::uint32_t> ids;
  std::vector<double> rewards;
  std::vector<double> upstream;
  std::vector<double> counts;

  void reset(const ReturnDesign& design) {
    for (std::uint32_t id : ids) local[id] = -1;
    local.resize(design.input_count(), -1);
    ids.clear();
    rewards.clear();
    upstream.clear();
    counts.clear();
  }

  void touch(const ReturnDesign& design, std::size_t traj) {
    for (const ReturnTerm& t : design.terms(traj)) {
      std::int64_t& slot = local[t.input];
      if (slot < 0) {
        slot = static_cast<std::int64_t>(ids.size());
        ids.push_back(t.input);
        counts.push_back(0.0);
      }
      counts[static_cast<std::size_t>(slot)] += t.count;
    }
  }

  template <EncodedRewardModel M>
  void evaluate(const ReturnDesign& design, const M& model) {
    rewards.resize(ids.size());
    upstream.assign(ids.size(), 0.0);
    for (std::size_t s = 0; s < ids.size(); ++s) rewards[s] = model.reward_encoded(design.input(ids[s]));
  }

  double return_of(const ReturnDesign& design, std::size_t traj) const {
    double g = 0.0;
    for (const ReturnTerm& t : design.terms(traj)) g += t.weight * rewards[static_cast<std::size_t>(local[t.input])];
    return g;
  }

  void push_return_grad(const ReturnDesign& design, std::size_t traj, double dg) {
    if (dg == 0.0) return;
    for (const ReturnTerm& t : design.terms(traj)) upstream[static_cast<std::size_t>(local[t.input])] += dg * t.weight;
  }

  template <EncodedRewardModel M>
  void backward(const ReturnDesign& design, M& model) const {
    for (std::size_t s = 0; s < ids.size(); ++s) {
      if (upstream[s] != 0.0) model.accumulate_encoded_gradient(design.input(ids[s]), upstream[s]);
    }
  }
};

inline void touch_batch(BatchEvaluation& ev, const RatedBatch& batch) {
  ev.reset(*batch.design);
  for (const RatedTuple& t : batch.tuples) {
    for (std::size_t id : t.trajectories) ev.touch(*batch.design, id);
  }
}

inline double rmse_pass(BatchEvaluation& ev, const RatedBatch& batch, double regularization) {
  const ReturnDesign& d = *batch.design;
  const double inv_b = 1.0 / static_cast<double>(batch.tuples.size());
  std::vector<double> returns(batch.n_classes);
  double loss = 0.0;
  for (const RatedTuple& t : batch.tuples) {
    for (std::size_t i = 0; i < batch.n_classes; ++i) returns[i] = ev.return_of(d, t.trajectories[i]);
    const ReturnLoss rl = rmse_on_returns(returns, t.labels, regularization);
    loss += inv_b * rl.loss;
    for (std::size_t i = 0; i < batch.n_classes; ++i) ev.push_return_grad(d, t.trajectories[i], inv_b * rl.grad[i]);
  }
  return loss;
}

inline double rbrl_pass(BatchEvaluation& ev, const RatedBatch& batch, const RbRLConfig& cfg,
                        ReturnNormalizer& norm) {
  const ReturnDesign& d = *batch.design;
  std::vector<double> raw;
  std::vector<std::size_t> ids;
  std::vector<int> labels;
  for (const RatedTuple& t : batch.tuples) {
    for (std::size_t i = 0; i < batch.n_classes; ++i) {
      ids.push_back(t.trajectories[i]);
      labels.push_back(t.labels[i]);
      raw.push_back(ev.return_of(d, t.trajectories[i]));
    }
  }
  for (double g : raw) norm.observe(g);
  std::vector<double> normalized(raw.size());
  std::vector<double> slope(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) normalized[i] = norm.apply(raw[i], slope[i]);
  const ReturnLoss rl = rbrl_on_returns(normalized, labels, cfg, batch.n_classes);
  for (std::size_t i = 0; i < raw.size(); ++i) ev.push_return_grad(d, ids[i], rl.grad[i] * slope[i]);
  return rl.loss;
}

inline double l2_pass(BatchEvaluation& ev, double beta) {
  if (beta == 0.0) return 0.0;
  const double total = std::accumulate(ev.counts.begin(), ev.counts.end(), 0.0);
  double loss = 0.0;
  for (std::size_t s = 0; s < ev.ids.size(); ++s) {
    const double w = ev.counts[s] / total;
    loss += w * ev.rewards[s] * ev.rewards[s];
    ev.upstream[s] += beta * 2.0 * w * ev.rewards[s];
  }
  return beta * loss;
}

}  // namespace detail

struct LossValue {
  double loss = 0.0;
};

// rMSE over a batch of one-per-class tuples: per tuple, soft-rank the
// predicted returns, shift to 0-indexed ranks and take the mean squared
// error against the labels; the batch loss is the mean over tuples.
// Gradients are accumulated into the model.
template <EncodedRewardModel M>
LossValue rmse_loss(const RatedBatch& batch, M& model, double regularization) {
  batch.validate();
  detail::BatchEvaluation ev;
  detail::touch_batch(ev, batch);
  ev.evaluate(*batch.design, model);
  const double loss = detail::rmse_pass(ev, batch, regularization);
  ev.backward(*batch.design, model);
  return {loss};
}

// RbRL cross-entropy over every trajectory of the batch. Returns are mapped
// into [0, 1] with `normalizer`, which is updated with this batch first.
template <EncodedRewardModel M>
LossValue rbrl_loss(const RatedBatch& batch, M& model, const RbRLConfig& cfg, ReturnNormalizer& normalizer) {
  batch.validate();
  detail::BatchEvaluation ev;
  detail::touch_batch(ev, batch);
  ev.evaluate(*batch.design, model);
  const double loss = detail::rbrl_pass(ev, batch, cfg, normalizer);
  ev.backward(*batch.design, model);
  return {loss};
}

// beta * mean over inputs of the squared predicted reward.
template <EncodedRewardModel M>
LossValue l2_regularizer(M& model, const std::vector<std::vector<double>>& inputs, double beta) {
  if (beta < 0.0) throw ArgumentError("l2_regularizer: beta must be non-negative");
  if (inputs.empty() || beta == 0.0) return {0.0};
  const double w = 1.0 / static_cast<double>(inputs.size());
  double loss = 0.0;
  for (const auto& x : inputs) {
    const double r = model.reward_encoded(x);
    loss += w * r * r;
    model.accumulate_encoded_gradient(x, beta * 2.0 * w * r);
  }
  return {beta * loss};
}

// Mean predicted reward on out-of-distribution inputs minus the mean on
// dataset inputs.
template <EncodedRewardModel M>
LossValue ood_regularizer(M& model, const std::vector<std::vector<double>>& in_dist,
                          const std::vector<std::vector<double>>& ood) {
  if (in_dist.empty() || ood.empty()) throw ArgumentError("ood_regularizer: empty step set");
  double loss = 0.0;
  const double wo = 1.0 / static_cast<double>(ood.size());
  const double wi = 1.0 / static_cast<double>(in_dist.size());
  for (const auto& x : ood) {
    loss += wo * model.reward_encoded(x);
    model.accumulate_encoded_gradient(x, wo);
  }
  for (const auto& x : in_dist) {
    loss -= wi * model.reward_encoded(x);
    model.accumulate_encoded_gradient(x, -wi);
  }
  return {loss};
}

// -- training ------------------------------------------------------------

enum class LossKind { rmse, rbrl };

inline std::string_view to_string(LossKind k) { return k == LossKind::rmse ? "rmse" : "rbrl"; }

inline LossKind loss_kind_from_string(std::string_view s) {
  if (s == "rmse") return LossKind::rmse;
  if (s == "rbrl") return LossKind::rbrl;
  throw ArgumentError("unknown loss '" + std::string(s) + "'");
}

struct RewardTrainingConfig {
  LossKind loss = LossKind::rmse;
  std::size_t batch_size = 64;
  double regularization = 1.0;  // soft-rank strength
  double learning_rate = 3e-4;
  double l2_beta = 0.0;
  double gamma = 1.0;
  RbRLConfig rbrl;
  double ood_weight = 0.0;  // 0 disables the OOD term
  std::size_t ood_samples = 64;
  // Draws one encoded out-of-distribution input.
  std::function<std::vector<double>(std::mt19937_64&)> ood_sampler;
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double l2 = 0.0;
  double ood = 0.0;
  double total = 0.0;
};

// Draws B tuples, one trajectory per class. Classes with at least B members
// are sampled without replacement, smaller ones with replacement.
inline RatedBatch sample_rated_batch(const ReturnDesign& design,
                                     const std::vector<std::vector<std::size_t>>& class_ids,
                                     std::size_t batch_size, std::mt19937_64& rng) {
  RatedBatch batch;
  batch.design = &design;
  batch.n_classes = class_ids.size();
  batch.tuples.resize(batch_size);
  for (auto& t : batch.tuples) {
    t.trajectories.resize(class_ids.size());
    t.labels.resize(class_ids.size());
  }
  std::vector<std::size_t> pick;
  for (std::size_t k = 0; k < class_ids.size(); ++k) {
    const auto& ids = class_ids[k];
    if (ids.empty()) throw ConfigError("rating class " + std::to_string(k) + " is empty");
    pick.clear();
    if (ids.size() >= batch_size) {
      pick = ids;
      for (std::size_t i = 0; i < batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, pick.size() - 1);
        std::swap(pick[i], pick[d(rng)]);
      }
      pick.resize(batch_size);
    } else {
      std::uniform_int_distribution<std::size_t> d(0, ids.size() - 1);
      for (std::size_t i = 0; i < batch_size; ++i) pick.push_back(ids[d(rng)]);
    }
    for (std::size_t i = 0; i < batch_size; ++i) {
      batch.tuples[i].trajectories[k] = pick[i];
      batch.tuples[i].labels[k] = static_cast<int>(k);
    }
  }
  return batch;
}

// Owns per-member sampling streams and return normalizers so that repeated
// sessions warm-start from the previous state.
class RewardTrainer {
 public:
  RewardTrainer(RewardTrainingConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), seed_(seed) {}

  const RewardTrainingConfig& config() const { return cfg_; }

  std::vector<LossRecord> train(const RatingDataset& dataset, RewardEnsemble& ensemble, std::size_t updates) {
    std::vector<LossRecord> history;
    if (updates == 0) return history;
    if (dataset.class_count() == 0) throw ConfigError("train_reward: dataset has no classes");
    for (std::size_t k = 0; k < dataset.class_count(); ++k) {
      if (dataset.members(k).empty()) throw ConfigError("train_reward: rating class " + std::to_string(k) + " is empty");
    }
    ensure_members(ensemble.size());

    ReturnDesign design(ensemble.encoder(), cfg_.gamma);
    std::vector<std::vector<std::size_t>> class_ids(dataset.class_count());
    for (std::size_t k = 0; k < dataset.class_count(); ++k) {
      for (const Trajectory& t : dataset.members(k)) class_ids[k].push_back(design.add(t));
    }

    history.reserve(updates);
    detail::BatchEvaluation ev;
    for (std::size_t step = 0; step < updates; ++step) {
      LossRecord rec;
      rec.step = steps_done_ + step;
      for (std::size_t m = 0; m < ensemble.size(); ++m) {
        RewardModel& model = ensemble.member(m);
        std::mt19937_64& rng = rngs_[m];
        const RatedBatch batch = sample_rated_batch(design, class_ids, cfg_.batch_size, rng);
        detail::touch_batch(ev, batch);
        ev.evaluate(design, model);
        const double main = cfg_.loss == LossKind::rmse ? detail::rmse_pass(ev, batch, cfg_.regularization)
                                                        : detail::rbrl_pass(ev, batch, cfg_.rbrl, normalizers_[m]);
        const double l2 = detail::l2_pass(ev, cfg_.l2_beta);
        ev.backward(design, model);
        double ood = 0.0;
        if (cfg_.ood_weight > 0.0 && cfg_.ood_sampler) ood = ood_term(design, ev, model, rng);
        model.optimizer_step(cfg_.learning_rate);
        const double inv_m = 1.0 / static_cast<double>(ensemble.size());
        rec.loss += inv_m * main;
        rec.l2 += inv_m * l2;
        rec.ood += inv_m * ood;
      }
      rec.total = rec.loss + rec.l2 + rec.ood;
      history.push_back(rec);
    }
    steps_done_ += updates;
    return history;
  }

 private:
  void ensure_members(std::size_t m) {
    while (rngs_.size() < m) {
      std::seed_seq seq{seed_, static_cast<std::uint64_t>(rngs_.size()), std::uint64_t{0x7e4}};
      rngs_.emplace_back(seq);
      normalizers_.emplace_back();
    }
  }

  double ood_term(const ReturnDesign& design, const detail::BatchEvaluation& ev, RewardModel& model,
                  std::mt19937_64& rng) {
    std::vector<std::vector<double>> in_dist;
    in_dist.reserve(ev.ids.size());
    for (std::uint32_t id : ev.ids) {
      const auto x = design.input(id);
      in_dist.emplace_back(x.begin(), x.end());
    }
    std::vector<std::vector<double>> ood(cfg_.ood_samples);
    for (auto& x : ood) x = cfg_.ood_sampler(rng);
    // Scale the upstream by the weight through a thin wrapper.
    struct Scaled {
      RewardModel& m;
      double w;
      const InputEncoder& encoder() const { return m.encoder(); }
      double reward_encoded(std::span<const double> x) const { return m.reward_encoded(x); }
      void accumulate_encoded_gradient(std::span<const double> x, double u) { m.accumulate_encoded_gradient(x, w * u); }
    } scaled{model, cfg_.ood_weight};
    return cfg_.ood_weight * ood_regularizer(scaled, in_dist, ood).loss;
  }

  RewardTrainingConfig cfg_;
  std::uint64_t seed_;
  std::vector<std::mt19937_64> rngs_;
  std::vector<ReturnNormalizer> normalizers_;
  std::size_t steps_done_ = 0;
};

// Runs `updates` steps over `dataset`, each member sampling its own batch.
inline std::vector<LossRecord> train_reward(const RatingDataset& dataset, RewardEnsemble& ensemble,
                                            std::size_t updates, const RewardTrainingConfig& cfg,
                                            std::uint64_t seed) {
  RewardTrainer trainer(cfg, seed);
  return trainer.train(dataset, ensemble, updates);
}

inline std::string loss_record_to_line(const LossRecord& r) {
  nlohmann::json j = {{"step", r.step}, {"loss", r.loss}, {"l2", r.l2}, {"ood", r.ood}, {"total", r.total}};
  return j.dump();
}

inline void write_loss_history(const std::string& path, const std::vector<LossRecord>& history, bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const LossRecord& r : history) out << loss_record_to_line(r) << '\n';
  if (!out) throw IoError(path, "write failed");
}

}  // namespace rankreward
