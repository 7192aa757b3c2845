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

// Exhaustive checks of the rMSE solution-set characterization on finite
// instances. A hypothesis is represented by the returns it induces on every
// trajectory of the instance; instances built from per-state reward grids
// and from direct return assignments both reduce to that form.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rankreward/errors.hpp"
#include "rankreward/objectives.hpp"
#include "rankreward/softrank.hpp"

namespace rankreward::theory {

inline constexpr std::size_t kMaxTuples = 1000000;

struct FiniteInstance {
  std::vector<int> labels;                     // class per trajectory
  std::size_t n_classes = 0;
  std::vector<std::vector<double>> hypotheses;  // returns per trajectory
  std::size_t r_star = 0;                       // index of the generating hypothesis

  std::size_t trajectory_count() const { return labels.size(); }

  std::vector<std::vector<std::size_t>> class_members() const {
    std::vector<std::vector<std::size_t>> m(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) m.at(static_cast<std::size_t>(labels[i])).push_back(i);
    return m;
  }

  void validate() const {
    if (n_classes == 0) throw ArgumentError("instance: no classes");
    if (hypotheses.empty()) throw ArgumentError("instance: empty hypothesis grid");
    if (r_star >= hypotheses.size()) throw ArgumentError("instance: r* is not in the hypothesis grid");
    for (const auto& h : hypotheses) {
      if (h.size() != labels.size()) throw ArgumentError("instance: hypothesis does not cover every trajectory");
    }
    for (const auto& c : class_members()) {
      if (c.empty()) throw ArgumentError("instance: every class needs at least one trajectory");
    }
    // r* must induce the binning: classes occupy disjoint, ordered return
    // ranges.
    const auto& g = hypotheses[r_star];
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[i] < labels[j] && !(g[i] < g[j])) {
          throw ArgumentError("instance: labels are not a binning of the r* returns");
        }
      }
    }
  }
};

// Hypotheses h such that c_i < c_j implies G_h(i) < G_h(j).
inline bool order_preserving(const FiniteInstance& inst, const std::vector<double>& g) {
  const std::size_t t = inst.trajectory_count();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      if (inst.labels[i] < inst.labels[j] && !(g[i] < g[j])) return false;
    }
  }
  return true;
}

inline std::vector<std::size_t> feasible_set(const FiniteInstance& inst) {
  inst.validate();
  std::vector<std::size_t> out;
  for (std::size_t h = 0; h < inst.hypotheses.size(); ++h) {
    if (order_preserving(inst, inst.hypotheses[h])) out.push_back(h);
  }
  return out;
}

// 0-indexed exact ranks of one tuple. Equal returns are ordered against
// their labels, so a tie between classes counts as a misordering.
inline std::vector<double> hard_ranks_adversarial(std::span<const double> g, std::span<const int> labels) {
  std::vector<std::size_t> idx(g.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (g[a] != g[b]) return g[a] < g[b];
    return labels[a] > labels[b];
  });
  std::vector<double> r(g.size());
  for (std::size_t p = 0; p < idx.size(); ++p) r[idx[p]] = static_cast<double>(p);
  return r;
}

// Smallest rMSE an operator with per-element rank error at most `eps` can
// report for this tuple: every rank is moved up to `eps` toward its label.
inline double min_relaxed_loss(std::span<const double> ranks0, std::span<const int> labels, double eps) {
  double acc = 0.0;
  for (std::size_t i = 0; i < ranks0.size(); ++i) {
    const double d = std::max(0.0, std::abs(ranks0[i] - static_cast<double>(labels[i])) - eps);
    acc += d * d;
  }
  return acc / static_cast<double>(ranks0.size());
}

namespace detail {

// Calls fn(trajectory ids) on every one-per-class tuple; stops early when
// fn returns false.
template <class Fn>
void for_each_tuple(const FiniteInstance& inst, Fn&& fn) {
  const auto members = inst.class_members();
  double product = 1.0;
  for (const auto& m : members) product *= static_cast<double>(m.size());
  if (product > static_cast<double>(kMaxTuples)) {
    throw ArgumentError("instance has " + std::to_string(static_cast<long long>(product)) +
                        " one-per-class tuples, more than the enumeration limit");
  }
  std::vector<std::size_t> pos(members.size(), 0);
  std::vector<std::size_t> ids(members.size());
  while (true) {
    for (std::size_t k = 0; k < members.size(); ++k) ids[k] = members[k][pos[k]];
    if (!fn(ids)) return;
    std::size_t k = 0;
    while (k < members.size() && ++pos[k] == members[k].size()) pos[k++] = 0;
    if (k == members.size()) return;
  }
}

// Largest per-tuple loss over all tuples for hypothesis h; `eps` < 0 uses
// the exact-rank loss, otherwise the adversarial relaxed one.
inline double worst_tuple_loss(const FiniteInstance& inst, std::size_t h, double eps, double stop_above) {
  const auto& g = inst.hypotheses[h];
  std::vector<double> gt(inst.n_classes);
  std::vector<int> lt(inst.n_classes);
  double worst = 0.0;
  for_each_tuple(inst, [&](const std::vector<std::size_t>& ids) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      gt[k] = g[ids[k]];
      lt[k] = inst.labels[ids[k]];
    }
    const std::vector<double> r = hard_ranks_adversarial(gt, lt);
    const double loss = eps < 0.0 ? rmse_from_ranks(r, lt) : min_relaxed_loss(r, lt, eps);
    worst = std::max(worst, loss);
    return worst <= stop_above;
  });
  return worst;
}

}  // namespace detail

inline double worst_tuple_loss(const FiniteInstance& inst, std::size_t h) {
  return detail::worst_tuple_loss(inst, h, -1.0, std::numeric_limits<double>::infinity());
}

// Hypotheses whose exact-rank rMSE is 0 on every one-per-class tuple.
inline std::vector<std::size_t> rmse_zero_set(const FiniteInstance& inst) {
  inst.validate();
  std::vector<std::size_t> out;
  for (std::size_t h = 0; h < inst.hypotheses.size(); ++h) {
    if (detail::worst_tuple_loss(inst, h, -1.0, 0.0) == 0.0) out.push_back(h);
  }
  return out;
}

// Hypotheses with relaxed loss at most eps^2 on every tuple.
inline std::vector<std::size_t> relaxed_set(const FiniteInstance& inst, double eps) {
  inst.validate();
  const double cap = eps * eps;
  std::vector<std::size_t> out;
  for (std::size_t h = 0; h < inst.hypotheses.size(); ++h) {
    if (detail::worst_tuple_loss(inst, h, eps, cap) <= cap) out.push_back(h);
  }
  return out;
}

// Direct return assignment for the adjacent class swap at classes k, k+1:
// class c gets return c, with k and k+1 exchanged.
inline std::vector<double> adjacent_swap_hypothesis(const FiniteInstance& inst, int k) {
  std::vector<double> g(inst.trajectory_count());
  for (std::size_t i = 0; i < g.size(); ++i) {
    int c = inst.labels[i];
    if (c == k) {
      c = k + 1;
    } else if (c == k + 1) {
      c = k;
    }
    g[i] = static_cast<double>(c);
  }
  return g;
}

struct RelaxedReport {
  bool equal = false;
  double epsilon = 0.0;
  double bound = 0.0;
  std::size_t feasible = 0;
  std::size_t relaxed = 0;
  // First admitted hypothesis outside R, when the sets differ.
  std::optional<std::size_t> witness;
  // Every member of R stayed admitted under random rank noise in [-eps, eps].
  bool noise_preserves_feasible = true;
  std::size_t noise_trials = 0;
};

// Compares the relaxed solution set to R after adding the adjacent-swap
// hypothesis to the grid.
inline RelaxedReport relaxed_equivalence(FiniteInstance inst, double eps, std::mt19937_64& rng,
                                         std::size_t noise_trials = 8) {
  if (inst.n_classes <= 2) throw ArgumentError("relaxed_equivalence: needs more than two classes");
  if (!(eps >= 0.0)) throw ArgumentError("relaxed_equivalence: epsilon must be non-negative");
  inst.hypotheses.push_back(adjacent_swap_hypothesis(inst, 0));
  RelaxedReport rep;
  rep.epsilon = eps;
  rep.bound = rank_error_bound(static_cast<int>(inst.n_classes));
  const std::vector<std::size_t> r = feasible_set(inst);
  const std::vector<std::size_t> rr = relaxed_set(inst, eps);
  rep.feasible = r.size();
  rep.relaxed = rr.size();
  rep.equal = r == rr;
  for (std::size_t h : rr) {
    if (!std::binary_search(r.begin(), r.end(), h)) {
      rep.witness = h;
      break;
    }
  }

  std::uniform_real_distribution<double> noise(-eps, eps);
  std::vector<double> gt(inst.n_classes);
  std::vector<int> lt(inst.n_classes);
  for (std::size_t h : r) {
    for (std::size_t trial = 0; trial < noise_trials; ++trial) {
      double worst = 0.0;
      detail::for_each_tuple(inst, [&](const std::vector<std::size_t>& ids) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          gt[k] = inst.hypotheses[h][ids[k]];
          lt[k] = inst.labels[ids[k]];
        }
        std::vector<double> ranks = hard_ranks_adversarial(gt, lt);
        for (double& x : ranks) x += noise(rng);
        worst = std::max(worst, rmse_from_ranks(ranks, lt));
        return true;
      });
      ++rep.noise_trials;
      if (worst > eps * eps * (1.0 + 1e-12)) rep.noise_preserves_feasible = false;
    }
  }
  return rep;
}

struct RbRLWitness {
  std::vector<double> returns;  // normalized, per trajectory
  std::vector<double> gradient;
  double gradient_norm = 0.0;
  bool is_counterexample = false;
};

// Per-trajectory RbRL derivative for returns `g` via the closed form.
inline RbRLWitness rbrl_gradient_at(const std::vector<double>& g, const std::vector<int>& labels,
                                    const std::vector<double>& boundaries, double k, double tolerance = 1e-9) {
  RbRLConfig cfg{boundaries, k};
  const std::size_t n = boundaries.size() - 1;
  RbRLWitness w;
  w.returns = g;
  w.gradient = rbrl_closed_form_gradient(g, labels, cfg, n);
  double s = 0.0;
  for (double x : w.gradient) s += x * x;
  w.gradient_norm = std::sqrt(s);
  w.is_counterexample = w.gradient_norm > tolerance;
  return w;
}

// Places every trajectory of class c at the midpoint of [B_c, B_{c+1}]
// offset by eps, and reports the RbRL gradient there. None when eps is
// outside (0, min width / 2).
inline std::optional<RbRLWitness> rbrl_counterexample(const FiniteInstance& inst, const std::vector<double>& boundaries,
                                                      double k, double eps) {
  if (boundaries.size() != inst.n_classes + 1) throw ArgumentError("rbrl_counterexample: boundary count mismatch");
  resolve_boundaries(RbRLConfig{boundaries, k}, inst.n_classes);
  double min_width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) min_width = std::min(min_width, boundaries[i + 1] - boundaries[i]);
  if (!(eps > 0.0) || !(eps < min_width / 2.0)) return std::nullopt;
  std::vector<double> g(inst.trajectory_count());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = static_cast<std::size_t>(inst.labels[i]);
    g[i] = 0.5 * (boundaries[c] + boundaries[c + 1]) + eps;
  }
  return rbrl_gradient_at(g, inst.labels, boundaries, k);
}

// -- instance generation ---------------------------------------------------

struct InstanceShape {
  std::size_t n_classes = 3;
  std::size_t max_per_class = 4;
  std::vector<double> value_grid{-3, -2, -1, 0, 1, 2, 3};
  std::size_t states = 3;       // per-state reward grid size (0: direct assignment)
  std::size_t visits = 3;       // state visits per trajectory
};

// Cartesian product of `grid` over `dims` coordinates.
inline std::vector<std::vector<double>> grid_product(const std::vector<double>& grid, std::size_t dims) {
  std::vector<std::vector<double>> out{{}};
  for (std::size_t d = 0; d < dims; ++d) {
    std::vector<std::vector<double>> next;
    next.reserve(out.size() * grid.size());
    for (const auto& p : out) {
      for (double v : grid) {
        auto q = p;
        q.push_back(v);
        next.push_back(std::move(q));
      }
    }
    out = std::move(next);
  }
  return out;
}

// Random instance over a tiny MDP: trajectories are state-visit counts,
// hypotheses are all per-state reward vectors on the value grid, r* is a
// random grid member and classes bin its returns into contiguous groups.
// With `states` = 0, hypotheses assign returns to trajectories directly.
inline std::optional<FiniteInstance> random_instance(const InstanceShape& shape, std::mt19937_64& rng,
                                                     std::size_t attempts = 200) {
  const std::size_t n = shape.n_classes;
  std::uniform_int_distribution<std::size_t> size_d(1, shape.max_per_class);
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    std::vector<std::size_t> sizes(n);
    for (auto& s : sizes) s = size_d(rng);
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    const bool direct = shape.states == 0;
    const std::size_t dims = direct ? total : shape.states;

    // Features: visit counts (or identity for direct assignment).
    std::vector<std::vector<double>> feats(total, std::vector<double>(dims, 0.0));
    std::uniform_int_distribution<std::size_t> state_d(0, dims - 1);
    for (std::size_t t = 0; t < total; ++t) {
      if (direct) {
        feats[t][t] = 1.0;
      } else {
        for (std::size_t v = 0; v < shape.visits; ++v) feats[t][state_d(rng)] += 1.0;
      }
    }
    const auto params = grid_product(shape.value_grid, dims);
    if (params.size() > 200000) throw ArgumentError("random_instance: hypothesis grid too large");
    std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
    const std::size_t star = pick(rng);

    auto returns_of = [&](const std::vector<double>& theta) {
      std::vector<double> g(total, 0.0);
      for (std::size_t t = 0; t < total; ++t) {
        for (std::size_t d = 0; d < dims; ++d) g[t] += feats[t][d] * theta[d];
      }
      return g;
    };
    const std::vector<double> gstar = returns_of(params[star]);
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gstar[a] < gstar[b]; });

    // Contiguous groups of the requested sizes; group edges must fall on a
    // strict increase so that thresholds can separate them.
    FiniteInstance inst;
    inst.n_classes = n;
    inst.labels.assign(total, 0);
    bool ok = true;
    std::size_t p = 0;
    for (std::size_t c = 0; c < n && ok; ++c) {
      for (std::size_t i = 0; i < sizes[c]; ++i) inst.labels[order[p++]] = static_cast<int>(c);
      if (c + 1 < n && !(gstar[order[p - 1]] < gstar[order[p]])) ok = false;
    }
    if (!ok) continue;
    inst.hypotheses.reserve(params.size());
    for (const auto& theta : params) inst.hypotheses.push_back(returns_of(theta));
    inst.r_star = star;
    return inst;
  }
  return std::nullopt;
}

}  // namespace rankreward::theory
