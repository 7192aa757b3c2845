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

// Differentiable ranking by Euclidean projection onto the permutahedron.
//
// soft_rank(v, eps) = argmin_{r in P(1..n)} || r - v / eps ||^2, which is
// computed by sorting v / eps in decreasing order and solving an isotonic
// regression with pool-adjacent-violators. The result converges to the
// ascending 1-indexed hard ranks as eps -> 0 for distinct inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iostream>
#include <numeric>
#include <span>
#include <vector>

#include "rankreward/errors.hpp"

namespace rankreward {

inline constexpr double kMinRankRegularization = 1e-6;

// Half-open range [begin, end) of positions in the sorted order that share
// one isotonic value.
struct RankBlock {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct SoftRankResult {
  std::vector<double> ranks;
  // Isotonic blocks over sorted positions; retained for the backward pass.
  std::vector<RankBlock> blocks;
  // order[p] is the input index placed at sorted position p (decreasing).
  std::vector<std::size_t> order;
  double regularization = 1.0;
};

namespace detail {

// Solves argmin_{x_1 >= x_2 >= ... >= x_n} ||x - y||^2 and returns the
// solution together with its constant blocks.
inline std::vector<double> isotonic_decreasing(std::span<const double> y,
                                               std::vector<RankBlock>& blocks) {
  struct Pool {
    std::size_t begin;
    std::size_t end;
    double sum;
  };
  std::vector<Pool> stack;
  stack.reserve(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    stack.push_back({i, i + 1, y[i]});
    while (stack.size() > 1) {
      const Pool& cur = stack.back();
      const Pool& prev = stack[stack.size() - 2];
      const double cur_mean = cur.sum / static_cast<double>(cur.end - cur.begin);
      const double prev_mean =
          prev.sum / static_cast<double>(prev.end - prev.begin);
      if (prev_mean > cur_mean) break;
      Pool merged{prev.begin, cur.end, prev.sum + cur.sum};
      stack.pop_back();
      stack.back() = merged;
    }
  }
  std::vector<double> x(y.size());
  blocks.clear();
  blocks.reserve(stack.size());
  for (const Pool& p : stack) {
    const double mean = p.sum / static_cast<double>(p.end - p.begin);
    std::fill(x.begin() + static_cast<std::ptrdiff_t>(p.begin),
              x.begin() + static_cast<std::ptrdiff_t>(p.end), mean);
    blocks.push_back({p.begin, p.end});
  }
  return x;
}

inline double effective_regularization(double regularization) {
  if (!(regularization > 0.0) || !std::isfinite(regularization)) {
    throw ArgumentError("soft_rank: regularization must be a positive finite number");
  }
  if (regularization < kMinRankRegularization) {
    std::clog << "soft_rank: regularization " << regularization
              << " clamped to " << kMinRankRegularization << '\n';
    return kMinRankRegularization;
  }
  return regularization;
}

}  // namespace detail

// Soft ranks of `values`, ascending and 1-indexed: the smallest input gets
// the rank closest to 1. Ties receive equal fractional ranks.
inline SoftRankResult soft_rank(std::span<const double> values,
                                double regularization) {
  if (values.empty()) throw ArgumentError("soft_rank: empty input");
  for (double v : values) {
    if (!std::isfinite(v)) throw ArgumentError("soft_rank: non-finite input value");
  }
  const double reg = detail::effective_regularization(regularization);
  const std::size_t n = values.size();

  SoftRankResult result;
  result.regularization = reg;
  result.order.resize(n);
  std::iota(result.order.begin(), result.order.end(), std::size_t{0});
  std::stable_sort(result.order.begin(), result.order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  // Sorted scaled values minus the decreasing anchor (n, n-1, ..., 1).
  std::vector<double> sorted(n);
  std::vector<double> shifted(n);
  for (std::size_t p = 0; p < n; ++p) {
    sorted[p] = values[result.order[p]] / reg;
    shifted[p] = sorted[p] - static_cast<double>(n - p);
  }
  const std::vector<double> dual = detail::isotonic_decreasing(shifted, result.blocks);

  result.ranks.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    result.ranks[result.order[p]] = sorted[p] - dual[p];
  }
  return result;
}

inline SoftRankResult soft_rank(const std::vector<double>& values,
                                double regularization) {
  return soft_rank(std::span<const double>(values), regularization);
}

// Vector-Jacobian product of soft_rank at the input that produced `result`.
inline std::vector<double> soft_rank_vjp(const SoftRankResult& result,
                                         std::span<const double> upstream) {
  const std::size_t n = result.ranks.size();
  if (upstream.size() != n) {
    throw ArgumentError("soft_rank_vjp: upstream length does not match ranks");
  }
  std::vector<double> sorted_up(n);
  for (std::size_t p = 0; p < n; ++p) sorted_up[p] = upstream[result.order[p]];

  // d(rank)/d(sorted scaled value) = I - blockwise averaging.
  std::vector<double> grad(n);
  for (const RankBlock& b : result.blocks) {
    double mean = 0.0;
    for (std::size_t p = b.begin; p < b.end; ++p) mean += sorted_up[p];
    mean /= static_cast<double>(b.end - b.begin);
    for (std::size_t p = b.begin; p < b.end; ++p) {
      grad[result.order[p]] = (sorted_up[p] - mean) / result.regularization;
    }
  }
  return grad;
}

inline std::vector<double> soft_rank_vjp(const SoftRankResult& result,
                                         const std::vector<double>& upstream) {
  return soft_rank_vjp(result, std::span<const double>(upstream));
}

// Largest per-element ranking error for which the relaxed rMSE solution set
// still coincides with the order-preserving set: (sqrt(2n) - 2) / (n - 2).
inline double rank_error_bound(int n) {
  if (n <= 2) throw ArgumentError("rank_error_bound: n must be greater than 2");
  const double nd = static_cast<double>(n);
  return (std::sqrt(2.0 * nd) - 2.0) / (nd - 2.0);
}

// Exact ascending ranks (1-indexed, ties averaged); the reference that
// soft_rank approaches at low regularization.
inline std::vector<double> hard_rank(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[idx[j]] == values[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = avg;
    i = j;
  }
  return ranks;
}

}  // namespace rankreward
