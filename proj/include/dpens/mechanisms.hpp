// Copyright 2026 The dpens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Core differentially private primitives.  All randomness flows through an
// explicit RandomSource, so identical seeds and inputs give identical outputs.
// sigma = 0 is allowed everywhere for deterministic testing; the accounting
// module is the layer that rejects it as an infinite privacy cost.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "dpens/common.hpp"
#include "dpens/histogram.hpp"

namespace dpens {

// Report-Noisy-Max with Gaussian noise: argmax over labels of
// count + N(0, sigma^2).  Ties after noise are broken by the lowest label id
// (a measure-zero event for sigma > 0, and the deterministic rule that makes
// sigma = 0 equal the exact argmax).
inline LabelId rnm_gaussian(const VoteHistogram& hist, double sigma,
                            RandomSource& rng) {
  if (hist.empty()) {
    throw std::invalid_argument("rnm_gaussian: no responses to aggregate");
  }
  if (sigma < 0.0) throw std::invalid_argument("rnm_gaussian: sigma < 0");
  LabelId best_id = 0;
  double best_score = -kInf;
  // std::map iterates in ascending label order, so a strict > comparison
  // leaves the lowest id in place on exact ties.
  for (const auto& [id, c] : hist.counts) {
    const double score = static_cast<double>(c) + rng.gaussian(sigma);
    if (score > best_score) {
      best_score = score;
      best_id = id;
    }
  }
  return best_id;
}

// Vector Gaussian mechanism: mean + i.i.d. N(0, (sigma * sensitivity)^2) per
// coordinate.  The output is intentionally not renormalized.
inline std::vector<double> gaussian_vector(const std::vector<double>& mean,
                                           double sigma, double sensitivity,
                                           RandomSource& rng) {
  if (sigma < 0.0 || sensitivity <= 0.0) {
    throw std::invalid_argument("gaussian_vector: bad noise parameters");
  }
  std::vector<double> out;
  out.reserve(mean.size());
  const double scale = sigma * sensitivity;
  for (double v : mean) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("gaussian_vector: non-finite input entry");
    }
    out.push_back(v + rng.gaussian(scale));
  }
  return out;
}

// Exponential mechanism realized through the Gumbel-max trick: returns
// argmax_i utility_i + Gumbel(scale).  The output distribution is
// P(i) proportional to exp(utility_i / scale) over the finite entries;
// utility -inf marks an infeasible entry that is never selected.
inline std::size_t exponential_via_gumbel(const std::vector<double>& utilities,
                                          double scale, RandomSource& rng) {
  if (scale <= 0.0) {
    throw std::invalid_argument("exponential_via_gumbel: scale must be > 0");
  }
  std::size_t best = 0;
  double best_score = -kInf;
  bool any = false;
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    if (utilities[i] == -kInf) continue;
    const double score = utilities[i] + rng.gumbel(scale);
    if (!any || score > best_score) {
      any = true;
      best_score = score;
      best = i;
    }
  }
  if (!any) {
    throw std::invalid_argument("exponential_via_gumbel: no feasible entry");
  }
  return best;
}

// FindBestK: exponential mechanism over the gap utilities d_k + r(k) with
// scale 4/epsilon (= 2 * Delta / epsilon for the sensitivity-2 gaps), realized
// with Gumbel noise.  Returns the selected k (1-based).
inline int find_best_k(const VoteHistogram& hist, double epsilon,
                       const std::function<double(int)>& regularizer,
                       RandomSource& rng) {
  if (epsilon <= 0.0) throw std::invalid_argument("find_best_k: epsilon <= 0");
  const GapProfile profile = GapProfile::from_histogram(hist, regularizer);
  if (profile.gaps.empty()) {
    throw std::invalid_argument("find_best_k: need >= 2 distinct candidates");
  }
  std::vector<double> utilities;
  utilities.reserve(profile.gaps.size());
  for (std::size_t i = 0; i < profile.gaps.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    const double r = regularizer ? regularizer(k) : 0.0;
    utilities.push_back(static_cast<double>(profile.gaps[i]) + r);
  }
  const std::size_t idx = exponential_via_gumbel(utilities, 4.0 / epsilon, rng);
  return static_cast<int>(idx) + 1;
}

// Top-k release with propose-test-release.  The stability margin
//   d_hat_k = max(2, d_k) + N(0, 4 sigma^2) - Q(1 - delta; 0, 2 sigma)
// is tested against 2, where Q(p; 0, s) is the p-quantile of a centered
// Gaussian with standard deviation s.  On success the exact (noise-free)
// top-k label set is released, ties broken by lowest label id; on failure an
// empty optional tells the caller to fall back to zero-shot generation.
inline std::optional<std::set<LabelId>> top_k_with_ptr(
    const VoteHistogram& hist, int k, double sigma, double delta,
    RandomSource& rng) {
  if (k <= 0) throw std::invalid_argument("top_k_with_ptr: k must be positive");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("top_k_with_ptr: delta must lie in (0,1)");
  }
  if (sigma < 0.0) throw std::invalid_argument("top_k_with_ptr: sigma < 0");
  const auto sorted = hist.sorted_desc();
  const int m = static_cast<int>(sorted.size());
  // Fewer than k+1 distinct candidates: pad with a zero-count sentinel, which
  // only ever supplies the (k+1)-th count below.  Releasing k real labels
  // still requires k of them to exist.
  if (k > m) {
    throw std::invalid_argument(
        "top_k_with_ptr: k exceeds the number of candidates after padding");
  }
  const Count kth = sorted[k - 1].second;
  const Count next = (k < m) ? sorted[k].second : 0;  // zero-count sentinel
  const Count d_k = kth - next;

  const double proposed = std::max<double>(2.0, static_cast<double>(d_k));
  const double noise = rng.gaussian(2.0 * sigma);
  const double threshold_shift =
      (sigma > 0.0) ? 2.0 * sigma * normal_quantile(1.0 - delta) : 0.0;
  const double d_hat = proposed + noise - threshold_shift;
  if (!(d_hat > 2.0)) return std::nullopt;

  std::set<LabelId> out;
  for (int i = 0; i < k; ++i) out.insert(sorted[i].first);
  return out;
}

}  // namespace dpens
