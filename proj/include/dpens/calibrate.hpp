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
// Noise calibration: binary search over the noise multiplier so that
// n_queries compositions of the subsampled Gaussian meet a target
// (epsilon, delta) budget without ever exceeding it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dpens/ledger.hpp"
#include "dpens/prv.hpp"

namespace dpens {

// Epsilon actually charged for n_queries subsampled-Gaussian invocations with
// noise multiplier sigma at rate q — the exact evaluation calibrate_sigma
// searches against, shared so that calibration and later accounting agree
// bit-for-bit.
inline double accounted_gaussian_epsilon(
    double sigma, double q, std::int64_t n_queries, double delta,
    double mesh = kDefaultPrvMesh,
    std::size_t max_points = kDefaultMaxFftPoints) {
  return composed_gaussian_epsilon(sigma, q, n_queries, delta, mesh,
                                   max_points);
}

// Smallest noise multiplier (within search tolerance) whose accounted epsilon
// does not exceed target_eps.  Monotone: more queries never decreases the
// returned sigma.  Errors if the target is not bracketed inside
// sigma in [1e-2, 1e4].
inline double calibrate_sigma(double target_eps, double target_delta, double q,
                              std::int64_t n_queries,
                              double mesh = kDefaultPrvMesh,
                              std::size_t max_points = kDefaultMaxFftPoints) {
  if (!(target_eps > 0.0)) {
    throw std::invalid_argument("calibrate_sigma: target_eps must be > 0");
  }
  if (!(target_delta > 0.0 && target_delta < 1.0)) {
    throw std::invalid_argument("calibrate_sigma: target_delta not in (0,1)");
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("calibrate_sigma: q must be in (0,1]");
  }
  if (n_queries <= 0) {
    throw std::invalid_argument("calibrate_sigma: n_queries must be positive");
  }
  const auto eps_at = [&](double sigma) {
    return accounted_gaussian_epsilon(sigma, q, n_queries, target_delta, mesh,
                                      max_points);
  };
  // Bracket the answer by geometric expansion from the classical
  // sqrt(2 log(1.25/delta)) * sqrt(n) * q / eps guess instead of probing the
  // extreme search limits: tiny-sigma probes are the expensive ones (a PRV
  // with support +-7.5/sigma), and the guess keeps every probe near the
  // answer.
  constexpr double kSigmaFloor = 1e-2;
  constexpr double kSigmaCeiling = 1e4;
  const double guess = std::clamp(
      q * std::sqrt(static_cast<double>(n_queries)) * 2.0 *
          std::sqrt(std::log(1.25 / target_delta)) / target_eps,
      kSigmaFloor, kSigmaCeiling);
  double lo, hi;
  if (eps_at(guess) > target_eps) {
    lo = guess;
    hi = guess;
    do {
      if (hi >= kSigmaCeiling) {
        throw std::runtime_error(
            "calibrate_sigma: target unreachable at the sigma search ceiling");
      }
      lo = hi;
      hi = std::min(hi * 4.0, kSigmaCeiling);
    } while (eps_at(hi) > target_eps);
  } else {
    hi = guess;
    lo = guess;
    do {
      if (lo <= kSigmaFloor) {
        throw std::runtime_error(
            "calibrate_sigma: target met at the sigma search floor (no "
            "bracket)");
      }
      hi = lo;
      lo = std::max(lo / 4.0, kSigmaFloor);
    } while (eps_at(lo) <= target_eps);
  }
  // Bisection on log sigma down to a 1e-5 bracket ratio: epsilon moves by
  // only ~1e-5 relative across that bracket, far inside the tolerance band.
  for (int it = 0; it < 30 && hi / lo - 1.0 > 1e-5; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (eps_at(mid) > target_eps) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace dpens
