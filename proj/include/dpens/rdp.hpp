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
// Renyi-DP curves: the exponential-mechanism bound, the propose-test-release
// approximate-RDP curve, subsampling amplification, and conversion to
// (epsilon, delta).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dpens/common.hpp"

namespace dpens {

// Map from Renyi order alpha to eps(alpha), with an approximation failure
// mass (0 for pure RDP).  Composition adds eps values on matching orders and
// adds delta_approx.
struct RdpCurve {
  std::vector<double> orders;      // sorted, all > 1
  std::vector<double> eps_values;  // matching eps(alpha) >= 0
  double delta_approx = 0.0;

  void validate() const {
    if (orders.size() != eps_values.size()) {
      throw std::invalid_argument("RdpCurve: length mismatch");
    }
    for (std::size_t i = 0; i < orders.size(); ++i) {
      if (!(orders[i] > 1.0)) {
        throw std::invalid_argument("RdpCurve: orders must be > 1");
      }
      if (i > 0 && orders[i] <= orders[i - 1]) {
        throw std::invalid_argument("RdpCurve: orders must be increasing");
      }
      if (eps_values[i] < 0.0) {
        throw std::invalid_argument("RdpCurve: eps must be >= 0");
      }
    }
  }

  // eps at the smallest tabulated order >= alpha (an upper bound, since RDP
  // curves are non-decreasing in the order); falls back to the last entry.
  double eps_at_or_above(double alpha) const {
    auto it = std::lower_bound(orders.begin(), orders.end(), alpha);
    if (it == orders.end()) return eps_values.back();
    return eps_values[static_cast<std::size_t>(it - orders.begin())];
  }
};

// Default order grid used throughout: dense near 1, integer through 64, then
// sparse large orders so free mechanisms convert to near-zero epsilon.
inline std::vector<double> default_rdp_orders() {
  std::vector<double> orders;
  for (int k = 1; k <= 40; ++k) orders.push_back(1.0 + k / 10.0);
  for (int a = 2; a <= 64; ++a) orders.push_back(static_cast<double>(a));
  orders.push_back(128.0);
  orders.push_back(256.0);
  orders.push_back(1024.0);
  orders.push_back(1e6);
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  return orders;
}

// Exponential-mechanism RDP bound:
//   eps(alpha) = min( alpha eps0^2 / 2,
//                     log((sinh(alpha eps0) - sinh((alpha-1) eps0)) / sinh(eps0))
//                       / (alpha - 1) )
// The sinh difference is evaluated through the identity
//   sinh A - sinh B = 2 cosh((A+B)/2) sinh((A-B)/2)
// so large alpha * eps0 never overflows.
inline double em_rdp_epsilon(double eps0, double alpha) {
  if (!(eps0 > 0.0)) throw std::invalid_argument("em_rdp: eps0 must be > 0");
  if (!(alpha > 1.0)) throw std::invalid_argument("em_rdp: alpha must be > 1");
  const double bound1 = alpha * eps0 * eps0 / 2.0;
  const double log_diff = std::log(2.0) +
                          log_cosh((2.0 * alpha - 1.0) * eps0 / 2.0) +
                          log_sinh(eps0 / 2.0);
  const double bound2 = (log_diff - log_sinh(eps0)) / (alpha - 1.0);
  return std::min(bound1, bound2);
}

inline RdpCurve em_rdp_curve(double eps0, const std::vector<double>& orders) {
  RdpCurve c;
  c.orders = orders;
  c.eps_values.reserve(orders.size());
  for (double a : orders) c.eps_values.push_back(em_rdp_epsilon(eps0, a));
  c.validate();
  return c;
}

// Propose-test-release curve: delta_fail-approximate alpha/(2 sigma^2)-RDP.
inline RdpCurve ptr_rdp(double sigma, double delta_fail,
                        const std::vector<double>& orders) {
  if (!(sigma > 0.0)) throw std::invalid_argument("ptr_rdp: sigma must be > 0");
  if (!(delta_fail > 0.0 && delta_fail < 1.0)) {
    throw std::invalid_argument("ptr_rdp: delta_fail must lie in (0,1)");
  }
  RdpCurve c;
  c.orders = orders;
  c.eps_values.reserve(orders.size());
  for (double a : orders) c.eps_values.push_back(a / (2.0 * sigma * sigma));
  c.delta_approx = delta_fail;
  c.validate();
  return c;
}

// Effective sampling rate under approximate-RDP subsampling amplification:
// q' = q (1 - delta) / (1 - q delta).
inline double amplified_rate(double q, double delta) {
  return q * (1.0 - delta) / (1.0 - q * delta);
}

namespace detail {

// Conservative closed-form subsampled-RDP bound at integer order A >= 2 for
// effective rate qe, in the style of the Wang-Balle-Kasiviswanathan integer
// moments bound, with the constant on every j >= 2 term raised to 4 (an upper
// bound of the per-term constants in the published forms):
//   (1/(A-1)) log( (1-qe)^{A-1} (A qe - qe + 1)
//                  + sum_{j=2..A} 4 C(A,j) (1-qe)^{A-j} qe^j e^{(j-1) eps(j)} )
inline double subsampled_rdp_integer_bound(const RdpCurve& base, double qe,
                                           std::int64_t A) {
  const double log_qe = std::log(qe);
  const double log_1mqe = std::log1p(-qe);
  std::vector<double> log_terms;
  log_terms.reserve(static_cast<std::size_t>(A));
  log_terms.push_back(static_cast<double>(A - 1) * log_1mqe +
                      std::log(static_cast<double>(A) * qe - qe + 1.0));
  for (std::int64_t j = 2; j <= A; ++j) {
    const double eps_j = base.eps_at_or_above(static_cast<double>(j));
    log_terms.push_back(std::log(4.0) + log_binomial(A, j) +
                        static_cast<double>(A - j) * log_1mqe +
                        static_cast<double>(j) * log_qe +
                        static_cast<double>(j - 1) * eps_j);
  }
  return log_sum_exp(log_terms) / static_cast<double>(A - 1);
}

}  // namespace detail

// Amplification by Poisson subsampling for an (approximate) RDP curve:
// delta_approx becomes q * delta_approx, the rate is adjusted to
// q' = q (1-delta)/(1 - q delta), and each eps(alpha) is replaced by
//   min( eps(alpha), integer bound at A = ceil(alpha) )
// with the integer bound skipped above order 256 (where the unamplified value
// is kept; it is always a valid bound, so the min preserves correctness while
// guaranteeing amplification never hurts).
inline RdpCurve amplify_approx_rdp(const RdpCurve& curve, double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("amplify_approx_rdp: q must be in (0,1]");
  }
  if (q == 1.0) return curve;
  const double qe = amplified_rate(q, curve.delta_approx);
  RdpCurve out;
  out.orders = curve.orders;
  out.delta_approx = q * curve.delta_approx;
  out.eps_values.reserve(curve.orders.size());
  constexpr std::int64_t kMaxIntegerOrder = 256;
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const double alpha = curve.orders[i];
    double eps = curve.eps_values[i];
    const auto a_int =
        static_cast<std::int64_t>(std::ceil(alpha - 1e-12));
    const std::int64_t A = std::max<std::int64_t>(2, a_int);
    if (A <= kMaxIntegerOrder) {
      eps = std::min(
          eps, std::max(0.0, detail::subsampled_rdp_integer_bound(curve, qe, A)));
    }
    out.eps_values.push_back(eps);
  }
  out.validate();
  return out;
}

// RDP-to-DP conversion:
//   eps = min over tabulated alpha of eps(alpha) + log(1/delta')/(alpha - 1),
// with delta' = delta - delta_approx.
inline std::pair<double, double> rdp_to_dp(const RdpCurve& curve,
                                           double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("rdp_to_dp: delta must lie in (0,1)");
  }
  if (delta <= curve.delta_approx) {
    throw std::invalid_argument("rdp_to_dp: delta <= delta_approx");
  }
  const double delta_eff = delta - curve.delta_approx;
  const double logd = std::log(1.0 / delta_eff);
  double best = kInf;
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    best = std::min(best,
                    curve.eps_values[i] + logd / (curve.orders[i] - 1.0));
  }
  return {best, delta};
}

// Entrywise composition helpers.
inline RdpCurve scale_rdp_curve(const RdpCurve& curve, std::int64_t count) {
  if (count <= 0) throw std::invalid_argument("scale_rdp_curve: count <= 0");
  RdpCurve out = curve;
  for (double& e : out.eps_values) e *= static_cast<double>(count);
  out.delta_approx =
      std::min(1.0, curve.delta_approx * static_cast<double>(count));
  return out;
}

inline RdpCurve add_rdp_curves(const RdpCurve& a, const RdpCurve& b) {
  if (a.orders != b.orders) {
    throw std::invalid_argument("add_rdp_curves: order grids differ");
  }
  RdpCurve out = a;
  for (std::size_t i = 0; i < out.eps_values.size(); ++i) {
    out.eps_values[i] += b.eps_values[i];
  }
  out.delta_approx = std::min(1.0, a.delta_approx + b.delta_approx);
  return out;
}

}  // namespace dpens
