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
// Privacy-loss random variable (PRV) accountant for (subsampled) Gaussian
// mechanisms: discretized PRV construction, FFT-based composition, and
// conversion to (epsilon, delta).
//
// Conventions that make the reported epsilon an upper bound:
//   * privacy-loss values are always rounded UP to the next grid point;
//   * mass cut off above the grid is booked as mass at +infinity;
//   * mass below the grid is reported at the lowest grid point.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dpens/common.hpp"

namespace dpens {

// Discretized distribution of a privacy-loss random variable on the uniform
// lattice {grid_origin + i * mesh}.  grid_origin is always an integer multiple
// of mesh, so lattices with nested meshes stay aligned under composition.
struct PrvDistribution {
  double grid_origin = 0.0;
  double mesh = 1e-4;
  std::vector<double> masses;
  double mass_at_plus_infinity = 0.0;

  double value_at(std::size_t i) const {
    return grid_origin + static_cast<double>(i) * mesh;
  }

  double total_mass() const {
    double s = mass_at_plus_infinity;
    for (double m : masses) s += m;
    return s;
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < masses.size(); ++i) s += masses[i] * value_at(i);
    return s;
  }

  double variance() const {
    const double mu = mean();
    double s = 0.0;
    for (std::size_t i = 0; i < masses.size(); ++i) {
      const double d = value_at(i) - mu;
      s += masses[i] * d * d;
    }
    return s;
  }

  void validate() const {
    if (std::fabs(total_mass() - 1.0) > 1e-9) {
      throw std::logic_error("PrvDistribution: masses do not sum to 1");
    }
  }

  static PrvDistribution point_mass_at_zero(double mesh_value) {
    PrvDistribution p;
    p.grid_origin = 0.0;
    p.mesh = mesh_value;
    p.masses = {1.0};
    return p;
  }
};

namespace detail {

// Iterative radix-2 FFT (and inverse), in place.  Sizes are powers of two.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool invert) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * M_PI / static_cast<double>(len) * (invert ? -1 : 1);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (invert) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// z^e by binary exponentiation (e >= 0).
inline std::complex<double> cpow_int(std::complex<double> z, std::uint64_t e) {
  std::complex<double> r(1.0, 0.0);
  while (e > 0) {
    if (e & 1) r *= z;
    z *= z;
    e >>= 1;
  }
  return r;
}

// Floor division for possibly-negative numerators.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return -floor_div(-a, b);
}

}  // namespace detail

// The privacy-loss log-ratio y(o) = log(P(o)/Q(o)) for the subsampled
// Gaussian, P = (1-q) N(0, s^2) + q N(1, s^2), Q = N(0, s^2), evaluated
// stably on both tails.
namespace detail {

inline double subsampled_log_ratio(double o, double sigma, double q) {
  const double x = (2.0 * o - 1.0) / (2.0 * sigma * sigma);
  if (q >= 1.0) return x;
  if (x > 0.0) return x + std::log(q + (1.0 - q) * std::exp(-x));
  return std::log1p(q * std::expm1(x));
}

// Inverse of the map above: the output value o whose log-ratio is y.
// Returns -infinity when y is below the ratio's infimum log(1-q).
inline double subsampled_log_ratio_inverse(double y, double sigma, double q) {
  if (q >= 1.0) return sigma * sigma * y + 0.5;
  double s;  // recovered (2o-1)/(2 sigma^2)
  if (y <= 30.0) {
    const double arg = std::expm1(y) + q;  // = e^y - (1 - q)
    if (!(arg > 0.0)) return -kInf;
    s = std::log(arg) - std::log(q);
  } else {
    s = y - std::log(q) + std::log1p(-(1.0 - q) * std::exp(-y));
  }
  return sigma * sigma * s + 0.5;
}

inline double subsampled_prv_cdf(double o, double sigma, double q) {
  if (o == -kInf) return 0.0;
  if (q >= 1.0) return normal_cdf((o - 1.0) / sigma);
  return (1.0 - q) * normal_cdf(o / sigma) + q * normal_cdf((o - 1.0) / sigma);
}

}  // namespace detail

// Discretized PRV of the Poisson-subsampled Gaussian mechanism with noise
// multiplier sigma (sensitivity folded in by the caller) and sampling rate q.
// truncation_z is the standard-normal z-score bounding the ignored output
// tails; the default keeps each excluded tail below 1e-13.  Mass is binned by
// exact CDF differences (the log-ratio is monotone in o), rounding up.
inline PrvDistribution subsampled_gaussian_prv(double sigma, double q,
                                               double mesh = 1e-4,
                                               double truncation_z = 7.5) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("subsampled_gaussian_prv: sigma must be > 0");
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("subsampled_gaussian_prv: q must be in (0,1]");
  }
  if (!(mesh > 0.0) || !(truncation_z > 0.0)) {
    throw std::invalid_argument("subsampled_gaussian_prv: bad grid parameters");
  }
  const double o_lo = (q >= 1.0 ? 1.0 : 0.0) - truncation_z * sigma;
  const double o_hi = 1.0 + truncation_z * sigma;
  const double y_lo = detail::subsampled_log_ratio(o_lo, sigma, q);
  const double y_hi = detail::subsampled_log_ratio(o_hi, sigma, q);
  const double span = y_hi - y_lo;

  // A span much smaller than the requested mesh (tiny q) would push all mass
  // pessimistically onto one coarse point; refine by powers of two so nested
  // lattices stay aligned.
  double mesh_eff = mesh;
  while (span > 0.0 && mesh_eff > span / 512.0 && mesh_eff > 1e-15) {
    mesh_eff *= 0.5;
  }

  PrvDistribution prv;
  prv.mesh = mesh_eff;
  const double start = std::floor(y_lo / mesh_eff);
  prv.grid_origin = start * mesh_eff;
  const std::size_t n =
      static_cast<std::size_t>(std::ceil((y_hi - prv.grid_origin) / mesh_eff)) +
      1;
  prv.masses.resize(n, 0.0);
  double prev_cdf = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = prv.value_at(i);
    const double o = detail::subsampled_log_ratio_inverse(y, sigma, q);
    double c = detail::subsampled_prv_cdf(o, sigma, q);
    c = std::max(c, prev_cdf);  // guard against CDF rounding jitter
    prv.masses[i] = c - prev_cdf;
    prev_cdf = c;
  }
  prv.mass_at_plus_infinity = 1.0 - prev_cdf;
  return prv;
}

// Pessimistically re-grids onto a coarser nested lattice (ratio >= 1 integer
// multiple of the current mesh): every grid value moves to the next lattice
// point at or above it.
inline PrvDistribution regrid_coarser(const PrvDistribution& p,
                                      std::int64_t ratio) {
  if (ratio <= 1) return p;
  PrvDistribution out;
  out.mesh = p.mesh * static_cast<double>(ratio);
  out.mass_at_plus_infinity = p.mass_at_plus_infinity;
  const std::int64_t base = std::llround(p.grid_origin / p.mesh);
  const std::int64_t new_lo = detail::ceil_div(base, ratio);
  const std::int64_t new_hi =
      detail::ceil_div(base + static_cast<std::int64_t>(p.masses.size()) - 1,
                       ratio);
  out.grid_origin = static_cast<double>(new_lo) * out.mesh;
  out.masses.assign(static_cast<std::size_t>(new_hi - new_lo + 1), 0.0);
  for (std::size_t i = 0; i < p.masses.size(); ++i) {
    const std::int64_t g = base + static_cast<std::int64_t>(i);
    const std::int64_t ni = detail::ceil_div(g, ratio) - new_lo;
    out.masses[static_cast<std::size_t>(ni)] += p.masses[i];
  }
  return out;
}

// Composes independent PRVs (each repeated per its count) by FFT convolution.
// Factors are centered by their means (integer lattice shifts), multiplied in
// the frequency domain with binary-exponentiation powers, and the composed
// window is sized from summed moments; the mesh is coarsened by powers of two
// whenever the window would exceed max_points.  Mass the window cannot
// represent is booked pessimistically (+infinity above, lowest point below).
inline PrvDistribution compose_prvs(const std::vector<PrvDistribution>& prvs,
                                    const std::vector<std::int64_t>& counts,
                                    std::size_t max_points = (1u << 22)) {
  if (prvs.size() != counts.size()) {
    throw std::invalid_argument("compose_prvs: prvs/counts size mismatch");
  }
  if (prvs.empty()) {
    throw std::invalid_argument("compose_prvs: nothing to compose");
  }
  for (std::int64_t c : counts) {
    if (c <= 0) throw std::invalid_argument("compose_prvs: counts must be >= 1");
  }
  if (prvs.size() == 1 && counts[0] == 1) return prvs[0];  // exact identity

  // Common mesh: the coarsest input mesh, then doubled until the composed
  // window fits.  Input meshes are nested powers-of-two refinements of a
  // common base, so integer ratios are exact.
  double mesh = 0.0;
  for (const auto& p : prvs) mesh = std::max(mesh, p.mesh);

  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) mesh *= 2.0;
    if (attempt > 60) {
      throw std::runtime_error("compose_prvs: cannot fit composition window");
    }
    // Re-grid factors onto the common lattice.
    std::vector<PrvDistribution> factors;
    factors.reserve(prvs.size());
    bool ratio_ok = true;
    for (const auto& p : prvs) {
      const double r = mesh / p.mesh;
      const auto ri = static_cast<std::int64_t>(std::llround(r));
      if (std::fabs(r - static_cast<double>(ri)) > 1e-9 || ri < 1) {
        ratio_ok = false;
        break;
      }
      factors.push_back(regrid_coarser(p, ri));
    }
    if (!ratio_ok) {
      throw std::invalid_argument(
          "compose_prvs: incompatible meshes (not nested refinements)");
    }

    // Moments and centering shifts.
    double mu_total = 0.0, var_total = 0.0;
    std::int64_t shift_total = 0;
    std::int64_t max_half_extent = 0;
    std::vector<std::int64_t> center(factors.size(), 0);
    for (std::size_t f = 0; f < factors.size(); ++f) {
      const auto& p = factors[f];
      const double mu = p.mean();
      const double cnt = static_cast<double>(counts[f]);
      mu_total += cnt * mu;
      var_total += cnt * p.variance();
      const std::int64_t base = std::llround(p.grid_origin / p.mesh);
      const std::int64_t c = std::llround(mu / p.mesh);
      center[f] = c;
      shift_total += counts[f] * c;
      const std::int64_t lo = base - c;
      const std::int64_t hi = base + static_cast<std::int64_t>(p.masses.size()) - 1 - c;
      const std::int64_t alo = lo < 0 ? -lo : lo;
      const std::int64_t ahi = hi < 0 ? -hi : hi;
      max_half_extent = std::max(max_half_extent, std::max(alo, ahi));
    }
    const double sd_total = std::sqrt(std::max(var_total, 0.0));
    const double mu_centered = mu_total - static_cast<double>(shift_total) * mesh;
    const double half_span =
        std::fabs(mu_centered) + 33.0 * sd_total + 2.0 * mesh;
    const std::int64_t half_bins = std::max<std::int64_t>(
        max_half_extent + 1,
        static_cast<std::int64_t>(std::ceil(half_span / mesh)));
    const std::size_t n_fft = next_pow2(static_cast<std::size_t>(2 * half_bins + 2));
    if (n_fft > max_points) continue;  // coarsen and retry

    // Frequency-domain product of factor spectra raised to their counts.
    std::vector<std::complex<double>> acc(n_fft, std::complex<double>(1.0, 0.0));
    std::vector<std::complex<double>> buf(n_fft);
    double log_keep = 0.0;  // log prod (1 - mass_inf_f)^count_f
    for (std::size_t f = 0; f < factors.size(); ++f) {
      const auto& p = factors[f];
      std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
      const std::int64_t base = std::llround(p.grid_origin / p.mesh);
      for (std::size_t i = 0; i < p.masses.size(); ++i) {
        const std::int64_t v = base + static_cast<std::int64_t>(i) - center[f];
        const std::size_t slot = static_cast<std::size_t>(
            (v % static_cast<std::int64_t>(n_fft) + static_cast<std::int64_t>(n_fft)) %
            static_cast<std::int64_t>(n_fft));
        buf[slot] += p.masses[i];
      }
      detail::fft_inplace(buf, false);
      for (std::size_t s = 0; s < n_fft; ++s) {
        acc[s] *= detail::cpow_int(buf[s], static_cast<std::uint64_t>(counts[f]));
      }
      log_keep +=
          static_cast<double>(counts[f]) * std::log1p(-p.mass_at_plus_infinity);
    }
    detail::fft_inplace(acc, true);

    // Unwrap the ring: slots [0, n/2) are non-negative centered indices,
    // slots [n/2, n) negative ones.
    PrvDistribution out;
    out.mesh = mesh;
    const std::int64_t lo_idx = shift_total - static_cast<std::int64_t>(n_fft / 2);
    out.grid_origin = static_cast<double>(lo_idx) * mesh;
    out.masses.assign(n_fft, 0.0);
    for (std::size_t s = 0; s < n_fft; ++s) {
      const std::int64_t v = (s < n_fft / 2)
                                 ? static_cast<std::int64_t>(s)
                                 : static_cast<std::int64_t>(s) -
                                       static_cast<std::int64_t>(n_fft);
      const std::size_t pos = static_cast<std::size_t>(
          v + static_cast<std::int64_t>(n_fft / 2));
      out.masses[pos] = std::max(acc[s].real(), 0.0);
    }
    // Book any numerical defect pessimistically at +infinity.
    double interior = 0.0;
    for (double m : out.masses) interior += m;
    const double keep = std::exp(log_keep);
    if (interior > keep && interior > 0.0) {
      const double scale = keep / interior;
      for (double& m : out.masses) m *= scale;
      interior = keep;
    }
    out.mass_at_plus_infinity = std::max(0.0, 1.0 - interior);
    return out;
  }
}

// Smallest grid-achievable epsilon (clamped at 0) with
//   E[(1 - e^{eps - Y})_+] + mass_at_plus_infinity <= delta.
inline double prv_to_epsilon(const PrvDistribution& prv, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("prv_to_epsilon: delta must lie in (0,1)");
  }
  if (delta <= prv.mass_at_plus_infinity) {
    throw std::invalid_argument(
        "prv_to_epsilon: delta not achievable (mass at +infinity too large)");
  }
  // Only grid points with y > 0 can contribute to the expectation for any
  // eps >= 0; gather them with suffix sums of m and m * e^{-y}.
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < prv.masses.size(); ++i) {
    if (prv.value_at(i) > 0.0 && prv.masses[i] > 0.0) idx.push_back(i);
  }
  const std::size_t m = idx.size();
  std::vector<double> suf_m(m + 1, 0.0), suf_me(m + 1, 0.0);
  for (std::size_t j = m; j-- > 0;) {
    const double y = prv.value_at(idx[j]);
    suf_m[j] = suf_m[j + 1] + prv.masses[idx[j]];
    suf_me[j] = suf_me[j + 1] + prv.masses[idx[j]] * std::exp(-y);
  }
  const auto delta_at = [&](double eps, std::size_t first_above) {
    // The correction term e^{eps} * sum m e^{-y} equals sum m e^{eps - y}
    // with every y > eps in the suffix, so its true value is <= 1.  Evaluate
    // it as a single exponential to avoid inf * 0 when the suffix sum has
    // underflowed (large-y distributions); mass lost to underflow only makes
    // the reported delta larger, which is the safe direction.
    const double s = suf_me[first_above];
    const double correction = s > 0.0 ? std::exp(eps + std::log(s)) : 0.0;
    return suf_m[first_above] - correction + prv.mass_at_plus_infinity;
  };
  if (delta_at(0.0, 0) <= delta) return 0.0;
  // delta(eps) is non-increasing in eps; binary search the candidate grid
  // values y_{idx[j]} for the smallest satisfying one.
  std::size_t lo = 0, hi = m;  // delta_at(y_idx[hi-1] ... ) : hi satisfies
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    const double eps = prv.value_at(idx[mid]);
    if (delta_at(eps, mid + 1) <= delta) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  if (lo == m) {
    throw std::logic_error("prv_to_epsilon: search failed (internal)");
  }
  return prv.value_at(idx[lo]);
}

// Worst-case accumulated round-up pessimism (count * mesh) that the mesh
// selection in composed_gaussian_epsilon targets when memory permits; a few
// percent of the smallest practical epsilon budgets.
inline constexpr double kComposedRoundupBudget = 0.05;

namespace detail {

// Mean and variance of the continuous (undiscretized) subsampled-Gaussian
// PRV over the same truncated output range the discretization uses, by
// Simpson quadrature under the mixture P.  Only used to size composition
// windows, so modest quadrature accuracy is ample.
struct SubsampledPrvMoments {
  double mean = 0.0;
  double variance = 0.0;
  double y_lo = 0.0;
  double y_hi = 0.0;
};

inline SubsampledPrvMoments subsampled_prv_moments(double sigma, double q,
                                                   double truncation_z = 7.5) {
  SubsampledPrvMoments m;
  const double o_lo = (q >= 1.0 ? 1.0 : 0.0) - truncation_z * sigma;
  const double o_hi = 1.0 + truncation_z * sigma;
  m.y_lo = subsampled_log_ratio(o_lo, sigma, q);
  m.y_hi = subsampled_log_ratio(o_hi, sigma, q);
  constexpr int kIntervals = 4096;
  const double step = (o_hi - o_lo) / kIntervals;
  const double inv_norm = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
  double w = 0.0, e1 = 0.0, e2 = 0.0;
  for (int i = 0; i <= kIntervals; ++i) {
    const double o = o_lo + step * static_cast<double>(i);
    const double a = o / sigma;
    const double b = (o - 1.0) / sigma;
    const double density =
        inv_norm *
        ((q >= 1.0 ? 0.0 : (1.0 - q) * std::exp(-0.5 * a * a)) +
         q * std::exp(-0.5 * b * b));
    const double coeff =
        (i == 0 || i == kIntervals) ? 1.0 : (i % 2 != 0 ? 4.0 : 2.0);
    const double f = coeff * density;
    const double y = subsampled_log_ratio(o, sigma, q);
    w += f;
    e1 += f * y;
    e2 += f * y * y;
  }
  // The Simpson step factor cancels in the normalized moments.
  m.mean = e1 / w;
  m.variance = std::max(0.0, e2 / w - m.mean * m.mean);
  return m;
}

}  // namespace detail

// Epsilon charged for n_queries compositions of the subsampled Gaussian with
// noise multiplier sigma and sampling rate q.  The lattice mesh is chosen as
// a smooth function of sigma so that a binary search over sigma (noise
// calibration) never straddles a discretization cliff:
//   * at least 512 lattice points across the single-query loss span;
//   * accumulated round-up pessimism n * mesh capped at
//     kComposedRoundupBudget;
//   * coarsened (continuously) exactly when the composed window — mean plus
//     33 standard deviations plus the single-query span — would not fit
//     max_points lattice cells.
// Binned losses still round up, so the result remains an upper bound on the
// true epsilon; the pessimism added is below n * mesh_eff.
inline double composed_gaussian_epsilon(double sigma, double q,
                                        std::int64_t n_queries, double delta,
                                        double mesh, std::size_t max_points) {
  if (n_queries <= 0) {
    throw std::invalid_argument(
        "composed_gaussian_epsilon: n_queries must be positive");
  }
  if (n_queries == 1) {
    return prv_to_epsilon(subsampled_gaussian_prv(sigma, q, mesh), delta);
  }
  const detail::SubsampledPrvMoments m =
      detail::subsampled_prv_moments(sigma, q);
  const double span = m.y_hi - m.y_lo;
  const double n = static_cast<double>(n_queries);
  const double fine =
      std::min({mesh, span / 512.0, kComposedRoundupBudget / n});
  const double window = std::fabs(n * m.mean) +
                        33.0 * std::sqrt(n * m.variance) + span + 4.0 * mesh;
  const double memory_floor = 2.2 * window / static_cast<double>(max_points);
  const double mesh_eff = std::max(fine, memory_floor);
  const PrvDistribution prv = subsampled_gaussian_prv(sigma, q, mesh_eff);
  return prv_to_epsilon(compose_prvs({prv}, {n_queries}, max_points), delta);
}

}  // namespace dpens
