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
// Append-only privacy ledger and its total-(epsilon, delta) evaluation.
// Gaussian-family entries are composed tightly through the PRV accountant;
// exponential-mechanism and PTR entries compose as (approximate) RDP and are
// converted separately; the two tracks combine by basic composition (epsilon
// and delta add), which is conservative but always correct.

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpens/prv.hpp"
#include "dpens/rdp.hpp"

namespace dpens {

inline constexpr double kDefaultPrvMesh = 1e-4;
inline constexpr std::size_t kDefaultMaxFftPoints = 1u << 21;

enum class MechanismKind { kGaussian, kEm, kPtr };

inline const char* mechanism_kind_name(MechanismKind k) {
  switch (k) {
    case MechanismKind::kGaussian: return "gaussian";
    case MechanismKind::kEm: return "em";
    case MechanismKind::kPtr: return "ptr";
  }
  return "?";
}

// One ledger line.  `noise` holds the effective noise multiplier (sigma
// divided by the query's L2 sensitivity) for gaussian and ptr entries, and
// the exponential-mechanism epsilon0 for em entries.  delta_fail is the PTR
// failure probability (0 otherwise).
struct LedgerEntry {
  MechanismKind kind = MechanismKind::kGaussian;
  double noise = 0.0;
  double q = 1.0;
  double delta_fail = 0.0;
  std::int64_t count = 1;
};

class PrivacyLedger {
 public:
  void append(const LedgerEntry& e) {
    if (e.count <= 0) {
      throw std::invalid_argument("PrivacyLedger: count must be positive");
    }
    if (!(e.q > 0.0 && e.q <= 1.0)) {
      throw std::invalid_argument("PrivacyLedger: q must be in (0,1]");
    }
    if (e.kind == MechanismKind::kPtr &&
        !(e.delta_fail > 0.0 && e.delta_fail < 1.0)) {
      throw std::invalid_argument(
          "PrivacyLedger: ptr entries need delta_fail in (0,1)");
    }
    entries_.push_back(e);
  }

  void append_gaussian(double noise_multiplier, double q,
                       std::int64_t count = 1) {
    append({MechanismKind::kGaussian, noise_multiplier, q, 0.0, count});
  }

  void append_em(double eps0, double q, std::int64_t count = 1) {
    append({MechanismKind::kEm, eps0, q, 0.0, count});
  }

  void append_ptr(double noise_multiplier, double delta_fail, double q,
                  std::int64_t count = 1) {
    append({MechanismKind::kPtr, noise_multiplier, q, delta_fail, count});
  }

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  // One entry per line: kind, noise (sigma or eps0), q, delta_fail, count.
  void serialize(std::ostream& os) const {
    os.precision(17);
    for (const auto& e : entries_) {
      os << mechanism_kind_name(e.kind) << ' ' << e.noise << ' ' << e.q << ' '
         << e.delta_fail << ' ' << e.count << '\n';
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    serialize(os);
    return os.str();
  }

  static PrivacyLedger parse(std::istream& is) {
    PrivacyLedger ledger;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string kind;
      LedgerEntry e;
      if (!(ls >> kind >> e.noise >> e.q >> e.delta_fail >> e.count)) {
        throw std::invalid_argument("PrivacyLedger: malformed line: " + line);
      }
      if (kind == "gaussian") {
        e.kind = MechanismKind::kGaussian;
      } else if (kind == "em") {
        e.kind = MechanismKind::kEm;
      } else if (kind == "ptr") {
        e.kind = MechanismKind::kPtr;
      } else {
        throw std::invalid_argument("PrivacyLedger: unknown kind: " + kind);
      }
      ledger.append(e);
    }
    return ledger;
  }

  static PrivacyLedger parse(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
  }

 private:
  std::vector<LedgerEntry> entries_;
};

// Total (epsilon, delta) of a ledger at the given delta.  The delta budget is
// split evenly across the tracks that are actually present (Gaussian-PRV
// track; RDP track for em + ptr).  EM entries are accounted without
// subsampling amplification (no published subsampled-EM bound; conservative),
// PTR entries are amplified through their approximate-RDP curve when q < 1.
inline std::pair<double, double> ledger_total(
    const PrivacyLedger& ledger, double delta,
    double mesh = kDefaultPrvMesh,
    std::size_t max_points = kDefaultMaxFftPoints) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("ledger_total: delta must lie in (0,1)");
  }
  if (ledger.empty()) return {0.0, delta};

  std::map<std::pair<double, double>, std::int64_t> gaussian_groups;
  std::vector<const LedgerEntry*> rdp_entries;
  for (const auto& e : ledger.entries()) {
    if (e.kind == MechanismKind::kGaussian) {
      if (!(e.noise > 0.0)) {
        throw std::invalid_argument(
            "ledger_total: gaussian entry with sigma = 0 has infinite cost");
      }
      gaussian_groups[{e.noise, e.q}] += e.count;
    } else {
      if (!(e.noise > 0.0)) {
        throw std::invalid_argument("ledger_total: entry with zero noise/eps0");
      }
      rdp_entries.push_back(&e);
    }
  }

  const bool has_gaussian = !gaussian_groups.empty();
  const bool has_rdp = !rdp_entries.empty();
  const double delta_share =
      (has_gaussian && has_rdp) ? delta / 2.0 : delta;

  double eps_gaussian = 0.0;
  if (has_gaussian) {
    if (gaussian_groups.size() == 1) {
      // A sole (sigma, q) group takes the same count-aware evaluation the
      // calibrator uses, so calibrated budgets and ledger totals agree
      // bit-for-bit at any composition count.
      const auto& [key, count] = *gaussian_groups.begin();
      eps_gaussian = composed_gaussian_epsilon(key.first, key.second, count,
                                               delta_share, mesh, max_points);
    } else {
      // Heterogeneous groups need one common nested lattice, so each keeps
      // the default power-of-two mesh refinement.
      std::vector<PrvDistribution> prvs;
      std::vector<std::int64_t> counts;
      for (const auto& [key, count] : gaussian_groups) {
        prvs.push_back(subsampled_gaussian_prv(key.first, key.second, mesh));
        counts.push_back(count);
      }
      const PrvDistribution composed = compose_prvs(prvs, counts, max_points);
      eps_gaussian = prv_to_epsilon(composed, delta_share);
    }
  }

  double eps_rdp = 0.0;
  if (has_rdp) {
    const std::vector<double> orders = default_rdp_orders();
    RdpCurve total;
    total.orders = orders;
    total.eps_values.assign(orders.size(), 0.0);
    for (const LedgerEntry* e : rdp_entries) {
      RdpCurve c;
      if (e->kind == MechanismKind::kEm) {
        c = em_rdp_curve(e->noise, orders);
      } else {
        c = ptr_rdp(e->noise, e->delta_fail, orders);
        if (e->q < 1.0) c = amplify_approx_rdp(c, e->q);
      }
      total = add_rdp_curves(total, scale_rdp_curve(c, e->count));
    }
    eps_rdp = rdp_to_dp(total, delta_share).first;
  }

  return {eps_gaussian + eps_rdp, delta};
}

}  // namespace dpens
