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
// Joint exponential mechanism for top-k selection: one epsilon-DP release of
// an ordered k-sequence, instead of composing k separate selections.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dpens/common.hpp"
#include "dpens/histogram.hpp"

namespace dpens {

namespace detail {

// One cell of the joint utility matrix.  Row i (0-based position in the
// output sequence) against column j (0-based rank in the descending count
// order).  The tie-broken utility is
//   U~(i,j) = -(c_i - c_j) - (d*(k-i-1) + j + 1) / (2*d*k)
// whose integer part utility = -(c_i - c_j) is recovered exactly by the
// ceiling, because the perturbation lies in (0, 1/2].  Cells are ordered by
// U~ descending, which integer arithmetic expresses exactly as
// (utility desc, perturbation numerator asc) — no floating-point comparisons.
struct JointCell {
  int row = 0;
  int col = 0;
  std::int64_t utility = 0;   // -(c_row - c_col), always <= 0
  std::int64_t pert_num = 0;  // d*(k-row-1) + col + 1, in [1, d*k]
};

}  // namespace detail

// The d x k tie-broken utility matrix in descending-utility order, plus the
// permutation from sorted rank to original label id.
struct JointUtilityMatrix {
  std::vector<detail::JointCell> cells_desc;  // sorted by U~ descending
  std::vector<LabelId> item_order;            // sorted rank -> label id
  std::vector<Count> counts_desc;
  int k = 0;

  static JointUtilityMatrix build(const VoteHistogram& hist, int k) {
    const auto sorted = hist.sorted_desc();
    const int d = static_cast<int>(sorted.size());
    if (d < k) {
      throw std::invalid_argument(
          "joint_em_top_k: fewer distinct candidates than k");
    }
    JointUtilityMatrix m;
    m.k = k;
    m.item_order.reserve(d);
    m.counts_desc.reserve(d);
    for (const auto& [id, c] : sorted) {
      m.item_order.push_back(id);
      m.counts_desc.push_back(c);
    }
    m.cells_desc.reserve(static_cast<std::size_t>(d) * k);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < d; ++j) {
        detail::JointCell cell;
        cell.row = i;
        cell.col = j;
        cell.utility = -(m.counts_desc[i] - m.counts_desc[j]);
        cell.pert_num = static_cast<std::int64_t>(d) * (k - i - 1) + j + 1;
        m.cells_desc.push_back(cell);
      }
    }
    std::sort(m.cells_desc.begin(), m.cells_desc.end(),
              [](const detail::JointCell& a, const detail::JointCell& b) {
                if (a.utility != b.utility) return a.utility > b.utility;
                return a.pert_num < b.pert_num;
              });
    return m;
  }
};

// Samples one ordered size-k sequence of distinct label ids with probability
// proportional to exp(epsilon * u(s) / 2), where u(s) is the worst positional
// count shortfall of s.  Implementation follows the cell-sampling scheme:
//
//   1. walk the cells in descending tie-broken utility, maintaining per-row
//      counts of cells already passed, and derive each cell's multiplicity
//      m~ = number of sequences whose minimal cell it is, via a running
//      product over the other rows (their above-threshold cell sets are
//      nested prefixes, so the count of remaining choices is exact);
//   2. sample one cell with probability proportional to
//      m~ * exp(epsilon * ceil(U~) / 2) using the Gumbel-max trick on log
//      weights;
//   3. fix the sampled cell's item at its row and complete the remaining
//      positions uniformly, drawing each row's item from its above-threshold
//      prefix minus the items already used (processing rows in increasing
//      index keeps every draw's candidate set correct by nestedness).
inline std::vector<LabelId> joint_em_top_k(const VoteHistogram& hist, int k,
                                           double epsilon, RandomSource& rng) {
  if (k <= 0) throw std::invalid_argument("joint_em_top_k: k must be positive");
  if (epsilon <= 0.0) {
    throw std::invalid_argument("joint_em_top_k: epsilon must be positive");
  }
  const JointUtilityMatrix m = JointUtilityMatrix::build(hist, k);

  // Pass 1: multiplicities and Gumbel-perturbed log weights.
  std::vector<std::int64_t> passed(k, 0);  // cells of each row above current
  double best_score = -kInf;
  std::size_t best_cell = 0;
  bool any = false;
  for (std::size_t c = 0; c < m.cells_desc.size(); ++c) {
    const auto& cell = m.cells_desc[c];
    double log_mult = 0.0;
    std::int64_t used_rows = 0;
    for (int row = 0; row < k; ++row) {
      if (row == cell.row) continue;
      // Cells of `row` above this threshold; the sampled cell's own column
      // also sits above it exactly when row > cell.row.
      const std::int64_t avail =
          passed[row] - (row > cell.row ? 1 : 0) - used_rows;
      if (avail <= 0) {
        log_mult = -kInf;
        break;
      }
      log_mult += std::log(static_cast<double>(avail));
      ++used_rows;
    }
    ++passed[cell.row];
    if (log_mult == -kInf) continue;  // no sequence has this minimal cell
    const double log_weight =
        log_mult + 0.5 * epsilon * static_cast<double>(cell.utility);
    const double score = log_weight + rng.gumbel(1.0);
    if (!any || score > best_score) {
      any = true;
      best_score = score;
      best_cell = c;
    }
  }
  if (!any) {
    throw std::logic_error("joint_em_top_k: no feasible cell (internal)");
  }

  // Pass 2: collect each row's above-threshold column prefix for the chosen
  // cell, then complete the sequence uniformly.
  const auto& chosen = m.cells_desc[best_cell];
  std::vector<std::vector<int>> row_items(k);
  for (std::size_t c = 0; c < best_cell; ++c) {
    const auto& cell = m.cells_desc[c];
    row_items[cell.row].push_back(cell.col);
  }
  std::vector<int> seq(k, -1);
  seq[chosen.row] = chosen.col;
  std::vector<bool> used(m.item_order.size(), false);
  used[chosen.col] = true;
  for (int row = 0; row < k; ++row) {
    if (row == chosen.row) continue;
    std::vector<int> avail;
    avail.reserve(row_items[row].size());
    for (int col : row_items[row]) {
      if (!used[col]) avail.push_back(col);
    }
    if (avail.empty()) {
      throw std::logic_error("joint_em_top_k: empty completion set (internal)");
    }
    const int pick = avail[rng.uniform_int(avail.size())];
    seq[row] = pick;
    used[pick] = true;
  }

  std::vector<LabelId> out;
  out.reserve(k);
  for (int row = 0; row < k; ++row) out.push_back(m.item_order[seq[row]]);
  return out;
}

}  // namespace dpens
