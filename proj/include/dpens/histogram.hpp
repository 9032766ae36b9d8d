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

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dpens/common.hpp"

namespace dpens {

using LabelId = std::int64_t;
using Count = std::int64_t;

// Integer vote counts keyed by an opaque label id.  For classification the
// counts sum to ensemble_size (one vote per ensemble member); for keyword use
// each count is at most ensemble_size (each member contributes a token at most
// once).
struct VoteHistogram {
  std::map<LabelId, Count> counts;
  Count ensemble_size = 0;

  bool empty() const { return counts.empty(); }

  Count count_of(LabelId id) const {
    auto it = counts.find(id);
    return it == counts.end() ? 0 : it->second;
  }

  void add_vote(LabelId id, Count n = 1) {
    counts[id] += n;
  }

  // Entries sorted by count descending; ties broken by lower label id first.
  std::vector<std::pair<LabelId, Count>> sorted_desc() const {
    std::vector<std::pair<LabelId, Count>> v(counts.begin(), counts.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    return v;
  }

  void validate() const {
    for (const auto& [id, c] : counts) {
      (void)id;
      if (c < 0) throw std::invalid_argument("VoteHistogram: negative count");
    }
  }
};

// Descending-sorted count gaps d_k = H_(k) - H_(k+1) plus a data-independent
// regularizer.  gaps[k-1] holds d_k for k = 1 .. (#distinct candidates - 1).
struct GapProfile {
  std::vector<Count> gaps;
  std::function<double(int)> regularizer;  // k -> extended real

  static GapProfile from_histogram(const VoteHistogram& hist,
                                   std::function<double(int)> reg) {
    const auto sorted = hist.sorted_desc();
    GapProfile p;
    p.regularizer = std::move(reg);
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      p.gaps.push_back(sorted[i].second - sorted[i + 1].second);
    }
    return p;
  }
};

// Shared noise-parameter bundle: Gaussian scale sigma, exponential-mechanism
// scale epsilon, PTR failure probability delta, and query sensitivity.
struct NoiseParams {
  double sigma = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double sensitivity = 1.0;
};

}  // namespace dpens
