// Copyright 2026 The dpens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dpens/joint_em.hpp"

#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "dpens/common.hpp"
#include "dpens/histogram.hpp"
#include "oracles.hpp"

namespace dpens {
namespace {

VoteHistogram make_hist(std::initializer_list<std::pair<LabelId, Count>> init) {
  VoteHistogram h;
  Count total = 0;
  for (const auto& [id, c] : init) {
    h.counts[id] = c;
    total = std::max(total, c);
  }
  h.ensemble_size = total;
  return h;
}

// Maps a label-id sequence back to 0-based ranks in the descending count
// order (the key space of the enumeration oracle).
std::vector<int> to_ranks(const std::vector<LabelId>& seq,
                          const VoteHistogram& hist) {
  const auto sorted = hist.sorted_desc();
  std::vector<int> ranks;
  for (LabelId id : seq) {
    for (std::size_t r = 0; r < sorted.size(); ++r) {
      if (sorted[r].first == id) {
        ranks.push_back(static_cast<int>(r));
        break;
      }
    }
  }
  return ranks;
}

// Draws n samples and compares the empirical distribution over rank
// sequences against the brute-force sequence-space enumeration.
double empirical_tv(const VoteHistogram& hist, int k, double eps, int n,
                    std::uint64_t seed) {
  std::map<std::vector<int>, std::int64_t> counts;
  RandomSource rng(seed);
  for (int i = 0; i < n; ++i) {
    ++counts[to_ranks(joint_em_top_k(hist, k, eps, rng), hist)];
  }
  std::vector<long long> desc;
  for (const auto& [id, c] : hist.sorted_desc()) desc.push_back(c);
  const auto exact = oracle::joint_em_exact(desc, k, eps);
  return oracle::total_variation(counts, n, exact);
}

TEST(JointEm, DominantCountNearZeroTemperature) {
  const auto hist = make_hist({{0, 10}, {1, 0}, {2, 0}});
  RandomSource rng(21);
  int hits = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const auto seq = joint_em_top_k(hist, 1, 1e6, rng);
    ASSERT_EQ(seq.size(), 1u);
    if (seq[0] == 0) ++hits;
  }
  EXPECT_GE(static_cast<double>(hits) / n, 0.999);
}

TEST(JointEm, EqualCountsMakeAllOrderedPairsEquallyLikely) {
  const auto hist = make_hist({{0, 7}, {1, 7}, {2, 7}});
  std::map<std::vector<LabelId>, int> freq;
  const int n = 100000;
  RandomSource rng(22);
  for (int i = 0; i < n; ++i) {
    ++freq[joint_em_top_k(hist, 2, 1.0, rng)];
  }
  EXPECT_EQ(freq.size(), 6u);
  for (const auto& [seq, c] : freq) {
    EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 6.0, 0.01);
  }
}

TEST(JointEm, MatchesEnumerationOracle) {
  EXPECT_LE(empirical_tv(make_hist({{0, 4}, {1, 2}, {2, 1}}), 2, 1.0, 100000,
                         23),
            0.02);
  EXPECT_LE(empirical_tv(make_hist({{0, 5}, {1, 3}, {2, 2}, {3, 1}}), 3, 2.0,
                         100000, 24),
            0.02);
  EXPECT_LE(empirical_tv(make_hist({{0, 9}, {1, 6}, {2, 4}, {3, 2}, {4, 1}}),
                         3, 1.0, 100000, 25),
            0.02);
}

TEST(JointEm, SingleSelectionMatchesOracleToo) {
  // k = 1 reduces to a plain exponential mechanism over -(c_1 - c_j).
  EXPECT_LE(empirical_tv(make_hist({{0, 6}, {1, 4}, {2, 1}}), 1, 2.0, 100000,
                         26),
            0.02);
}

TEST(JointEm, OutputIsAlwaysKDistinctInputLabels) {
  RandomSource meta(27);
  for (int trial = 0; trial < 300; ++trial) {
    VoteHistogram h;
    const int d = 2 + static_cast<int>(meta.uniform_int(5));
    for (int t = 0; t < d; ++t) {
      h.counts[10 * t] = static_cast<Count>(meta.uniform_int(30));
    }
    h.ensemble_size = 30;
    const int k =
        1 + static_cast<int>(meta.uniform_int(static_cast<std::uint64_t>(d)));
    RandomSource rng(500 + trial);
    const auto seq = joint_em_top_k(h, k, 0.8, rng);
    ASSERT_EQ(seq.size(), static_cast<std::size_t>(k));
    std::set<LabelId> distinct(seq.begin(), seq.end());
    EXPECT_EQ(distinct.size(), seq.size());
    for (LabelId id : seq) EXPECT_TRUE(h.counts.count(id));
  }
}

TEST(JointEm, ErrorsOnBadArguments) {
  RandomSource rng(28);
  const auto hist = make_hist({{0, 5}, {1, 3}});
  EXPECT_THROW(joint_em_top_k(hist, 3, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(joint_em_top_k(hist, 0, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(joint_em_top_k(hist, 1, 0.0, rng), std::invalid_argument);
  EXPECT_THROW(joint_em_top_k(hist, 1, -1.0, rng), std::invalid_argument);
}

TEST(JointEm, DeterministicUnderSeed) {
  const auto hist = make_hist({{0, 9}, {1, 5}, {2, 2}, {3, 1}});
  RandomSource a(29), b(29);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(joint_em_top_k(hist, 2, 1.0, a), joint_em_top_k(hist, 2, 1.0, b));
  }
}

}  // namespace
}  // namespace dpens
