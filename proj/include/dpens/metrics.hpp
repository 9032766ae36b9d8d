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

#ifndef DPENS_METRICS_HPP_
#define DPENS_METRICS_HPP_

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpens/text.hpp"

namespace dpens {

namespace detail {

// F1 of clipped n-gram overlap, in [0, 100].  Both sides empty scores 100
// (identical emptiness), one side empty scores 0.
inline double overlap_f1(const std::vector<std::string>& cand,
                         const std::vector<std::string>& ref) {
  if (cand.empty() && ref.empty()) return 100.0;
  if (cand.empty() || ref.empty()) return 0.0;
  std::map<std::string_view, int> ref_counts;
  for (const std::string& t : ref) ++ref_counts[t];
  int overlap = 0;
  for (const std::string& t : cand) {
    const auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / cand.size();
  const double r = static_cast<double>(overlap) / ref.size();
  return 100.0 * (2.0 * p * r) / (p + r);
}

inline std::vector<std::string> bigrams(const std::vector<std::string>& toks) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    out.push_back(toks[i] + ' ' + toks[i + 1]);
  }
  return out;
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      curr[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1
                                       : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

}  // namespace detail

// ROUGE-1: F1 of clipped unigram overlap under the shared base tokenizer.
inline double rouge1(const std::string& candidate,
                     const std::string& reference) {
  const auto cfg = TokenizerConfig::metrics_default();
  return detail::overlap_f1(tokenize(candidate, cfg),
                            tokenize(reference, cfg));
}

// ROUGE-2: the bigram variant of rouge1.
inline double rouge2(const std::string& candidate,
                     const std::string& reference) {
  const auto cfg = TokenizerConfig::metrics_default();
  return detail::overlap_f1(detail::bigrams(tokenize(candidate, cfg)),
                            detail::bigrams(tokenize(reference, cfg)));
}

// ROUGE-L: F1 computed from the token-level longest common subsequence.
inline double rougeL(const std::string& candidate,
                     const std::string& reference) {
  const auto cfg = TokenizerConfig::metrics_default();
  const auto cand = tokenize(candidate, cfg);
  const auto ref = tokenize(reference, cfg);
  if (cand.empty() && ref.empty()) return 100.0;
  if (cand.empty() || ref.empty()) return 0.0;
  const std::size_t lcs = detail::lcs_length(cand, ref);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / cand.size();
  const double r = static_cast<double>(lcs) / ref.size();
  return 100.0 * (2.0 * p * r) / (p + r);
}

// Normalized character-level edit similarity:
// 100 * (1 - distance / max(len)).  Two empty strings are identical: 100.
inline double levenshtein_similarity(const std::string& candidate,
                                     const std::string& reference) {
  if (candidate.empty() && reference.empty()) return 100.0;
  const std::size_t dist = levenshtein_distance(candidate, reference);
  const std::size_t longest = std::max(candidate.size(), reference.size());
  return 100.0 * (1.0 - static_cast<double>(dist) / longest);
}

// Per-example metric bundle, each value in [0, 100].
struct ExampleScores {
  double accuracy = 0.0;  // exact string match
  double rouge_1 = 0.0;
  double rouge_2 = 0.0;
  double rouge_l = 0.0;
  double levenshtein = 0.0;
};

struct ScoreReport {
  std::vector<ExampleScores> per_example;
  ExampleScores mean;  // arithmetic mean of per-example scores
};

// Scores a corpus of (candidate, reference) pairs.
inline ScoreReport score_corpus(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  ScoreReport report;
  report.per_example.reserve(pairs.size());
  for (const auto& [cand, ref] : pairs) {
    ExampleScores s;
    s.accuracy = (cand == ref) ? 100.0 : 0.0;
    s.rouge_1 = rouge1(cand, ref);
    s.rouge_2 = rouge2(cand, ref);
    s.rouge_l = rougeL(cand, ref);
    s.levenshtein = levenshtein_similarity(cand, ref);
    report.mean.accuracy += s.accuracy;
    report.mean.rouge_1 += s.rouge_1;
    report.mean.rouge_2 += s.rouge_2;
    report.mean.rouge_l += s.rouge_l;
    report.mean.levenshtein += s.levenshtein;
    report.per_example.push_back(s);
  }
  if (!report.per_example.empty()) {
    const auto n = static_cast<double>(report.per_example.size());
    report.mean.accuracy /= n;
    report.mean.rouge_1 /= n;
    report.mean.rouge_2 /= n;
    report.mean.rouge_l /= n;
    report.mean.levenshtein /= n;
  }
  return report;
}

}  // namespace dpens

#endif  // DPENS_METRICS_HPP_
