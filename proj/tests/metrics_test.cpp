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

#include "dpens/metrics.hpp"

#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace dpens {
namespace {

constexpr double kTol = 1e-6;

TEST(Rouge1, HandComputedValues) {
  EXPECT_NEAR(rouge1("a b c", "a b c"), 100.0, kTol);
  EXPECT_NEAR(rouge1("a b", "c d"), 0.0, kTol);
  // Clipped overlap 2, precision 2/4, recall 2/4.
  EXPECT_NEAR(rouge1("a b c d", "a b x y"), 50.0, kTol);
  // Clipping: "a a a" vs "a" overlaps once, P = 1/3, R = 1, F1 = 50.
  EXPECT_NEAR(rouge1("a a a", "a"), 50.0, kTol);
}

TEST(Rouge1, EmptyConventions) {
  EXPECT_NEAR(rouge1("", ""), 100.0, kTol);
  EXPECT_NEAR(rouge1("", "a"), 0.0, kTol);
  EXPECT_NEAR(rouge1("a", ""), 0.0, kTol);
  // Punctuation-only strings tokenize to nothing: identical emptiness.
  EXPECT_NEAR(rouge1("?!", "--"), 100.0, kTol);
}

TEST(Rouge2, HandComputedValues) {
  EXPECT_NEAR(rouge2("a b c", "a b c"), 100.0, kTol);
  // Bigrams {ab, bc, cd} vs {ab, bx, xy}: overlap 1, P = R = 1/3.
  EXPECT_NEAR(rouge2("a b c d", "a b x y"), 100.0 / 3.0, kTol);
  EXPECT_NEAR(rouge2("a b", "b a"), 0.0, kTol);
}

TEST(RougeL, HandComputedValues) {
  EXPECT_NEAR(rougeL("a b c", "a b c"), 100.0, kTol);
  // LCS 3, P = 3/5, R = 3/3, F1 = 75.
  EXPECT_NEAR(rougeL("a x b y c", "a b c"), 75.0, kTol);
  EXPECT_NEAR(rougeL("a b", "c d"), 0.0, kTol);
  // Order sensitivity: reversed tokens share an LCS of length 1.
  EXPECT_NEAR(rougeL("a b c", "c b a"), 100.0 / 3.0, kTol);
}

TEST(Levenshtein, HandComputedSimilarity) {
  EXPECT_NEAR(levenshtein_similarity("abc", "abc"), 100.0, kTol);
  EXPECT_NEAR(levenshtein_similarity("abc", "abd"), 200.0 / 3.0, kTol);
  EXPECT_NEAR(levenshtein_similarity("", "abc"), 0.0, kTol);
  EXPECT_NEAR(levenshtein_similarity("", ""), 100.0, kTol);
}

TEST(Metrics, SymmetryAndRange) {
  const std::vector<std::string> texts = {"", "a b", "the cat sat",
                                          "cat the sat", "?!"};
  for (const auto& a : texts) {
    for (const auto& b : texts) {
      EXPECT_NEAR(levenshtein_similarity(a, b), levenshtein_similarity(b, a),
                  kTol);
      for (double v : {rouge1(a, b), rouge2(a, b), rougeL(a, b),
                       levenshtein_similarity(a, b)}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 100.0);
      }
    }
    EXPECT_NEAR(rouge1(a, a), 100.0, kTol);
    EXPECT_NEAR(rougeL(a, a), 100.0, kTol);
  }
}

TEST(Metrics, LcsNeverExceedsClippedUnigramOverlap) {
  const auto clipped_overlap = [](const std::vector<std::string>& cand,
                                  const std::vector<std::string>& ref) {
    std::map<std::string, int> counts;
    for (const auto& t : ref) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : cand) {
      auto it = counts.find(t);
      if (it != counts.end() && it->second > 0) {
        --it->second;
        ++overlap;
      }
    }
    return overlap;
  };
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"a x b y c", "a b c"}, {"a b c", "c b a"},       {"a a b", "a b a"},
      {"the cat sat", "cat"}, {"p q r s", "s r q p"},
  };
  const auto cfg = TokenizerConfig::metrics_default();
  for (const auto& [c, r] : pairs) {
    const auto ct = tokenize(c, cfg);
    const auto rt = tokenize(r, cfg);
    EXPECT_LE(detail::lcs_length(ct, rt), clipped_overlap(ct, rt))
        << c << " | " << r;
  }
}

TEST(ScoreCorpus, PerExampleAndMeanValues) {
  const ScoreReport report = score_corpus({
      {"a b c", "a b c"},
      {"a b c d", "a b x y"},
  });
  ASSERT_EQ(report.per_example.size(), 2u);
  EXPECT_NEAR(report.per_example[0].accuracy, 100.0, kTol);
  EXPECT_NEAR(report.per_example[0].rouge_1, 100.0, kTol);
  EXPECT_NEAR(report.per_example[1].accuracy, 0.0, kTol);
  EXPECT_NEAR(report.per_example[1].rouge_1, 50.0, kTol);
  EXPECT_NEAR(report.per_example[1].rouge_2, 100.0 / 3.0, kTol);
  EXPECT_NEAR(report.mean.accuracy, 50.0, kTol);
  EXPECT_NEAR(report.mean.rouge_1, 75.0, kTol);
  EXPECT_NEAR(report.mean.rouge_2, (100.0 + 100.0 / 3.0) / 2.0, kTol);
}

TEST(ScoreCorpus, AccuracyIsExactStringMatch) {
  // Tokenization may equate texts that the accuracy metric keeps distinct.
  const ScoreReport report = score_corpus({{"a  b", "a b"}});
  EXPECT_NEAR(report.per_example[0].accuracy, 0.0, kTol);
  EXPECT_NEAR(report.per_example[0].rouge_1, 100.0, kTol);
}

TEST(ScoreCorpus, EmptyCorpusHasZeroMeans) {
  const ScoreReport report = score_corpus({});
  EXPECT_TRUE(report.per_example.empty());
  EXPECT_NEAR(report.mean.rouge_1, 0.0, kTol);
}

}  // namespace
}  // namespace dpens
