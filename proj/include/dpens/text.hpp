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

#ifndef DPENS_TEXT_HPP_
#define DPENS_TEXT_HPP_

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dpens {

// Tokenization rules used for keyword histograms and text metrics.  Keyword
// extraction additionally drops very short tokens and a small stopword list;
// metrics keep every token so hand-computed overlap counts stay exact.
struct TokenizerConfig {
  bool lowercase = true;
  // Tokens strictly shorter than this are dropped (keyword mode).
  std::size_t min_token_length = 1;
  // Tokens in this set are dropped after lowercasing (keyword mode).
  std::set<std::string> stopwords;

  static TokenizerConfig metrics_default() { return TokenizerConfig{}; }

  static TokenizerConfig keywords_default() {
    TokenizerConfig cfg;
    cfg.min_token_length = 2;
    cfg.stopwords = {"a",   "an",  "and", "are", "as",   "at",   "be",  "by",
                     "for", "from", "in",  "is",  "it",   "of",   "on",  "or",
                     "that", "the", "this", "to",  "was",  "were", "with"};
    return cfg;
  }
};

// Splits on runs of non-alphanumeric characters, optionally lowercases, then
// applies the length and stopword filters.  Deterministic by construction.
inline std::vector<std::string> tokenize(std::string_view text,
                                         const TokenizerConfig& cfg = {}) {
  std::vector<std::string> tokens;
  std::string current;
  const auto flush = [&]() {
    if (current.empty()) return;
    if (current.size() >= cfg.min_token_length &&
        cfg.stopwords.find(current) == cfg.stopwords.end()) {
      tokens.push_back(current);
    }
    current.clear();
  };
  for (const char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      current.push_back(cfg.lowercase
                            ? static_cast<char>(std::tolower(uc))
                            : ch);
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

// Distinct tokens of one text, in first-appearance order.
inline std::vector<std::string> distinct_tokens(std::string_view text,
                                                const TokenizerConfig& cfg) {
  std::vector<std::string> result;
  std::set<std::string> seen;
  for (auto& tok : tokenize(text, cfg)) {
    if (seen.insert(tok).second) result.push_back(std::move(tok));
  }
  return result;
}

// Character-level Levenshtein edit distance (insert/delete/substitute, unit
// costs), two-row dynamic program.
inline std::size_t levenshtein_distance(std::string_view a,
                                        std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);  // keep the rows short
  std::vector<std::size_t> prev(b.size() + 1), curr(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, subst});
    }
    std::swap(prev, curr);
  }
  return prev[b.size()];
}

}  // namespace dpens

#endif  // DPENS_TEXT_HPP_
