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

#ifndef DPENS_BACKEND_HPP_
#define DPENS_BACKEND_HPP_

#include <atomic>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpens/common.hpp"
#include "dpens/embedding.hpp"
#include "dpens/text.hpp"

namespace dpens {

// One completion call.  When constrained_labels is set the backend must
// return exactly one of the given labels (single-token classification mode,
// realized remotely via logit bias or nearest-label matching).
struct CompletionRequest {
  std::string prompt;
  int max_tokens = 64;
  double temperature = 0.0;
  // Distinguishes repeated samples of one prompt (candidate generation); a
  // deterministic backend folds it into its hash, a remote backend relies on
  // sampling temperature instead.
  int sample_index = 0;
  std::optional<std::vector<std::string>> constrained_labels;
  std::vector<std::string> stop_sequences;
};

// Connection and throttling parameters for a remote backend.
struct BackendProfile {
  std::string endpoint_url;  // e.g. "http://localhost:8080/v1"
  std::string model_name = "gpt-3.5-turbo-instruct";
  std::string embedding_model_name = "text-embedding-ada-002";
  double request_timeout_seconds = 30.0;
  int max_retries = 3;
  int parallelism_cap = 4;
  int embedding_dimension = 1536;
};

// Raised when a backend cannot produce a usable response.
class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& message, int attempts)
      : std::runtime_error(message + " (attempts: " +
                           std::to_string(attempts) + ")"),
        attempts_(attempts) {}

  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// Validates a constrained label set: non-empty, and each label must be a
// single distinct token under the base tokenizer.
inline void validate_constrained_labels(
    const std::vector<std::string>& labels) {
  if (labels.empty()) {
    throw BackendError("constrained mode requires a non-empty label set", 0);
  }
  std::set<std::string> seen;
  for (const std::string& label : labels) {
    const auto toks = tokenize(label, TokenizerConfig::metrics_default());
    if (toks.size() != 1) {
      throw BackendError("constrained label is not a single token: \"" +
                             label + "\"",
                         0);
    }
    if (!seen.insert(toks.front()).second) {
      throw BackendError("constrained labels collide on token \"" +
                             toks.front() + "\"",
                         0);
    }
  }
}

// Abstract LLM access: text completion plus sentence embedding.  Instances
// are shareable read-only handles; calls may run concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  // Returns generated text.  In constrained mode the result is exactly one
  // element of req.constrained_labels.  Throws BackendError on failure.
  virtual std::string complete(const CompletionRequest& req) = 0;

  // Returns a unit-norm embedding of the text.  Throws BackendError on
  // failure and std::invalid_argument on empty input.
  virtual Embedding embed(const std::string& text) = 0;

  virtual int embedding_dimension() const = 0;

  std::int64_t completion_requests() const { return completion_count_.load(); }
  std::int64_t embedding_requests() const { return embedding_count_.load(); }

 protected:
  void count_completion() { completion_count_.fetch_add(1); }
  void count_embedding() { embedding_count_.fetch_add(1); }

 private:
  std::atomic<std::int64_t> completion_count_{0};
  std::atomic<std::int64_t> embedding_count_{0};
};

// Deterministic in-process backend.  Every response is a pure function of
// (request contents, seed): rule lookup first, synthesized text otherwise.
// Embeddings come from a seeded hash-to-sphere map, so identical texts embed
// identically and distinct texts are near-orthogonal in high dimension.
class MockBackend : public Backend {
 public:
  explicit MockBackend(std::uint64_t seed, int embedding_dim = 1536)
      : seed_(seed), embedding_dim_(embedding_dim) {
    if (embedding_dim < 1) {
      throw std::invalid_argument("MockBackend: embedding_dim must be >= 1");
    }
  }

  // Adds a substring-match rule: a prompt containing `pattern` yields
  // `response`.  Rules are checked in insertion order; first match wins.
  // An empty pattern matches every prompt.
  void add_rule(std::string pattern, std::string response) {
    rules_.emplace_back(std::move(pattern), std::move(response));
  }

  std::string complete(const CompletionRequest& req) override {
    count_completion();
    if (req.prompt.empty()) {
      throw std::invalid_argument("MockBackend::complete: empty prompt");
    }
    if (req.constrained_labels) {
      validate_constrained_labels(*req.constrained_labels);
    }
    std::string out;
    bool matched = false;
    for (const auto& [pattern, response] : rules_) {
      if (req.prompt.find(pattern) != std::string::npos) {
        out = response;
        matched = true;
        break;
      }
    }
    if (req.constrained_labels) {
      const auto& labels = *req.constrained_labels;
      if (matched) {
        for (const std::string& label : labels) {
          if (out == label) return label;
        }
      }
      // No rule (or a rule outside the label set): deterministic choice.
      const std::uint64_t h = request_hash(req);
      return labels[h % labels.size()];
    }
    if (matched) return out;
    return synthesize(req);
  }

  Embedding embed(const std::string& text) override {
    count_embedding();
    if (text.empty()) {
      throw std::invalid_argument("MockBackend::embed: empty text");
    }
    RandomSource rng(hash_mix(seed_, hash_text(text, kEmbedTag), kEmbedTag));
    Embedding e;
    e.values.resize(static_cast<std::size_t>(embedding_dim_));
    for (double& v : e.values) v = rng.gaussian(1.0);
    return e.normalize();
  }

  int embedding_dimension() const override { return embedding_dim_; }

 private:
  static constexpr std::uint64_t kCompleteTag = 0x636f6d706c657465ULL;
  static constexpr std::uint64_t kEmbedTag = 0x656d626564646564ULL;

  std::uint64_t request_hash(const CompletionRequest& req) const {
    return hash_mix(
        seed_, hash_text(req.prompt, kCompleteTag),
        kCompleteTag + static_cast<std::uint64_t>(req.sample_index));
  }

  // Free-text fallback: a short sentence drawn deterministically from a
  // fixed vocabulary, so unrelated prompts produce mostly-unrelated keyword
  // sets while identical prompts reproduce exactly.
  std::string synthesize(const CompletionRequest& req) const {
    static const char* kVocabulary[] = {
        "river",  "stone",  "garden", "window", "music",   "silver",
        "forest", "candle", "meadow", "harbor", "lantern", "willow",
        "summer", "winter", "copper", "marble", "violet",  "amber",
        "breeze", "shadow", "sunset", "prairie", "cloud",  "ember"};
    constexpr std::size_t kVocabSize =
        sizeof(kVocabulary) / sizeof(kVocabulary[0]);
    RandomSource rng(request_hash(req));
    const int cap = req.max_tokens > 0 ? req.max_tokens : 1;
    const int n_words =
        std::min(cap, 6 + static_cast<int>(rng.uniform_int(6)));
    std::string out;
    for (int i = 0; i < n_words; ++i) {
      if (i > 0) out += ' ';
      out += kVocabulary[rng.uniform_int(kVocabSize)];
    }
    return out;
  }

  std::uint64_t seed_;
  int embedding_dim_;
  std::vector<std::pair<std::string, std::string>> rules_;
};

}  // namespace dpens

#endif  // DPENS_BACKEND_HPP_
