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

#ifndef DPENS_AGGREGATION_HPP_
#define DPENS_AGGREGATION_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpens/backend.hpp"
#include "dpens/common.hpp"
#include "dpens/embedding.hpp"
#include "dpens/histogram.hpp"
#include "dpens/joint_em.hpp"
#include "dpens/ledger.hpp"
#include "dpens/mechanisms.hpp"
#include "dpens/text.hpp"

namespace dpens {

// ---------------------------------------------------------------------------
// Exemplar storage
// ---------------------------------------------------------------------------

struct ExemplarRecord {
  std::int64_t id = 0;
  std::string input_text;
  std::string answer_text;
};

// Immutable collection of private demonstration exemplars with stable ids.
// Removal by id supports the data-deletion path: re-running a pipeline after
// removal perturbs at most one ensemble subset (see partition below).
class ExemplarStore {
 public:
  // One JSON object per line: {"input": ..., "answer": ..., "id"?: integer}.
  // Missing ids default to the 0-based line index.  Blank lines are skipped.
  static ExemplarStore parse(std::istream& is) {
    ExemplarStore store;
    std::string line;
    std::int64_t line_index = 0;
    std::set<std::int64_t> seen;
    while (std::getline(is, line)) {
      const std::int64_t current = line_index++;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const nlohmann::json j =
          nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded() || !j.is_object() || !j.contains("input") ||
          !j.contains("answer")) {
        throw std::invalid_argument(
            "ExemplarStore: line " + std::to_string(current) +
            " is not an object with input and answer fields");
      }
      ExemplarRecord rec;
      rec.id = j.value("id", current);
      rec.input_text = j.at("input").get<std::string>();
      rec.answer_text = j.at("answer").get<std::string>();
      if (!seen.insert(rec.id).second) {
        throw std::invalid_argument("ExemplarStore: duplicate id " +
                                    std::to_string(rec.id));
      }
      store.records_.push_back(std::move(rec));
    }
    return store;
  }

  static ExemplarStore load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
      throw std::invalid_argument("ExemplarStore: cannot open " + path);
    }
    return parse(in);
  }

  void add(ExemplarRecord rec) {
    for (const auto& r : records_) {
      if (r.id == rec.id) {
        throw std::invalid_argument("ExemplarStore: duplicate id " +
                                    std::to_string(rec.id));
      }
    }
    records_.push_back(std::move(rec));
  }

  // Removes the record with the given id; returns whether it was present.
  bool remove_by_id(std::int64_t id) {
    const auto it =
        std::find_if(records_.begin(), records_.end(),
                     [id](const ExemplarRecord& r) { return r.id == id; });
    if (it == records_.end()) return false;
    records_.erase(it);
    return true;
  }

  const std::vector<ExemplarRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

 private:
  std::vector<ExemplarRecord> records_;
};

// ---------------------------------------------------------------------------
// Ensemble partitioning
// ---------------------------------------------------------------------------

struct EnsembleConfig {
  int n_subsets = 10;
  int shots_per_subset = 4;
  double subsample_rate = 1.0;  // Poisson inclusion probability q
  std::uint64_t seed = 0;

  void validate() const {
    if (n_subsets < 1) {
      throw std::invalid_argument("EnsembleConfig: n_subsets must be >= 1");
    }
    if (shots_per_subset < 1) {
      throw std::invalid_argument(
          "EnsembleConfig: shots_per_subset must be >= 1");
    }
    if (!(subsample_rate > 0.0 && subsample_rate <= 1.0)) {
      throw std::invalid_argument(
          "EnsembleConfig: subsample_rate must lie in (0, 1]");
    }
  }
};

struct PartitionResult {
  std::vector<std::vector<ExemplarRecord>> subsets;
  // True when the subsample could not fill n_subsets groups of
  // shots_per_subset records each.
  bool underfilled = false;
};

namespace detail {

inline constexpr std::uint64_t kIncludeTag = 0x696e636c75646564ULL;
inline constexpr std::uint64_t kSlotTag = 0x736c6f7468617368ULL;
inline constexpr std::uint64_t kOrderTag = 0x6f726465726b6579ULL;

// 53-bit uniform in [0,1) from a record-keyed hash.
inline double hash_uniform(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace detail

// Splits the store into at most n_subsets pairwise-disjoint subsets of at
// most shots_per_subset records each.  Every decision about a record —
// Poisson inclusion at rate q, subset slot, within-slot priority — is a pure
// hash of (seed, record id), never of the surrounding records.  Removing or
// adding one record therefore perturbs only that record's own slot: every
// other subset is byte-identical across the two runs.  (A shuffle-and-chunk
// partition would shift records across subset boundaries and lose this
// single-subset influence bound, so slot assignment is hashed even though
// that leaves some slots short of a full complement.)  Overflow records
// beyond shots_per_subset in a slot are dropped deterministically by
// priority; empty slots are omitted.
inline PartitionResult partition(const ExemplarStore& store,
                                 const EnsembleConfig& cfg) {
  cfg.validate();
  if (store.empty()) {
    throw std::invalid_argument("partition: exemplar store is empty");
  }
  const auto n = static_cast<std::uint64_t>(cfg.n_subsets);
  // slot -> (priority, record), ordered by priority then id.
  std::vector<std::vector<std::pair<std::uint64_t, const ExemplarRecord*>>>
      slots(cfg.n_subsets);
  for (const ExemplarRecord& rec : store.records()) {
    const auto rid = static_cast<std::uint64_t>(rec.id);
    const double u =
        detail::hash_uniform(hash_mix(cfg.seed, rid, detail::kIncludeTag));
    if (!(u < cfg.subsample_rate)) continue;
    const std::uint64_t slot = hash_mix(cfg.seed, rid, detail::kSlotTag) % n;
    const std::uint64_t priority = hash_mix(cfg.seed, rid, detail::kOrderTag);
    slots[static_cast<std::size_t>(slot)].emplace_back(priority, &rec);
  }
  PartitionResult result;
  for (auto& slot : slots) {
    std::sort(slot.begin(), slot.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first < b.first;
                return a.second->id < b.second->id;
              });
    if (slot.size() > static_cast<std::size_t>(cfg.shots_per_subset)) {
      slot.resize(static_cast<std::size_t>(cfg.shots_per_subset));
    }
    if (slot.size() < static_cast<std::size_t>(cfg.shots_per_subset)) {
      result.underfilled = true;
    }
    if (slot.empty()) continue;
    std::vector<ExemplarRecord> subset;
    subset.reserve(slot.size());
    for (const auto& [priority, rec] : slot) {
      (void)priority;
      subset.push_back(*rec);
    }
    result.subsets.push_back(std::move(subset));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

// Prompt templates plus sampling knobs.  Placeholders: {input} and {answer}
// for exemplars, {input} for the query, {keywords} for released keywords.
struct PromptConfig {
  std::string cls_exemplar = "Review: {input}\nSentiment: {answer}\n\n";
  std::string cls_query = "Review: {input}\nSentiment:";
  std::string gen_exemplar =
      "Dialogue: {input}\nSummarize the above dialogue: {answer}\n\n";
  std::string gen_query = "Dialogue: {input}\nSummarize the above dialogue:";
  std::string keyword_query_plain =
      "Dialogue: {input}\nSummarize the above dialogue with the following "
      "word suggestions: {keywords}";
  std::string keyword_query_ranked =
      "Dialogue: {input}\nSummarize the above dialogue with the following "
      "word suggestions ranked by their frequency from high to low: "
      "{keywords}";
  double ensemble_temperature = 0.0;
  double candidate_temperature = 1.0;  // zero-shot candidate diversity
  int max_tokens = 64;
};

namespace detail {

inline std::string replace_all(std::string text, const std::string& from,
                               const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

// Runs fn(0..n-1) on up to `parallelism` worker threads.  fn must confine
// writes to its own index.
template <typename Fn>
void parallel_for(std::size_t n, int parallelism, Fn&& fn) {
  if (n == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(
                                   parallelism > 1 ? parallelism : 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace detail

inline std::string format_exemplars(
    const std::vector<ExemplarRecord>& subset,
    const std::string& exemplar_template) {
  std::string out;
  for (const ExemplarRecord& rec : subset) {
    out += detail::replace_all(
        detail::replace_all(exemplar_template, "{input}", rec.input_text),
        "{answer}", rec.answer_text);
  }
  return out;
}

inline std::string format_classification_prompt(
    const std::vector<ExemplarRecord>& subset, const std::string& query,
    const PromptConfig& prompts) {
  return format_exemplars(subset, prompts.cls_exemplar) +
         detail::replace_all(prompts.cls_query, "{input}", query);
}

inline std::string format_generation_prompt(
    const std::vector<ExemplarRecord>& subset, const std::string& query,
    const PromptConfig& prompts) {
  return format_exemplars(subset, prompts.gen_exemplar) +
         detail::replace_all(prompts.gen_query, "{input}", query);
}

inline std::string format_zero_shot_prompt(const std::string& query,
                                           const PromptConfig& prompts) {
  return detail::replace_all(prompts.gen_query, "{input}", query);
}

inline std::string format_keyword_prompt(const std::string& query,
                                         const std::vector<std::string>& kws,
                                         bool ranked,
                                         const PromptConfig& prompts) {
  std::string joined;
  for (std::size_t i = 0; i < kws.size(); ++i) {
    if (i > 0) joined += ", ";
    joined += kws[i];
  }
  const std::string& tpl =
      ranked ? prompts.keyword_query_ranked : prompts.keyword_query_plain;
  return detail::replace_all(
      detail::replace_all(tpl, "{keywords}", joined), "{input}", query);
}

// ---------------------------------------------------------------------------
// Ensemble fan-out
// ---------------------------------------------------------------------------

namespace detail {

// Issues one completion per subset concurrently; a BackendError drops that
// subset's response (the record set never migrates to another subset, so the
// per-record influence bound survives failures).  Throws when subsets exist
// but every one of them failed.
inline std::vector<std::optional<std::string>> gather_responses(
    const std::vector<std::vector<ExemplarRecord>>& subsets,
    Backend& backend,
    const std::function<CompletionRequest(const std::vector<ExemplarRecord>&)>&
        make_request,
    int parallelism) {
  std::vector<std::optional<std::string>> responses(subsets.size());
  parallel_for(subsets.size(), parallelism, [&](std::size_t i) {
    try {
      responses[i] = backend.complete(make_request(subsets[i]));
    } catch (const BackendError&) {
      responses[i] = std::nullopt;
    }
  });
  if (!subsets.empty() &&
      std::none_of(responses.begin(), responses.end(),
                   [](const auto& r) { return r.has_value(); })) {
    throw BackendError("every ensemble member failed", 1);
  }
  return responses;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Classification (private voting)
// ---------------------------------------------------------------------------

struct ClassifyResult {
  std::string label;
  VoteHistogram votes;  // raw counts: expose only in privacy-off debug mode
  int failed_subsets = 0;
};

// One constrained completion per subset, one-hot votes summed into a
// histogram, winner released by Report-Noisy-Max with Gaussian noise.
//
// Accounting: one record influences one subset, so its removal moves at most
// one vote between two bins — an L2 step of sqrt(2) on the count vector.
// The appended ledger entry therefore carries effective noise multiplier
// sigma / sqrt(2) at the partition's subsample rate.
inline ClassifyResult classify(const std::string& query,
                               const std::vector<std::vector<ExemplarRecord>>&
                                   subsets,
                               Backend& backend,
                               const std::vector<std::string>& labels,
                               double sigma, RandomSource& rng,
                               PrivacyLedger* ledger, double subsample_rate,
                               const PromptConfig& prompts = {},
                               int parallelism = 4) {
  if (labels.empty()) {
    throw std::invalid_argument("classify: labels must be non-empty");
  }
  validate_constrained_labels(labels);
  const auto responses = detail::gather_responses(
      subsets, backend,
      [&](const std::vector<ExemplarRecord>& subset) {
        CompletionRequest req;
        req.prompt = format_classification_prompt(subset, query, prompts);
        req.max_tokens = 4;
        req.temperature = 0.0;
        req.constrained_labels = labels;
        return req;
      },
      parallelism);

  ClassifyResult result;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    result.votes.counts[static_cast<LabelId>(i)] = 0;
  }
  for (const auto& response : responses) {
    if (!response) {
      ++result.failed_subsets;
      continue;
    }
    const auto it = std::find(labels.begin(), labels.end(), *response);
    if (it == labels.end()) {
      throw BackendError(
          "constrained completion returned an out-of-set label: \"" +
              *response + "\"",
          1);
    }
    result.votes.add_vote(static_cast<LabelId>(it - labels.begin()));
  }
  result.votes.ensemble_size =
      static_cast<Count>(responses.size()) - result.failed_subsets;

  const LabelId winner = rnm_gaussian(result.votes, sigma, rng);
  result.label = labels[static_cast<std::size_t>(winner)];
  if (ledger != nullptr) {
    ledger->append_gaussian(sigma / std::sqrt(2.0), subsample_rate);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Embedding space aggregation (ESA)
// ---------------------------------------------------------------------------

struct EsaResult {
  std::string text;
  std::size_t chosen_candidate = 0;
  std::vector<double> cosines;  // per-candidate similarity (debug only)
  int failed_subsets = 0;
  bool zero_shot_fallback = false;
};

// Cosine argmax of candidates against a (noisy) mean embedding.  Ties break
// to the lowest candidate index; a zero-norm mean scores every candidate 0
// and so also selects index 0.  Invariant to positive rescaling of the mean.
inline std::size_t esa_select(const Embedding& noisy_mean,
                              const std::vector<Embedding>& candidates,
                              std::vector<double>* cosines_out = nullptr) {
  if (candidates.empty()) {
    throw std::invalid_argument("esa_select: no candidates");
  }
  const double mean_norm = noisy_mean.norm();
  std::size_t best = 0;
  double best_cos = -kInf;
  std::vector<double> cosines(candidates.size(), 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double c =
        mean_norm > 0.0 ? cosine_similarity(noisy_mean, candidates[i]) : 0.0;
    cosines[i] = c;
    if (c > best_cos) {
      best_cos = c;
      best = i;
    }
  }
  if (cosines_out != nullptr) *cosines_out = std::move(cosines);
  return best;
}

// Embedding space aggregation: embed each subset's generated sentence,
// privatize the mean with the Gaussian mechanism, and release the zero-shot
// candidate sentence nearest to the noisy mean in cosine similarity.
// Candidates are generated from the query alone (no private exemplars), so
// only the mean release consumes budget; the ledger entry carries noise
// multiplier sigma at the partition's subsample rate, with the mean's L2
// sensitivity passed explicitly (default sqrt(2)).
inline EsaResult esa_generate(const std::string& query,
                              const std::vector<std::vector<ExemplarRecord>>&
                                  subsets,
                              Backend& backend, double sigma,
                              double sensitivity, int n_candidates,
                              RandomSource& rng, PrivacyLedger* ledger,
                              double subsample_rate,
                              const PromptConfig& prompts = {},
                              int parallelism = 4) {
  if (n_candidates < 1) {
    throw std::invalid_argument("esa_generate: n_candidates must be >= 1");
  }

  // Zero-shot candidates: public, query-only, temperature-diversified.
  const std::string zero_shot = format_zero_shot_prompt(query, prompts);
  std::vector<std::string> candidate_texts(
      static_cast<std::size_t>(n_candidates));
  detail::parallel_for(
      candidate_texts.size(), parallelism, [&](std::size_t i) {
        CompletionRequest req;
        req.prompt = zero_shot;
        req.max_tokens = prompts.max_tokens;
        req.temperature = prompts.candidate_temperature;
        req.sample_index = static_cast<int>(i);
        candidate_texts[i] = backend.complete(req);
      });

  EsaResult result;
  if (subsets.empty()) {
    // Nothing private to aggregate: fall back to pure zero-shot output.
    result.text = candidate_texts.front();
    result.zero_shot_fallback = true;
    return result;
  }

  const auto responses = detail::gather_responses(
      subsets, backend,
      [&](const std::vector<ExemplarRecord>& subset) {
        CompletionRequest req;
        req.prompt = format_generation_prompt(subset, query, prompts);
        req.max_tokens = prompts.max_tokens;
        req.temperature = prompts.ensemble_temperature;
        return req;
      },
      parallelism);

  std::vector<Embedding> member_embeddings;
  member_embeddings.reserve(responses.size());
  for (const auto& response : responses) {
    if (!response) {
      ++result.failed_subsets;
      continue;
    }
    try {
      member_embeddings.push_back(backend.embed(*response));
    } catch (const BackendError&) {
      ++result.failed_subsets;  // embedding failed: drop the subset
    }
  }
  if (member_embeddings.empty()) {
    throw BackendError("every ensemble member failed to embed", 1);
  }

  Embedding noisy;
  noisy.values = gaussian_vector(mean_embedding(member_embeddings).values,
                                 sigma, sensitivity, rng);

  std::vector<Embedding> candidate_embeddings;
  candidate_embeddings.reserve(candidate_texts.size());
  for (const std::string& text : candidate_texts) {
    candidate_embeddings.push_back(backend.embed(text));
  }

  result.chosen_candidate =
      esa_select(noisy, candidate_embeddings, &result.cosines);
  result.text = candidate_texts[result.chosen_candidate];
  if (ledger != nullptr) {
    ledger->append_gaussian(sigma, subsample_rate);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Keyword space aggregation (KSA)
// ---------------------------------------------------------------------------

// Vote histogram over token ids plus the id -> token table.
struct KeywordHistogram {
  VoteHistogram histogram;
  std::vector<std::string> tokens;

  const std::string& token(LabelId id) const {
    return tokens.at(static_cast<std::size_t>(id));
  }
};

// Counts, for every token, the number of responses containing it (each
// response contributes at most 1 per distinct token).  Token ids follow
// first-appearance order across the response sequence.
inline KeywordHistogram build_keyword_histogram(
    const std::vector<std::string>& responses,
    const TokenizerConfig& tokenizer = TokenizerConfig::keywords_default()) {
  KeywordHistogram kh;
  std::map<std::string, LabelId> ids;
  for (const std::string& response : responses) {
    for (const std::string& tok : distinct_tokens(response, tokenizer)) {
      auto [it, inserted] =
          ids.emplace(tok, static_cast<LabelId>(kh.tokens.size()));
      if (inserted) kh.tokens.push_back(tok);
      kh.histogram.add_vote(it->second);
    }
  }
  kh.histogram.ensemble_size = static_cast<Count>(responses.size());
  return kh;
}

enum class KsaMethod { kJointEm, kPtr };

struct KsaParams {
  KsaMethod method = KsaMethod::kJointEm;
  // Joint EM: required selection size.  PTR: when set, propose exactly this
  // k and skip the private size selection.
  std::optional<int> fixed_k;
  // PTR size selection (find_best_k) searches k in [k_min, k_max].
  int k_min = 15;
  int k_max = 30;
  double em_epsilon = 1.0;   // joint EM / find_best_k exponential-mechanism ε
  double ptr_sigma = 1.0;    // PTR test noise
  double ptr_delta = 1e-4;   // PTR failure probability
};

struct KsaResult {
  std::string text;
  std::vector<std::string> released_keywords;  // jem: rank order; ptr: sorted
  bool ptr_released = false;   // meaningful for the PTR method
  bool zero_shot_fallback = false;
  KeywordHistogram histogram;  // raw counts: privacy-off debug only
  int failed_subsets = 0;
};

// Keyword space aggregation: tokenize the ensemble's generated sentences
// into a per-response-deduplicated keyword histogram, release frequent
// keywords privately, and re-prompt the backend with the released keywords
// to reconstruct a final answer.
//
//  - joint_em: one exponential-mechanism draw over ordered top-k sequences;
//    the released rank order is kept in the reconstruction prompt.  Ledger:
//    one EM entry at em_epsilon.
//  - ptr: find_best_k (EM over count gaps, skipped when fixed_k is set)
//    proposes k, then propose-test-release checks the k-th gap and either
//    releases the exact top-k set (listed alphabetically — a function of the
//    released set only) or falls back to zero-shot generation.  Ledger: one
//    EM entry (when find_best_k ran) plus one PTR entry.
inline KsaResult ksa_generate(const std::string& query,
                              const std::vector<std::vector<ExemplarRecord>>&
                                  subsets,
                              Backend& backend, const KsaParams& params,
                              RandomSource& rng, PrivacyLedger* ledger,
                              double subsample_rate,
                              const PromptConfig& prompts = {},
                              int parallelism = 4,
                              const TokenizerConfig& tokenizer =
                                  TokenizerConfig::keywords_default()) {
  const auto responses = detail::gather_responses(
      subsets, backend,
      [&](const std::vector<ExemplarRecord>& subset) {
        CompletionRequest req;
        req.prompt = format_generation_prompt(subset, query, prompts);
        req.max_tokens = prompts.max_tokens;
        req.temperature = prompts.ensemble_temperature;
        return req;
      },
      parallelism);

  KsaResult result;
  std::vector<std::string> usable;
  usable.reserve(responses.size());
  for (const auto& response : responses) {
    if (response) {
      usable.push_back(*response);
    } else {
      ++result.failed_subsets;
    }
  }
  result.histogram = build_keyword_histogram(usable, tokenizer);

  const auto reconstruct = [&](const std::vector<std::string>& keywords,
                               bool ranked) {
    CompletionRequest req;
    req.prompt = keywords.empty()
                     ? format_zero_shot_prompt(query, prompts)
                     : format_keyword_prompt(query, keywords, ranked,
                                             prompts);
    req.max_tokens = prompts.max_tokens;
    req.temperature = prompts.ensemble_temperature;
    return backend.complete(req);  // failure propagates: no private reuse
  };

  if (params.method == KsaMethod::kJointEm) {
    if (!params.fixed_k.has_value()) {
      throw std::invalid_argument("ksa_generate: joint_em requires fixed_k");
    }
    const int k = *params.fixed_k;
    const auto ordered =
        joint_em_top_k(result.histogram.histogram, k, params.em_epsilon, rng);
    for (const LabelId id : ordered) {
      result.released_keywords.push_back(result.histogram.token(id));
    }
    if (ledger != nullptr) {
      ledger->append_em(params.em_epsilon, subsample_rate);
    }
    result.text = reconstruct(result.released_keywords, /*ranked=*/true);
    return result;
  }

  // PTR path.
  int k = 0;
  if (params.fixed_k.has_value()) {
    k = *params.fixed_k;
  } else {
    const int lo = params.k_min;
    const int hi = params.k_max;
    if (lo < 1 || hi < lo) {
      throw std::invalid_argument("ksa_generate: bad [k_min, k_max] window");
    }
    k = find_best_k(
        result.histogram.histogram, params.em_epsilon,
        [lo, hi](int kk) { return (kk >= lo && kk <= hi) ? 0.0 : -kInf; },
        rng);
    if (ledger != nullptr) {
      ledger->append_em(params.em_epsilon, subsample_rate);
    }
  }
  const auto released = top_k_with_ptr(result.histogram.histogram, k,
                                       params.ptr_sigma, params.ptr_delta,
                                       rng);
  if (ledger != nullptr) {
    ledger->append_ptr(params.ptr_sigma, params.ptr_delta, subsample_rate);
  }
  if (released.has_value()) {
    result.ptr_released = true;
    for (const LabelId id : *released) {
      result.released_keywords.push_back(result.histogram.token(id));
    }
    std::sort(result.released_keywords.begin(),
              result.released_keywords.end());
    result.text = reconstruct(result.released_keywords, /*ranked=*/false);
  } else {
    result.zero_shot_fallback = true;
    result.text = reconstruct({}, /*ranked=*/false);
  }
  return result;
}

}  // namespace dpens

#endif  // DPENS_AGGREGATION_HPP_
