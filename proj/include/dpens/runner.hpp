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

#ifndef DPENS_RUNNER_HPP_
#define DPENS_RUNNER_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpens/aggregation.hpp"
#include "dpens/backend.hpp"
#include "dpens/calibrate.hpp"
#include "dpens/http_backend.hpp"
#include "dpens/ledger.hpp"
#include "dpens/metrics.hpp"

namespace dpens {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBudgetExhausted = 2;
inline constexpr int kExitBackendFailure = 3;
inline constexpr int kExitConfigError = 4;

// Invalid configuration, unreadable input, or an inconsistent request.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The privacy-budget projection refused to issue the next query.
class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskKind {
  kClassify,
  kEsa,
  kKsaPtr,
  kKsaJem,
  kCalibrate,
  kAccount,
  kScore,
};

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::kClassify: return "classify";
    case TaskKind::kEsa: return "esa";
    case TaskKind::kKsaPtr: return "ksa-ptr";
    case TaskKind::kKsaJem: return "ksa-jem";
    case TaskKind::kCalibrate: return "calibrate";
    case TaskKind::kAccount: return "account";
    case TaskKind::kScore: return "score";
  }
  return "unknown";
}

inline TaskKind task_from_name(const std::string& name) {
  if (name == "classify") return TaskKind::kClassify;
  if (name == "esa") return TaskKind::kEsa;
  if (name == "ksa-ptr") return TaskKind::kKsaPtr;
  if (name == "ksa-jem") return TaskKind::kKsaJem;
  if (name == "calibrate") return TaskKind::kCalibrate;
  if (name == "account") return TaskKind::kAccount;
  if (name == "score") return TaskKind::kScore;
  throw ConfigError("unknown task: " + name);
}

// Full description of one invocation: the task, its inputs, the ensemble
// geometry, the privacy budget (target mode) or explicit noise, and the
// backend.  Exactly one of target mode and explicit noise may be active for
// a pipeline task.
struct RunConfig {
  TaskKind task = TaskKind::kClassify;

  std::string exemplar_file;
  std::string query_file;
  std::string results_file;  // score: previously produced results
  std::string output_file = "results.jsonl";
  std::string ledger_file;  // default: output_file + ".ledger"

  bool seed_set = false;
  std::uint64_t seed = 0;

  EnsembleConfig ensemble;

  // Target mode: calibrate noise so declared_queries stay within the budget.
  std::optional<double> target_epsilon;
  double target_delta = 1e-5;
  std::int64_t declared_queries = 0;  // 0: use the query-file count

  // Explicit-noise mode (classify / esa use sigma, ksa uses the ksa block).
  std::optional<double> sigma;

  KsaParams ksa;
  bool ksa_noise_set = false;

  std::vector<std::string> labels;
  int n_candidates = 4;
  double esa_sensitivity = 1.4142135623730951;  // sqrt(2)

  std::string backend_kind = "mock";
  BackendProfile http_profile;

  PromptConfig prompts;

  bool privacy_off_debug = false;
  bool parallel_queries = false;
  int parallelism = 4;

  double account_delta = 1e-5;

  std::string ledger_path() const {
    return ledger_file.empty() ? output_file + ".ledger" : ledger_file;
  }
};

namespace detail {

inline void merge_json(nlohmann::json& base, const nlohmann::json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    if (base.contains(key)) {
      merge_json(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T* out) {
  if (!j.contains(key)) return;
  try {
    *out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field has the wrong type: ") + key);
  }
}

}  // namespace detail

// Builds a RunConfig from a JSON object (typically a config file merged with
// command-line overrides).  Unknown keys are ignored.
inline RunConfig parse_run_config(const nlohmann::json& j, TaskKind task) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;
  cfg.task = task;
  detail::read_field(j, "exemplar_file", &cfg.exemplar_file);
  detail::read_field(j, "query_file", &cfg.query_file);
  detail::read_field(j, "results_file", &cfg.results_file);
  detail::read_field(j, "output_file", &cfg.output_file);
  detail::read_field(j, "ledger_file", &cfg.ledger_file);
  if (j.contains("seed")) {
    detail::read_field(j, "seed", &cfg.seed);
    cfg.seed_set = true;
  }
  if (j.contains("ensemble")) {
    const auto& e = j.at("ensemble");
    detail::read_field(e, "n_subsets", &cfg.ensemble.n_subsets);
    detail::read_field(e, "shots_per_subset", &cfg.ensemble.shots_per_subset);
    detail::read_field(e, "subsample_rate", &cfg.ensemble.subsample_rate);
  }
  if (j.contains("privacy")) {
    const auto& p = j.at("privacy");
    if (p.contains("target_epsilon")) {
      double eps = 0.0;
      detail::read_field(p, "target_epsilon", &eps);
      cfg.target_epsilon = eps;
    }
    detail::read_field(p, "target_delta", &cfg.target_delta);
    detail::read_field(p, "declared_queries", &cfg.declared_queries);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    if (n.contains("sigma")) {
      double s = 0.0;
      detail::read_field(n, "sigma", &s);
      cfg.sigma = s;
    }
    if (n.contains("em_epsilon")) {
      detail::read_field(n, "em_epsilon", &cfg.ksa.em_epsilon);
      cfg.ksa_noise_set = true;
    }
    if (n.contains("ptr_sigma")) {
      detail::read_field(n, "ptr_sigma", &cfg.ksa.ptr_sigma);
      cfg.ksa_noise_set = true;
    }
    detail::read_field(n, "ptr_delta", &cfg.ksa.ptr_delta);
  }
  if (j.contains("ksa")) {
    const auto& k = j.at("ksa");
    if (k.contains("fixed_k")) {
      int fixed = 0;
      detail::read_field(k, "fixed_k", &fixed);
      cfg.ksa.fixed_k = fixed;
    }
    detail::read_field(k, "k_min", &cfg.ksa.k_min);
    detail::read_field(k, "k_max", &cfg.ksa.k_max);
  }
  detail::read_field(j, "labels", &cfg.labels);
  if (j.contains("esa")) {
    const auto& e = j.at("esa");
    detail::read_field(e, "n_candidates", &cfg.n_candidates);
    detail::read_field(e, "sensitivity", &cfg.esa_sensitivity);
  }
  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    detail::read_field(b, "kind", &cfg.backend_kind);
    detail::read_field(b, "endpoint_url", &cfg.http_profile.endpoint_url);
    detail::read_field(b, "model", &cfg.http_profile.model_name);
    detail::read_field(b, "embedding_model",
                       &cfg.http_profile.embedding_model_name);
    detail::read_field(b, "timeout_seconds",
                       &cfg.http_profile.request_timeout_seconds);
    detail::read_field(b, "max_retries", &cfg.http_profile.max_retries);
    detail::read_field(b, "parallelism_cap",
                       &cfg.http_profile.parallelism_cap);
    detail::read_field(b, "embedding_dimension",
                       &cfg.http_profile.embedding_dimension);
  }
  if (j.contains("prompts")) {
    const auto& p = j.at("prompts");
    detail::read_field(p, "cls_exemplar", &cfg.prompts.cls_exemplar);
    detail::read_field(p, "cls_query", &cfg.prompts.cls_query);
    detail::read_field(p, "gen_exemplar", &cfg.prompts.gen_exemplar);
    detail::read_field(p, "gen_query", &cfg.prompts.gen_query);
    detail::read_field(p, "keyword_query_plain",
                       &cfg.prompts.keyword_query_plain);
    detail::read_field(p, "keyword_query_ranked",
                       &cfg.prompts.keyword_query_ranked);
    detail::read_field(p, "ensemble_temperature",
                       &cfg.prompts.ensemble_temperature);
    detail::read_field(p, "candidate_temperature",
                       &cfg.prompts.candidate_temperature);
    detail::read_field(p, "max_tokens", &cfg.prompts.max_tokens);
  }
  detail::read_field(j, "privacy_off_debug", &cfg.privacy_off_debug);
  detail::read_field(j, "parallel_queries", &cfg.parallel_queries);
  detail::read_field(j, "parallelism", &cfg.parallelism);
  detail::read_field(j, "account_delta", &cfg.account_delta);
  return cfg;
}

struct QueryRecord {
  std::string query;
  std::optional<std::string> reference;
};

inline std::vector<QueryRecord> load_queries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open query file: " + path);
  std::vector<QueryRecord> out;
  std::string line;
  std::int64_t line_index = 0;
  while (std::getline(in, line)) {
    const std::int64_t current = line_index++;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j =
        nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("query")) {
      throw ConfigError("query file line " + std::to_string(current) +
                        " is not an object with a query field");
    }
    QueryRecord rec;
    rec.query = j.at("query").get<std::string>();
    if (j.contains("reference")) {
      rec.reference = j.at("reference").get<std::string>();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

namespace detail {

inline std::unique_ptr<Backend> make_backend(const RunConfig& cfg) {
  if (cfg.backend_kind == "mock") {
    return std::make_unique<MockBackend>(
        hash_mix(cfg.seed, 0xb0cce5d5eedULL),
        cfg.http_profile.embedding_dimension);
  }
  if (cfg.backend_kind == "http") {
    if (cfg.http_profile.endpoint_url.empty()) {
      throw ConfigError("http backend requires backend.endpoint_url");
    }
    return std::make_unique<HttpBackend>(cfg.http_profile);
  }
  throw ConfigError("backend.kind must be \"mock\" or \"http\", got \"" +
                    cfg.backend_kind + "\"");
}

// Ledger entries one query of this task will append.
inline std::vector<LedgerEntry> prospective_entries(const RunConfig& cfg,
                                                    double noise_multiplier) {
  const double q = cfg.ensemble.subsample_rate;
  switch (cfg.task) {
    case TaskKind::kClassify:
    case TaskKind::kEsa:
      return {{MechanismKind::kGaussian, noise_multiplier, q, 0.0, 1}};
    case TaskKind::kKsaJem:
      return {{MechanismKind::kEm, cfg.ksa.em_epsilon, q, 0.0, 1}};
    case TaskKind::kKsaPtr: {
      std::vector<LedgerEntry> entries;
      if (!cfg.ksa.fixed_k.has_value()) {
        entries.push_back({MechanismKind::kEm, cfg.ksa.em_epsilon, q, 0.0, 1});
      }
      entries.push_back({MechanismKind::kPtr, cfg.ksa.ptr_sigma, q,
                         cfg.ksa.ptr_delta, 1});
      return entries;
    }
    default:
      return {};
  }
}

// Propose-test-release failure probabilities accumulate on the delta_approx
// side of the final report; once their sum reaches the report delta the total
// (epsilon, delta) is no longer expressible and ledger_total refuses it.
// Discovering that only after the queries have run would spend the budget on
// a run that then exits with an error, so the projection is rejected up
// front, before any output or ledger write.  Mirrors ledger_total's rules:
// Gaussian entries carry no failure mass, ptr mass is amplified to q * delta
// when subsampled, and the report delta is split evenly when both the
// numerical and the Renyi track are present.
inline void check_report_delta_feasible(
    const PrivacyLedger& resumed, const std::vector<LedgerEntry>& per_query,
    std::int64_t paid_queries, double report_delta) {
  bool has_gaussian = false;
  bool has_rdp = false;
  double failure_mass = 0.0;
  const auto scan = [&](const LedgerEntry& e, std::int64_t repeats) {
    if (e.kind == MechanismKind::kGaussian) {
      has_gaussian = true;
      return;
    }
    has_rdp = true;
    double df = e.delta_fail;
    if (e.kind == MechanismKind::kPtr && e.q < 1.0) df *= e.q;
    failure_mass +=
        df * static_cast<double>(e.count) * static_cast<double>(repeats);
  };
  for (const LedgerEntry& e : resumed.entries()) scan(e, 1);
  for (const LedgerEntry& e : per_query) scan(e, paid_queries);
  const double share =
      (has_gaussian && has_rdp) ? report_delta / 2.0 : report_delta;
  if (has_rdp && failure_mass >= share) {
    std::ostringstream msg;
    msg << "infeasible report: the run would accumulate ptr failure "
           "probability "
        << failure_mass << " across " << paid_queries
        << " queries, which leaves no room inside the report delta "
        << report_delta << "; lower noise.ptr_delta or raise the report delta";
    throw ConfigError(msg.str());
  }
}

inline void write_ledger_file(const PrivacyLedger& ledger,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write ledger file: " + path);
  ledger.serialize(out);
}

inline nlohmann::json scores_to_json(const ExampleScores& s) {
  return nlohmann::json{{"accuracy", s.accuracy},
                        {"rouge1", s.rouge_1},
                        {"rouge2", s.rouge_2},
                        {"rougeL", s.rouge_l},
                        {"levenshtein", s.levenshtein}};
}

}  // namespace detail

// Calibrates the noise multiplier for the configured budget and prints it
// together with the per-task mechanism noise scales.
inline int run_calibrate(const RunConfig& cfg, std::ostream& status) {
  if (!cfg.target_epsilon.has_value()) {
    throw ConfigError("calibrate requires privacy.target_epsilon");
  }
  if (cfg.declared_queries < 1) {
    throw ConfigError("calibrate requires privacy.declared_queries >= 1");
  }
  const double multiplier = calibrate_sigma(
      *cfg.target_epsilon, cfg.target_delta, cfg.ensemble.subsample_rate,
      cfg.declared_queries);
  status << "noise_multiplier " << multiplier << "\n";
  status << "classify_sigma " << multiplier * std::sqrt(2.0) << "\n";
  status << "esa_sigma " << multiplier << "\n";
  return kExitOk;
}

// Reads the ledger file and prints the total (epsilon, delta) it implies.
inline int run_account(const RunConfig& cfg, std::ostream& status) {
  PrivacyLedger ledger;
  {
    std::ifstream in(cfg.ledger_path());
    if (in) ledger = PrivacyLedger::parse(in);
  }
  const auto [eps, delta] = ledger_total(ledger, cfg.account_delta);
  status << "entries " << ledger.size() << "\n";
  status << "epsilon " << eps << "\n";
  status << "delta " << delta << "\n";
  return kExitOk;
}

// Scores a results file against the query file's references.
inline int run_score(const RunConfig& cfg, std::ostream& status) {
  if (cfg.results_file.empty()) {
    throw ConfigError("score requires results_file");
  }
  if (cfg.query_file.empty()) {
    throw ConfigError("score requires query_file (with reference fields)");
  }
  const auto queries = load_queries(cfg.query_file);
  std::ifstream in(cfg.results_file);
  if (!in) throw ConfigError("cannot open results file: " + cfg.results_file);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j =
        nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("answer")) {
      throw ConfigError("results line " + std::to_string(index) +
                        " is not an object with an answer field");
    }
    if (index >= queries.size()) {
      throw ConfigError("results file has more records than the query file");
    }
    if (!queries[index].reference.has_value()) {
      throw ConfigError("query " + std::to_string(index) +
                        " has no reference to score against");
    }
    pairs.emplace_back(j.at("answer").get<std::string>(),
                       *queries[index].reference);
    ++index;
  }
  const ScoreReport report = score_corpus(pairs);
  nlohmann::json out{{"examples", nlohmann::json::array()},
                     {"mean", detail::scores_to_json(report.mean)},
                     {"count", report.per_example.size()}};
  for (const ExampleScores& s : report.per_example) {
    out["examples"].push_back(detail::scores_to_json(s));
  }
  if (!cfg.output_file.empty()) {
    std::ofstream of(cfg.output_file, std::ios::trunc);
    if (!of) throw ConfigError("cannot write output: " + cfg.output_file);
    of << out.dump(2) << "\n";
  }
  status << "count " << report.per_example.size() << "\n";
  status << "accuracy " << report.mean.accuracy << "\n";
  status << "rouge1 " << report.mean.rouge_1 << "\n";
  status << "rouge2 " << report.mean.rouge_2 << "\n";
  status << "rougeL " << report.mean.rouge_l << "\n";
  status << "levenshtein " << report.mean.levenshtein << "\n";
  return kExitOk;
}

namespace detail {

struct ResolvedNoise {
  double noise_multiplier = 0.0;  // accounting units (Gaussian tasks)
  double mechanism_sigma = 0.0;   // units the mechanism consumes
};

// Enforces the target-xor-explicit contract and produces the noise scales.
inline ResolvedNoise resolve_noise(const RunConfig& cfg,
                                   std::size_t query_count,
                                   std::ostream& status) {
  const bool gaussian_task =
      cfg.task == TaskKind::kClassify || cfg.task == TaskKind::kEsa;
  const bool target_mode = cfg.target_epsilon.has_value();
  if (gaussian_task) {
    if (target_mode == cfg.sigma.has_value()) {
      throw ConfigError(
          "supply exactly one of privacy.target_epsilon and noise.sigma");
    }
  } else {
    if (target_mode) {
      throw ConfigError(
          "ksa tasks take explicit noise (noise.em_epsilon / noise.ptr_*); "
          "target-mode calibration is only defined for the Gaussian tasks");
    }
    if (!cfg.ksa_noise_set) {
      throw ConfigError("ksa tasks require noise.em_epsilon (and for ptr, "
                        "noise.ptr_sigma / noise.ptr_delta)");
    }
  }

  ResolvedNoise noise;
  if (!gaussian_task) return noise;

  if (target_mode) {
    const std::int64_t n = cfg.declared_queries > 0
                               ? cfg.declared_queries
                               : static_cast<std::int64_t>(query_count);
    if (n < 1) throw ConfigError("target mode needs at least one query");
    noise.noise_multiplier =
        calibrate_sigma(*cfg.target_epsilon, cfg.target_delta,
                        cfg.ensemble.subsample_rate, n);
    noise.mechanism_sigma = cfg.task == TaskKind::kClassify
                                ? noise.noise_multiplier * std::sqrt(2.0)
                                : noise.noise_multiplier;
    status << "calibrated noise_multiplier " << noise.noise_multiplier
           << " for " << n << " queries\n";
  } else {
    noise.mechanism_sigma = *cfg.sigma;
    if (noise.mechanism_sigma < 0.0) {
      throw ConfigError("noise.sigma must be >= 0");
    }
    if (noise.mechanism_sigma == 0.0 && !cfg.privacy_off_debug) {
      throw ConfigError(
          "noise.sigma = 0 provides no privacy; rerun with "
          "--privacy-off-debug to acknowledge");
    }
    noise.noise_multiplier = cfg.task == TaskKind::kClassify
                                 ? noise.mechanism_sigma / std::sqrt(2.0)
                                 : noise.mechanism_sigma;
  }
  return noise;
}

struct QueryOutcome {
  nlohmann::json record;
  std::vector<LedgerEntry> entries;
};

// Runs one query end to end (partition, ensemble, mechanism) and returns the
// result record plus the ledger entries it incurred.
inline QueryOutcome run_one_query(const RunConfig& cfg,
                                  const ExemplarStore& store,
                                  Backend& backend, std::size_t index,
                                  const std::string& query,
                                  const ResolvedNoise& noise) {
  EnsembleConfig ecfg = cfg.ensemble;
  ecfg.seed = hash_mix(cfg.seed, index, 0x7061727469ULL);
  const PartitionResult part = partition(store, ecfg);
  RandomSource rng(hash_mix(cfg.seed, index, 0x6d656368ULL));
  PrivacyLedger local;
  PrivacyLedger* ledger = cfg.privacy_off_debug ? nullptr : &local;

  QueryOutcome out;
  out.record["index"] = index;
  out.record["task"] = task_name(cfg.task);
  out.record["query"] = query;

  switch (cfg.task) {
    case TaskKind::kClassify: {
      const ClassifyResult r = classify(
          query, part.subsets, backend, cfg.labels, noise.mechanism_sigma,
          rng, ledger, cfg.ensemble.subsample_rate, cfg.prompts,
          cfg.parallelism);
      out.record["answer"] = r.label;
      out.record["failed_subsets"] = r.failed_subsets;
      if (cfg.privacy_off_debug) {
        nlohmann::json votes = nlohmann::json::object();
        for (const auto& [id, count] : r.votes.counts) {
          votes[cfg.labels[static_cast<std::size_t>(id)]] = count;
        }
        out.record["debug"]["votes"] = std::move(votes);
      }
      break;
    }
    case TaskKind::kEsa: {
      const EsaResult r = esa_generate(
          query, part.subsets, backend, noise.mechanism_sigma,
          cfg.esa_sensitivity, cfg.n_candidates, rng, ledger,
          cfg.ensemble.subsample_rate, cfg.prompts, cfg.parallelism);
      out.record["answer"] = r.text;
      out.record["failed_subsets"] = r.failed_subsets;
      out.record["zero_shot_fallback"] = r.zero_shot_fallback;
      if (cfg.privacy_off_debug) {
        out.record["debug"]["chosen_candidate"] = r.chosen_candidate;
        out.record["debug"]["cosines"] = r.cosines;
      }
      break;
    }
    case TaskKind::kKsaPtr:
    case TaskKind::kKsaJem: {
      KsaParams params = cfg.ksa;
      params.method = cfg.task == TaskKind::kKsaPtr ? KsaMethod::kPtr
                                                    : KsaMethod::kJointEm;
      const KsaResult r = ksa_generate(
          query, part.subsets, backend, params, rng, ledger,
          cfg.ensemble.subsample_rate, cfg.prompts, cfg.parallelism);
      out.record["answer"] = r.text;
      out.record["failed_subsets"] = r.failed_subsets;
      out.record["released_keywords"] = r.released_keywords;
      out.record["zero_shot_fallback"] = r.zero_shot_fallback;
      if (cfg.task == TaskKind::kKsaPtr) {
        out.record["ptr_released"] = r.ptr_released;
      }
      if (cfg.privacy_off_debug) {
        nlohmann::json hist = nlohmann::json::object();
        for (const auto& [id, count] : r.histogram.histogram.counts) {
          hist[r.histogram.token(id)] = count;
        }
        out.record["debug"]["keyword_histogram"] = std::move(hist);
      }
      break;
    }
    default:
      throw ConfigError("run_one_query: not a pipeline task");
  }
  out.entries = local.entries();
  return out;
}

}  // namespace detail

// Executes a pipeline task (classify / esa / ksa-*) query by query: writes
// one JSON record per query to the output file, maintains the ledger file,
// and prints the total consumed (epsilon, delta).  In target mode the budget
// stop fires before any query whose entries would push the ledger past the
// target.  Throws ConfigError / BackendError / BudgetExhausted; callers map
// them to exit codes (see run_with_exit_code).
inline int run_pipeline(const RunConfig& cfg, std::ostream& status) {
  if (!cfg.seed_set) {
    throw ConfigError("pipeline runs require an explicit seed");
  }
  if (cfg.exemplar_file.empty()) throw ConfigError("missing exemplar_file");
  if (cfg.query_file.empty()) throw ConfigError("missing query_file");
  if (cfg.task == TaskKind::kClassify && cfg.labels.empty()) {
    throw ConfigError("classify requires a non-empty labels list");
  }
  cfg.ensemble.validate();

  const ExemplarStore store = ExemplarStore::load_file(cfg.exemplar_file);
  const auto queries = load_queries(cfg.query_file);
  const auto backend = detail::make_backend(cfg);
  const detail::ResolvedNoise noise =
      detail::resolve_noise(cfg, queries.size(), status);
  const bool target_mode = cfg.target_epsilon.has_value();

  PrivacyLedger ledger;
  if (!cfg.privacy_off_debug) {
    std::ifstream in(cfg.ledger_path());
    if (in) ledger = PrivacyLedger::parse(in);
  }
  const bool resumed = !ledger.empty();

  if (cfg.parallel_queries) {
    if (!target_mode) {
      throw ConfigError(
          "--parallel-queries requires target mode (the budget must be paid "
          "up front for the declared query count)");
    }
    if (resumed) {
      throw ConfigError(
          "--parallel-queries requires a fresh ledger; account for the "
          "existing one separately");
    }
  }
  if (cfg.privacy_off_debug) {
    status << "WARNING: privacy off; raw histograms exposed and no ledger "
              "entries are recorded\n";
  }

  const std::int64_t paid_queries =
      cfg.declared_queries > 0 ? cfg.declared_queries
                               : static_cast<std::int64_t>(queries.size());
  if (!cfg.privacy_off_debug) {
    detail::check_report_delta_feasible(
        ledger, detail::prospective_entries(cfg, noise.noise_multiplier),
        paid_queries, target_mode ? cfg.target_delta : cfg.account_delta);
  }

  std::ofstream out(cfg.output_file, std::ios::trunc);
  if (!out) throw ConfigError("cannot write output: " + cfg.output_file);

  // Decides whether query `index` may run, by count against the pre-paid
  // calibration on a fresh ledger, or by full ledger projection on a resumed
  // one.
  const auto budget_allows = [&](std::size_t index) {
    if (!target_mode || cfg.privacy_off_debug) return true;
    if (!resumed) {
      return static_cast<std::int64_t>(index) < paid_queries;
    }
    PrivacyLedger projected = ledger;
    for (const LedgerEntry& e :
         detail::prospective_entries(cfg, noise.noise_multiplier)) {
      projected.append(e);
    }
    const auto [eps, delta] = ledger_total(projected, cfg.target_delta);
    (void)delta;
    return eps <= *cfg.target_epsilon;
  };

  std::size_t completed = 0;
  bool stopped = false;

  if (cfg.parallel_queries) {
    const std::size_t runnable = std::min(
        queries.size(), static_cast<std::size_t>(paid_queries));
    std::vector<detail::QueryOutcome> outcomes(runnable);
    std::vector<std::string> errors(runnable);
    detail::parallel_for(runnable, cfg.parallelism, [&](std::size_t i) {
      try {
        outcomes[i] = detail::run_one_query(cfg, store, *backend, i,
                                            queries[i].query, noise);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    for (std::size_t i = 0; i < runnable; ++i) {
      if (!errors[i].empty()) {
        throw BackendError("query " + std::to_string(i) +
                               " failed: " + errors[i],
                           1);
      }
      out << outcomes[i].record.dump() << "\n";
      for (const LedgerEntry& e : outcomes[i].entries) ledger.append(e);
      ++completed;
    }
    out.flush();
    if (!cfg.privacy_off_debug) {
      detail::write_ledger_file(ledger, cfg.ledger_path());
    }
    stopped = runnable < queries.size();
  } else {
    for (std::size_t i = 0; i < queries.size(); ++i) {
      if (!budget_allows(i)) {
        stopped = true;
        break;
      }
      detail::QueryOutcome outcome = detail::run_one_query(
          cfg, store, *backend, i, queries[i].query, noise);
      out << outcome.record.dump() << "\n";
      out.flush();
      for (const LedgerEntry& e : outcome.entries) ledger.append(e);
      if (!cfg.privacy_off_debug) {
        detail::write_ledger_file(ledger, cfg.ledger_path());
      }
      ++completed;
    }
  }

  status << "completed " << completed << " of " << queries.size()
         << " queries\n";
  if (!cfg.privacy_off_debug) {
    const double report_delta =
        target_mode ? cfg.target_delta : cfg.account_delta;
    const auto [eps, delta] = ledger_total(ledger, report_delta);
    status << "consumed epsilon " << eps << " delta " << delta << "\n";
  }
  if (stopped) {
    throw BudgetExhausted(
        "privacy budget exhausted before query " + std::to_string(completed) +
        "; results so far are on disk");
  }
  return kExitOk;
}

// Dispatches a task and maps exceptions to the documented exit codes:
// 0 ok, 2 budget exhausted, 3 backend failure, 4 configuration error.
inline int run_with_exit_code(const RunConfig& cfg, std::ostream& status,
                              std::ostream& errors) {
  try {
    switch (cfg.task) {
      case TaskKind::kCalibrate: return run_calibrate(cfg, status);
      case TaskKind::kAccount: return run_account(cfg, status);
      case TaskKind::kScore: return run_score(cfg, status);
      default: return run_pipeline(cfg, status);
    }
  } catch (const BudgetExhausted& e) {
    errors << "budget exhausted: " << e.what() << "\n";
    return kExitBudgetExhausted;
  } catch (const BackendError& e) {
    errors << "backend failure: " << e.what() << "\n";
    return kExitBackendFailure;
  } catch (const ConfigError& e) {
    errors << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    errors << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace dpens

#endif  // DPENS_RUNNER_HPP_
