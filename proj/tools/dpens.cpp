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
//
// Command-line driver.  Subcommands: classify, esa, ksa, calibrate, account,
// score.  Options may come from a JSON config file (--config) with any
// command-line flag overriding the file.  Exit codes: 0 success, 2 privacy
// budget exhausted, 3 backend failure, 4 configuration error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dpens/runner.hpp"

namespace {

// All flag targets, bound to CLI11 options.  After parsing, only flags the
// user actually passed (count > 0) are copied into the JSON overlay, so file
// values survive unless explicitly overridden.
struct Flags {
  std::string config_path;
  std::string exemplars;
  std::string queries_file;
  std::string results;
  std::string output;
  std::string ledger;
  std::uint64_t seed = 0;

  int n_subsets = 10;
  int shots = 4;
  double q = 1.0;

  double epsilon = 0.0;
  double delta = 1e-5;
  std::int64_t declared_queries = 0;

  double sigma = 0.0;
  double em_epsilon = 1.0;
  double ptr_sigma = 1.0;
  double ptr_delta = 1e-4;

  std::vector<std::string> labels;
  int n_candidates = 4;
  double esa_sensitivity = 1.4142135623730951;

  std::string method = "ptr";
  int fixed_k = 0;
  int k_min = 15;
  int k_max = 30;

  std::string backend = "mock";
  std::string endpoint;
  std::string model;
  std::string embedding_model;
  int embedding_dim = 1536;
  double timeout = 30.0;
  int max_retries = 3;

  bool privacy_off_debug = false;
  bool parallel_queries = false;
  int parallelism = 4;
  double account_delta = 1e-5;
};

void add_io_options(CLI::App* sub, Flags* f) {
  sub->add_option("--config", f->config_path, "JSON config file");
  sub->add_option("--exemplars", f->exemplars, "exemplar JSONL file");
  sub->add_option("--queries-file", f->queries_file, "query JSONL file");
  sub->add_option("--output", f->output, "output file");
  sub->add_option("--ledger", f->ledger, "privacy ledger file");
}

void add_pipeline_options(CLI::App* sub, Flags* f) {
  add_io_options(sub, f);
  sub->add_option("--seed", f->seed, "base seed (required; drives all rng)");
  sub->add_option("--n-subsets", f->n_subsets, "ensemble size");
  sub->add_option("--shots", f->shots, "exemplars per subset");
  sub->add_option("--q", f->q, "Poisson subsampling rate in (0, 1]");
  sub->add_option("--epsilon", f->epsilon, "privacy target epsilon");
  sub->add_option("--delta", f->delta, "privacy target delta");
  sub->add_option("--declared-queries", f->declared_queries,
                  "queries the budget is calibrated for");
  sub->add_option("--backend", f->backend, "backend kind: mock or http");
  sub->add_option("--endpoint", f->endpoint, "http backend base URL");
  sub->add_option("--model", f->model, "completion model name");
  sub->add_option("--embedding-model", f->embedding_model,
                  "embedding model name");
  sub->add_option("--embedding-dim", f->embedding_dim,
                  "embedding dimension");
  sub->add_option("--timeout", f->timeout, "http timeout in seconds");
  sub->add_option("--max-retries", f->max_retries, "http retry limit");
  sub->add_flag("--privacy-off-debug", f->privacy_off_debug,
                "disable privacy accounting and expose raw statistics");
  sub->add_flag("--parallel-queries", f->parallel_queries,
                "run queries concurrently (target mode only)");
  sub->add_option("--parallelism", f->parallelism,
                  "worker threads for ensemble fan-out");
  sub->add_option("--account-delta", f->account_delta,
                  "delta used when reporting consumed epsilon");
}

nlohmann::json overlay_from(const CLI::App& sub, const Flags& f) {
  nlohmann::json o = nlohmann::json::object();
  const auto seen = [&sub](const std::string& name) {
    const CLI::Option* opt = sub.get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (seen("--exemplars")) o["exemplar_file"] = f.exemplars;
  if (seen("--queries-file")) o["query_file"] = f.queries_file;
  if (seen("--results")) o["results_file"] = f.results;
  if (seen("--output")) o["output_file"] = f.output;
  if (seen("--ledger")) o["ledger_file"] = f.ledger;
  if (seen("--seed")) o["seed"] = f.seed;
  if (seen("--n-subsets")) o["ensemble"]["n_subsets"] = f.n_subsets;
  if (seen("--shots")) o["ensemble"]["shots_per_subset"] = f.shots;
  if (seen("--q")) o["ensemble"]["subsample_rate"] = f.q;
  if (seen("--epsilon")) o["privacy"]["target_epsilon"] = f.epsilon;
  if (seen("--delta")) o["privacy"]["target_delta"] = f.delta;
  if (seen("--declared-queries")) {
    o["privacy"]["declared_queries"] = f.declared_queries;
  }
  if (seen("--sigma")) o["noise"]["sigma"] = f.sigma;
  if (seen("--em-epsilon")) o["noise"]["em_epsilon"] = f.em_epsilon;
  if (seen("--ptr-sigma")) o["noise"]["ptr_sigma"] = f.ptr_sigma;
  if (seen("--ptr-delta")) o["noise"]["ptr_delta"] = f.ptr_delta;
  if (seen("--labels")) o["labels"] = f.labels;
  if (seen("--n-candidates")) o["esa"]["n_candidates"] = f.n_candidates;
  if (seen("--esa-sensitivity")) o["esa"]["sensitivity"] = f.esa_sensitivity;
  if (seen("--fixed-k")) o["ksa"]["fixed_k"] = f.fixed_k;
  if (seen("--k-min")) o["ksa"]["k_min"] = f.k_min;
  if (seen("--k-max")) o["ksa"]["k_max"] = f.k_max;
  if (seen("--backend")) o["backend"]["kind"] = f.backend;
  if (seen("--endpoint")) o["backend"]["endpoint_url"] = f.endpoint;
  if (seen("--model")) o["backend"]["model"] = f.model;
  if (seen("--embedding-model")) {
    o["backend"]["embedding_model"] = f.embedding_model;
  }
  if (seen("--embedding-dim")) {
    o["backend"]["embedding_dimension"] = f.embedding_dim;
  }
  if (seen("--timeout")) o["backend"]["timeout_seconds"] = f.timeout;
  if (seen("--max-retries")) o["backend"]["max_retries"] = f.max_retries;
  if (seen("--privacy-off-debug")) {
    o["privacy_off_debug"] = f.privacy_off_debug;
  }
  if (seen("--parallel-queries")) o["parallel_queries"] = f.parallel_queries;
  if (seen("--parallelism")) o["parallelism"] = f.parallelism;
  if (seen("--account-delta")) o["account_delta"] = f.account_delta;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dpens: differentially private aggregation of language-model "
      "ensembles for in-context learning"};
  app.require_subcommand(1);
  Flags f;

  CLI::App* classify = app.add_subcommand(
      "classify", "private ensemble voting over a fixed label set");
  add_pipeline_options(classify, &f);
  classify->add_option("--sigma", f.sigma,
                       "report-noisy-max Gaussian noise scale");
  classify->add_option("--labels", f.labels, "label set")->delimiter(',');

  CLI::App* esa = app.add_subcommand(
      "esa", "embedding space aggregation for generation");
  add_pipeline_options(esa, &f);
  esa->add_option("--sigma", f.sigma, "embedding-mean Gaussian noise scale");
  esa->add_option("--n-candidates", f.n_candidates,
                  "zero-shot candidates to select among");
  esa->add_option("--esa-sensitivity", f.esa_sensitivity,
                  "L2 sensitivity of the mean embedding");

  CLI::App* ksa = app.add_subcommand(
      "ksa", "keyword space aggregation for generation");
  add_pipeline_options(ksa, &f);
  ksa->add_option("--method", f.method, "release method: ptr or jem");
  ksa->add_option("--em-epsilon", f.em_epsilon,
                  "exponential-mechanism epsilon (jem / size selection)");
  ksa->add_option("--ptr-sigma", f.ptr_sigma, "PTR test noise scale");
  ksa->add_option("--ptr-delta", f.ptr_delta, "PTR failure probability");
  ksa->add_option("--fixed-k", f.fixed_k, "fixed release size k");
  ksa->add_option("--k-min", f.k_min, "size-selection lower bound");
  ksa->add_option("--k-max", f.k_max, "size-selection upper bound");

  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "solve for the noise multiplier meeting a budget");
  calibrate->add_option("--config", f.config_path, "JSON config file");
  calibrate->add_option("--epsilon", f.epsilon, "privacy target epsilon");
  calibrate->add_option("--delta", f.delta, "privacy target delta");
  calibrate->add_option("--declared-queries", f.declared_queries,
                        "number of queries the budget must cover");
  calibrate->add_option("--q", f.q, "Poisson subsampling rate");

  CLI::App* account = app.add_subcommand(
      "account", "report total (epsilon, delta) for a ledger file");
  account->add_option("--config", f.config_path, "JSON config file");
  account->add_option("--ledger", f.ledger, "privacy ledger file");
  account->add_option("--delta", f.account_delta,
                      "delta at which to report epsilon");
  account->add_option("--output", f.output, "unused; accepted for symmetry");

  CLI::App* score = app.add_subcommand(
      "score", "score a results file against query references");
  score->add_option("--config", f.config_path, "JSON config file");
  score->add_option("--results", f.results, "results JSONL to score");
  score->add_option("--queries-file", f.queries_file,
                    "query JSONL with reference fields");
  score->add_option("--output", f.output, "score report output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return dpens::kExitConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  dpens::TaskKind task;
  try {
    if (sub == ksa) {
      if (f.method == "ptr") {
        task = dpens::TaskKind::kKsaPtr;
      } else if (f.method == "jem") {
        task = dpens::TaskKind::kKsaJem;
      } else {
        throw dpens::ConfigError("--method must be ptr or jem, got \"" +
                                 f.method + "\"");
      }
    } else {
      task = dpens::task_from_name(sub->get_name());
    }

    nlohmann::json merged = nlohmann::json::object();
    if (!f.config_path.empty()) {
      std::ifstream in(f.config_path);
      if (!in) {
        throw dpens::ConfigError("cannot open config file: " + f.config_path);
      }
      merged = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
      if (merged.is_discarded()) {
        throw dpens::ConfigError("config file is not valid JSON: " +
                                 f.config_path);
      }
    }
    nlohmann::json overlay = overlay_from(*sub, f);
    if (sub == calibrate) {
      // calibrate always runs in target mode; --delta sets the target.
      if (sub->count("--delta") > 0) {
        overlay["privacy"]["target_delta"] = f.delta;
      }
    }
    if (sub == account && sub->count("--delta") > 0) {
      overlay["account_delta"] = f.account_delta;
    }
    dpens::detail::merge_json(merged, overlay);
    const dpens::RunConfig cfg = dpens::parse_run_config(merged, task);
    return dpens::run_with_exit_code(cfg, std::cout, std::cerr);
  } catch (const dpens::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return dpens::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dpens::kExitConfigError;
  }
}
