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
// Release acceptance gate.  Each criterion below is an end-to-end statistical
// or numerical contract the library must meet before shipping; the binary
// prints one [PASS]/[FAIL] line per criterion and exits nonzero if any fail.
// All tolerances are pinned here as named constants.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dpens/calibrate.hpp"
#include "dpens/joint_em.hpp"
#include "dpens/ledger.hpp"
#include "dpens/mechanisms.hpp"
#include "dpens/metrics.hpp"
#include "dpens/prv.hpp"
#include "dpens/rdp.hpp"
#include "dpens/runner.hpp"
#include "oracles.hpp"

namespace {

using dpens::Count;
using dpens::LabelId;
using dpens::RandomSource;
using dpens::VoteHistogram;

// ---------------------------------------------------------------------------
// Pinned tolerances and budgets
// ---------------------------------------------------------------------------

constexpr std::int64_t kDistributionTrials = 100000;
constexpr double kDistributionTvBound = 0.02;
constexpr double kDistributionBudgetSeconds = 120.0;

constexpr std::int64_t kPtrTrials = 10000;
constexpr double kPtrDelta = 0.05;
constexpr double kPtrBudgetSeconds = 60.0;

constexpr double kAccountantRelTol = 0.02;     // single-query vs closed form
constexpr double kCompositionRelTol = 0.01;    // k-fold vs sigma/sqrt(k)
constexpr double kMeshRefinementRelTol = 0.005;
constexpr double kSoundnessSlack = 1e-9;       // accountant may only overstate
constexpr double kAccountantBudgetSeconds = 60.0;

constexpr double kEmRdpPin = 0.7357;           // published order-2 value
constexpr double kEmRdpPinTol = 1e-3;
constexpr double kRdpConversionRelTol = 0.02;
constexpr double kAmplifiedRateTol = 1e-9;

constexpr double kCalibrationRelShortfall = 1e-3;  // accounted eps floor
constexpr double kCalibrationBudgetSeconds = 300.0;

constexpr int kInfluenceTrials = 100;

constexpr double kMetricsTol = 1e-6;

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw Failure(what);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

VoteHistogram make_hist(const std::vector<Count>& counts) {
  VoteHistogram h;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    h.add_vote(static_cast<LabelId>(i), counts[i]);
  }
  h.ensemble_size = 0;
  for (Count c : counts) h.ensemble_size += c;
  return h;
}

// Exact winner distribution of argmax_i c_i + N(0, sigma^2) by Simpson
// integration of P(i wins) = E_z[ prod_{j != i} Phi(z + (c_i - c_j)/sigma) ].
std::map<int, double> noisy_argmax_exact(const std::vector<double>& c,
                                         double sigma) {
  std::map<int, double> probs;
  const int n = 20001;
  const double lo = -10.0, hi = 10.0;
  const double h = (hi - lo) / (n - 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    double acc = 0.0;
    for (int t = 0; t < n; ++t) {
      const double z = lo + h * t;
      double f = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
      for (std::size_t j = 0; j < c.size(); ++j) {
        if (j == i) continue;
        f *= oracle::normal_cdf(z + (c[i] - c[j]) / sigma);
      }
      const double w = (t == 0 || t == n - 1) ? 1.0 : (t % 2 == 1 ? 4.0 : 2.0);
      acc += w * f;
    }
    probs[static_cast<int>(i)] = acc * h / 3.0;
  }
  return probs;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.good()) throw Failure("cannot write " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw Failure("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double status_value(const std::string& status, const std::string& key) {
  std::istringstream in(status);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0) {
      return std::stod(line.substr(key.size() + 1));
    }
  }
  throw Failure("status key not found: " + key);
}

// ---------------------------------------------------------------------------
// Criterion 1: empirical mechanism output distributions match exact oracles
// (total variation <= 0.02 at 1e5 trials each).
// ---------------------------------------------------------------------------

void check_mechanism_distributions(std::string& detail) {
  RandomSource rng(20260822u);
  std::ostringstream d;

  {  // Two-candidate report-noisy-max: closed-form win probability.
    const double sigma = 6.8516;
    const VoteHistogram hist = make_hist({10, 0});
    std::map<int, std::int64_t> counts;
    for (std::int64_t t = 0; t < kDistributionTrials; ++t) {
      counts[static_cast<int>(dpens::rnm_gaussian(hist, sigma, rng))]++;
    }
    const double p0 = oracle::normal_cdf(10.0 / (sigma * std::sqrt(2.0)));
    const std::map<int, double> exact{{0, p0}, {1, 1.0 - p0}};
    const double tv =
        oracle::total_variation(counts, kDistributionTrials, exact);
    require(tv <= kDistributionTvBound, "rnm 2-way tv=" + fmt(tv));
    d << "rnm2 tv=" << fmt(tv);
  }

  {  // Three-candidate report-noisy-max vs numerical integration.
    const double sigma = 2.0;
    const VoteHistogram hist = make_hist({5, 3, 0});
    std::map<int, std::int64_t> counts;
    for (std::int64_t t = 0; t < kDistributionTrials; ++t) {
      counts[static_cast<int>(dpens::rnm_gaussian(hist, sigma, rng))]++;
    }
    const auto exact = noisy_argmax_exact({5.0, 3.0, 0.0}, sigma);
    const double tv =
        oracle::total_variation(counts, kDistributionTrials, exact);
    require(tv <= kDistributionTvBound, "rnm 3-way tv=" + fmt(tv));
    d << " rnm3 tv=" << fmt(tv);
  }

  for (const auto& [utilities, scale] :
       std::vector<std::pair<std::vector<double>, double>>{
           {{1.0, 0.0}, 2.0}, {{3.0, 1.0, 0.0}, 4.0}}) {
    // Gumbel-max exponential mechanism vs softmax(u/scale).
    std::map<int, std::int64_t> counts;
    for (std::int64_t t = 0; t < kDistributionTrials; ++t) {
      counts[static_cast<int>(
          dpens::exponential_via_gumbel(utilities, scale, rng))]++;
    }
    const std::vector<double> probs = oracle::softmax(utilities, scale);
    std::map<int, double> exact;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      exact[static_cast<int>(i)] = probs[i];
    }
    const double tv =
        oracle::total_variation(counts, kDistributionTrials, exact);
    require(tv <= kDistributionTvBound,
            "gumbel-em scale=" + fmt(scale) + " tv=" + fmt(tv));
    d << " em tv=" << fmt(tv);
  }

  struct JointCase {
    std::vector<Count> counts;
    int k;
    double eps;
  };
  for (const JointCase& jc :
       {JointCase{{4, 2, 1}, 2, 1.0}, JointCase{{5, 3, 2, 1}, 3, 2.0},
        JointCase{{9, 6, 4, 2, 1}, 3, 1.0}}) {
    // Joint top-k exponential mechanism vs exact sequence enumeration.
    const VoteHistogram hist = make_hist(jc.counts);
    std::map<std::vector<int>, std::int64_t> counts;
    for (std::int64_t t = 0; t < kDistributionTrials; ++t) {
      const std::vector<LabelId> seq =
          dpens::joint_em_top_k(hist, jc.k, jc.eps, rng);
      std::vector<int> key(seq.begin(), seq.end());
      counts[key]++;
    }
    const std::vector<long long> desc(jc.counts.begin(), jc.counts.end());
    const auto exact = oracle::joint_em_exact(desc, jc.k, jc.eps);
    const double tv =
        oracle::total_variation(counts, kDistributionTrials, exact);
    require(tv <= kDistributionTvBound,
            "joint-em d=" + std::to_string(jc.counts.size()) +
                " k=" + std::to_string(jc.k) + " tv=" + fmt(tv));
    d << " jem tv=" << fmt(tv);
  }

  detail = d.str();
}

// ---------------------------------------------------------------------------
// Criterion 2: propose-test-release soundness — on a zero-gap histogram the
// release rate stays within the failure budget, and every successful release
// is the exact top-k set.
// ---------------------------------------------------------------------------

void check_ptr_soundness(std::string& detail) {
  RandomSource rng(77003u);
  std::ostringstream d;
  const double n = static_cast<double>(kPtrTrials);

  {  // Zero gap between k-th and (k+1)-th count: release prob must be delta.
    const VoteHistogram hist = make_hist({10, 10, 10});
    std::int64_t releases = 0;
    for (std::int64_t t = 0; t < kPtrTrials; ++t) {
      if (dpens::top_k_with_ptr(hist, 2, 1.0, kPtrDelta, rng)) ++releases;
    }
    const double rate = static_cast<double>(releases) / n;
    const double band = 3.0 * std::sqrt(kPtrDelta * (1.0 - kPtrDelta) / n);
    require(rate <= kPtrDelta + band,
            "zero-gap release rate " + fmt(rate) + " > " +
                fmt(kPtrDelta + band));
    require(rate >= kPtrDelta - band,
            "zero-gap release rate " + fmt(rate) + " implausibly low");
    d << "zero-gap rate=" << fmt(rate);
  }

  {  // Clear gap: releases must occur and always equal the exact top-2 set.
    const VoteHistogram hist = make_hist({50, 40, 5, 1});
    std::int64_t releases = 0;
    for (std::int64_t t = 0; t < kPtrTrials; ++t) {
      const auto out = dpens::top_k_with_ptr(hist, 2, 1.0, kPtrDelta, rng);
      if (!out) continue;
      ++releases;
      require(*out == std::set<LabelId>({0, 1}),
              "released set is not the exact top-k");
    }
    require(releases > kPtrTrials / 2, "clear-gap case rarely releases");
    d << " exact-top-k releases=" << releases;
  }

  {  // Moderate gap: empirical release rate matches the closed form.
    const VoteHistogram hist = make_hist({12, 10, 7});
    std::int64_t releases = 0;
    for (std::int64_t t = 0; t < kPtrTrials; ++t) {
      if (dpens::top_k_with_ptr(hist, 2, 1.0, kPtrDelta, rng)) ++releases;
    }
    const double rate = static_cast<double>(releases) / n;
    const double expect = oracle::ptr_release_prob(3, 1.0, kPtrDelta);
    require(std::fabs(rate - expect) <= 0.02,
            "moderate-gap rate " + fmt(rate) + " vs " + fmt(expect));
    d << " moderate rate=" << fmt(rate) << " expect=" << fmt(expect);
  }

  detail = d.str();
}

// ---------------------------------------------------------------------------
// Criterion 3: the numerical accountant tracks the tight closed-form Gaussian
// characterization, composes like sigma/sqrt(k), never understates epsilon,
// and is stable under mesh refinement.
// ---------------------------------------------------------------------------

void check_accountant(std::string& detail) {
  std::ostringstream d;
  double worst_rel = 0.0;
  for (double sigma : {0.5, 1.0, 4.0, 6.8516}) {
    for (double delta : {1e-5, 1e-6}) {
      const double got = dpens::prv_to_epsilon(
          dpens::subsampled_gaussian_prv(sigma, 1.0), delta);
      const double ref = oracle::analytic_gaussian_epsilon(delta, sigma);
      require(got >= ref - kSoundnessSlack,
              "accountant understates: sigma=" + fmt(sigma));
      const double rel = got / ref - 1.0;
      worst_rel = std::max(worst_rel, rel);
      require(rel <= kAccountantRelTol,
              "accountant overstates: sigma=" + fmt(sigma) + " rel=" +
                  fmt(rel));
    }
  }
  d << "single worst-rel=" << fmt(worst_rel);

  worst_rel = 0.0;
  for (double sigma : {0.5, 1.0, 4.0}) {
    const dpens::PrvDistribution one =
        dpens::subsampled_gaussian_prv(sigma, 1.0);
    for (std::int64_t k : {1, 2, 4, 16, 64}) {
      const double got =
          dpens::prv_to_epsilon(dpens::compose_prvs({one}, {k}), 1e-5);
      const double ref =
          oracle::analytic_gaussian_epsilon(1e-5, sigma / std::sqrt(double(k)));
      require(got >= ref - kSoundnessSlack,
              "composition understates: sigma=" + fmt(sigma) +
                  " k=" + std::to_string(k));
      const double rel = got / ref - 1.0;
      worst_rel = std::max(worst_rel, rel);
      require(rel <= kCompositionRelTol,
              "composition drifts: sigma=" + fmt(sigma) +
                  " k=" + std::to_string(k) + " rel=" + fmt(rel));
    }
  }
  d << " compose worst-rel=" << fmt(worst_rel);

  for (double q : {1.0, 0.01}) {
    const double coarse = dpens::prv_to_epsilon(
        dpens::subsampled_gaussian_prv(1.0, q, 1e-4), 1e-5);
    const double fine = dpens::prv_to_epsilon(
        dpens::subsampled_gaussian_prv(1.0, q, 5e-5), 1e-5);
    const double rel = std::fabs(coarse - fine) / fine;
    require(rel <= kMeshRefinementRelTol,
            "mesh refinement unstable: q=" + fmt(q) + " rel=" + fmt(rel));
  }
  d << " mesh stable";
  detail = d.str();
}

// ---------------------------------------------------------------------------
// Criterion 4: Renyi-DP suite — the exponential-mechanism bound hits its
// published order-2 value, conversion to (eps, delta) matches a dense
// independent minimization, and the subsampling rate formula is exact.
// ---------------------------------------------------------------------------

void check_rdp_suite(std::string& detail) {
  std::ostringstream d;

  const double pinned = dpens::em_rdp_epsilon(1.0, 2.0);
  require(std::fabs(pinned - kEmRdpPin) <= kEmRdpPinTol,
          "order-2 em bound " + fmt(pinned));
  d << "em(1,2)=" << fmt(pinned);

  for (const auto& [eps0, alpha] :
       std::vector<std::pair<double, double>>{{0.5, 4.0}, {2.0, 16.0}}) {
    const double got = dpens::em_rdp_epsilon(eps0, alpha);
    const double ref = oracle::em_rdp_naive(eps0, alpha);
    require(std::fabs(got - ref) <= 1e-9,
            "em bound mismatch at eps0=" + fmt(eps0));
  }

  {  // Conversion on the half-order quadratic curve.
    dpens::RdpCurve curve;
    curve.orders = dpens::default_rdp_orders();
    for (double a : curve.orders) curve.eps_values.push_back(a / 2.0);
    const auto [eps, delta] = dpens::rdp_to_dp(curve, 1e-5);
    const double dense = oracle::rdp_to_dp_dense(
        [](double a) { return a / 2.0; }, 1e-5);
    require(eps >= dense - kSoundnessSlack, "conversion understates");
    require(eps <= dense * (1.0 + kRdpConversionRelTol),
            "conversion too loose: " + fmt(eps) + " vs " + fmt(dense));
    require(delta == 1e-5, "conversion altered delta");
    d << " conv=" << fmt(eps) << " dense=" << fmt(dense);
  }

  {  // Subsampled rate arithmetic is exact, and q=1 is the identity.
    const double got = dpens::amplified_rate(0.01, 1e-5);
    const double ref = 0.01 * (1.0 - 1e-5) / (1.0 - 0.01 * 1e-5);
    require(std::fabs(got - ref) <= kAmplifiedRateTol, "amplified rate");
    require(dpens::amplified_rate(1.0, 1e-5) == 1.0, "full rate not identity");
    const dpens::RdpCurve base =
        dpens::em_rdp_curve(0.5, dpens::default_rdp_orders());
    const dpens::RdpCurve same = dpens::amplify_approx_rdp(base, 1.0);
    require(same.eps_values == base.eps_values, "q=1 amplification changed");
    d << " rate ok";
  }

  {  // Propose-test-release curve: quadratic in sigma at order 2.
    const dpens::RdpCurve curve =
        dpens::ptr_rdp(1.0, 1e-4, dpens::default_rdp_orders());
    require(std::fabs(curve.eps_at_or_above(2.0) - 1.0) <= 1e-12,
            "ptr order-2 value");
    require(curve.delta_approx == 1e-4, "ptr failure mass not carried");
  }

  detail = d.str();
}

// ---------------------------------------------------------------------------
// Criterion 5: calibration round trip — the returned noise multiplier spends
// the target budget without exceeding it, across epsilon, rate, and query
// count regimes.
// ---------------------------------------------------------------------------

void check_calibration_roundtrip(std::string& detail) {
  std::ostringstream d;
  double worst_use = 1.0;
  for (double eps : {1.0, 3.0, 8.0}) {
    for (double q : {0.005, 1.0}) {
      for (std::int64_t n : {std::int64_t{1}, std::int64_t{1000},
                             std::int64_t{10000}}) {
        const double sigma = dpens::calibrate_sigma(eps, 1e-5, q, n);
        const double used =
            dpens::accounted_gaussian_epsilon(sigma, q, n, 1e-5);
        require(used <= eps, "calibration overshoots: eps=" + fmt(eps) +
                                 " q=" + fmt(q) + " n=" + std::to_string(n) +
                                 " used=" + fmt(used));
        require(used >= eps * (1.0 - kCalibrationRelShortfall),
                "calibration wastes budget: eps=" + fmt(eps) + " q=" +
                    fmt(q) + " n=" + std::to_string(n) + " used=" + fmt(used));
        worst_use = std::min(worst_use, used / eps);
      }
    }
  }
  d << "18 regimes, worst budget use=" << fmt(worst_use);
  detail = d.str();
}

// ---------------------------------------------------------------------------
// Criterion 6: bounded neighboring-dataset influence — removing any single
// exemplar changes every vote bin and every keyword count by at most one.
// ---------------------------------------------------------------------------

struct InfluenceHistograms {
  std::map<LabelId, Count> votes;
  std::map<std::string, Count> keywords;
};

InfluenceHistograms influence_histograms(const dpens::ExemplarStore& store,
                                         const dpens::EnsembleConfig& cfg) {
  const dpens::PartitionResult part = dpens::partition(store, cfg);
  InfluenceHistograms out;
  std::vector<std::string> responses;
  for (const auto& subset : part.subsets) {
    // Deterministic stand-in for an ensemble member's response: it depends
    // only on the member's own exemplars, like a temperature-0 completion.
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    std::string text;
    for (const dpens::ExemplarRecord& rec : subset) {
      h = dpens::hash_mix(h, static_cast<std::uint64_t>(rec.id));
      text += rec.answer_text + " ";
    }
    out.votes[static_cast<LabelId>(h % 5)]++;
    responses.push_back(text);
  }
  const dpens::KeywordHistogram kh = dpens::build_keyword_histogram(responses);
  for (const auto& [id, c] : kh.histogram.counts) {
    out.keywords[kh.token(id)] = c;
  }
  return out;
}

void check_neighboring_influence(std::string& detail) {
  const std::vector<std::string> vocab{
      "river", "stone",  "garden", "window", "music",  "silver",
      "forest", "candle", "meadow", "harbor", "copper", "willow"};
  RandomSource rng(40927u);
  int violations = 0;
  for (int trial = 0; trial < kInfluenceTrials; ++trial) {
    dpens::ExemplarStore store;
    const int n_records = 30 + static_cast<int>(rng.uniform_int(21));
    for (int i = 0; i < n_records; ++i) {
      dpens::ExemplarRecord rec;
      rec.id = i;
      rec.input_text = "query text " + std::to_string(i);
      rec.answer_text = vocab[rng.uniform_int(vocab.size())] + " " +
                        vocab[rng.uniform_int(vocab.size())];
      store.add(rec);
    }
    dpens::EnsembleConfig cfg;
    cfg.n_subsets = 6;
    cfg.shots_per_subset = 4;
    cfg.subsample_rate = (trial % 2 == 0) ? 1.0 : 0.7;
    cfg.seed = 1000u + static_cast<std::uint64_t>(trial);

    const InfluenceHistograms with = influence_histograms(store, cfg);
    dpens::ExemplarStore neighbor = store;
    neighbor.remove_by_id(
        static_cast<std::int64_t>(rng.uniform_int(n_records)));
    const InfluenceHistograms without = influence_histograms(neighbor, cfg);

    const auto bin_diffs_ok = [&](const auto& a, const auto& b) {
      std::set<typename std::decay_t<decltype(a)>::key_type> keys;
      for (const auto& [k, v] : a) keys.insert(k);
      for (const auto& [k, v] : b) keys.insert(k);
      for (const auto& k : keys) {
        const auto ita = a.find(k);
        const auto itb = b.find(k);
        const Count ca = ita == a.end() ? 0 : ita->second;
        const Count cb = itb == b.end() ? 0 : itb->second;
        if (std::llabs(ca - cb) > 1) return false;
      }
      return true;
    };
    if (!bin_diffs_ok(with.votes, without.votes) ||
        !bin_diffs_ok(with.keywords, without.keywords)) {
      ++violations;
    }
  }
  require(violations == 0,
          std::to_string(violations) + " influence violations");
  detail = std::to_string(kInfluenceTrials) + " neighbor pairs, 0 violations";
}

// ---------------------------------------------------------------------------
// Criterion 7: pipeline determinism and budget honesty — identical seeds give
// byte-identical outputs, and a 100-query run at target epsilon 3 reports a
// consumed budget no greater than 3.
// ---------------------------------------------------------------------------

std::string run_pipeline_once(const std::string& tag, std::string* ledger_out,
                              double* consumed_eps) {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "dpens_acceptance").string();
  std::filesystem::create_directories(dir);
  const std::string exemplars = dir + "/" + tag + "_ex.jsonl";
  const std::string queries = dir + "/" + tag + "_q.jsonl";
  const std::string output = dir + "/" + tag + "_out.jsonl";
  const std::string ledger = dir + "/" + tag + "_ledger.txt";
  std::error_code ec;
  std::filesystem::remove(output, ec);
  std::filesystem::remove(ledger, ec);

  std::string corpus;
  for (int i = 0; i < 16; ++i) {
    corpus += "{\"input\": \"exemplar " + std::to_string(i) +
              "\", \"answer\": \"" + (i % 2 == 0 ? "Positive" : "Negative") +
              "\"}\n";
  }
  write_file(exemplars, corpus);
  std::string qs;
  for (int i = 0; i < 100; ++i) {
    qs += "{\"query\": \"held-out query number " + std::to_string(i) +
          "\"}\n";
  }
  write_file(queries, qs);

  const nlohmann::json config{
      {"exemplar_file", exemplars},
      {"query_file", queries},
      {"output_file", output},
      {"ledger_file", ledger},
      {"seed", 424242},
      {"ensemble",
       {{"n_subsets", 4}, {"shots_per_subset", 3}, {"subsample_rate", 1.0}}},
      {"labels", {"Positive", "Negative"}},
      {"backend", {{"kind", "mock"}, {"embedding_dimension", 64}}},
      {"privacy", {{"target_epsilon", 3.0}, {"declared_queries", 100}}},
  };
  const dpens::RunConfig cfg =
      dpens::parse_run_config(config, dpens::TaskKind::kClassify);
  std::ostringstream status, errors;
  const int code = dpens::run_with_exit_code(cfg, status, errors);
  require(code == dpens::kExitOk,
          "pipeline exit code " + std::to_string(code) + ": " + errors.str());
  require(status.str().find("completed 100 of 100") != std::string::npos,
          "pipeline did not complete all queries");
  *consumed_eps = status_value(status.str(), "consumed epsilon");
  *ledger_out = read_file(ledger);
  return read_file(output);
}

void check_pipeline_determinism(std::string& detail) {
  std::string ledger_a, ledger_b;
  double eps_a = 0.0, eps_b = 0.0;
  const std::string out_a = run_pipeline_once("runa", &ledger_a, &eps_a);
  const std::string out_b = run_pipeline_once("runb", &ledger_b, &eps_b);
  require(!out_a.empty(), "pipeline produced no output");
  require(out_a == out_b, "outputs differ between identically seeded runs");
  require(ledger_a == ledger_b, "ledgers differ between runs");
  require(eps_a == eps_b, "reported budgets differ between runs");
  require(eps_a <= 3.0, "consumed " + fmt(eps_a) + " > target 3");
  require(eps_a > 0.0, "reported budget is implausibly zero");
  detail = "100 queries byte-identical, consumed eps=" + fmt(eps_a);
}

// ---------------------------------------------------------------------------
// Criterion 8: text metrics reproduce hand-computed values exactly.
// ---------------------------------------------------------------------------

void check_metrics(std::string& detail) {
  const auto close = [](double got, double want, const std::string& what) {
    require(std::fabs(got - want) <= kMetricsTol,
            what + ": " + fmt(got) + " vs " + fmt(want));
  };
  close(dpens::rouge1("a b c d", "a b x y"), 50.0, "rouge1 half overlap");
  close(dpens::rouge1("a a a", "a"), 50.0, "rouge1 clipping");
  close(dpens::rouge1("same text", "same text"), 100.0, "rouge1 identity");
  close(dpens::rouge2("a b c d", "a b x y"), 100.0 / 3.0, "rouge2 bigrams");
  close(dpens::rouge2("a b", "b a"), 0.0, "rouge2 disjoint bigrams");
  close(dpens::rougeL("a x b y c", "a b c"), 75.0, "rougeL subsequence");
  close(dpens::rougeL("a b c", "c b a"), 100.0 / 3.0, "rougeL reversal");
  close(dpens::levenshtein_similarity("abc", "abd"), 200.0 / 3.0,
        "levenshtein one edit");
  close(dpens::levenshtein_similarity("abc", "abc"), 100.0,
        "levenshtein identity");

  const dpens::ScoreReport report = dpens::score_corpus(
      {{"a b c", "a b c"}, {"a b c d", "a b x y"}});
  close(report.mean.accuracy, 50.0, "mean accuracy");
  close(report.mean.rouge_1, 75.0, "mean rouge1");
  close(report.mean.rouge_2, (100.0 + 100.0 / 3.0) / 2.0, "mean rouge2");
  detail = "all hand examples within 1e-6";
}

// ---------------------------------------------------------------------------

struct Criterion {
  std::string name;
  std::function<void(std::string&)> fn;
  double budget_seconds;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"mechanism-output-distributions", check_mechanism_distributions,
       kDistributionBudgetSeconds},
      {"ptr-release-soundness", check_ptr_soundness, kPtrBudgetSeconds},
      {"prv-accounting-accuracy", check_accountant, kAccountantBudgetSeconds},
      {"rdp-bounds-and-conversion", check_rdp_suite, 60.0},
      {"sigma-calibration-roundtrip", check_calibration_roundtrip,
       kCalibrationBudgetSeconds},
      {"neighboring-dataset-influence", check_neighboring_influence, 60.0},
      {"pipeline-determinism-and-budget", check_pipeline_determinism, 120.0},
      {"text-metrics-exactness", check_metrics, 10.0},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    std::string error;
    try {
      c.fn(detail);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (error.empty() && seconds > c.budget_seconds) {
      error = "runtime " + fmt(seconds) + "s exceeds budget " +
              fmt(c.budget_seconds) + "s";
    }
    std::ostringstream line;
    line.precision(1);
    line << std::fixed;
    if (error.empty()) {
      line << "[PASS] " << c.name << " (" << seconds << "s) " << detail;
    } else {
      line << "[FAIL] " << c.name << " (" << seconds << "s) " << error;
      ++failures;
    }
    std::cout << line.str() << std::endl;
  }
  if (failures > 0) {
    std::cout << failures << " of " << criteria.size()
              << " acceptance criteria failed" << std::endl;
    return 1;
  }
  std::cout << "all " << criteria.size() << " acceptance criteria passed"
            << std::endl;
  return 0;
}
