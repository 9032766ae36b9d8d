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

#ifndef DPENS_HTTP_BACKEND_HPP_
#define DPENS_HTTP_BACKEND_HPP_

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dpens/backend.hpp"
#include "dpens/embedding.hpp"
#include "dpens/text.hpp"

namespace dpens {

namespace detail {

// Counting semaphore capping concurrent in-flight requests.
class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(Semaphore& sem) : sem_(sem) { sem_.acquire(); }
  ~SemaphoreGuard() { sem_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  Semaphore& sem_;
};

}  // namespace detail

// OpenAI-compatible HTTP client: POST {base}/completions and
// {base}/embeddings with JSON bodies.  The API key is read from the
// DPENS_API_KEY environment variable (OPENAI_API_KEY as fallback) and sent
// as a bearer token.  Transport failures, HTTP 429/5xx, and malformed bodies
// are retried with exponential backoff plus jitter; a well-formed response
// is never retried (re-issuing a receipted request would double-count its
// vote).  Constrained classification maps the first generated token to the
// nearest label by edit distance, since computing remote token ids for logit
// bias would require the service's tokenizer.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendProfile profile)
      : profile_(std::move(profile)),
        semaphore_(std::max(1, profile_.parallelism_cap)),
        jitter_engine_(std::random_device{}()) {
    if (profile_.endpoint_url.empty()) {
      throw std::invalid_argument("HttpBackend: endpoint_url is empty");
    }
    split_endpoint(profile_.endpoint_url, &host_, &path_prefix_);
    if (const char* key = std::getenv("DPENS_API_KEY")) {
      api_key_ = key;
    } else if (const char* fallback = std::getenv("OPENAI_API_KEY")) {
      api_key_ = fallback;
    }
  }

  std::string complete(const CompletionRequest& req) override {
    count_completion();
    if (req.prompt.empty()) {
      throw std::invalid_argument("HttpBackend::complete: empty prompt");
    }
    if (req.constrained_labels) {
      validate_constrained_labels(*req.constrained_labels);
    }
    nlohmann::json body{{"model", profile_.model_name},
                        {"prompt", req.prompt},
                        {"max_tokens", req.max_tokens},
                        {"temperature", req.temperature}};
    if (!req.stop_sequences.empty()) body["stop"] = req.stop_sequences;
    const nlohmann::json reply = post_with_retry("/completions", body);
    std::string text;
    try {
      const auto& choice = reply.at("choices").at(0);
      if (choice.contains("text")) {
        text = choice.at("text").get<std::string>();
      } else {
        text = choice.at("message").at("content").get<std::string>();
      }
    } catch (const nlohmann::json::exception&) {
      throw BackendError("completion response missing choices[0].text", 1);
    }
    if (!req.constrained_labels) return trim(text);
    return match_label(text, *req.constrained_labels);
  }

  Embedding embed(const std::string& text) override {
    count_embedding();
    if (text.empty()) {
      throw std::invalid_argument("HttpBackend::embed: empty text");
    }
    const nlohmann::json body{{"model", profile_.embedding_model_name},
                              {"input", text}};
    const nlohmann::json reply = post_with_retry("/embeddings", body);
    Embedding e;
    try {
      const auto& vec = reply.at("data").at(0).at("embedding");
      e.values = vec.get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw BackendError("embedding response missing data[0].embedding", 1);
    }
    if (static_cast<int>(e.values.size()) != profile_.embedding_dimension) {
      throw BackendError(
          "embedding dimension mismatch: got " +
              std::to_string(e.values.size()) + ", profile expects " +
              std::to_string(profile_.embedding_dimension),
          1);
    }
    return e.normalize();
  }

  int embedding_dimension() const override {
    return profile_.embedding_dimension;
  }

 private:
  static void split_endpoint(const std::string& url, std::string* host,
                             std::string* path_prefix) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw std::invalid_argument(
          "HttpBackend: endpoint_url must start with http:// or https://");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      *host = url;
      path_prefix->clear();
    } else {
      *host = url.substr(0, path_start);
      *path_prefix = url.substr(path_start);
      while (!path_prefix->empty() && path_prefix->back() == '/') {
        path_prefix->pop_back();
      }
    }
  }

  static std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
  }

  // Nearest-label matching on the first generated token: exact match first,
  // then minimum edit distance with ties to the lowest label index.
  static std::string match_label(const std::string& text,
                                 const std::vector<std::string>& labels) {
    const auto toks = tokenize(text, TokenizerConfig::metrics_default());
    if (toks.empty()) {
      throw BackendError("constrained completion produced no token", 1);
    }
    const std::string& first = toks.front();
    std::size_t best = 0;
    std::size_t best_dist = std::string::npos;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto label_toks =
          tokenize(labels[i], TokenizerConfig::metrics_default());
      const std::size_t d = levenshtein_distance(first, label_toks.front());
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    return labels[best];
  }

  bool retryable_status(int status) const {
    return status == 429 || (status >= 500 && status < 600);
  }

  nlohmann::json post_with_retry(const std::string& path,
                                 const nlohmann::json& body) {
    const int max_attempts = std::max(1, profile_.max_retries + 1);
    std::string last_error = "no attempt made";
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      if (attempt > 1) backoff_sleep(attempt - 1);
      detail::SemaphoreGuard guard(semaphore_);
      httplib::Client client(host_);
      const auto timeout = std::chrono::duration<double>(
          std::max(1.0, profile_.request_timeout_seconds));
      client.set_connection_timeout(
          std::chrono::duration_cast<std::chrono::milliseconds>(timeout));
      client.set_read_timeout(
          std::chrono::duration_cast<std::chrono::milliseconds>(timeout));
      client.set_write_timeout(
          std::chrono::duration_cast<std::chrono::milliseconds>(timeout));
      httplib::Headers headers;
      if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
      }
      const auto res = client.Post(path_prefix_ + path, headers, body.dump(),
                                   "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;  // retryable
      }
      if (res->status != 200) {
        last_error = "HTTP status " + std::to_string(res->status);
        if (retryable_status(res->status)) continue;
        throw BackendError("request failed with " + last_error, attempt);
      }
      nlohmann::json parsed =
          nlohmann::json::parse(res->body, nullptr, /*allow_exceptions=*/false);
      if (parsed.is_discarded()) {
        last_error = "malformed JSON body";
        continue;  // not a well-formed response; safe to retry
      }
      return parsed;  // well-formed: the caller owns any content errors
    }
    throw BackendError("request failed after retries: " + last_error,
                       max_attempts);
  }

  void backoff_sleep(int completed_attempts) {
    double jitter;
    {
      std::lock_guard<std::mutex> lock(jitter_mu_);
      jitter = std::uniform_real_distribution<double>(0.0, 0.5)(jitter_engine_);
    }
    const double base = 0.25 * static_cast<double>(1 << std::min(
                                   completed_attempts, 5));
    const double seconds = std::min(8.0, base * (1.0 + jitter));
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }

  BackendProfile profile_;
  std::string host_;
  std::string path_prefix_;
  std::string api_key_;
  detail::Semaphore semaphore_;
  std::mutex jitter_mu_;
  std::mt19937_64 jitter_engine_;
};

}  // namespace dpens

#endif  // DPENS_HTTP_BACKEND_HPP_
