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

#include "dpens/backend.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dpens/http_backend.hpp"

namespace dpens {
namespace {

CompletionRequest make_request(std::string prompt) {
  CompletionRequest req;
  req.prompt = std::move(prompt);
  return req;
}

TEST(MockBackend, DeterministicUnderSeed) {
  MockBackend a(42, 8);
  MockBackend b(42, 8);
  const auto req = make_request("summarize the meeting notes");
  EXPECT_EQ(a.complete(req), b.complete(req));
  EXPECT_EQ(a.complete(req), a.complete(req));

  MockBackend c(43, 8);
  EXPECT_NE(a.complete(req), c.complete(req));

  CompletionRequest resampled = req;
  resampled.sample_index = 1;
  EXPECT_NE(a.complete(req), a.complete(resampled));
}

TEST(MockBackend, RulesMatchInInsertionOrder) {
  MockBackend backend(1, 8);
  backend.add_rule("alpha", "first");
  backend.add_rule("alp", "second");
  backend.add_rule("", "fallback");
  EXPECT_EQ(backend.complete(make_request("the alpha case")), "first");
  EXPECT_EQ(backend.complete(make_request("the alp case")), "second");
  EXPECT_EQ(backend.complete(make_request("anything else")), "fallback");
}

TEST(MockBackend, ConstrainedModeAlwaysReturnsALabel) {
  MockBackend backend(7, 8);
  backend.add_rule("great movie", "Positive");
  backend.add_rule("awful movie", "Unrelated");
  const std::vector<std::string> labels = {"Positive", "Negative"};

  CompletionRequest req = make_request("this was a great movie");
  req.constrained_labels = labels;
  EXPECT_EQ(backend.complete(req), "Positive");

  // Rule output outside the label set falls back to a deterministic choice.
  CompletionRequest off_label = make_request("an awful movie indeed");
  off_label.constrained_labels = labels;
  const std::string first = backend.complete(off_label);
  EXPECT_TRUE(first == "Positive" || first == "Negative");
  EXPECT_EQ(backend.complete(off_label), first);

  CompletionRequest no_rule = make_request("no rule applies here");
  no_rule.constrained_labels = labels;
  const std::string pick = backend.complete(no_rule);
  EXPECT_TRUE(pick == "Positive" || pick == "Negative");
  EXPECT_EQ(backend.complete(no_rule), pick);
}

TEST(MockBackend, ConstrainedLabelValidation) {
  MockBackend backend(7, 8);
  CompletionRequest req = make_request("anything");
  req.constrained_labels = std::vector<std::string>{};
  EXPECT_THROW(backend.complete(req), BackendError);
  req.constrained_labels = std::vector<std::string>{"two words"};
  EXPECT_THROW(backend.complete(req), BackendError);
  req.constrained_labels = std::vector<std::string>{"Cat", "cat"};
  EXPECT_THROW(backend.complete(req), BackendError);
}

TEST(MockBackend, RejectsEmptyInputs) {
  MockBackend backend(7, 8);
  EXPECT_THROW(backend.complete(make_request("")), std::invalid_argument);
  EXPECT_THROW(backend.embed(""), std::invalid_argument);
  EXPECT_THROW(MockBackend(1, 0), std::invalid_argument);
}

TEST(MockBackend, EmbeddingsAreUnitNormDeterministicNearOrthogonal) {
  MockBackend backend(11, 256);
  EXPECT_EQ(backend.embedding_dimension(), 256);
  const Embedding a = backend.embed("the quick brown fox");
  const Embedding b = backend.embed("the quick brown fox");
  const Embedding c = backend.embed("an unrelated sentence entirely");
  ASSERT_EQ(a.values.size(), 256u);
  EXPECT_EQ(a.values, b.values);

  double norm = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    norm += a.values[i] * a.values[i];
    dot += a.values[i] * c.values[i];
  }
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_LT(std::abs(dot), 0.3);  // ~5 sigma for random unit vectors
}

TEST(MockBackend, SynthesizedTextRespectsMaxTokens) {
  MockBackend backend(3, 8);
  CompletionRequest req = make_request("free generation prompt");
  req.max_tokens = 3;
  const std::string out = backend.complete(req);
  int words = out.empty() ? 0 : 1;
  for (char ch : out) words += (ch == ' ') ? 1 : 0;
  EXPECT_GE(words, 1);
  EXPECT_LE(words, 3);
}

TEST(MockBackend, CountsRequests) {
  MockBackend backend(5, 8);
  EXPECT_EQ(backend.completion_requests(), 0);
  backend.complete(make_request("one"));
  backend.complete(make_request("two"));
  backend.embed("three");
  EXPECT_EQ(backend.completion_requests(), 2);
  EXPECT_EQ(backend.embedding_requests(), 1);
}

// Loopback HTTP fixture: a real httplib server on an ephemeral local port.
class LoopbackServer {
 public:
  using Handler = std::function<void(const httplib::Request&,
                                     httplib::Response&)>;

  LoopbackServer() {
    server_.Post("/v1/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   ++completion_calls_;
                   last_authorization_ = req.get_header_value("Authorization");
                   last_body_ = req.body;
                   completion_handler_(req, res);
                 });
    server_.Post("/v1/embeddings",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   ++embedding_calls_;
                   embedding_handler_(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~LoopbackServer() {
    server_.stop();
    thread_.join();
  }

  BackendProfile profile() const {
    BackendProfile p;
    p.endpoint_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    p.max_retries = 1;
    p.request_timeout_seconds = 5.0;
    p.embedding_dimension = 4;
    return p;
  }

  void on_completion(Handler h) { completion_handler_ = std::move(h); }
  void on_embedding(Handler h) { embedding_handler_ = std::move(h); }

  static void reply_text(httplib::Response& res, const std::string& text) {
    const nlohmann::json body{{"choices", {{{"text", text}}}}};
    res.set_content(body.dump(), "application/json");
  }

  int completion_calls() const { return completion_calls_.load(); }
  int embedding_calls() const { return embedding_calls_.load(); }
  std::string last_authorization() const { return last_authorization_; }
  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> completion_calls_{0};
  std::atomic<int> embedding_calls_{0};
  std::string last_authorization_;
  std::string last_body_;
  Handler completion_handler_ = [](const httplib::Request&,
                                   httplib::Response& res) {
    reply_text(res, "ok");
  };
  Handler embedding_handler_ = [](const httplib::Request&,
                                  httplib::Response& res) {
    const nlohmann::json body{{"data", {{{"embedding", {1.0, 0.0, 0.0, 0.0}}}}}};
    res.set_content(body.dump(), "application/json");
  };
};

TEST(HttpBackend, CompletionTrimsTextStyleResponses) {
  LoopbackServer server;
  server.on_completion([](const httplib::Request&, httplib::Response& res) {
    LoopbackServer::reply_text(res, "  a generated answer \n");
  });
  HttpBackend backend(server.profile());
  EXPECT_EQ(backend.complete(make_request("prompt")), "a generated answer");
  EXPECT_EQ(server.completion_calls(), 1);

  const nlohmann::json sent = nlohmann::json::parse(server.last_body());
  EXPECT_EQ(sent.at("prompt").get<std::string>(), "prompt");
  EXPECT_TRUE(sent.contains("model"));
}

TEST(HttpBackend, CompletionAcceptsChatStyleResponses) {
  LoopbackServer server;
  server.on_completion([](const httplib::Request&, httplib::Response& res) {
    const nlohmann::json body{
        {"choices", {{{"message", {{"content", "chat says hi"}}}}}}};
    res.set_content(body.dump(), "application/json");
  });
  HttpBackend backend(server.profile());
  EXPECT_EQ(backend.complete(make_request("prompt")), "chat says hi");
}

TEST(HttpBackend, ConstrainedModeMatchesNearestLabel) {
  LoopbackServer server;
  server.on_completion([](const httplib::Request&, httplib::Response& res) {
    LoopbackServer::reply_text(res, " positiv!");
  });
  HttpBackend backend(server.profile());
  CompletionRequest req = make_request("classify this");
  req.constrained_labels = std::vector<std::string>{"Negative", "Positive"};
  EXPECT_EQ(backend.complete(req), "Positive");
}

TEST(HttpBackend, RetriesServerErrorsThenSucceeds) {
  LoopbackServer server;
  std::atomic<int> n{0};
  server.on_completion([&n](const httplib::Request&, httplib::Response& res) {
    if (n.fetch_add(1) == 0) {
      res.status = 500;
      return;
    }
    LoopbackServer::reply_text(res, "recovered");
  });
  HttpBackend backend(server.profile());
  EXPECT_EQ(backend.complete(make_request("prompt")), "recovered");
  EXPECT_EQ(server.completion_calls(), 2);
}

TEST(HttpBackend, ClientErrorsAreNotRetried) {
  LoopbackServer server;
  server.on_completion([](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  HttpBackend backend(server.profile());
  EXPECT_THROW(backend.complete(make_request("prompt")), BackendError);
  EXPECT_EQ(server.completion_calls(), 1);
}

TEST(HttpBackend, MalformedJsonIsRetriedUntilExhausted) {
  LoopbackServer server;
  server.on_completion([](const httplib::Request&, httplib::Response& res) {
    res.set_content("{not json", "application/json");
  });
  HttpBackend backend(server.profile());  // max_retries = 1 -> 2 attempts
  EXPECT_THROW(backend.complete(make_request("prompt")), BackendError);
  EXPECT_EQ(server.completion_calls(), 2);
}

TEST(HttpBackend, WellFormedResponseWithoutChoicesIsNotRetried) {
  LoopbackServer server;
  server.on_completion([](const httplib::Request&, httplib::Response& res) {
    res.set_content("{}", "application/json");
  });
  HttpBackend backend(server.profile());
  EXPECT_THROW(backend.complete(make_request("prompt")), BackendError);
  EXPECT_EQ(server.completion_calls(), 1);
}

TEST(HttpBackend, EmbeddingsAreNormalizedAndDimensionChecked) {
  LoopbackServer server;
  server.on_embedding([](const httplib::Request&, httplib::Response& res) {
    const nlohmann::json body{
        {"data", {{{"embedding", {3.0, 0.0, 4.0, 0.0}}}}}};
    res.set_content(body.dump(), "application/json");
  });
  HttpBackend backend(server.profile());
  const Embedding e = backend.embed("text");
  ASSERT_EQ(e.values.size(), 4u);
  EXPECT_NEAR(e.values[0], 0.6, 1e-12);
  EXPECT_NEAR(e.values[2], 0.8, 1e-12);

  server.on_embedding([](const httplib::Request&, httplib::Response& res) {
    const nlohmann::json body{{"data", {{{"embedding", {1.0, 0.0}}}}}};
    res.set_content(body.dump(), "application/json");
  });
  EXPECT_THROW(backend.embed("text"), BackendError);
}

TEST(HttpBackend, SendsBearerTokenFromEnvironment) {
  LoopbackServer server;
  ::setenv("DPENS_API_KEY", "sk-test-123", 1);
  HttpBackend with_key(server.profile());
  ::unsetenv("DPENS_API_KEY");
  with_key.complete(make_request("prompt"));
  EXPECT_EQ(server.last_authorization(), "Bearer sk-test-123");

  ::unsetenv("OPENAI_API_KEY");
  HttpBackend without_key(server.profile());
  without_key.complete(make_request("prompt"));
  EXPECT_EQ(server.last_authorization(), "");
}

TEST(HttpBackend, RejectsBadEndpointsAndReportsTransportFailures) {
  BackendProfile bad;
  bad.endpoint_url = "localhost:8080";  // missing scheme
  EXPECT_THROW(HttpBackend{bad}, std::invalid_argument);

  BackendProfile unreachable;
  unreachable.endpoint_url = "http://127.0.0.1:1/v1";
  unreachable.max_retries = 0;
  unreachable.request_timeout_seconds = 1.0;
  HttpBackend backend(unreachable);
  EXPECT_THROW(backend.complete(make_request("prompt")), BackendError);
}

}  // namespace
}  // namespace dpens
