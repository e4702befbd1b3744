#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "gift/backend.hpp"
#include "gift/parallel.hpp"
#include "gift/prompts.hpp"
#include "test_support.hpp"

using namespace gift;
using nlohmann::json;

namespace {

// Local completions endpoint running on a background thread.
class FakeServer {
 public:
  httplib::Server server;

  void start() {
    port_ = server.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    if (thread_.joinable()) thread_.join();
  }
  BackendSpec spec() const {
    BackendSpec s;
    s.base_url = "http://127.0.0.1:" + std::to_string(port_);
    s.model_name = "fake";
    s.retry_backoff = std::chrono::milliseconds(1);
    s.request_timeout = std::chrono::milliseconds(5000);
    return s;
  }

 private:
  int port_ = 0;
  std::thread thread_;
};

json choices(int n, bool logprobs) {
  json arr = json::array();
  for (int i = 0; i < n; ++i) {
    json c = {{"text", "    return " + std::to_string(i) + "\n"}, {"finish_reason", "stop"}};
    if (logprobs) c["logprobs"] = {{"tokens", {"return", std::to_string(i)}}, {"token_logprobs", {-0.25, -0.75}}};
    arr.push_back(c);
  }
  return {{"choices", arr}};
}

}  // namespace

TEST_CASE("completion request body") {
  BackendSpec spec;
  spec.model_name = "m";
  CompletionRequest r{"def f():\n", 3, 1.0, 64, true};
  auto body = completion_request_body(spec, r);
  CHECK(body["model"] == "m");
  CHECK(body["n"] == 3);
  CHECK(body["max_tokens"] == 64);
  CHECK(body["logprobs"] == 1);
  CHECK(body["echo"] == false);
  r.want_logprobs = false;
  CHECK_FALSE(completion_request_body(spec, r).contains("logprobs"));
}

TEST_CASE("score request echoes the concatenation without generating") {
  auto body = score_request_body(BackendSpec{}, "ctx ", "cont");
  CHECK(body["prompt"] == "ctx cont");
  CHECK(body["echo"] == true);
  CHECK(body["max_tokens"] == 0);
}

TEST_CASE("completion response parsing") {
  auto out = parse_completion_response(choices(2, true).dump(), 2, true);
  REQUIRE(out.size() == 2);
  CHECK(out[1].text == "    return 1\n");
  CHECK(out[1].token_logprobs == std::vector<double>{-0.25, -0.75});
  CHECK_THROWS_AS(parse_completion_response(choices(2, true).dump(), 3, true), ProtocolError);
  CHECK_THROWS_AS(parse_completion_response("not json", 1, false), ProtocolError);
  CHECK_THROWS_AS(parse_completion_response(choices(1, false).dump(), 1, true), ProtocolError);

  json positive = choices(1, true);
  positive["choices"][0]["logprobs"]["token_logprobs"] = {0.5, -1.0};
  try {
    parse_completion_response(positive.dump(), 1, true);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.raw_body() == positive.dump());
  }
}

TEST_CASE("score response keeps only continuation tokens") {
  // "ab" + "cd": tokens "a"(0) "b"(1) "cd"(2); context length 2.
  json body = {{"choices",
                {{{"text", "abcd"},
                  {"logprobs", {{"tokens", {"a", "b", "cd"}}, {"token_logprobs", {nullptr, -1.0, -2.0}},
                                {"text_offset", {0, 1, 2}}}}}}}};
  body["choices"][0]["logprobs"]["token_logprobs"][0] = -0.1;
  CHECK(parse_score_response(body.dump(), 2) == std::vector<double>{-2.0});
  // A token straddling the boundary counts as continuation.
  CHECK(parse_score_response(body.dump(), 3) == std::vector<double>{-2.0});
  CHECK(parse_score_response(body.dump(), 1) == std::vector<double>{-1.0, -2.0});

  json no_offsets = {{"choices", {{{"text", "x"}, {"logprobs", {{"token_logprobs", {-1.0}}}}}}}};
  CHECK_THROWS_AS(parse_score_response(no_offsets.dump(), 0), CapabilityError);
}

TEST_CASE("http backend completes, authenticates and probes") {
  FakeServer fake;
  std::string auth;
  fake.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    auto body = json::parse(req.body);
    res.set_content(choices(body["n"].get<int>(), body.contains("logprobs")).dump(), "application/json");
  });
  fake.server.Get("/v1/models", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[]})", "application/json");
  });
  fake.start();

  auto spec = fake.spec();
  spec.api_key = "k123";
  HttpBackend backend(spec);
  CHECK_NOTHROW(backend.probe());
  auto out = backend.complete({"def f():\n", 3, 1.0, 16, true});
  CHECK(out.size() == 3);
  CHECK(out[0].token_logprobs.size() == 2);
  CHECK(auth == "Bearer k123");
}

TEST_CASE("http backend retries server errors then gives up") {
  FakeServer fake;
  std::atomic<int> calls{0};
  fake.server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(choices(1, false).dump(), "application/json");
  });
  fake.start();

  auto spec = fake.spec();
  spec.max_retries = 3;
  HttpBackend backend(spec);
  CHECK(backend.complete({"p", 1, 1.0, 8, false}).size() == 1);
  CHECK(calls == 3);

  calls = -100;
  spec.max_retries = 1;
  HttpBackend impatient(spec);
  CHECK_THROWS_AS(impatient.complete({"p", 1, 1.0, 8, false}), BackendError);
}

TEST_CASE("http backend maps rejected scoring to a capability error") {
  FakeServer fake;
  fake.server.Post("/v1/completions", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  fake.start();
  HttpBackend backend(fake.spec());
  CHECK_THROWS_AS(backend.score("ctx", "code"), CapabilityError);
}

TEST_CASE("unreachable endpoint fails the probe") {
  BackendSpec spec;
  spec.base_url = "http://127.0.0.1:1";
  spec.request_timeout = std::chrono::milliseconds(500);
  HttpBackend backend(spec);
  CHECK_THROWS_AS(backend.probe(), BackendError);
}

TEST_CASE("http backend keeps in-flight requests under the cap") {
  FakeServer fake;
  std::atomic<int> concurrent{0};
  std::atomic<int> peak{0};
  fake.server.new_task_queue = [] { return new httplib::ThreadPool(8); };
  fake.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    int now = ++concurrent;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --concurrent;
    auto body = json::parse(req.body);
    res.set_content(json{{"choices", {{{"text", body["prompt"]}}}}}.dump(), "application/json");
  });
  fake.start();

  auto spec = fake.spec();
  spec.max_in_flight = 2;
  HttpBackend backend(spec);
  std::vector<std::string> texts(8);
  parallel_for(texts.size(), 8, [&](std::size_t i) {
    texts[i] = backend.complete({"prompt " + std::to_string(i), 1, 1.0, 4, false}).front().text;
    CHECK(backend.in_flight() <= 2);
  });
  CHECK(peak.load() <= 2);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(texts[i] == "prompt " + std::to_string(i));
}

TEST_CASE("mock is a pure function of its inputs") {
  MockScript script = MockScript::load(gift::testing::fixture("mock_script.json"));
  MockBackend a(script), b(script);
  auto task = gift::testing::first_repeated_char_task();
  CompletionRequest r{render_codegen_prompt(task.description, task), 5, 1.0, 512, true};
  auto x = a.complete(r);
  auto y = b.complete(r);
  REQUIRE(x.size() == 5);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].text == y[i].text);
    CHECK(x[i].token_logprobs == y[i].token_logprobs);
  }
}

TEST_CASE("mock scoring reproduces generation logprobs") {
  MockBackend mock(MockScript::load(gift::testing::fixture("mock_script.json")));
  auto task = gift::testing::first_repeated_char_task();
  auto prompt = render_codegen_prompt(task.description, task);
  auto c = mock.complete({prompt, 1, 1.0, 512, true}).front();
  CHECK(mock.score(prompt, c.text) == c.token_logprobs);
}

TEST_CASE("mock uniform token probability") {
  MockScript script;
  script.uniform_token_prob = 0.5;
  MockBackend mock(script);
  auto lps = mock.score("ctx", "a b c d");
  REQUIRE(lps.size() == 4);
  for (double lp : lps) CHECK(lp == doctest::Approx(std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("mock truncates at max_tokens") {
  MockBackend mock(MockScript{});
  auto c = mock.complete({"Rewrite the given Description\n###Description:\nabc def\n###New Description:\n", 1, 1.0, 2,
                          false})
               .front();
  CHECK(c.finish_reason == FinishReason::length);
  CHECK(mock_tokenize(c.text).size() == 2);
}

TEST_CASE("mock without scoring support") {
  MockScript script;
  script.supports_scoring = false;
  MockBackend mock(script);
  CHECK_THROWS_AS(mock.score("a", "b"), CapabilityError);
}

TEST_CASE("mock pass probability depends on description provenance") {
  MockScript script = MockScript::load(gift::testing::fixture("mock_table1.json"));
  MockBackend mock(script);
  auto task = gift::testing::first_repeated_char_task();
  auto count = [&](const std::string& description) {
    CompletionRequest r{render_codegen_prompt(description, task), 1000, 1.0, 512, false};
    int hits = 0;
    for (int i = 0; i < r.n; ++i) hits += mock.draws_correct(r, i);
    return hits;
  };
  CHECK(count(task.description) > 850);
  CHECK(count("Rewritten: " + task.description) < 250);
}
