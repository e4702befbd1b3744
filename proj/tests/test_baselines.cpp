#include <doctest.h>

#include "gift/baselines.hpp"
#include "test_support.hpp"

using namespace gift;
using gift::testing::first_repeated_char_task;
using gift::testing::MarkerExecutor;
using gift::testing::ScriptedBackend;

TEST_CASE("RFT samples the whole budget from the seed description in one request") {
  ScriptedBackend backend;
  MarkerExecutor executor;
  RunConfig config;
  auto task = first_repeated_char_task();
  auto result = run_rft(task, config, backend, executor);
  REQUIRE(result.candidates.size() == 60);
  CHECK_FALSE(result.budget_exhausted);
  CHECK(backend.requests.size() == 1);
  CHECK(backend.requests[0].n == 60);
  for (const auto& c : result.candidates) {
    CHECK(c.origin == Origin::rft);
    CHECK(c.source_description == task.description);
  }
}

TEST_CASE("RFT+RD splits the budget 10 / 50") {
  ScriptedBackend backend;
  MarkerExecutor executor;
  RunConfig config;
  auto task = first_repeated_char_task();
  auto result = run_rft_rd(task, config, backend, executor);
  REQUIRE(result.candidates.size() == 60);
  REQUIRE(result.descriptions.size() == 5);
  std::size_t seed = 0, rewrite = 0;
  for (const auto& c : result.candidates) {
    if (c.origin == Origin::rft_rd_seed) {
      ++seed;
      CHECK(c.source_description == task.description);
    } else {
      CHECK(c.origin == Origin::rft_rd_rewrite);
      ++rewrite;
      CHECK(c.source_description.starts_with("Rewritten:"));
    }
  }
  CHECK(seed == 10);
  CHECK(rewrite == 50);
}

TEST_CASE("RFT+RD with single-step Gibbs rewrites") {
  ScriptedBackend backend;
  backend.codegen_rounds = {{"    return 1  # FAIL\n", "    return 2  # PASS\n"}};
  MarkerExecutor executor;
  RunConfig config;
  SummaryExamplePool pool{{{"def add(a, b):\n    return a + b", "Add two numbers."}}};
  auto result = run_rft_rd(first_repeated_char_task(), config, backend, executor, RewriteSource::gibbs1, &pool);
  CHECK(result.candidates.size() == 60);
  REQUIRE(result.descriptions.size() == 5);
  for (const auto& d : result.descriptions) CHECK(d.starts_with("Summary:"));
  // The summarized code is the first passing seed code.
  CHECK(backend.requests[1].prompt.find("return 2  # PASS") != std::string::npos);
  CHECK_THROWS_AS(run_rft_rd(first_repeated_char_task(), config, backend, executor, RewriteSource::gibbs1, nullptr),
                  PreconditionError);
}

TEST_CASE("backend failure marks the baseline as stopped early") {
  ScriptedBackend backend;
  backend.fail_on_call = 0;
  MarkerExecutor executor;
  auto result = run_rft(first_repeated_char_task(), RunConfig{}, backend, executor);
  CHECK(result.budget_exhausted);
  CHECK(result.candidates.empty());
}
