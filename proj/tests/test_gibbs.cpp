#include <doctest.h>

#include "gift/gibbs.hpp"
#include "test_support.hpp"

using namespace gift;
using gift::testing::first_repeated_char_task;
using gift::testing::MarkerExecutor;
using gift::testing::ScriptedBackend;

namespace {

RunConfig small_config(int rounds, int width) {
  RunConfig c;
  c.n_rounds = rounds;
  c.per_step_width = width;
  c.backend.kind = "mock";
  return c;
}

SummaryExamplePool one_example() { return {{{"def add(a, b):\n    return a + b", "Add two numbers."}}}; }

}  // namespace

TEST_CASE("round 2 without a passing code summarizes round 1's chosen code") {
  ScriptedBackend backend;
  backend.codegen_rounds = {{"    return 1  # FAIL\n", "    return 2  # PASS a\n", "    return 3  # PASS b\n"},
                            {"    return 4  # FAIL\n", "    return 5  # FAIL\n", "    return 6  # FAIL\n"},
                            {"    return 7  # PASS c\n"}};
  MarkerExecutor executor;
  auto task = first_repeated_char_task();
  auto chain = run_chain(task, small_config(3, 3), backend, executor, one_example());

  REQUIRE(chain.rounds.size() == 3);
  CHECK(chain.terminal_reason == TerminalReason::completed);
  const auto& r1 = chain.rounds[0];
  const auto& r2 = chain.rounds[1];
  CHECK(r1.chosen_index == 1u);
  CHECK(r1.summary_source == SummarySource::chosen);
  CHECK(r1.summarized_code == "    return 2  # PASS a\n");
  CHECK_FALSE(r2.chosen_index);
  CHECK(r2.summary_source == SummarySource::previous_round);
  CHECK(r2.summarized_code == r1.summarized_code);
  CHECK(r2.input_description == *r1.summary_description);
  CHECK(chain.rounds[2].input_description == *r2.summary_description);
  CHECK_NOTHROW(validate(chain));
}

TEST_CASE("round 1 without a passing code summarizes its first candidate") {
  ScriptedBackend backend;
  backend.codegen_rounds = {{"    return 1  # FAIL\n", "    return 2  # FAIL\n"}};
  MarkerExecutor executor;
  auto chain = run_chain(first_repeated_char_task(), small_config(1, 2), backend, executor, one_example());
  REQUIRE(chain.rounds.size() == 1);
  CHECK(chain.rounds[0].summary_source == SummarySource::first_candidate);
  CHECK(chain.rounds[0].summarized_code == "    return 1  # FAIL\n");

  auto pools = harvest_pool(std::vector<SeedTask>{first_repeated_char_task()}, std::vector<ChainRecord>{chain}, false, {});
  CHECK(pools[0].excluded());
}

TEST_CASE("chain consumes exactly rounds x width candidates") {
  ScriptedBackend backend;
  MarkerExecutor executor;
  auto chain = run_chain(first_repeated_char_task(), small_config(20, 3), backend, executor, one_example());
  std::size_t total = 0;
  for (const auto& r : chain.rounds) total += r.generated_codes.size();
  CHECK(total == 60);
  CHECK(executor.calls == 60);
  for (std::size_t k = 0; k < chain.rounds.size(); ++k) CHECK(chain.rounds[k].round_index == static_cast<int>(k + 1));
}

TEST_CASE("candidate provenance") {
  ScriptedBackend backend;
  backend.codegen_rounds = {{"    return 1  # PASS\n"}, {"    return 2  # PASS\n"}};
  MarkerExecutor executor;
  auto task = first_repeated_char_task();
  auto chain = run_chain(task, small_config(2, 1), backend, executor, one_example());
  const auto& first = chain.rounds[0].generated_codes[0];
  const auto& second = chain.rounds[1].generated_codes[0];
  CHECK(first.origin == Origin::gift);
  CHECK(first.round == 0);
  CHECK(first.source_description == task.description);
  CHECK(first.perplexity.has_value());
  CHECK(second.round == 1);
  CHECK(second.source_description != task.description);
  CHECK_FALSE(second.perplexity.has_value());
}

TEST_CASE("backend failure ends the chain with the rounds so far") {
  ScriptedBackend backend;
  backend.fail_on_call = 3;  // codegen, summary, codegen, [summary fails]
  MarkerExecutor executor;
  auto chain = run_chain(first_repeated_char_task(), small_config(5, 2), backend, executor, one_example());
  CHECK(chain.terminal_reason == TerminalReason::backend_error);
  CHECK(chain.rounds.size() == 2);
  CHECK(chain.error_detail.find("scripted failure") != std::string::npos);
}

TEST_CASE("stop flag ends the chain between rounds") {
  ScriptedBackend backend;
  MarkerExecutor executor;
  std::atomic<bool> stop{true};
  auto chain = run_chain(first_repeated_char_task(), small_config(5, 2), backend, executor, one_example(), &stop);
  CHECK(chain.rounds.empty());
  CHECK(chain.terminal_reason == TerminalReason::budget_exhausted);
}

TEST_CASE("invalid inputs are rejected") {
  ScriptedBackend backend;
  MarkerExecutor executor;
  auto config = small_config(0, 3);
  CHECK_THROWS_AS(run_chain(first_repeated_char_task(), config, backend, executor, one_example()), PreconditionError);
  CHECK_THROWS_AS(run_chain(first_repeated_char_task(), small_config(1, 1), backend, executor, SummaryExamplePool{}),
                  PreconditionError);
}

TEST_CASE("harvest keeps passing codes and flags duplicates") {
  auto task = first_repeated_char_task();
  ScriptedBackend backend;
  backend.codegen_rounds = {{"    return 1  # PASS\n", "    return  1  # PASS\n", "    return 2  # FAIL\n"}};
  MarkerExecutor executor;
  auto chain = run_chain(task, small_config(1, 3), backend, executor, one_example());

  Candidate rft;
  rft.code = "    return 9  # PASS\n";
  rft.seed_id = task.id;
  rft.origin = Origin::rft;
  rft.pass_report = gift::testing::report_for(task, true);
  std::vector<Candidate> rft_list = {rft};
  std::vector<SeedTask> seeds = {task};
  std::vector<ChainRecord> chains = {chain};

  auto without = harvest_pool(seeds, chains, false, rft_list);
  REQUIRE(without[0].candidates.size() == 2);
  CHECK(without[0].duplicate_count() == 1);
  CHECK(without[0].candidates[1].duplicate);

  auto with = harvest_pool(seeds, chains, true, rft_list);
  CHECK(with[0].candidates.size() == 3);
  CHECK(with[0].candidates[2].origin == Origin::rft);

  chains[0].seed_id = "unknown";
  CHECK_THROWS_AS(harvest_pool(seeds, chains, false, {}), PreconditionError);
}
