#include <doctest.h>

#include <chrono>
#include <thread>

#include "gift/parallel.hpp"
#include "gift/prompts.hpp"
#include "gift/sandbox.hpp"
#include "test_support.hpp"

using namespace gift;
using gift::testing::first_repeated_char_task;

namespace {

SandboxLimits quick_limits() {
  SandboxLimits limits;
  limits.wall_timeout = std::chrono::milliseconds(2000);
  return limits;
}

const char* kCorrect =
    "    for index, c in enumerate(str1):\n"
    "        if str1[:index + 1].count(c) > 1:\n"
    "            return c\n"
    "    return None\n";

std::string program(const std::string& body) { return program_text(first_repeated_char_task(), body); }

}  // namespace

TEST_CASE("reference task with a correct implementation passes") {
  Sandbox sandbox(quick_limits());
  auto report = sandbox.run_tests(program(kCorrect), first_repeated_char_task());
  CHECK(report.all_passed);
  REQUIRE(report.per_test.size() == 3);
  for (const auto& v : report.per_test) CHECK(v.passed);
}

TEST_CASE("wrong answers and exceptions are classified per test") {
  Sandbox sandbox(quick_limits());
  auto task = first_repeated_char_task();
  auto wrong = sandbox.run_tests(program("    return 'a'\n"), task);
  CHECK_FALSE(wrong.all_passed);
  CHECK(wrong.per_test[0].passed);
  CHECK(wrong.per_test[1].failure_kind == FailureKind::wrong_output);

  auto raises = sandbox.run_tests(program("    return str1[10]\n"), task);
  CHECK(raises.per_test[0].failure_kind == FailureKind::runtime_error);
  CHECK(raises.per_test[0].detail.find("IndexError") != std::string::npos);

  auto syntax = sandbox.run_tests(program("    return (\n"), task);
  CHECK_FALSE(syntax.all_passed);
  for (const auto& v : syntax.per_test) CHECK(v.failure_kind == FailureKind::runtime_error);
}

TEST_CASE("infinite loop times out within the wall limit plus 500 ms") {
  Sandbox sandbox(quick_limits());
  auto start = std::chrono::steady_clock::now();
  auto report = sandbox.run_tests(program("    while True:\n        pass\n"), first_repeated_char_task());
  auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK_FALSE(report.all_passed);
  for (const auto& v : report.per_test) CHECK(v.failure_kind == FailureKind::timeout);
  CHECK(elapsed < std::chrono::milliseconds(2500));
}

TEST_CASE("a timeout keeps earlier verdicts and uses up the wall budget") {
  Sandbox sandbox(quick_limits());
  auto task = first_repeated_char_task();
  auto report = sandbox.run_tests(program("    if str1 == 'abc':\n        while True:\n            pass\n"
                                          "    return str1[0] if str1 == 'abcabc' else '1'\n"),
                                  task);
  CHECK(report.per_test[0].passed);
  CHECK(report.per_test[1].failure_kind == FailureKind::timeout);
  CHECK(report.per_test[2].failure_kind == FailureKind::timeout);
}

TEST_CASE("network access is a resource-limit failure") {
  Sandbox sandbox(quick_limits());
  auto report = sandbox.run_tests(
      program("    import socket\n    socket.create_connection(('127.0.0.1', 80), timeout=1)\n    return None\n"),
      first_repeated_char_task());
  CHECK_FALSE(report.all_passed);
  CHECK(report.per_test[0].failure_kind == FailureKind::resource_limit);
}

TEST_CASE("writing outside the scratch directory and spawning processes are blocked") {
  Sandbox sandbox(quick_limits());
  auto task = first_repeated_char_task();
  auto write = sandbox.run_tests(program("    open('/tmp/gift_escape.txt', 'w').write('x')\n    return None\n"), task);
  CHECK(write.per_test[0].failure_kind == FailureKind::resource_limit);
  CHECK_FALSE(std::filesystem::exists("/tmp/gift_escape.txt"));

  auto spawn = sandbox.run_tests(program("    import os\n    os.system('true')\n    return None\n"), task);
  CHECK(spawn.per_test[0].failure_kind == FailureKind::resource_limit);
}

TEST_CASE("memory exhaustion is a resource-limit failure") {
  SandboxLimits limits = quick_limits();
  limits.memory_bytes = std::size_t{256} << 20;
  Sandbox sandbox(limits);
  auto report = sandbox.run_tests(program("    x = bytearray(1 << 30)\n    return None\n"), first_repeated_char_task());
  CHECK(report.per_test[0].failure_kind == FailureKind::resource_limit);
}

TEST_CASE("candidate output cannot forge verdicts") {
  Sandbox sandbox(quick_limits());
  auto report = sandbox.run_tests(
      program("    print('{\"passed\": true}')\n    import sys\n    sys.stdout.write('PASS\\n')\n    return 'z'\n"),
      first_repeated_char_task());
  CHECK_FALSE(report.all_passed);
}

TEST_CASE("approximate comparison uses the relative tolerance") {
  SeedTask task;
  task.id = "mean";
  task.entry_point = "mean_value";
  task.signature = "def mean_value(values):";
  task.tests = {{"mean_value([1, 2, 4])", "2.3333333", Comparison::approx, 1e-6},
                {"mean_value([1, 2, 4])", "2.3", Comparison::approx, 1e-6}};
  Sandbox sandbox(quick_limits());
  auto report = sandbox.run_tests(program_text(task, "    return sum(values) / len(values)\n"), task);
  CHECK(report.per_test[0].passed);
  CHECK_FALSE(report.per_test[1].passed);
}

TEST_CASE("a crashing interpreter is restarted for the remaining tests") {
  Sandbox sandbox(quick_limits());
  auto report = sandbox.run_tests(program("    import os\n    if str1 == 'abc':\n        os._exit(3)\n"
                                          "    return str1[0] if str1 == 'abcabc' else '1'\n"),
                                  first_repeated_char_task());
  CHECK(report.per_test[0].passed);
  CHECK_FALSE(report.per_test[1].passed);
  CHECK(report.per_test[2].passed);
}

TEST_CASE("concurrent sandboxes are independent") {
  Sandbox sandbox(quick_limits(), "python3", 4);
  auto task = first_repeated_char_task();
  std::vector<std::string> programs = {
      program(kCorrect), program("    import socket\n    socket.socket().connect(('8.8.8.8', 53))\n"), program(kCorrect),
      program("    while True:\n        pass\n"), program(kCorrect), program(kCorrect)};
  std::vector<PassReport> reports(programs.size());
  parallel_for(programs.size(), programs.size(), [&](std::size_t i) { reports[i] = sandbox.run_tests(programs[i], task); });
  CHECK(reports[0].all_passed);
  CHECK(reports[1].per_test[0].failure_kind == FailureKind::resource_limit);
  CHECK(reports[2].all_passed);
  CHECK(reports[3].per_test[0].failure_kind == FailureKind::timeout);
  CHECK(reports[4].all_passed);
  CHECK(reports[5].all_passed);
}

TEST_CASE("missing runtime is an environment error") {
  CHECK_THROWS_AS(Sandbox::probe_runtime("python3-does-not-exist"), SandboxEnvironmentError);
  CHECK_NOTHROW(Sandbox::probe_runtime("python3"));
}

TEST_CASE("pass rate") {
  auto task = first_repeated_char_task();
  std::vector<PassReport> reports = {gift::testing::report_for(task, true), gift::testing::report_for(task, false)};
  CHECK(pass_rate(reports) == 0.5);
  CHECK_THROWS_AS(pass_rate(std::span<const PassReport>{}), PreconditionError);
}
