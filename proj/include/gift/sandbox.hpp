#pragma once

// Runs candidate code against a task's tests in a child Python process.
//
// Child-process contract: the parent writes the candidate program, the tests
// and a harness script into a private scratch directory, then runs
// `python3 -s -B harness.py`. The harness executes the candidate once and every
// test in order, and prints one verdict line per test on a private stdout
// stream. Anything the candidate prints goes to stderr. The parent enforces
// wall time and byte caps and restarts the harness after a crash or kill so
// every test gets a verdict.

#include <chrono>
#include <cstddef>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>

#include "gift/core_model.hpp"

namespace gift {

struct SandboxLimits {
  std::chrono::milliseconds wall_timeout{10000};  // per submission, across restarts
  std::size_t memory_bytes = std::size_t{1} << 30;
  std::size_t output_cap_bytes = std::size_t{1} << 20;  // stdout + stderr
  bool no_network = true;
};

/// Anything that can turn (code, task) into a PassReport. Implementations must
/// be safe to call from several threads at once.
class CodeExecutor {
 public:
  virtual ~CodeExecutor() = default;
  virtual PassReport run_tests(std::string_view code, const SeedTask& task) = 0;
};

class Sandbox final : public CodeExecutor {
 public:
  explicit Sandbox(SandboxLimits limits, std::string python = "python3", int max_concurrent = 4);

  /// Fails fast with SandboxEnvironmentError when `python` is missing or too old.
  static void probe_runtime(const std::string& python = "python3");

  /// `code` is a complete program defining task.entry_point.
  PassReport run_tests(std::string_view code, const SeedTask& task) override;

  const SandboxLimits& limits() const noexcept { return limits_; }

 private:
  SandboxLimits limits_;
  std::string python_;
  std::counting_semaphore<> slots_;
};

/// Fraction of reports with all_passed. Throws PreconditionError on an empty list.
double pass_rate(std::span<const PassReport> reports);

}  // namespace gift
