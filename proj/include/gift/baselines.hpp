#pragma once

// Rejection-sampling baselines with the same generation budget as a Gibbs
// chain (n_rounds * per_step_width codes per seed).

#include <string>
#include <vector>

#include "gift/backend.hpp"
#include "gift/config.hpp"
#include "gift/core_model.hpp"
#include "gift/prompts.hpp"
#include "gift/sandbox.hpp"

namespace gift {

struct BaselineResult {
  std::vector<Candidate> candidates;  // every generated candidate, passing or not
  bool budget_exhausted = false;      // the backend failed before the budget was spent
  std::string error_detail;
  std::vector<std::string> descriptions;  // rewrites used (RFT+RD only)
};

/// RFT: all n_rounds * per_step_width codes sampled from the seed description.
BaselineResult run_rft(const SeedTask& task, const RunConfig& config, Backend& backend, CodeExecutor& executor);

enum class RewriteSource {
  prompt,  // rewrite the seed description with the rewrite prompt
  gibbs1   // summaries of one code sampled from the seed (a single Gibbs step)
};

/// RFT+RD: rd_codes_per_description codes from the seed description plus the
/// same number from each of rd_rewrites rewritten descriptions.
/// `pool` is only consulted for RewriteSource::gibbs1.
BaselineResult run_rft_rd(const SeedTask& task, const RunConfig& config, Backend& backend, CodeExecutor& executor,
                          RewriteSource source = RewriteSource::prompt, const SummaryExamplePool* pool = nullptr);

}  // namespace gift
