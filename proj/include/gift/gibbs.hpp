#pragma once

// Gibbs chains over descriptions and codes.
//
// Starting from the seed description, each round samples `per_step_width`
// codes, keeps the first one that passes the tests, and summarizes a code back
// into a description that seeds the next round. When no code passes, the code
// summarized in the previous round is summarized again. In round 1 there is no
// previous code, so the first (failing) candidate is summarized instead; it is
// never admitted to a pool.

#include <atomic>
#include <span>
#include <string>
#include <vector>

#include "gift/backend.hpp"
#include "gift/config.hpp"
#include "gift/core_model.hpp"
#include "gift/prompts.hpp"
#include "gift/sandbox.hpp"

namespace gift {

struct GenerationParams {
  double temperature = 1.0;
  int max_tokens = 512;
  int exec_parallelism = 4;
};

/// Samples `count` codes for `description`, runs each against the task's tests
/// and returns them in backend order with provenance filled in. Generation-time
/// logprobs are kept; a perplexity is attached only when `description` is the
/// seed description, since perplexity is always taken under the seed.
std::vector<Candidate> generate_candidates(const SeedTask& task, const std::string& description, int count,
                                           Origin origin, int round, Backend& backend, CodeExecutor& executor,
                                           const GenerationParams& params);

/// Summarizes `body` (a generated function body) into a new description.
/// Returns an empty string when the model produced nothing usable.
std::string summarize_code(const SeedTask& task, std::string_view body, const SummaryExamplePool& pool, Rng& rng,
                           Backend& backend, double temperature, int max_tokens);

ChainRecord run_chain(const SeedTask& task, const RunConfig& config, Backend& backend, CodeExecutor& executor,
                      const SummaryExamplePool& pool, const std::atomic<bool>* stop = nullptr);

struct HarvestedPool {
  std::string seed_id;
  std::vector<Candidate> candidates;  // passing only; duplicates flagged, not removed

  bool excluded() const noexcept { return candidates.empty(); }
  std::size_t duplicate_count() const;
};

/// Whitespace-normalized code text; the key used for duplicate flagging.
std::string normalized_code(std::string_view code);

/// One pool per seed, in seed order: every passing chain candidate, plus the
/// passing `rft_candidates` of that seed when `include_rft_pool` is set.
std::vector<HarvestedPool> harvest_pool(std::span<const SeedTask> seeds, std::span<const ChainRecord> chains,
                                        bool include_rft_pool, std::span<const Candidate> rft_candidates);

}  // namespace gift
