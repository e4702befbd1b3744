#pragma once

// One self-training iteration, file in and file out:
//
//   seeds.jsonl -> chains (+ RFT codes) -> per-seed pools -> seed-conditioned
//   perplexities -> K codes per seed -> sft.jsonl + manifest.json
//
// Fine-tuning on sft.jsonl happens outside this program; the next
// iteration's config points at the updated endpoint.
//
// Output directory layout:
//   run_state.json         manifest id of the run in progress
//   chains.partial.jsonl   chains appended as they finish (resume log)
//   rft.partial.jsonl      RFT candidates appended per seed (resume log)
//   chains.jsonl           all chains in seed order
//   rft.jsonl              RFT candidates in seed order (include_rft_pool only)
//   pool.jsonl             weighted pool entries with their perplexities
//   sft.jsonl              training records
//   manifest.json          counts, exclusions, pass rates, config, digests

#include <atomic>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gift/backend.hpp"
#include "gift/baselines.hpp"
#include "gift/config.hpp"
#include "gift/gibbs.hpp"
#include "gift/sandbox.hpp"
#include "gift/selection.hpp"

namespace gift {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct SelectionOutcome {
  std::vector<SftRecord> records;
  std::vector<WeightedPool> pools;         // one per seed, in seed order
  std::vector<std::string> excluded_seeds;  // seeds whose pool was empty
};

/// Scores, weights and selects K codes for every seed, then emits records in
/// the configured pairing mode. Seeds with an empty pool are skipped and logged.
SelectionOutcome select_and_emit(std::span<const SeedTask> seeds, std::span<const HarvestedPool> pools,
                                 Backend& scorer, const RunConfig& config);

struct IterationResult {
  nlohmann::json manifest;
  bool interrupted = false;  // stopped by the stop flag; rerun to resume
};

/// Runs one iteration into config.output_dir, resuming from the partial logs
/// of an earlier run with the same manifest id.
IterationResult run_iteration(const RunConfig& config, Backend& backend, Backend& scorer, CodeExecutor& executor,
                              const std::atomic<bool>* stop = nullptr);

enum class BaselineKind { rft, rft_rd };

/// Runs a baseline over every seed (concurrently up to chain_parallelism) and
/// returns all candidates in seed order.
std::vector<Candidate> run_baseline(std::span<const SeedTask> seeds, const RunConfig& config, BaselineKind kind,
                                    Backend& backend, CodeExecutor& executor,
                                    RewriteSource source = RewriteSource::prompt,
                                    const SummaryExamplePool* pool = nullptr);

/// Builds an in-context summary pool: for each seed, the first passing code
/// sampled from its description, summarized without an example.
SummaryExamplePool bootstrap_summary_pool(std::span<const SeedTask> seeds, const RunConfig& config, Backend& backend,
                                          CodeExecutor& executor);

}  // namespace gift
