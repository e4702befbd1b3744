#include "gift/gibbs.hpp"

#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "gift/parallel.hpp"

namespace gift {

std::vector<Candidate> generate_candidates(const SeedTask& task, const std::string& description, int count,
                                           Origin origin, int round, Backend& backend, CodeExecutor& executor,
                                           const GenerationParams& params) {
  CompletionRequest request;
  request.prompt = render_codegen_prompt(description, task);
  request.n = count;
  request.temperature = params.temperature;
  request.max_tokens = params.max_tokens;
  request.want_logprobs = true;
  std::vector<Completion> completions = backend.complete(request);

  std::vector<Candidate> candidates(completions.size());
  for (std::size_t i = 0; i < completions.size(); ++i) {
    Candidate& c = candidates[i];
    c.code = extract_body(completions[i].text);
    c.seed_id = task.id;
    c.source_description = description;
    c.round = round;
    c.origin = origin;
    // Logprobs only describe the code when the completion was not cut.
    if (c.code == completions[i].text && !completions[i].token_logprobs.empty()) {
      c.token_logprobs = completions[i].token_logprobs;
      if (description == task.description) c.perplexity = perplexity_of(*c.token_logprobs);
    }
  }

  parallel_for(candidates.size(), static_cast<std::size_t>(std::max(1, params.exec_parallelism)), [&](std::size_t i) {
    candidates[i].pass_report = executor.run_tests(program_text(task, candidates[i].code), task);
  });
  return candidates;
}

std::string summarize_code(const SeedTask& task, std::string_view body, const SummaryExamplePool& pool, Rng& rng,
                           Backend& backend, double temperature, int max_tokens) {
  CompletionRequest request;
  request.prompt = render_summarization_prompt(solution_block(task, body), pool, rng);
  request.n = 1;
  request.temperature = temperature;
  request.max_tokens = max_tokens;
  auto completions = backend.complete(request);
  return extract_description(completions.front().text);
}

ChainRecord run_chain(const SeedTask& task, const RunConfig& config, Backend& backend, CodeExecutor& executor,
                      const SummaryExamplePool& pool, const std::atomic<bool>* stop) {
  if (auto problems = config_problems(config); !problems.empty()) throw PreconditionError("invalid config: " + problems.front());
  if (pool.empty()) throw PreconditionError("summary example pool must be nonempty");

  ChainRecord chain;
  chain.seed_id = task.id;
  chain.iteration = config.iteration;

  Rng rng = derive_stream(config.random_seed, task.id, "summary-examples", static_cast<std::uint64_t>(config.iteration));
  const GenerationParams params{config.generation_temperature, config.max_tokens, config.sandbox.parallelism};

  std::string description = task.description;
  std::optional<std::string> last_summarized;

  for (int k = 1; k <= config.n_rounds; ++k) {
    if (stop && stop->load()) {
      chain.terminal_reason = TerminalReason::budget_exhausted;
      chain.error_detail = "stopped before round " + std::to_string(k);
      break;
    }
    RoundRecord round;
    round.round_index = k;
    round.input_description = description;
    try {
      round.generated_codes =
          generate_candidates(task, description, config.per_step_width, Origin::gift, k - 1, backend, executor, params);

      for (std::size_t i = 0; i < round.generated_codes.size(); ++i) {
        if (round.generated_codes[i].passed()) {
          round.chosen_index = i;
          break;
        }
      }
      if (round.chosen_index) {
        round.summarized_code = round.generated_codes[*round.chosen_index].code;
        round.summary_source = SummarySource::chosen;
      } else if (last_summarized) {
        round.summarized_code = *last_summarized;
        round.summary_source = SummarySource::previous_round;
      } else if (!round.generated_codes.empty()) {
        round.summarized_code = round.generated_codes.front().code;
        round.summary_source = SummarySource::first_candidate;
        spdlog::warn("seed {}: no passing code in round 1; summarizing its first (failing) candidate", task.id);
      }

      std::string summary = summarize_code(task, round.summarized_code, pool, rng, backend,
                                           config.generation_temperature, config.summary_max_tokens);
      last_summarized = round.summarized_code;
      if (summary.empty()) {
        spdlog::warn("seed {}: empty summary in round {}; keeping the previous description", task.id, k);
      } else {
        round.summary_description = summary;
        description = std::move(summary);
      }
      chain.rounds.push_back(std::move(round));
    } catch (const BackendError& e) {
      if (!round.generated_codes.empty()) chain.rounds.push_back(std::move(round));
      chain.terminal_reason = TerminalReason::backend_error;
      chain.error_detail = e.what();
      spdlog::error("seed {}: chain stopped in round {}: {}", task.id, k, e.what());
      break;
    }
  }
  return chain;
}

std::size_t HarvestedPool::duplicate_count() const {
  return static_cast<std::size_t>(
      std::count_if(candidates.begin(), candidates.end(), [](const Candidate& c) { return c.duplicate; }));
}

std::string normalized_code(std::string_view code) {
  std::string out;
  bool pending_space = false;
  for (char ch : code) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

std::vector<HarvestedPool> harvest_pool(std::span<const SeedTask> seeds, std::span<const ChainRecord> chains,
                                        bool include_rft_pool, std::span<const Candidate> rft_candidates) {
  std::map<std::string, std::size_t> index_of;
  std::vector<HarvestedPool> pools(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    pools[i].seed_id = seeds[i].id;
    index_of.emplace(seeds[i].id, i);
  }
  auto pool_for = [&](const std::string& seed_id) -> HarvestedPool& {
    auto it = index_of.find(seed_id);
    if (it == index_of.end()) throw PreconditionError("record for unknown seed '" + seed_id + "'");
    return pools[it->second];
  };

  for (const auto& chain : chains) {
    auto& pool = pool_for(chain.seed_id);
    for (const auto& round : chain.rounds)
      for (const auto& c : round.generated_codes)
        if (c.passed()) pool.candidates.push_back(c);
  }
  if (include_rft_pool) {
    for (const auto& c : rft_candidates)
      if (c.passed()) pool_for(c.seed_id).candidates.push_back(c);
  }

  for (auto& pool : pools) {
    std::set<std::string> seen;
    for (auto& c : pool.candidates) c.duplicate = !seen.insert(normalized_code(c.code)).second;
  }
  return pools;
}

}  // namespace gift
