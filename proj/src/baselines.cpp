#include "gift/baselines.hpp"

#include <spdlog/spdlog.h>

#include "gift/gibbs.hpp"

namespace gift {

namespace {

GenerationParams params_from(const RunConfig& config) {
  return {config.generation_temperature, config.max_tokens, config.sandbox.parallelism};
}

void check(const RunConfig& config) {
  if (auto problems = config_problems(config); !problems.empty())
    throw PreconditionError("invalid config: " + problems.front());
}

std::vector<std::string> prompt_rewrites(const SeedTask& task, const RunConfig& config, Backend& backend) {
  CompletionRequest request;
  request.prompt = render_rewrite_prompt(task.description);
  request.n = config.rd_rewrites;
  request.temperature = config.generation_temperature;
  request.max_tokens = config.summary_max_tokens;
  std::vector<std::string> rewrites;
  for (const auto& c : backend.complete(request)) {
    std::string text = extract_description(c.text);
    // An empty rewrite cannot be rendered; the seed stands in so the budget stays fixed.
    rewrites.push_back(text.empty() ? task.description : std::move(text));
  }
  return rewrites;
}

std::vector<std::string> gibbs1_rewrites(const SeedTask& task, const RunConfig& config, Backend& backend,
                                         const SummaryExamplePool& pool, const std::vector<Candidate>& seed_codes) {
  const Candidate* source = nullptr;
  for (const auto& c : seed_codes) {
    if (c.passed()) {
      source = &c;
      break;
    }
  }
  if (!source) source = &seed_codes.front();

  Rng rng = derive_stream(config.random_seed, task.id, "gibbs1-rewrites", static_cast<std::uint64_t>(config.iteration));
  CompletionRequest request;
  request.prompt = render_summarization_prompt(solution_block(task, source->code), pool, rng);
  request.n = config.rd_rewrites;
  request.temperature = config.generation_temperature;
  request.max_tokens = config.summary_max_tokens;
  std::vector<std::string> rewrites;
  for (const auto& c : backend.complete(request)) {
    std::string text = extract_description(c.text);
    rewrites.push_back(text.empty() ? task.description : std::move(text));
  }
  return rewrites;
}

}  // namespace

BaselineResult run_rft(const SeedTask& task, const RunConfig& config, Backend& backend, CodeExecutor& executor) {
  check(config);
  BaselineResult result;
  try {
    result.candidates = generate_candidates(task, task.description, config.n_rounds * config.per_step_width,
                                            Origin::rft, 0, backend, executor, params_from(config));
  } catch (const BackendError& e) {
    result.budget_exhausted = true;
    result.error_detail = e.what();
    spdlog::error("seed {}: RFT generation failed: {}", task.id, e.what());
  }
  return result;
}

BaselineResult run_rft_rd(const SeedTask& task, const RunConfig& config, Backend& backend, CodeExecutor& executor,
                          RewriteSource source, const SummaryExamplePool* pool) {
  check(config);
  if (source == RewriteSource::gibbs1 && (!pool || pool->empty()))
    throw PreconditionError("gibbs1 rewrites need a nonempty summary example pool");

  BaselineResult result;
  const auto params = params_from(config);
  try {
    result.candidates = generate_candidates(task, task.description, config.rd_codes_per_description,
                                            Origin::rft_rd_seed, 0, backend, executor, params);
    result.descriptions = source == RewriteSource::prompt
                              ? prompt_rewrites(task, config, backend)
                              : gibbs1_rewrites(task, config, backend, *pool, result.candidates);
    for (const auto& rewrite : result.descriptions) {
      auto batch = generate_candidates(task, rewrite, config.rd_codes_per_description, Origin::rft_rd_rewrite, 0,
                                       backend, executor, params);
      result.candidates.insert(result.candidates.end(), std::make_move_iterator(batch.begin()),
                               std::make_move_iterator(batch.end()));
    }
  } catch (const BackendError& e) {
    result.budget_exhausted = true;
    result.error_detail = e.what();
    spdlog::error("seed {}: RFT+RD generation failed: {}", task.id, e.what());
  }
  return result;
}

}  // namespace gift
