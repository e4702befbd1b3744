#include "gift/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "gift/parallel.hpp"
#include "gift/prompts.hpp"

namespace gift {

namespace {

constexpr double kWeightSlack = 1e-9;

// One weighted draw over the live entries of `weights`; `total` is their sum.
std::size_t draw(std::span<const double> weights, const std::vector<bool>& removed, double total, Rng& rng) {
  const double target = uniform01(rng) * total;
  double cumulative = 0.0;
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (removed[i]) continue;
    cumulative += weights[i];
    last = i;
    if (target < cumulative) return i;
  }
  return last;  // rounding left target at the very top
}

std::vector<std::size_t> draw_k(std::span<const double> weights, std::size_t K, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(K);
  std::vector<bool> removed(weights.size(), false);
  const std::size_t n = weights.size();

  if (K <= n) {
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t i = draw(weights, removed, total, rng);
      out.push_back(i);
      removed[i] = true;
      total = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (!removed[j]) total += weights[j];
    }
    return out;
  }

  out.resize(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (std::size_t k = n; k < K; ++k) out.push_back(draw(weights, removed, total, rng));
  return out;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

}  // namespace

double perplexity(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw PreconditionError("perplexity of an empty logprob list is undefined");
  return perplexity_of(token_logprobs);
}

Eigen::VectorXd softmax_weights(const Eigen::Ref<const Eigen::VectorXd>& ppls, double T) {
  if (T == 0.0) throw PreconditionError("softmax temperature T must be nonzero");
  if (ppls.size() == 0) throw PreconditionError("softmax of an empty list is undefined");
  Eigen::VectorXd logits = ppls / T;
  Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp().matrix();
  return w / w.sum();
}

std::vector<double> softmax_weights(std::span<const double> ppls, double T) {
  Eigen::Map<const Eigen::VectorXd> view(ppls.data(), static_cast<Eigen::Index>(ppls.size()));
  Eigen::VectorXd w = softmax_weights(view, T);
  return {w.data(), w.data() + w.size()};
}

void WeightedPool::validate() const {
  if (temperature == 0.0) throw InvariantError("pool temperature must be nonzero");
  double total = 0.0;
  for (const auto& e : entries) {
    if (!e.candidate.passed()) throw InvariantError("weighted pool holds a code that did not pass");
    if (!(e.ppl > 0.0)) throw InvariantError("perplexity must be positive");
    if (!(e.weight > 0.0) || e.weight > 1.0 + kWeightSlack) throw InvariantError("weight must lie in (0, 1]");
    total += e.weight;
  }
  if (!entries.empty() && std::abs(total - 1.0) > kWeightSlack) throw InvariantError("weights must sum to 1");
}

WeightedPool make_weighted_pool(std::string seed_id, std::vector<Candidate> candidates, std::span<const double> ppls,
                                double T) {
  if (candidates.size() != ppls.size()) throw PreconditionError("one perplexity per candidate is required");
  WeightedPool pool;
  pool.seed_id = std::move(seed_id);
  pool.temperature = T;
  if (candidates.empty()) return pool;

  const auto weights = softmax_weights(ppls, T);
  pool.entries.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    pool.entries.push_back({std::move(candidates[i]), ppls[i], weights[i]});
  pool.validate();
  return pool;
}

double conditioned_perplexity(Candidate& candidate, const SeedTask& seed, Backend& backend) {
  if (!candidate.passed()) throw PreconditionError("only passing candidates are weighted");
  if (candidate.perplexity) return *candidate.perplexity;
  auto logprobs = backend.score(render_codegen_prompt(seed.description, seed), candidate.code);
  candidate.perplexity = perplexity(logprobs);
  candidate.token_logprobs = std::move(logprobs);
  return *candidate.perplexity;
}

WeightedPool score_pool(const SeedTask& seed, const HarvestedPool& harvested, Backend& scorer, double T,
                        int parallelism) {
  std::vector<Candidate> distinct;
  for (const auto& c : harvested.candidates)
    if (!c.duplicate) distinct.push_back(c);

  std::vector<std::optional<double>> ppls(distinct.size());
  std::atomic<bool> unsupported{false};
  parallel_for(distinct.size(), static_cast<std::size_t>(std::max(1, parallelism)), [&](std::size_t i) {
    if (unsupported.load() && !distinct[i].perplexity) return;
    try {
      ppls[i] = conditioned_perplexity(distinct[i], seed, scorer);
    } catch (const CapabilityError& e) {
      if (!unsupported.exchange(true))
        spdlog::error("seed {}: backend cannot score sequences ({}); using fallback perplexities", seed.id, e.what());
    }
  });

  std::vector<double> known;
  for (const auto& p : ppls)
    if (p) known.push_back(*p);
  std::vector<double> values(distinct.size());
  const double fill = known.empty() ? 1.0 : median(known);
  std::size_t filled = 0;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    if (!ppls[i]) ++filled;
    values[i] = ppls[i].value_or(fill);
  }
  if (filled > 0)
    spdlog::warn("seed {}: {} of {} codes have no seed-conditioned perplexity; given the pool median {:.6f}", seed.id,
                 filled, distinct.size(), fill);

  return make_weighted_pool(seed.id, std::move(distinct), values, T);
}

std::vector<std::size_t> select_k_indices(std::span<const double> weights, std::size_t K, Rng& rng) {
  if (weights.empty()) throw PreconditionError("cannot select from an empty pool");
  for (double w : weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw PreconditionError("selection weights must be positive and finite");
  return draw_k(weights, K, rng);
}

std::vector<Candidate> select_k(const WeightedPool& pool, std::size_t K, Rng& rng) {
  std::vector<double> weights;
  weights.reserve(pool.entries.size());
  for (const auto& e : pool.entries) weights.push_back(e.weight);
  std::vector<Candidate> out;
  out.reserve(K);
  for (std::size_t i : select_k_indices(weights, K, rng)) out.push_back(pool.entries[i].candidate);
  return out;
}

std::vector<SftRecord> emit_sft(const SeedTask& seed, std::span<const Candidate> selected, PairingMode mode,
                                std::span<const Candidate> pool, Rng& rng, const PairingOptions& options) {
  auto record = [&](const std::string& description, const Candidate& c) {
    return SftRecord{description, program_text(seed, c.code), seed.id, mode, c.origin, options.iteration};
  };

  std::vector<SftRecord> out;
  for (const auto& c : selected) out.push_back(record(seed.description, c));
  if (mode == PairingMode::seed_only) return out;

  const bool has_chain = std::any_of(pool.begin(), pool.end(), [](const Candidate& c) { return c.origin == Origin::gift; });
  if (!has_chain)
    throw PreconditionError("pairing mode " + std::string(to_string(mode)) + " needs Gibbs-chain candidates for seed '" +
                            seed.id + "'");

  // Self-generated descriptions that led to a passing code, first occurrence in pool order.
  std::vector<const Candidate*> sources;
  std::set<std::string> seen;
  for (const auto& c : pool) {
    if (sources.size() >= options.max_descriptions) break;
    if (c.origin != Origin::gift || !c.passed() || c.round == 0 || c.source_description == seed.description) continue;
    if (seen.insert(c.source_description).second) sources.push_back(&c);
  }

  if (mode == PairingMode::one_pair) {
    for (const Candidate* c : sources) out.push_back(record(c->source_description, *c));
    return out;
  }

  const std::vector<double> uniform(pool.size(), 1.0);
  for (const Candidate* c : sources)
    for (std::size_t i : draw_k(uniform, options.codes_per_description, rng))
      out.push_back(record(c->source_description, pool[i]));
  return out;
}

}  // namespace gift
