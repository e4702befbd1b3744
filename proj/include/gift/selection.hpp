#pragma once

// Perplexity-weighted choice of K training codes per seed.
//
// Each passing code c gets weight exp(ppl(c)/T) / sum exp(ppl/T), where ppl is
// taken under the seed description. T > 0 favours high-perplexity (tail)
// codes, T < 0 favours the head of the sampling distribution.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gift/backend.hpp"
#include "gift/core_model.hpp"
#include "gift/gibbs.hpp"
#include "gift/random.hpp"

namespace gift {

/// exp(-mean(token_logprobs)). Throws PreconditionError on an empty list.
double perplexity(std::span<const double> token_logprobs);

/// Temperature-scaled softmax of `ppls`, computed with max subtraction.
/// Throws PreconditionError when T == 0 or the list is empty.
Eigen::VectorXd softmax_weights(const Eigen::Ref<const Eigen::VectorXd>& ppls, double T);
std::vector<double> softmax_weights(std::span<const double> ppls, double T);

struct WeightedEntry {
  Candidate candidate;
  double ppl = 1.0;
  double weight = 0.0;
};

struct WeightedPool {
  std::string seed_id;
  std::vector<WeightedEntry> entries;
  double temperature = 2.0;

  bool empty() const noexcept { return entries.empty(); }
  /// Throws InvariantError unless weights sum to 1 and every code passed.
  void validate() const;
};

/// Builds a pool from passing candidates and their perplexities.
WeightedPool make_weighted_pool(std::string seed_id, std::vector<Candidate> candidates, std::span<const double> ppls,
                                double T);

/// Perplexity of the candidate's code under the seed's codegen prompt. The
/// seed-conditioned logprobs and perplexity are stored on the candidate, and a
/// candidate that already carries a perplexity is returned as is.
double conditioned_perplexity(Candidate& candidate, const SeedTask& seed, Backend& backend);

/// Scores every distinct code of a harvested pool under the seed and weights
/// it. Duplicate codes are left out. When the backend cannot score, codes
/// without a generation-time perplexity under the seed get the median of the
/// perplexities that are known (1.0 when none are), and this is logged.
WeightedPool score_pool(const SeedTask& seed, const HarvestedPool& harvested, Backend& scorer, double T,
                        int parallelism = 4);

/// Indices into `weights` in draw order. When K <= |weights| the draws are
/// without replacement; otherwise every index appears once and the remaining
/// K - |weights| draws are made with replacement.
std::vector<std::size_t> select_k_indices(std::span<const double> weights, std::size_t K, Rng& rng);

/// Throws PreconditionError on an empty pool.
std::vector<Candidate> select_k(const WeightedPool& pool, std::size_t K, Rng& rng);

struct PairingOptions {
  std::size_t max_descriptions = 8;       // self-generated descriptions used per seed
  std::size_t codes_per_description = 8;  // mix_pair only
  int iteration = 1;
};

/// SFT records for one seed: the selected codes paired with the seed
/// description, plus, in one_pair and mix_pair modes, records pairing
/// self-generated descriptions from `pool` with codes.
///
/// one_pair adds each description with the passing code it produced; mix_pair
/// pairs each description with codes drawn uniformly from `pool`. Both need
/// chain provenance: a pool without Gibbs-chain candidates is an error.
std::vector<SftRecord> emit_sft(const SeedTask& seed, std::span<const Candidate> selected, PairingMode mode,
                                std::span<const Candidate> pool, Rng& rng, const PairingOptions& options = {});

}  // namespace gift
