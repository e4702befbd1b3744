#pragma once

// Analysis statistics: Pass@1, per-origin pass rates, pairwise BLEU diversity
// and perplexity histograms.

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gift/backend.hpp"
#include "gift/core_model.hpp"
#include "gift/sandbox.hpp"

namespace gift {

/// Mean over tasks of passing / samples. `outcomes[t][s]` is sample s of task t.
double pass_at_1(const std::vector<std::vector<bool>>& outcomes);

/// Samples `samples_per_task` codes per task from its own description and
/// runs them. Throws PreconditionError on an empty task list or zero samples.
double pass_at_1(std::span<const SeedTask> tasks, Backend& backend, CodeExecutor& executor, int samples_per_task,
                 double temperature = 1.0, int max_tokens = 512);

/// BLEU tokens: maximal runs of [A-Za-z0-9_], or any single other
/// non-whitespace byte. Whitespace only separates tokens.
std::vector<std::string> bleu_tokenize(std::string_view text);

/// Sentence BLEU with n-grams up to 4 and uniform weights. Clipped unigram
/// precision is unsmoothed; precisions for n >= 2 use add-one smoothing,
/// (matches + 1) / (candidate n-grams + 1). Brevity penalty exp(1 - r/c) when
/// c <= r. Zero when the candidate is empty or shares no unigram.
double sentence_bleu(std::span<const std::string> candidate, std::span<const std::string> reference);

struct BleuSummary {
  std::vector<double> per_code;  // mean over other codes of the two directions averaged
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

/// Throws PreconditionError with fewer than 2 codes.
BleuSummary pairwise_bleu(std::span<const std::string> codes);

struct Histogram {
  std::vector<double> edges;         // bin i is [edges[i], edges[i+1]); the last bin is closed
  std::vector<std::size_t> counts;   // edges.size() - 1 entries
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  std::size_t total() const;
};

/// Needs at least two strictly increasing edges and a nonempty list.
Histogram ppl_histogram(std::span<const double> ppls, std::span<const double> edges);

struct OriginRate {
  std::size_t passed = 0;
  std::size_t total = 0;
  double rate() const { return total ? static_cast<double>(passed) / static_cast<double>(total) : 0.0; }
};

/// Pass rate per origin tag. Throws PreconditionError on an empty list.
std::map<Origin, OriginRate> origin_pass_rates(std::span<const Candidate> candidates);

}  // namespace gift
