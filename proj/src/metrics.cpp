#include "gift/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "gift/gibbs.hpp"

namespace gift {

namespace {

bool word_byte(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

// Quantile with linear interpolation between closest ranks.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double pass_at_1(const std::vector<std::vector<bool>>& outcomes) {
  if (outcomes.empty()) throw PreconditionError("Pass@1 needs at least one task");
  double sum = 0.0;
  for (const auto& task : outcomes) {
    if (task.empty()) throw PreconditionError("Pass@1 needs at least one sample per task");
    sum += static_cast<double>(std::count(task.begin(), task.end(), true)) / static_cast<double>(task.size());
  }
  return sum / static_cast<double>(outcomes.size());
}

double pass_at_1(std::span<const SeedTask> tasks, Backend& backend, CodeExecutor& executor, int samples_per_task,
                 double temperature, int max_tokens) {
  if (tasks.empty()) throw PreconditionError("Pass@1 needs at least one task");
  if (samples_per_task < 1) throw PreconditionError("samples_per_task must be >= 1");
  std::vector<std::vector<bool>> outcomes;
  for (const auto& task : tasks) {
    auto candidates = generate_candidates(task, task.description, samples_per_task, Origin::rft, 0, backend, executor,
                                          {temperature, max_tokens, 4});
    auto& row = outcomes.emplace_back();
    for (const auto& c : candidates) row.push_back(c.passed());
  }
  return pass_at_1(outcomes);
}

std::vector<std::string> bleu_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    } else if (word_byte(text[i])) {
      std::size_t j = i;
      while (j < text.size() && word_byte(text[j])) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      tokens.emplace_back(1, text[i]);
      ++i;
    }
  }
  return tokens;
}

double sentence_bleu(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cand = ngrams(candidate, n);
    const auto ref = ngrams(reference, n);
    int matches = 0;
    int total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      if (auto it = ref.find(gram); it != ref.end()) matches += std::min(count, it->second);
    }
    if (n == 1) {
      if (matches == 0) return 0.0;
      log_sum += std::log(static_cast<double>(matches) / total);
    } else {
      log_sum += std::log((matches + 1.0) / (total + 1.0));
    }
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / 4.0);
}

BleuSummary pairwise_bleu(std::span<const std::string> codes) {
  if (codes.size() < 2) throw PreconditionError("pairwise BLEU needs at least 2 codes");
  std::vector<std::vector<std::string>> tokens;
  for (const auto& code : codes) tokens.push_back(bleu_tokenize(code));

  const std::size_t n = codes.size();
  std::vector<std::vector<double>> pair(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      pair[i][j] = pair[j][i] = 0.5 * (sentence_bleu(tokens[i], tokens[j]) + sentence_bleu(tokens[j], tokens[i]));

  BleuSummary summary;
  for (std::size_t i = 0; i < n; ++i)
    summary.per_code.push_back(std::accumulate(pair[i].begin(), pair[i].end(), 0.0) / static_cast<double>(n - 1));
  auto sorted = summary.per_code;
  std::sort(sorted.begin(), sorted.end());
  summary.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  summary.q1 = quantile(sorted, 0.25);
  summary.median = quantile(sorted, 0.5);
  summary.q3 = quantile(sorted, 0.75);
  return summary;
}

std::size_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), underflow + overflow);
}

Histogram ppl_histogram(std::span<const double> ppls, std::span<const double> edges) {
  if (ppls.empty()) throw PreconditionError("histogram of an empty pool");
  if (edges.size() < 2) throw PreconditionError("a histogram needs at least two bin edges");
  if (!std::is_sorted(edges.begin(), edges.end(), std::less_equal<>()))
    throw PreconditionError("bin edges must be strictly increasing");

  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() - 1, 0);
  for (double p : ppls) {
    if (p < edges.front()) {
      ++h.underflow;
    } else if (p > edges.back()) {
      ++h.overflow;
    } else {
      auto it = std::upper_bound(edges.begin(), edges.end(), p);
      auto bin = static_cast<std::size_t>(it - edges.begin()) - 1;
      ++h.counts[std::min(bin, h.counts.size() - 1)];
    }
  }
  return h;
}

std::map<Origin, OriginRate> origin_pass_rates(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw PreconditionError("pass rates of an empty candidate list");
  std::map<Origin, OriginRate> rates;
  for (const auto& c : candidates) {
    auto& r = rates[c.origin];
    ++r.total;
    if (c.passed()) ++r.passed;
  }
  return rates;
}

}  // namespace gift
