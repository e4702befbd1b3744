#pragma once

// Text generation and sequence scoring against a completions-style endpoint.
//
// Two capabilities are kept apart: `complete` samples continuations of a
// prompt, `score` returns per-token logprobs of a fixed continuation under a
// given context. Selection needs the second because a code's perplexity is
// taken under the seed description, which is usually not the prompt the code
// was generated from.
//
// The HTTP request and response shapes are documented in docs/wire_protocol.md.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gift/errors.hpp"

namespace gift {

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason);

struct Completion {
  std::string text;
  std::vector<double> token_logprobs;  // one per generated token; empty unless requested
  FinishReason finish_reason = FinishReason::stop;
};

struct CompletionRequest {
  std::string prompt;
  int n = 1;
  double temperature = 1.0;
  int max_tokens = 512;
  bool want_logprobs = false;
};

struct BackendSpec {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name;
  std::string completions_path = "/v1/completions";
  std::string health_path = "/v1/models";
  std::chrono::milliseconds request_timeout{120000};
  int max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};  // doubled after every failed attempt
  int max_in_flight = 8;
  std::string api_key;  // sent as a bearer token when nonempty
};

class Backend {
 public:
  virtual ~Backend() = default;

  /// Exactly `request.n` completions, in the endpoint's order, or an exception.
  virtual std::vector<Completion> complete(const CompletionRequest& request) = 0;

  /// One logprob per token of `continuation`, each <= 0.
  virtual std::vector<double> score(std::string_view context, std::string_view continuation) = 0;

  /// Throws BackendError when the endpoint is unreachable.
  virtual void probe() {}
};

/// Logprobs above zero by more than this are a protocol violation.
inline constexpr double kLogprobSlack = 1e-9;

// Wire-format helpers, exposed for tests and documentation.
nlohmann::json completion_request_body(const BackendSpec& spec, const CompletionRequest& request);
nlohmann::json score_request_body(const BackendSpec& spec, std::string_view context, std::string_view continuation);
std::vector<Completion> parse_completion_response(const std::string& body, int expected_n, bool want_logprobs);
std::vector<double> parse_score_response(const std::string& body, std::size_t context_length);

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendSpec spec);

  std::vector<Completion> complete(const CompletionRequest& request) override;
  std::vector<double> score(std::string_view context, std::string_view continuation) override;
  void probe() override;

  const BackendSpec& spec() const noexcept { return spec_; }
  /// Requests currently on the wire; never exceeds spec().max_in_flight.
  int in_flight() const noexcept { return in_flight_.load(); }

 private:
  struct Response {
    int status = 0;
    std::string body;
  };

  Response post_with_retries(const nlohmann::json& body);

  BackendSpec spec_;
  std::counting_semaphore<> slots_;
  std::atomic<int> in_flight_{0};
};

/// Deterministic stand-in for an inference endpoint.
///
/// Every answer is a pure function of (prompt, n, temperature bucket, seed).
/// The mock recognises the three prompt shapes rendered by gift::prompts:
///   - code generation: returns function bodies drawn from `solutions` for the
///     entry point named in the prompt's function head. A body is correct with
///     a probability chosen by the docstring's provenance: text starting with
///     "Rewritten:" uses `pass_probability_rewrite`, "Summary:" uses
///     `pass_probability_summary`, anything else `pass_probability_seed`.
///   - summarization: returns "Summary: ..." descriptions.
///   - rewriting: returns "Rewritten: <description> (...)".
/// Token logprobs depend only on (context, token position, token text), so
/// scoring a continuation under its generation prompt reproduces the
/// generation-time logprobs.
struct MockScript {
  struct Solutions {
    std::vector<std::string> correct;
    std::vector<std::string> wrong;
  };

  std::uint64_t seed = 0;
  double pass_probability_seed = 1.0;
  double pass_probability_rewrite = 1.0;
  double pass_probability_summary = 1.0;
  /// When set, every token gets logprob ln(uniform_token_prob).
  std::optional<double> uniform_token_prob;
  bool supports_scoring = true;
  std::map<std::string, Solutions> solutions;

  static MockScript load(const std::filesystem::path& path);
  static MockScript from_json(const nlohmann::json& j);
};

/// The mock's tokenizer: maximal runs of [A-Za-z0-9_], or any single other
/// non-whitespace byte. Whitespace separates tokens and is not a token.
struct TokenSpan {
  std::size_t begin;
  std::size_t end;
};
std::vector<TokenSpan> mock_token_spans(std::string_view text);
std::vector<std::string> mock_tokenize(std::string_view text);

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScript script);

  std::vector<Completion> complete(const CompletionRequest& request) override;
  std::vector<double> score(std::string_view context, std::string_view continuation) override;

  const MockScript& script() const noexcept { return script_; }

  /// Whether completion `index` of a codegen request is drawn from the correct
  /// bodies. Exposed so tests can count expected passes independently of the sandbox.
  bool draws_correct(const CompletionRequest& request, int index) const;

 private:
  std::vector<double> logprobs_for(std::string_view context, std::string_view text) const;

  MockScript script_;
};

}  // namespace gift
