#include "gift/backend.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "gift/random.hpp"

namespace gift {

using json = nlohmann::json;

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

// ---------------------------------------------------------------------------
// Wire format

json completion_request_body(const BackendSpec& spec, const CompletionRequest& request) {
  json body = {{"model", spec.model_name},
               {"prompt", request.prompt},
               {"n", request.n},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens},
               {"echo", false}};
  if (request.want_logprobs) body["logprobs"] = 1;
  return body;
}

json score_request_body(const BackendSpec& spec, std::string_view context, std::string_view continuation) {
  std::string prompt;
  prompt.reserve(context.size() + continuation.size());
  prompt.append(context).append(continuation);
  return {{"model", spec.model_name},
          {"prompt", std::move(prompt)},
          {"n", 1},
          {"temperature", 1.0},
          {"max_tokens", 0},
          {"logprobs", 1},
          {"echo", true}};
}

namespace {

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
    throw ProtocolError("response is not valid JSON", body);
  }
}

double checked_logprob(const json& value, const std::string& body) {
  if (!value.is_number()) throw ProtocolError("token logprob is not a number", body);
  double lp = value.get<double>();
  if (!std::isfinite(lp) || lp > kLogprobSlack) throw ProtocolError("token logprob outside (-inf, 0]", body);
  return lp;
}

FinishReason finish_reason_from(const json& choice) {
  auto it = choice.find("finish_reason");
  if (it == choice.end() || it->is_null()) return FinishReason::stop;
  if (!it->is_string()) return FinishReason::error;
  const auto& s = it->get_ref<const std::string&>();
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  return FinishReason::error;
}

}  // namespace

std::vector<Completion> parse_completion_response(const std::string& body, int expected_n, bool want_logprobs) {
  json j = parse_body(body);
  auto choices = j.find("choices");
  if (!j.is_object() || choices == j.end() || !choices->is_array())
    throw ProtocolError("response has no 'choices' array", body);
  if (static_cast<int>(choices->size()) != expected_n)
    throw ProtocolError("expected " + std::to_string(expected_n) + " choices, got " + std::to_string(choices->size()),
                        body);

  std::vector<Completion> out;
  out.reserve(choices->size());
  for (const auto& choice : *choices) {
    Completion c;
    auto text = choice.find("text");
    if (text == choice.end() || !text->is_string()) throw ProtocolError("choice has no 'text'", body);
    c.text = text->get<std::string>();
    c.finish_reason = finish_reason_from(choice);
    if (want_logprobs) {
      auto lp = choice.find("logprobs");
      if (lp == choice.end() || !lp->is_object()) throw ProtocolError("choice has no 'logprobs' object", body);
      auto token_lps = lp->find("token_logprobs");
      if (token_lps == lp->end() || !token_lps->is_array()) throw ProtocolError("logprobs has no 'token_logprobs'", body);
      for (const auto& v : *token_lps) c.token_logprobs.push_back(checked_logprob(v, body));
      if (auto tokens = lp->find("tokens"); tokens != lp->end() && tokens->is_array() &&
                                              tokens->size() != token_lps->size())
        throw ProtocolError("token count does not match logprob count", body);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> parse_score_response(const std::string& body, std::size_t context_length) {
  json j = parse_body(body);
  auto choices = j.find("choices");
  if (!j.is_object() || choices == j.end() || !choices->is_array() || choices->size() != 1)
    throw ProtocolError("scoring response must have exactly one choice", body);
  const json& choice = (*choices)[0];
  auto lp = choice.find("logprobs");
  if (lp == choice.end() || !lp->is_object()) throw CapabilityError("endpoint did not return echoed prompt logprobs");
  auto offsets = lp->find("text_offset");
  auto token_lps = lp->find("token_logprobs");
  if (offsets == lp->end() || !offsets->is_array() || token_lps == lp->end() || !token_lps->is_array())
    throw CapabilityError("endpoint did not return token offsets for echoed prompt");
  if (offsets->size() != token_lps->size()) throw ProtocolError("text_offset and token_logprobs differ in length", body);
  const json* tokens = nullptr;
  if (auto t = lp->find("tokens"); t != lp->end() && t->is_array()) {
    if (t->size() != token_lps->size()) throw ProtocolError("tokens and token_logprobs differ in length", body);
    tokens = &*t;
  }

  std::vector<double> out;
  for (std::size_t i = 0; i < offsets->size(); ++i) {
    if (!(*offsets)[i].is_number_integer()) throw ProtocolError("text_offset entry is not an integer", body);
    auto begin = (*offsets)[i].get<std::size_t>();
    std::size_t end = begin;
    if (tokens && (*tokens)[i].is_string()) end = begin + (*tokens)[i].get_ref<const std::string&>().size();
    // A token straddling the boundary belongs to the continuation.
    bool in_continuation = tokens ? end > context_length : begin >= context_length;
    if (in_continuation) out.push_back(checked_logprob((*token_lps)[i], body));
  }
  if (out.empty()) throw ProtocolError("no echoed tokens fall inside the continuation", body);
  return out;
}

// ---------------------------------------------------------------------------
// HTTP client

HttpBackend::HttpBackend(BackendSpec spec)
    : spec_(std::move(spec)), slots_(spec_.max_in_flight >= 1 ? spec_.max_in_flight : 1) {
  if (spec_.max_in_flight < 1) throw PreconditionError("max_in_flight must be >= 1");
  if (spec_.max_retries < 0) throw PreconditionError("max_retries must be >= 0");
}

namespace {

void configure(httplib::Client& client, const BackendSpec& spec) {
  auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(spec.request_timeout);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  if (!spec.api_key.empty()) client.set_bearer_token_auth(spec.api_key);
}

}  // namespace

HttpBackend::Response HttpBackend::post_with_retries(const json& body) {
  const std::string payload = body.dump();
  std::string last_error;
  auto backoff = spec_.retry_backoff;
  for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
    {
      slots_.acquire();
      ++in_flight_;
      struct Release {
        HttpBackend* self;
        ~Release() {
          --self->in_flight_;
          self->slots_.release();
        }
      } release{this};

      httplib::Client client(spec_.base_url);
      configure(client, spec_);
      auto result = client.Post(spec_.completions_path, payload, "application/json");
      if (!result) {
        last_error = httplib::to_string(result.error());
      } else if (result->status >= 500 || result->status == 429) {
        last_error = "HTTP " + std::to_string(result->status);
      } else {
        return {result->status, result->body};
      }
    }
    if (attempt < spec_.max_retries) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw BackendError("request to " + spec_.base_url + spec_.completions_path + " failed after " +
                     std::to_string(spec_.max_retries + 1) + " attempts: " + last_error);
}

std::vector<Completion> HttpBackend::complete(const CompletionRequest& request) {
  if (request.n < 1) throw PreconditionError("n must be >= 1");
  if (!(request.temperature > 0.0)) throw PreconditionError("temperature must be > 0");
  Response response = post_with_retries(completion_request_body(spec_, request));
  if (response.status != 200)
    throw BackendError("completion request rejected with HTTP " + std::to_string(response.status) + ": " +
                       response.body.substr(0, 500));
  return parse_completion_response(response.body, request.n, request.want_logprobs);
}

std::vector<double> HttpBackend::score(std::string_view context, std::string_view continuation) {
  if (continuation.empty()) throw PreconditionError("continuation must be nonempty");
  Response response = post_with_retries(score_request_body(spec_, context, continuation));
  if (response.status == 400 || response.status == 404 || response.status == 422 || response.status == 501)
    throw CapabilityError("endpoint rejected echo scoring (HTTP " + std::to_string(response.status) +
                          "); fall back to generation-time logprobs");
  if (response.status != 200)
    throw BackendError("scoring request failed with HTTP " + std::to_string(response.status));
  return parse_score_response(response.body, context.size());
}

void HttpBackend::probe() {
  httplib::Client client(spec_.base_url);
  configure(client, spec_);
  auto result = client.Get(spec_.health_path);
  if (!result) throw BackendError("backend unreachable at " + spec_.base_url + ": " + httplib::to_string(result.error()));
  if (result->status >= 500) throw BackendError("backend health probe returned HTTP " + std::to_string(result->status));
}

// ---------------------------------------------------------------------------
// Mock backend

MockScript MockScript::from_json(const json& j) {
  MockScript s;
  s.seed = j.value("seed", std::uint64_t{0});
  if (auto p = j.find("pass_probability"); p != j.end()) {
    s.pass_probability_seed = p->value("seed", 1.0);
    s.pass_probability_rewrite = p->value("rewrite", 1.0);
    s.pass_probability_summary = p->value("summary", 1.0);
  }
  if (auto u = j.find("uniform_token_prob"); u != j.end() && !u->is_null()) {
    double p = u->get<double>();
    if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("uniform_token_prob must be in (0, 1]");
    s.uniform_token_prob = p;
  }
  s.supports_scoring = j.value("supports_scoring", true);
  if (auto sol = j.find("solutions"); sol != j.end()) {
    for (const auto& [entry, bodies] : sol->items()) {
      Solutions solutions;
      solutions.correct = bodies.value("correct", std::vector<std::string>{});
      solutions.wrong = bodies.value("wrong", std::vector<std::string>{});
      s.solutions.emplace(entry, std::move(solutions));
    }
  }
  return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mock script " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(0, "", "mock script " + path.string() + ": " + e.what());
  }
}

std::vector<TokenSpan> mock_token_spans(std::string_view text) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::vector<TokenSpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
    } else if (is_word(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_word(text[j])) ++j;
      spans.push_back({i, j});
      i = j;
    } else {
      spans.push_back({i, i + 1});
      ++i;
    }
  }
  return spans;
}

std::vector<std::string> mock_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  for (auto span : mock_token_spans(text)) tokens.emplace_back(text.substr(span.begin, span.end - span.begin));
  return tokens;
}

namespace {

enum class PromptKind { codegen, summarization, rewrite, other };

constexpr std::string_view kSummaryCue = "###Description of the given code:";
constexpr std::string_view kRewriteHead = "Rewrite the given Description";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

PromptKind classify(std::string_view prompt) {
  if (prompt.starts_with(kRewriteHead)) return PromptKind::rewrite;
  if (trim(prompt).ends_with(kSummaryCue)) return PromptKind::summarization;
  if (prompt.starts_with("def ") && prompt.find('(') != std::string_view::npos) return PromptKind::codegen;
  return PromptKind::other;
}

std::string function_name(std::string_view code) {
  auto pos = code.find("def ");
  if (pos == std::string_view::npos) return {};
  auto open = code.find('(', pos);
  if (open == std::string_view::npos) return {};
  return std::string(trim(code.substr(pos + 4, open - pos - 4)));
}

std::string docstring_text(std::string_view prompt) {
  auto open = prompt.find("\"\"\"");
  if (open == std::string_view::npos) return {};
  auto rest = prompt.substr(open + 3);
  auto close = rest.find("\"\"\"");
  auto examples = rest.find(">>>");
  auto end = std::min(close, examples);
  return std::string(trim(rest.substr(0, end)));
}

std::string_view last_code_block(std::string_view prompt) {
  constexpr std::string_view kCode = "###Code:";
  auto pos = prompt.rfind(kCode);
  if (pos == std::string_view::npos) return prompt;
  return prompt.substr(pos + kCode.size());
}

std::string hex8(std::uint64_t h) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(h >> 32));
  return buf;
}

std::string ensure_newline(std::string s) {
  if (s.empty() || s.back() != '\n') s.push_back('\n');
  return s;
}

}  // namespace

MockBackend::MockBackend(MockScript script) : script_(std::move(script)) {}

namespace {

std::uint64_t request_hash(const MockScript& script, const CompletionRequest& request, int index) {
  auto bucket = static_cast<std::uint64_t>(std::llround(request.temperature * 100.0));
  std::uint64_t h = hash_combine(mix64(script.seed), fnv1a(request.prompt));
  h = hash_combine(h, static_cast<std::uint64_t>(request.n));
  h = hash_combine(h, bucket);
  return hash_combine(h, static_cast<std::uint64_t>(index));
}

double pass_probability(const MockScript& script, std::string_view description) {
  if (description.starts_with("Rewritten:")) return script.pass_probability_rewrite;
  if (description.starts_with("Summary:")) return script.pass_probability_summary;
  return script.pass_probability_seed;
}

}  // namespace

bool MockBackend::draws_correct(const CompletionRequest& request, int index) const {
  if (classify(request.prompt) != PromptKind::codegen) return false;
  auto it = script_.solutions.find(function_name(request.prompt));
  if (it == script_.solutions.end() || it->second.correct.empty()) return false;
  double p = pass_probability(script_, docstring_text(request.prompt));
  return unit_from_hash(request_hash(script_, request, index)) < p;
}

std::vector<double> MockBackend::logprobs_for(std::string_view context, std::string_view text) const {
  auto tokens = mock_tokenize(text);
  std::vector<double> out;
  out.reserve(tokens.size());
  if (script_.uniform_token_prob) {
    out.assign(tokens.size(), std::log(*script_.uniform_token_prob));
    return out;
  }
  const std::uint64_t context_hash = hash_combine(mix64(script_.seed), fnv1a(context));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::uint64_t h = hash_combine(hash_combine(context_hash, t), fnv1a(tokens[t]));
    out.push_back(std::log(0.05 + 0.9 * unit_from_hash(h)));
  }
  return out;
}

std::vector<Completion> MockBackend::complete(const CompletionRequest& request) {
  if (request.n < 1) throw PreconditionError("n must be >= 1");
  if (!(request.temperature > 0.0)) throw PreconditionError("temperature must be > 0");

  static const std::vector<std::string_view> kPhrases = {
      "Write a python function", "Implement a function", "Create a function",
      "Define a routine",        "Write a helper",       "Write code"};

  const PromptKind kind = classify(request.prompt);
  std::vector<Completion> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    const std::uint64_t h = request_hash(script_, request, i);
    Completion c;
    switch (kind) {
      case PromptKind::codegen: {
        auto it = script_.solutions.find(function_name(request.prompt));
        const MockScript::Solutions* sol = it == script_.solutions.end() ? nullptr : &it->second;
        std::string body;
        if (draws_correct(request, i)) {
          body = sol->correct[mix64(h) % sol->correct.size()];
        } else if (sol && !sol->wrong.empty()) {
          body = sol->wrong[mix64(h) % sol->wrong.size()];
        } else {
          body = "    return '__mock_wrong_answer__'";
        }
        c.text = ensure_newline(std::move(body)) + "    # draw " + hex8(h) + "\n";
        break;
      }
      case PromptKind::summarization: {
        std::string name = function_name(last_code_block(request.prompt));
        c.text = "Summary: " + std::string(kPhrases[mix64(h) % kPhrases.size()]) + " named " +
                 (name.empty() ? std::string("solution") : name) + " that returns the requested result (" +
                 hex8(h) + ").";
        break;
      }
      case PromptKind::rewrite: {
        auto body = request.prompt.substr(request.prompt.find("###Description:") + 15);
        auto end = body.find("###New Description:");
        c.text = "Rewritten: " + std::string(trim(body.substr(0, end))) + " (" + hex8(h) + ")";
        break;
      }
      case PromptKind::other:
        c.text = "mock completion " + hex8(h);
        break;
    }

    auto spans = mock_token_spans(c.text);
    if (request.max_tokens >= 0 && spans.size() > static_cast<std::size_t>(request.max_tokens)) {
      c.text = request.max_tokens == 0 ? std::string() : c.text.substr(0, spans[request.max_tokens - 1].end);
      c.finish_reason = FinishReason::length;
    }
    if (request.want_logprobs) c.token_logprobs = logprobs_for(request.prompt, c.text);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> MockBackend::score(std::string_view context, std::string_view continuation) {
  if (continuation.empty()) throw PreconditionError("continuation must be nonempty");
  if (!script_.supports_scoring) throw CapabilityError("mock configured without scoring support");
  auto lps = logprobs_for(context, continuation);
  if (lps.empty()) throw PreconditionError("continuation has no tokens");
  return lps;
}

}  // namespace gift
