#include "gift/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

namespace gift {

using json = nlohmann::json;

namespace {

constexpr double kPerplexitySlack = 1e-9;
constexpr double kLogprobSlack = 1e-9;

struct FieldError {
  std::string field;
  std::string message;
};

template <class T>
T required(const json& obj, std::string_view key, const std::string& prefix) {
  std::string path = prefix + std::string(key);
  if (!obj.is_object()) throw FieldError{prefix, "expected an object"};
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw FieldError{path, "missing required field"};
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FieldError{path, "wrong type"};
  }
}

template <class T>
std::optional<T> optional_field(const json& obj, std::string_view key, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FieldError{prefix + std::string(key), "wrong type"};
  }
}

const json& required_array(const json& obj, std::string_view key, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw FieldError{prefix + std::string(key), "missing required field"};
  if (!it->is_array()) throw FieldError{prefix + std::string(key), "expected an array"};
  return *it;
}

std::string index_path(const std::string& prefix, std::string_view key, std::size_t i) {
  return prefix + std::string(key) + "[" + std::to_string(i) + "].";
}

template <class Enum, class Parser>
Enum required_enum(const json& obj, std::string_view key, const std::string& prefix, Parser parse) {
  auto text = required<std::string>(obj, key, prefix);
  auto value = parse(text);
  if (!value) throw FieldError{prefix + std::string(key), "unknown value '" + text + "'"};
  return *value;
}

std::optional<Comparison> parse_comparison(std::string_view s) {
  if (s == "equality") return Comparison::equality;
  if (s == "approx") return Comparison::approx;
  return std::nullopt;
}

std::optional<SummarySource> parse_summary_source(std::string_view s) {
  if (s == "chosen") return SummarySource::chosen;
  if (s == "previous_round") return SummarySource::previous_round;
  if (s == "first_candidate") return SummarySource::first_candidate;
  return std::nullopt;
}

std::optional<TerminalReason> parse_terminal_reason(std::string_view s) {
  if (s == "completed") return TerminalReason::completed;
  if (s == "backend_error") return TerminalReason::backend_error;
  if (s == "budget_exhausted") return TerminalReason::budget_exhausted;
  return std::nullopt;
}

bool is_identifier_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool references_identifier(std::string_view text, std::string_view name) {
  if (name.empty()) return false;
  for (std::size_t pos = text.find(name); pos != std::string_view::npos; pos = text.find(name, pos + 1)) {
    bool left_ok = pos == 0 || !is_identifier_char(text[pos - 1]);
    std::size_t end = pos + name.size();
    bool right_ok = end == text.size() || !is_identifier_char(text[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

// ---- to JSON ----

json to_json_value(const TestCase& t) {
  json j = {{"call_expression", t.call_expression},
            {"expected", t.expected},
            {"comparison", to_string(t.comparison)}};
  if (t.comparison == Comparison::approx) j["tolerance"] = t.tolerance;
  return j;
}

json to_json_value(const SeedTask& task) {
  json tests = json::array();
  for (const auto& t : task.tests) tests.push_back(to_json_value(t));
  json j = {{"id", task.id},
            {"description", task.description},
            {"entry_point", task.entry_point},
            {"signature", task.signature},
            {"tests", std::move(tests)}};
  if (!task.examples_for_prompt.empty()) {
    json examples = json::array();
    for (const auto& e : task.examples_for_prompt) examples.push_back({{"input", e.input}, {"output", e.output}});
    j["examples_for_prompt"] = std::move(examples);
  }
  return j;
}

json to_json_value(const PassReport& report) {
  json per_test = json::array();
  for (const auto& v : report.per_test) {
    json item = {{"passed", v.passed}, {"detail", v.detail}};
    if (v.failure_kind) item["failure_kind"] = to_string(*v.failure_kind);
    per_test.push_back(std::move(item));
  }
  return {{"per_test", std::move(per_test)}, {"all_passed", report.all_passed}, {"wall_time_ms", report.wall_time_ms}};
}

json to_json_value(const Candidate& c) {
  json j = {{"code", c.code},
            {"seed_id", c.seed_id},
            {"source_description", c.source_description},
            {"round", c.round},
            {"origin", to_string(c.origin)}};
  if (c.pass_report) j["pass_report"] = to_json_value(*c.pass_report);
  if (c.token_logprobs) j["token_logprobs"] = *c.token_logprobs;
  if (c.perplexity) j["perplexity"] = *c.perplexity;
  if (c.duplicate) j["duplicate"] = true;
  return j;
}

json to_json_value(const RoundRecord& r) {
  json codes = json::array();
  for (const auto& c : r.generated_codes) codes.push_back(to_json_value(c));
  json j = {{"round_index", r.round_index},
            {"input_description", r.input_description},
            {"generated_codes", std::move(codes)},
            {"summarized_code", r.summarized_code},
            {"summary_source", to_string(r.summary_source)}};
  if (r.chosen_index) j["chosen_index"] = *r.chosen_index;
  if (r.summary_description) j["summary_description"] = *r.summary_description;
  return j;
}

json to_json_value(const ChainRecord& chain) {
  json rounds = json::array();
  for (const auto& r : chain.rounds) rounds.push_back(to_json_value(r));
  json j = {{"seed_id", chain.seed_id},
            {"iteration", chain.iteration},
            {"rounds", std::move(rounds)},
            {"terminal_reason", to_string(chain.terminal_reason)}};
  if (!chain.error_detail.empty()) j["error_detail"] = chain.error_detail;
  return j;
}

json to_json_value(const SftRecord& r) {
  return {{"description", r.description},
          {"code", r.code},
          {"seed_id", r.seed_id},
          {"pairing_mode", to_string(r.pairing_mode)},
          {"candidate_origin", to_string(r.candidate_origin)},
          {"iteration", r.iteration}};
}

// ---- from JSON ----

TestCase test_case_from(const json& j, const std::string& p) {
  TestCase t;
  t.call_expression = required<std::string>(j, "call_expression", p);
  t.expected = required<std::string>(j, "expected", p);
  if (auto cmp = optional_field<std::string>(j, "comparison", p)) {
    auto parsed = parse_comparison(*cmp);
    if (!parsed) throw FieldError{p + "comparison", "unknown value '" + *cmp + "'"};
    t.comparison = *parsed;
  }
  t.tolerance = optional_field<double>(j, "tolerance", p).value_or(1e-6);
  return t;
}

SeedTask seed_task_from(const json& j, const std::string& p) {
  SeedTask task;
  task.id = required<std::string>(j, "id", p);
  task.description = required<std::string>(j, "description", p);
  task.entry_point = required<std::string>(j, "entry_point", p);
  task.signature = required<std::string>(j, "signature", p);
  const json& tests = required_array(j, "tests", p);
  for (std::size_t i = 0; i < tests.size(); ++i) task.tests.push_back(test_case_from(tests[i], index_path(p, "tests", i)));
  if (auto it = j.find("examples_for_prompt"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw FieldError{p + "examples_for_prompt", "expected an array"};
    for (std::size_t i = 0; i < it->size(); ++i) {
      auto ep = index_path(p, "examples_for_prompt", i);
      task.examples_for_prompt.push_back(
          {required<std::string>((*it)[i], "input", ep), required<std::string>((*it)[i], "output", ep)});
    }
  }
  return task;
}

PassReport pass_report_from(const json& j, const std::string& p) {
  PassReport report;
  const json& per_test = required_array(j, "per_test", p);
  for (std::size_t i = 0; i < per_test.size(); ++i) {
    auto ip = index_path(p, "per_test", i);
    TestVerdict v;
    v.passed = required<bool>(per_test[i], "passed", ip);
    v.detail = optional_field<std::string>(per_test[i], "detail", ip).value_or("");
    if (auto kind = optional_field<std::string>(per_test[i], "failure_kind", ip)) {
      v.failure_kind = parse_failure_kind(*kind);
      if (!v.failure_kind) throw FieldError{ip + "failure_kind", "unknown value '" + *kind + "'"};
    }
    report.per_test.push_back(std::move(v));
  }
  report.all_passed = required<bool>(j, "all_passed", p);
  report.wall_time_ms = required<std::int64_t>(j, "wall_time_ms", p);
  return report;
}

Candidate candidate_from(const json& j, const std::string& p) {
  Candidate c;
  c.code = required<std::string>(j, "code", p);
  c.seed_id = required<std::string>(j, "seed_id", p);
  c.source_description = required<std::string>(j, "source_description", p);
  c.round = required<int>(j, "round", p);
  c.origin = required_enum<Origin>(j, "origin", p, parse_origin);
  if (auto it = j.find("pass_report"); it != j.end() && !it->is_null()) c.pass_report = pass_report_from(*it, p + "pass_report.");
  c.token_logprobs = optional_field<std::vector<double>>(j, "token_logprobs", p);
  c.perplexity = optional_field<double>(j, "perplexity", p);
  c.duplicate = optional_field<bool>(j, "duplicate", p).value_or(false);
  return c;
}

RoundRecord round_from(const json& j, const std::string& p) {
  RoundRecord r;
  r.round_index = required<int>(j, "round_index", p);
  r.input_description = required<std::string>(j, "input_description", p);
  const json& codes = required_array(j, "generated_codes", p);
  for (std::size_t i = 0; i < codes.size(); ++i) r.generated_codes.push_back(candidate_from(codes[i], index_path(p, "generated_codes", i)));
  r.chosen_index = optional_field<std::size_t>(j, "chosen_index", p);
  r.summarized_code = required<std::string>(j, "summarized_code", p);
  r.summary_source = required_enum<SummarySource>(j, "summary_source", p, parse_summary_source);
  r.summary_description = optional_field<std::string>(j, "summary_description", p);
  return r;
}

ChainRecord chain_from(const json& j, const std::string& p) {
  ChainRecord chain;
  chain.seed_id = required<std::string>(j, "seed_id", p);
  chain.iteration = required<int>(j, "iteration", p);
  const json& rounds = required_array(j, "rounds", p);
  for (std::size_t i = 0; i < rounds.size(); ++i) chain.rounds.push_back(round_from(rounds[i], index_path(p, "rounds", i)));
  chain.terminal_reason = required_enum<TerminalReason>(j, "terminal_reason", p, parse_terminal_reason);
  chain.error_detail = optional_field<std::string>(j, "error_detail", p).value_or("");
  return chain;
}

SftRecord sft_from(const json& j, const std::string& p) {
  SftRecord r;
  r.description = required<std::string>(j, "description", p);
  r.code = required<std::string>(j, "code", p);
  r.seed_id = required<std::string>(j, "seed_id", p);
  r.pairing_mode = required_enum<PairingMode>(j, "pairing_mode", p, parse_pairing_mode);
  r.candidate_origin = required_enum<Origin>(j, "candidate_origin", p, parse_origin);
  r.iteration = required<int>(j, "iteration", p);
  return r;
}

template <class Record>
Record record_from(const json& j) {
  if constexpr (std::is_same_v<Record, SeedTask>) return seed_task_from(j, "");
  else if constexpr (std::is_same_v<Record, Candidate>) return candidate_from(j, "");
  else if constexpr (std::is_same_v<Record, ChainRecord>) return chain_from(j, "");
  else if constexpr (std::is_same_v<Record, SftRecord>) return sft_from(j, "");
  else static_assert(sizeof(Record) == 0, "unsupported record type");
}

template <class Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(number, line);
  }
  if (in.bad()) throw IoError("read failed on " + path.string());
}

}  // namespace

std::string_view to_string(Comparison c) { return c == Comparison::equality ? "equality" : "approx"; }

std::string_view to_string(FailureKind k) {
  switch (k) {
    case FailureKind::wrong_output: return "wrong_output";
    case FailureKind::runtime_error: return "runtime_error";
    case FailureKind::timeout: return "timeout";
    case FailureKind::resource_limit: return "resource_limit";
  }
  return "unknown";
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::gift: return "gift";
    case Origin::rft: return "rft";
    case Origin::rft_rd_seed: return "rft_rd_seed";
    case Origin::rft_rd_rewrite: return "rft_rd_rewrite";
  }
  return "unknown";
}

std::string_view to_string(SummarySource s) {
  switch (s) {
    case SummarySource::chosen: return "chosen";
    case SummarySource::previous_round: return "previous_round";
    case SummarySource::first_candidate: return "first_candidate";
  }
  return "unknown";
}

std::string_view to_string(TerminalReason r) {
  switch (r) {
    case TerminalReason::completed: return "completed";
    case TerminalReason::backend_error: return "backend_error";
    case TerminalReason::budget_exhausted: return "budget_exhausted";
  }
  return "unknown";
}

std::string_view to_string(PairingMode m) {
  switch (m) {
    case PairingMode::seed_only: return "seed_only";
    case PairingMode::one_pair: return "one_pair";
    case PairingMode::mix_pair: return "mix_pair";
  }
  return "unknown";
}

std::optional<Origin> parse_origin(std::string_view s) {
  if (s == "gift") return Origin::gift;
  if (s == "rft") return Origin::rft;
  if (s == "rft_rd_seed") return Origin::rft_rd_seed;
  if (s == "rft_rd_rewrite") return Origin::rft_rd_rewrite;
  return std::nullopt;
}

std::optional<PairingMode> parse_pairing_mode(std::string_view s) {
  if (s == "seed_only") return PairingMode::seed_only;
  if (s == "one_pair") return PairingMode::one_pair;
  if (s == "mix_pair") return PairingMode::mix_pair;
  return std::nullopt;
}

std::optional<FailureKind> parse_failure_kind(std::string_view s) {
  if (s == "wrong_output") return FailureKind::wrong_output;
  if (s == "runtime_error") return FailureKind::runtime_error;
  if (s == "timeout") return FailureKind::timeout;
  if (s == "resource_limit") return FailureKind::resource_limit;
  return std::nullopt;
}

void validate(const TestCase& test, std::string_view entry_point) {
  if (!references_identifier(test.call_expression, entry_point))
    throw InvariantError("call_expression must reference entry_point '" + std::string(entry_point) + "'");
  if (test.comparison == Comparison::approx && !(test.tolerance > 0.0))
    throw InvariantError("approx tolerance must be positive");
}

void validate(const SeedTask& task) {
  if (task.id.empty()) throw InvariantError("id must be nonempty");
  if (task.description.empty()) throw InvariantError("description must be nonempty");
  if (task.entry_point.empty()) throw InvariantError("entry_point must be nonempty");
  if (task.tests.empty()) throw InvariantError("tests must be nonempty");
  for (const auto& t : task.tests) validate(t, task.entry_point);
}

void validate(const PassReport& report) {
  bool every = std::all_of(report.per_test.begin(), report.per_test.end(), [](const TestVerdict& v) { return v.passed; });
  if (report.all_passed != every) throw InvariantError("all_passed must equal the conjunction of per_test.passed");
  for (const auto& v : report.per_test) {
    if (v.passed == v.failure_kind.has_value())
      throw InvariantError("failure_kind must be present exactly when a test fails");
  }
}

double perplexity_of(std::span<const double> token_logprobs) {
  double sum = std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
  return std::exp(-sum / static_cast<double>(token_logprobs.size()));
}

void validate(const Candidate& c) {
  if (c.round < 0) throw InvariantError("round must be >= 0");
  if (c.pass_report) validate(*c.pass_report);
  if (c.token_logprobs) {
    for (double lp : *c.token_logprobs) {
      if (!std::isfinite(lp) || lp > kLogprobSlack) throw InvariantError("token_logprobs must be finite and <= 0");
    }
  }
  if (c.perplexity) {
    if (!(*c.perplexity > 0.0) || !std::isfinite(*c.perplexity)) throw InvariantError("perplexity must be a positive finite number");
    if (c.token_logprobs) {
      if (c.token_logprobs->empty()) throw InvariantError("perplexity present with empty token_logprobs");
      double expected = perplexity_of(*c.token_logprobs);
      if (std::abs(expected - *c.perplexity) > kPerplexitySlack)
        throw InvariantError("perplexity does not equal exp(-mean(token_logprobs))");
    }
  }
}

void validate(const RoundRecord& r) {
  if (r.round_index < 1) throw InvariantError("round_index must be >= 1");
  for (const auto& c : r.generated_codes) validate(c);
  if (r.chosen_index) {
    if (*r.chosen_index >= r.generated_codes.size()) throw InvariantError("chosen_index out of range");
    if (!r.generated_codes[*r.chosen_index].passed()) throw InvariantError("chosen_code must have passed all tests");
  }
}

void validate(const ChainRecord& chain) {
  if (chain.iteration < 1) throw InvariantError("iteration must be >= 1");
  for (std::size_t i = 0; i < chain.rounds.size(); ++i) {
    if (chain.rounds[i].round_index != static_cast<int>(i) + 1)
      throw InvariantError("round indices must be consecutive from 1");
    validate(chain.rounds[i]);
  }
}

void validate(const SftRecord& r) {
  if (r.description.empty()) throw InvariantError("description must be nonempty");
  if (r.code.empty()) throw InvariantError("code must be nonempty");
  if (r.iteration < 1) throw InvariantError("iteration must be >= 1");
}

template <class Record>
std::string serialize_record(const Record& record) {
  return to_json_value(record).dump();
}

template <class Record>
Record parse_record(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_number, "", std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_number, "", "expected a JSON object");
  try {
    return record_from<Record>(j);
  } catch (const FieldError& e) {
    throw ParseError(line_number, e.field, e.message);
  }
}

std::vector<SeedTask> load_seed_dataset(const std::filesystem::path& path) {
  std::vector<SeedTask> tasks;
  std::map<std::string, std::size_t> first_line;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    SeedTask task = parse_record<SeedTask>(line, number);
    try {
      validate(task);
    } catch (const InvariantError& e) {
      throw ParseError(number, "", e.what());
    }
    auto [it, inserted] = first_line.emplace(task.id, number);
    if (!inserted) {
      throw ParseError(number, "id",
                       "duplicate id '" + task.id + "' at lines " + std::to_string(it->second) + " and " +
                           std::to_string(number));
    }
    tasks.push_back(std::move(task));
  });
  return tasks;
}

template <class Record>
std::vector<Record> load_records(const std::filesystem::path& path) {
  std::vector<Record> records;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    Record r = parse_record<Record>(line, number);
    try {
      validate(r);
    } catch (const InvariantError& e) {
      throw ParseError(number, "", e.what());
    }
    records.push_back(std::move(r));
  });
  return records;
}

template <class Record>
std::size_t write_records(const std::filesystem::path& path, std::span<const Record> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      validate(records[i]);
    } catch (const InvariantError& e) {
      throw InvariantError("record " + std::to_string(i) + " rejected: " + e.what());
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << serialize_record(r) << '\n';
  out.flush();
  if (!out) throw IoError("write failed on " + path.string());
  return records.size();
}

#define GIFT_INSTANTIATE_RECORD(T)                                                   \
  template std::string serialize_record<T>(const T&);                                \
  template T parse_record<T>(std::string_view, std::size_t);                         \
  template std::vector<T> load_records<T>(const std::filesystem::path&);             \
  template std::size_t write_records<T>(const std::filesystem::path&, std::span<const T>);

GIFT_INSTANTIATE_RECORD(SeedTask)
GIFT_INSTANTIATE_RECORD(Candidate)
GIFT_INSTANTIATE_RECORD(ChainRecord)
GIFT_INSTANTIATE_RECORD(SftRecord)

#undef GIFT_INSTANTIATE_RECORD

}  // namespace gift
