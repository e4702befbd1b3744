#pragma once

// Shared domain types and the line-delimited record formats.
//
// Every record file holds one JSON object per line. Field names and their
// required/optional status are listed in docs/record_schema.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gift/errors.hpp"

namespace gift {

enum class Comparison { equality, approx };

struct TestCase {
  std::string call_expression;
  std::string expected;
  Comparison comparison = Comparison::equality;
  double tolerance = 1e-6;  // relative; only used when comparison == approx

  bool operator==(const TestCase&) const = default;
};

/// An input/output pair shown in the prompt docstring (">>> input" then "output").
struct PromptExample {
  std::string input;
  std::string output;

  bool operator==(const PromptExample&) const = default;
};

struct SeedTask {
  std::string id;
  std::string description;
  std::string entry_point;
  std::string signature;  // function head, e.g. "def first_repeated_char(str1):"
  std::vector<TestCase> tests;
  std::vector<PromptExample> examples_for_prompt;

  bool operator==(const SeedTask&) const = default;
};

enum class FailureKind { wrong_output, runtime_error, timeout, resource_limit };

struct TestVerdict {
  bool passed = false;
  std::optional<FailureKind> failure_kind;  // absent iff passed
  std::string detail;

  bool operator==(const TestVerdict&) const = default;
};

struct PassReport {
  std::vector<TestVerdict> per_test;
  bool all_passed = false;
  std::int64_t wall_time_ms = 0;

  bool operator==(const PassReport&) const = default;
};

enum class Origin { gift, rft, rft_rd_seed, rft_rd_rewrite };

struct Candidate {
  std::string code;  // generated function body, continuing the codegen prompt
  std::string seed_id;
  std::string source_description;
  int round = 0;  // 0 = generated directly from the seed description
  Origin origin = Origin::gift;
  std::optional<PassReport> pass_report;
  std::optional<std::vector<double>> token_logprobs;
  std::optional<double> perplexity;
  bool duplicate = false;  // same normalized code already present earlier in the pool

  bool passed() const noexcept { return pass_report && pass_report->all_passed; }
  bool operator==(const Candidate&) const = default;
};

/// Which code a round handed to the summarizer.
enum class SummarySource {
  chosen,          // this round's chosen (passing) code
  previous_round,  // no code passed; reuse the code summarized in the previous round
  first_candidate  // first round with no passing code: its first (failing) candidate
};

struct RoundRecord {
  int round_index = 1;
  std::string input_description;
  std::vector<Candidate> generated_codes;
  std::optional<std::size_t> chosen_index;  // into generated_codes
  std::string summarized_code;
  SummarySource summary_source = SummarySource::chosen;
  std::optional<std::string> summary_description;

  const Candidate* chosen_code() const {
    return chosen_index ? &generated_codes.at(*chosen_index) : nullptr;
  }
  bool operator==(const RoundRecord&) const = default;
};

enum class TerminalReason { completed, backend_error, budget_exhausted };

struct ChainRecord {
  std::string seed_id;
  int iteration = 1;
  std::vector<RoundRecord> rounds;
  TerminalReason terminal_reason = TerminalReason::completed;
  std::string error_detail;

  bool operator==(const ChainRecord&) const = default;
};

enum class PairingMode { seed_only, one_pair, mix_pair };

struct SftRecord {
  std::string description;
  std::string code;
  std::string seed_id;
  PairingMode pairing_mode = PairingMode::seed_only;
  Origin candidate_origin = Origin::gift;
  int iteration = 1;

  bool operator==(const SftRecord&) const = default;
};

std::string_view to_string(Comparison);
std::string_view to_string(FailureKind);
std::string_view to_string(Origin);
std::string_view to_string(SummarySource);
std::string_view to_string(TerminalReason);
std::string_view to_string(PairingMode);

std::optional<Origin> parse_origin(std::string_view);
std::optional<PairingMode> parse_pairing_mode(std::string_view);
std::optional<FailureKind> parse_failure_kind(std::string_view);

// Invariant checks. Each throws InvariantError naming the violated rule.
void validate(const TestCase& test, std::string_view entry_point);
void validate(const SeedTask& task);
void validate(const PassReport& report);
void validate(const Candidate& candidate);
void validate(const RoundRecord& round);
void validate(const ChainRecord& chain);
void validate(const SftRecord& record);

/// Expected perplexity for a logprob list: exp(-mean). Used by the consistency check.
double perplexity_of(std::span<const double> token_logprobs);

// Single-record (de)serialization. parse_record throws ParseError with line 0;
// the file loaders re-throw with the real line number.
template <class Record>
std::string serialize_record(const Record& record);
template <class Record>
Record parse_record(std::string_view line, std::size_t line_number = 0);

/// Loads a seed dataset. Rejects malformed lines, invariant violations and duplicate ids.
std::vector<SeedTask> load_seed_dataset(const std::filesystem::path& path);

template <class Record>
std::vector<Record> load_records(const std::filesystem::path& path);

/// Validates every record first; nothing is written if any record is invalid.
template <class Record>
std::size_t write_records(const std::filesystem::path& path, std::span<const Record> records);

template <class Record>
std::size_t write_records(const std::filesystem::path& path, const std::vector<Record>& records) {
  return write_records(path, std::span<const Record>(records));
}

}  // namespace gift
