#pragma once

// Prompt templates for code generation, code summarization and description
// rewriting, plus the helpers that turn raw completions back into code bodies
// and descriptions.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gift/core_model.hpp"
#include "gift/random.hpp"

namespace gift {

struct SummaryExample {
  std::string code;
  std::string description;
};

/// In-context examples for the summarization prompt. One JSON object per line
/// with fields "code" and "description".
struct SummaryExamplePool {
  std::vector<SummaryExample> examples;

  static SummaryExamplePool load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  bool empty() const noexcept { return examples.empty(); }
};

/// Function head followed by a docstring holding `description` and, when the
/// task has them, its example calls:
///
///     def first_repeated_char(str1):
///         """ Write a python function to find the first repeated character in a given string.
///         >>> first_repeated_char("abcabc")
///         "a"
///         """
std::string render_codegen_prompt(std::string_view description, const SeedTask& task);

/// One pool example (chosen with `rng`), then the target code, then the cue
/// "###Description of the given code:".
std::string render_summarization_prompt(std::string_view code, const SummaryExamplePool& pool, Rng& rng);

/// Summarization prompt without an in-context example, used to bootstrap the pool.
std::string render_zero_shot_summarization_prompt(std::string_view code);

std::string render_rewrite_prompt(std::string_view description);

/// Function head plus generated body between "### BEGIN SOLUTION" and
/// "### END SOLUTION" markers; the code shape shown to the summarizer.
std::string solution_block(const SeedTask& task, std::string_view body);

/// Runnable program: function head followed by the generated body.
std::string program_text(const SeedTask& task, std::string_view body);

/// Cuts a code completion at the first non-blank line that is not indented,
/// i.e. where the model left the function body.
std::string extract_body(std::string_view completion);

/// First paragraph of a description completion, stopping at any "###" marker.
std::string extract_description(std::string_view completion);

}  // namespace gift
