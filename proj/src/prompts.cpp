#include "gift/prompts.hpp"

#include <fstream>

#include <json.hpp>

namespace gift {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view rtrim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

// Multi-line text inside the docstring keeps the 4-space body indent.
std::string indent_continuation(std::string_view text) {
  return replace_all(std::string(text), "\n", "\n    ");
}

}  // namespace

SummaryExamplePool SummaryExamplePool::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open summary pool " + path.string());
  SummaryExamplePool pool;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      pool.examples.push_back({j.at("code").get<std::string>(), j.at("description").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(number, "", std::string("summary pool entry: ") + e.what());
    }
  }
  return pool;
}

void SummaryExamplePool::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& e : examples) out << nlohmann::json{{"code", e.code}, {"description", e.description}}.dump() << '\n';
  if (!out) throw IoError("write failed on " + path.string());
}

std::string render_codegen_prompt(std::string_view description, const SeedTask& task) {
  auto body = trim(description);
  if (body.empty()) throw PreconditionError("description must be nonempty");
  std::string docstring = replace_all(std::string(body), "\"\"\"", "\\\"\\\"\\\"");

  std::string prompt = task.signature;
  prompt += "\n    \"\"\" ";
  prompt += indent_continuation(docstring);
  prompt += '\n';
  for (const auto& example : task.examples_for_prompt) {
    prompt += "    >>> " + indent_continuation(example.input) + '\n';
    prompt += "    " + indent_continuation(example.output) + '\n';
  }
  prompt += "    \"\"\"\n";
  return prompt;
}

std::string render_summarization_prompt(std::string_view code, const SummaryExamplePool& pool, Rng& rng) {
  if (pool.empty()) throw PreconditionError("summary example pool must be nonempty");
  const auto& example = pool.examples[uniform_index(rng, pool.examples.size())];
  std::string prompt = "###Code:\n";
  prompt += rtrim(example.code);
  prompt += "\n###Description of the given code:\n";
  prompt += trim(example.description);
  prompt += "\n\n\n";
  prompt += render_zero_shot_summarization_prompt(code);
  return prompt;
}

std::string render_zero_shot_summarization_prompt(std::string_view code) {
  std::string prompt = "###Code:\n";
  prompt += rtrim(code);
  prompt += "\n###Description of the given code:\n";
  return prompt;
}

std::string render_rewrite_prompt(std::string_view description) {
  std::string prompt = "Rewrite the given Description\n###Description:\n";
  prompt += trim(description);
  prompt += "\n###New Description:\n";
  return prompt;
}

std::string solution_block(const SeedTask& task, std::string_view body) {
  std::string block = task.signature;
  block += "\n    ### BEGIN SOLUTION\n";
  block += rtrim(body);
  block += "\n    ### END SOLUTION";
  return block;
}

std::string program_text(const SeedTask& task, std::string_view body) {
  std::string program = task.signature;
  program += '\n';
  program += body;
  if (program.back() != '\n') program += '\n';
  return program;
}

std::string extract_body(std::string_view completion) {
  std::size_t pos = 0;
  while (pos < completion.size()) {
    std::size_t eol = completion.find('\n', pos);
    std::string_view line = completion.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    if (!trim(line).empty() && line.front() != ' ' && line.front() != '\t') return std::string(completion.substr(0, pos));
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return std::string(completion);
}

std::string extract_description(std::string_view completion) {
  auto text = trim(completion);
  if (auto marker = text.find("###"); marker != std::string_view::npos) text = text.substr(0, marker);
  if (auto para = text.find("\n\n"); para != std::string_view::npos) text = text.substr(0, para);
  return replace_all(std::string(trim(text)), "\"\"\"", "'''");
}

}  // namespace gift
