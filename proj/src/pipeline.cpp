#include "gift/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "gift/metrics.hpp"
#include "gift/parallel.hpp"

namespace gift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string to_hex(const unsigned char* bytes, unsigned int n) {
  std::ostringstream out;
  for (unsigned int i = 0; i < n; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(bytes[i]);
  return out.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  if (!out) throw IoError("cannot write " + path.string());
}

// Appends one line per record and flushes, so a crash loses at most the line
// being written.
class AppendLog {
 public:
  AppendLog(const fs::path& path, bool truncate)
      : out_(path, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app)), path_(path) {
    if (!out_) throw IoError("cannot open " + path.string());
  }

  void append(const std::vector<std::string>& lines) {
    std::lock_guard lock(mutex_);
    for (const auto& line : lines) out_ << line << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed on " + path_.string());
  }

 private:
  std::mutex mutex_;
  std::ofstream out_;
  fs::path path_;
};

// Records from a resume log. A malformed line can only be the last one, left
// by an interrupted write; it is dropped.
template <class Record>
std::vector<Record> read_log(const fs::path& path) {
  std::vector<Record> records;
  std::ifstream in(path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      records.push_back(parse_record<Record>(line, number));
    } catch (const ParseError& e) {
      spdlog::warn("{}: dropping unreadable resume entry ({})", path.string(), e.what());
    }
  }
  return records;
}

json pass_rates_json(std::span<const Candidate> candidates) {
  json j = json::object();
  if (candidates.empty()) return j;
  for (const auto& [origin, rate] : origin_pass_rates(candidates))
    j[std::string(to_string(origin))] = {{"passed", rate.passed}, {"total", rate.total}, {"rate", rate.rate()}};
  return j;
}

std::string manifest_id_for(const RunConfig& config) {
  json identity = {{"config", config_snapshot(config)},
                   {"seed_dataset", sha256_file(config.seed_dataset)},
                   {"summary_pool", sha256_file(config.summary_pool)},
                   {"iteration", config.iteration}};
  return sha256_hex(identity.dump());
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw InternalConsistencyError("sha256 failed");
  return to_hex(digest, length);
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

SelectionOutcome select_and_emit(std::span<const SeedTask> seeds, std::span<const HarvestedPool> pools,
                                 Backend& scorer, const RunConfig& config) {
  if (seeds.size() != pools.size()) throw PreconditionError("one pool per seed is required");
  SelectionOutcome outcome;
  const PairingOptions pairing{static_cast<std::size_t>(config.paired_descriptions),
                               static_cast<std::size_t>(config.codes_per_paired_description), config.iteration};
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const SeedTask& seed = seeds[s];
    if (pools[s].seed_id != seed.id) throw PreconditionError("pools must follow seed order");
    WeightedPool weighted = score_pool(seed, pools[s], scorer, config.weight_temperature, config.sandbox.parallelism);
    if (weighted.empty()) {
      spdlog::warn("seed {}: no passing code; excluded from this iteration's SFT data", seed.id);
      outcome.excluded_seeds.push_back(seed.id);
      outcome.pools.push_back(std::move(weighted));
      continue;
    }
    Rng select_rng = derive_stream(config.random_seed, seed.id, "select", static_cast<std::uint64_t>(config.iteration));
    Rng pair_rng = derive_stream(config.random_seed, seed.id, "pairing", static_cast<std::uint64_t>(config.iteration));
    auto selected = select_k(weighted, static_cast<std::size_t>(config.codes_per_seed), select_rng);

    std::vector<Candidate> distinct;
    for (const auto& e : weighted.entries) distinct.push_back(e.candidate);
    auto records = emit_sft(seed, selected, config.pairing_mode, distinct, pair_rng, pairing);
    outcome.records.insert(outcome.records.end(), std::make_move_iterator(records.begin()),
                           std::make_move_iterator(records.end()));
    outcome.pools.push_back(std::move(weighted));
  }
  return outcome;
}

IterationResult run_iteration(const RunConfig& config, Backend& backend, Backend& scorer, CodeExecutor& executor,
                              const std::atomic<bool>* stop) {
  if (auto problems = config_problems(config); !problems.empty()) throw ConfigError(problems);
  if (config.output_dir.empty()) throw PreconditionError("output_dir must be set");

  const auto seeds = load_seed_dataset(config.seed_dataset);
  const auto summary_pool = SummaryExamplePool::load(config.summary_pool);
  if (summary_pool.empty()) throw PreconditionError("summary example pool must be nonempty");

  backend.probe();
  if (&scorer != &backend) scorer.probe();

  const fs::path out = config.output_dir;
  fs::create_directories(out);
  const std::string manifest_id = manifest_id_for(config);
  const fs::path state_path = out / "run_state.json";

  bool resuming = false;
  if (fs::exists(state_path)) {
    auto state = json::parse(read_file(state_path), nullptr, false);
    resuming = state.is_object() && state.value("manifest_id", "") == manifest_id;
    if (!resuming) spdlog::info("existing run state belongs to a different configuration; starting over");
  }
  write_file(state_path, json{{"manifest_id", manifest_id}}.dump(2) + "\n");

  std::map<std::string, ChainRecord> chains;
  std::map<std::string, std::vector<Candidate>> rft;
  if (resuming) {
    for (auto& c : read_log<ChainRecord>(out / "chains.partial.jsonl"))
      if (c.iteration == config.iteration) chains[c.seed_id] = std::move(c);
    for (auto& c : read_log<Candidate>(out / "rft.partial.jsonl")) rft[c.seed_id].push_back(std::move(c));
    spdlog::info("resuming: {} chains and {} RFT seeds already logged", chains.size(), rft.size());
  }

  AppendLog chain_log(out / "chains.partial.jsonl", !resuming);
  AppendLog rft_log(out / "rft.partial.jsonl", !resuming);

  std::vector<const SeedTask*> pending;
  for (const auto& seed : seeds)
    if (!chains.contains(seed.id)) pending.push_back(&seed);

  std::mutex results_mutex;
  const auto workers = static_cast<std::size_t>(config.chain_parallelism);
  parallel_for(pending.size(), workers, [&](std::size_t i) {
    if (stop && stop->load()) return;
    ChainRecord chain = run_chain(*pending[i], config, backend, executor, summary_pool, stop);
    // A chain cut short by the stop flag is not logged, so a rerun redoes it.
    if (stop && stop->load()) return;
    validate(chain);
    chain_log.append({serialize_record(chain)});
    std::lock_guard lock(results_mutex);
    chains[chain.seed_id] = std::move(chain);
  });

  if (config.include_rft_pool) {
    std::vector<const SeedTask*> rft_pending;
    for (const auto& seed : seeds)
      if (!rft.contains(seed.id)) rft_pending.push_back(&seed);
    parallel_for(rft_pending.size(), workers, [&](std::size_t i) {
      if (stop && stop->load()) return;
      auto result = run_rft(*rft_pending[i], config, backend, executor);
      if (result.budget_exhausted || (stop && stop->load())) return;
      std::vector<std::string> lines;
      for (const auto& c : result.candidates) lines.push_back(serialize_record(c));
      rft_log.append(lines);
      std::lock_guard lock(results_mutex);
      rft[rft_pending[i]->id] = std::move(result.candidates);
    });
  }

  IterationResult result;
  if (stop && stop->load()) {
    result.interrupted = true;
    result.manifest = {{"manifest_id", manifest_id}, {"complete", false}};
    spdlog::warn("interrupted; partial logs kept in {}", out.string());
    return result;
  }

  std::vector<ChainRecord> ordered_chains;
  std::vector<Candidate> ordered_rft;
  for (const auto& seed : seeds) {
    if (auto it = chains.find(seed.id); it != chains.end()) ordered_chains.push_back(it->second);
    if (auto it = rft.find(seed.id); it != rft.end())
      ordered_rft.insert(ordered_rft.end(), it->second.begin(), it->second.end());
  }

  auto pools = harvest_pool(seeds, ordered_chains, config.include_rft_pool, ordered_rft);
  auto selection = select_and_emit(seeds, pools, scorer, config);

  std::vector<Candidate> pool_records;
  for (const auto& pool : selection.pools)
    for (const auto& e : pool.entries) pool_records.push_back(e.candidate);

  std::vector<std::string> files = {"chains.jsonl", "pool.jsonl", "sft.jsonl"};
  write_records(out / "chains.jsonl", ordered_chains);
  write_records(out / "pool.jsonl", pool_records);
  write_records(out / "sft.jsonl", selection.records);
  if (config.include_rft_pool) {
    write_records(out / "rft.jsonl", ordered_rft);
    files.push_back("rft.jsonl");
  }
  std::sort(files.begin(), files.end());

  std::vector<Candidate> generated;
  for (const auto& chain : ordered_chains)
    for (const auto& round : chain.rounds) generated.insert(generated.end(), round.generated_codes.begin(),
                                                            round.generated_codes.end());
  generated.insert(generated.end(), ordered_rft.begin(), ordered_rft.end());

  std::map<std::string, std::size_t> records_per_seed;
  for (const auto& r : selection.records) ++records_per_seed[r.seed_id];

  json per_seed = json::object();
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& id = seeds[s].id;
    json entry = {{"pool_size", pools[s].candidates.size()},
                  {"duplicates", pools[s].duplicate_count()},
                  {"weighted", selection.pools[s].entries.size()},
                  {"sft_records", records_per_seed[id]}};
    if (auto it = chains.find(id); it != chains.end()) {
      std::size_t codes = 0;
      for (const auto& round : it->second.rounds) codes += round.generated_codes.size();
      entry["chain_rounds"] = it->second.rounds.size();
      entry["chain_codes"] = codes;
      entry["terminal_reason"] = std::string(to_string(it->second.terminal_reason));
      if (!it->second.error_detail.empty()) entry["error_detail"] = it->second.error_detail;
    }
    if (auto it = rft.find(id); it != rft.end()) entry["rft_codes"] = it->second.size();
    per_seed[id] = entry;
  }

  json digests = json::object();
  std::string digest_input;
  for (const auto& name : files) {
    const auto hash = sha256_file(out / name);
    digests[name] = hash;
    digest_input += name + ":" + hash + "\n";
  }

  result.manifest = {{"manifest_id", manifest_id},
                     {"complete", true},
                     {"iteration", config.iteration},
                     {"sft_file", "sft.jsonl"},
                     {"sft_records", selection.records.size()},
                     {"seeds", per_seed},
                     {"excluded_seeds", selection.excluded_seeds},
                     {"origin_pass_rates", pass_rates_json(generated)},
                     {"config", config_snapshot(config)},
                     {"files", digests},
                     {"digest", sha256_hex(digest_input)}};
  write_file(out / "manifest.json", result.manifest.dump(2) + "\n");
  spdlog::info("iteration {}: {} SFT records from {} seeds ({} excluded)", config.iteration, selection.records.size(),
               seeds.size() - selection.excluded_seeds.size(), selection.excluded_seeds.size());
  return result;
}

std::vector<Candidate> run_baseline(std::span<const SeedTask> seeds, const RunConfig& config, BaselineKind kind,
                                    Backend& backend, CodeExecutor& executor, RewriteSource source,
                                    const SummaryExamplePool* pool) {
  std::vector<BaselineResult> results(seeds.size());
  parallel_for(seeds.size(), static_cast<std::size_t>(config.chain_parallelism), [&](std::size_t i) {
    results[i] = kind == BaselineKind::rft ? run_rft(seeds[i], config, backend, executor)
                                           : run_rft_rd(seeds[i], config, backend, executor, source, pool);
  });
  std::vector<Candidate> all;
  for (auto& r : results) {
    if (r.budget_exhausted) spdlog::warn("baseline stopped early: {}", r.error_detail);
    all.insert(all.end(), std::make_move_iterator(r.candidates.begin()), std::make_move_iterator(r.candidates.end()));
  }
  return all;
}

SummaryExamplePool bootstrap_summary_pool(std::span<const SeedTask> seeds, const RunConfig& config, Backend& backend,
                                          CodeExecutor& executor) {
  std::vector<std::optional<SummaryExample>> found(seeds.size());
  const GenerationParams params{config.generation_temperature, config.max_tokens, config.sandbox.parallelism};
  parallel_for(seeds.size(), static_cast<std::size_t>(config.chain_parallelism), [&](std::size_t i) {
    const SeedTask& seed = seeds[i];
    auto candidates = generate_candidates(seed, seed.description, config.per_step_width, Origin::rft, 0, backend,
                                          executor, params);
    auto it = std::find_if(candidates.begin(), candidates.end(), [](const Candidate& c) { return c.passed(); });
    if (it == candidates.end()) return;
    const std::string block = solution_block(seed, it->code);
    CompletionRequest request;
    request.prompt = render_zero_shot_summarization_prompt(block);
    request.temperature = config.generation_temperature;
    request.max_tokens = config.summary_max_tokens;
    auto description = extract_description(backend.complete(request).front().text);
    if (!description.empty()) found[i] = SummaryExample{block, description};
  });
  SummaryExamplePool pool;
  for (auto& f : found)
    if (f) pool.examples.push_back(std::move(*f));
  return pool;
}

}  // namespace gift
