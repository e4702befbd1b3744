#include <csignal>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gift/config.hpp"
#include "gift/metrics.hpp"
#include "gift/pipeline.hpp"
#include "gift/sandbox.hpp"
#include "gift/selection.hpp"
#include "gift/theory.hpp"

namespace {

using nlohmann::json;

enum ExitCode { kOk = 0, kUsage = 1, kBackend = 2, kSandbox = 3, kConsistency = 4 };

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

// Scorer for offline selection: no endpoint, so perplexities come from the
// pool file and missing ones take the pool median.
class OfflineScorer final : public gift::Backend {
 public:
  std::vector<gift::Completion> complete(const gift::CompletionRequest&) override {
    throw gift::BackendError("no backend configured");
  }
  std::vector<double> score(std::string_view, std::string_view) override {
    throw gift::CapabilityError("no backend configured for scoring");
  }
};

struct Loaded {
  gift::RunConfig config;
  std::unique_ptr<gift::Backend> backend;
};

Loaded load(const std::string& path) {
  auto loaded = gift::validate_config(path);
  for (const auto& w : loaded.warnings) spdlog::warn("config: {}", w);
  Loaded out{std::move(loaded.config), nullptr};
  out.backend = gift::make_backend(out.config.backend);
  return out;
}

gift::Sandbox make_sandbox(const gift::RunConfig& config) {
  gift::Sandbox::probe_runtime(config.sandbox.python);
  return gift::Sandbox(config.sandbox.limits, config.sandbox.python, config.sandbox.parallelism);
}

std::vector<double> parse_edges(const std::string& text) {
  std::vector<double> edges;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) edges.push_back(std::stod(item));
  return edges;
}

void print(const json& record) { std::cout << record.dump() << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("gift");
  spdlog::set_default_logger(logger);

  CLI::App app{"Gibbs-sampling self-training data generation for code models"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  std::string config_path;
  std::string out_path;

  auto* run = app.add_subcommand("run", "Run one self-training iteration");
  int iteration = 0;
  std::string output_dir;
  run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--iteration", iteration, "Iteration number (overrides the config)")->check(CLI::PositiveNumber);
  run->add_option("--output", output_dir, "Output directory (overrides the config)");

  auto* rft = app.add_subcommand("rft", "Rejection sampling from the seed description");
  rft->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  rft->add_option("--out", out_path, "Candidate file to write")->required();

  auto* rft_rd = app.add_subcommand("rft-rd", "Rejection sampling from the seed and rewritten descriptions");
  std::string rewrites_from = "prompt";
  rft_rd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  rft_rd->add_option("--out", out_path, "Candidate file to write")->required();
  rft_rd->add_option("--rewrites-from", rewrites_from, "Where rewrites come from")
      ->check(CLI::IsMember({"prompt", "gibbs1"}));

  auto* select = app.add_subcommand("select", "Weighted selection of K codes per seed from a pool file");
  std::string seeds_path, pool_path, mode = "seed_only";
  int K = 8;
  double T = 2.0;
  std::uint64_t random_seed = 1234;
  select->add_option("--seeds", seeds_path, "Seed dataset")->required()->check(CLI::ExistingFile);
  select->add_option("--pool", pool_path, "Candidate file (passing codes with perplexities)")
      ->required()
      ->check(CLI::ExistingFile);
  select->add_option("--K", K, "Codes per seed")->check(CLI::PositiveNumber);
  select->add_option("--T", T, "Weight temperature (nonzero)");
  select->add_option("--mode", mode)->check(CLI::IsMember({"seed_only", "one_pair", "mix_pair"}));
  select->add_option("--seed", random_seed, "Random seed");
  select->add_option("--iteration", iteration)->check(CLI::PositiveNumber);
  select->add_option("--out", out_path, "SFT file to write")->required();

  auto* metrics = app.add_subcommand("metrics", "Analysis statistics as line-delimited records");
  metrics->require_subcommand(1);
  auto* pass1 = metrics->add_subcommand("pass1", "Pass@1 over a task set");
  int samples = 1;
  pass1->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  pass1->add_option("--tasks", seeds_path, "Evaluation tasks (defaults to the config's seed dataset)")
      ->check(CLI::ExistingFile);
  pass1->add_option("--samples", samples, "Samples per task")->check(CLI::PositiveNumber);
  auto* bleu = metrics->add_subcommand("bleu", "Pairwise BLEU diversity of each seed's codes");
  std::string candidates_path;
  bleu->add_option("--candidates", candidates_path)->required()->check(CLI::ExistingFile);
  auto* hist = metrics->add_subcommand("ppl-hist", "Perplexity histogram of a pool");
  std::string bins = "1,1.5,2,3,5,10";
  hist->add_option("--pool", candidates_path)->required()->check(CLI::ExistingFile);
  hist->add_option("--bins", bins, "Comma-separated bin edges");
  auto* rates = metrics->add_subcommand("origin-rates", "Pass rate per candidate origin");
  rates->add_option("--candidates", candidates_path)->required()->check(CLI::ExistingFile);

  auto* theory = app.add_subcommand("theory", "Numerical checks on discrete description/code joints");
  std::string check = "all";
  int trials = 100;
  theory->add_option("--check", check)->check(CLI::IsMember({"all", "gibbs", "variance", "loss"}));
  theory->add_option("--trials", trials)->check(CLI::PositiveNumber);
  theory->add_option("--seed", random_seed);

  auto* pool_cmd = app.add_subcommand("pool", "Summary example pool tools");
  pool_cmd->require_subcommand(1);
  auto* bootstrap = pool_cmd->add_subcommand("bootstrap", "Build a summary example pool from the seed dataset");
  bootstrap->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  bootstrap->add_option("--out", out_path)->required();

  auto* check_config = app.add_subcommand("check-config", "Validate a config file and print it with defaults");
  check_config->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::info);

  try {
    if (*run) {
      auto [config, backend] = load(config_path);
      if (iteration > 0) config.iteration = iteration;
      if (!output_dir.empty()) config.output_dir = output_dir;
      auto sandbox = make_sandbox(config);
      std::unique_ptr<gift::Backend> scorer;
      if (config.scoring_backend) scorer = gift::make_backend(*config.scoring_backend);
      std::signal(SIGINT, on_interrupt);
      std::signal(SIGTERM, on_interrupt);
      auto result = gift::run_iteration(config, *backend, scorer ? *scorer : *backend, sandbox, &g_stop);
      print(result.manifest);
      return result.interrupted ? kUsage : kOk;
    }

    if (*rft || *rft_rd) {
      auto [config, backend] = load(config_path);
      auto sandbox = make_sandbox(config);
      auto seeds = gift::load_seed_dataset(config.seed_dataset);
      std::vector<gift::Candidate> candidates;
      if (*rft) {
        candidates = gift::run_baseline(seeds, config, gift::BaselineKind::rft, *backend, sandbox);
      } else {
        const auto source = rewrites_from == "gibbs1" ? gift::RewriteSource::gibbs1 : gift::RewriteSource::prompt;
        std::optional<gift::SummaryExamplePool> pool;
        if (source == gift::RewriteSource::gibbs1) pool = gift::SummaryExamplePool::load(config.summary_pool);
        candidates = gift::run_baseline(seeds, config, gift::BaselineKind::rft_rd, *backend, sandbox, source,
                                        pool ? &*pool : nullptr);
      }
      gift::write_records(out_path, candidates);
      if (!candidates.empty())
        for (const auto& [origin, r] : gift::origin_pass_rates(candidates))
          print({{"origin", gift::to_string(origin)}, {"passed", r.passed}, {"total", r.total}, {"rate", r.rate()}});
      return kOk;
    }

    if (*select) {
      auto seeds = gift::load_seed_dataset(seeds_path);
      auto candidates = gift::load_records<gift::Candidate>(pool_path);
      std::vector<gift::HarvestedPool> pools(seeds.size());
      std::map<std::string, std::size_t> index;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        pools[i].seed_id = seeds[i].id;
        index[seeds[i].id] = i;
      }
      for (auto& c : candidates) {
        auto it = index.find(c.seed_id);
        if (it == index.end()) throw gift::PreconditionError("pool entry for unknown seed '" + c.seed_id + "'");
        if (c.passed()) pools[it->second].candidates.push_back(std::move(c));
      }
      for (auto& pool : pools) {
        std::set<std::string> seen;
        for (auto& c : pool.candidates) c.duplicate = !seen.insert(gift::normalized_code(c.code)).second;
      }
      gift::RunConfig config;
      config.codes_per_seed = K;
      config.weight_temperature = T;
      config.pairing_mode = *gift::parse_pairing_mode(mode);
      config.random_seed = random_seed;
      if (iteration > 0) config.iteration = iteration;
      if (auto problems = gift::config_problems(config); !problems.empty()) throw gift::ConfigError(problems);
      OfflineScorer scorer;
      auto outcome = gift::select_and_emit(seeds, pools, scorer, config);
      gift::write_records(out_path, outcome.records);
      print({{"sft_records", outcome.records.size()}, {"excluded_seeds", outcome.excluded_seeds}});
      return kOk;
    }

    if (*pass1) {
      auto [config, backend] = load(config_path);
      auto sandbox = make_sandbox(config);
      auto tasks = gift::load_seed_dataset(seeds_path.empty() ? config.seed_dataset : std::filesystem::path(seeds_path));
      double value = gift::pass_at_1(tasks, *backend, sandbox, samples, config.generation_temperature,
                                     config.max_tokens);
      print({{"metric", "pass@1"}, {"tasks", tasks.size()}, {"samples_per_task", samples}, {"value", value}});
      return kOk;
    }

    if (*bleu) {
      auto candidates = gift::load_records<gift::Candidate>(candidates_path);
      std::map<std::string, std::vector<std::string>> by_seed;
      std::vector<std::string> order;
      for (const auto& c : candidates) {
        if (!by_seed.contains(c.seed_id)) order.push_back(c.seed_id);
        by_seed[c.seed_id].push_back(c.code);
      }
      for (const auto& id : order) {
        const auto& codes = by_seed[id];
        if (codes.size() < 2) {
          spdlog::warn("seed {}: fewer than 2 codes, BLEU skipped", id);
          continue;
        }
        auto s = gift::pairwise_bleu(codes);
        print({{"metric", "pairwise_bleu"}, {"seed_id", id}, {"codes", codes.size()}, {"per_code", s.per_code},
               {"mean", s.mean}, {"q1", s.q1}, {"median", s.median}, {"q3", s.q3}});
      }
      return kOk;
    }

    if (*hist) {
      auto candidates = gift::load_records<gift::Candidate>(candidates_path);
      std::vector<double> ppls;
      for (const auto& c : candidates)
        if (c.perplexity) ppls.push_back(*c.perplexity);
      if (ppls.size() < candidates.size())
        spdlog::warn("{} of {} entries carry no perplexity and are left out", candidates.size() - ppls.size(),
                     candidates.size());
      auto h = gift::ppl_histogram(ppls, parse_edges(bins));
      print({{"metric", "ppl_histogram"}, {"edges", h.edges}, {"counts", h.counts}, {"underflow", h.underflow},
             {"overflow", h.overflow}, {"total", h.total()}});
      return kOk;
    }

    if (*rates) {
      auto candidates = gift::load_records<gift::Candidate>(candidates_path);
      for (const auto& [origin, r] : gift::origin_pass_rates(candidates))
        print({{"metric", "origin_pass_rate"}, {"origin", gift::to_string(origin)}, {"passed", r.passed},
               {"total", r.total}, {"rate", r.rate()}});
      return kOk;
    }

    if (*theory) {
      bool ok = true;
      for (const auto& r : gift::theory::run_checks(check, trials, random_seed)) {
        print({{"check", r.name}, {"passed", r.passed}, {"detail", r.detail}});
        ok = ok && r.passed;
      }
      return ok ? kOk : kConsistency;
    }

    if (*bootstrap) {
      auto [config, backend] = load(config_path);
      auto sandbox = make_sandbox(config);
      auto seeds = gift::load_seed_dataset(config.seed_dataset);
      auto pool = gift::bootstrap_summary_pool(seeds, config, *backend, sandbox);
      pool.save(out_path);
      print({{"summary_examples", pool.examples.size()}, {"seeds", seeds.size()}});
      return kOk;
    }

    if (*check_config) {
      auto loaded = gift::validate_config(config_path);
      for (const auto& w : loaded.warnings) spdlog::warn("config: {}", w);
      std::cout << gift::config_snapshot(loaded.config).dump(2) << '\n';
      return kOk;
    }
  } catch (const gift::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const gift::BackendError& e) {
    spdlog::error("backend: {}", e.what());
    return kBackend;
  } catch (const gift::SandboxEnvironmentError& e) {
    spdlog::error("sandbox: {}", e.what());
    return kSandbox;
  } catch (const gift::InternalConsistencyError& e) {
    spdlog::error("internal consistency: {}", e.what());
    return kConsistency;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  }
  return kUsage;
}
