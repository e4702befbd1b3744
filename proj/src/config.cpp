#include "gift/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace gift {

namespace {

using nlohmann::json;

const std::set<std::string> kTopLevelKeys = {
    "backend",       "scoring_backend",    "n_rounds",       "per_step_width",
    "K",             "T",                  "generation_temperature",
    "max_tokens",    "summary_max_tokens", "rd_rewrites",    "rd_codes_per_description",
    "paired_descriptions", "codes_per_paired_description",  "sandbox",
    "include_rft_pool", "pairing_mode",    "random_seed",    "chain_parallelism",
    "iteration",     "seed_dataset",       "summary_pool",   "output_dir"};

const std::set<std::string> kBackendKeys = {"kind",        "base_url",         "model",
                                            "completions_path", "health_path", "timeout_ms",
                                            "max_retries", "retry_backoff_ms", "max_in_flight",
                                            "mock_script"};

const std::set<std::string> kSandboxKeys = {"timeout_ms", "memory_bytes", "output_cap_bytes",
                                            "no_network", "python",       "parallelism"};

// Collects problems and warnings while reading fields, so that one pass
// reports every bad field instead of stopping at the first.
struct Reader {
  std::vector<std::string> problems;
  std::vector<std::string> warnings;
  std::filesystem::path base_dir;

  void unknown_keys(const json& object, const std::set<std::string>& known, const std::string& prefix) {
    for (const auto& [key, _] : object.items())
      if (!known.contains(key)) warnings.push_back("unknown field '" + prefix + key + "' ignored");
  }

  template <class T>
  void read(const json& object, const std::string& key, const std::string& path, T& out) {
    auto it = object.find(key);
    if (it == object.end()) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) return problems.push_back(path + " must be a boolean");
      out = it->template get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) return problems.push_back(path + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_unsigned() || it->template get<std::int64_t>() >= 0) {
          out = it->template get<T>();
        } else {
          problems.push_back(path + " must be ≥ 0");
        }
      } else {
        out = it->template get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) return problems.push_back(path + " must be a number");
      out = it->template get<T>();
    } else {
      if (!it->is_string()) return problems.push_back(path + " must be a string");
      out = it->template get<std::string>();
    }
  }

  void read_path(const json& object, const std::string& key, const std::string& path, std::filesystem::path& out) {
    std::string text;
    read(object, key, path, text);
    if (!text.empty()) {
      std::filesystem::path p(text);
      out = p.is_absolute() ? p : base_dir / p;
    }
  }

  void read_ms(const json& object, const std::string& key, const std::string& path, std::chrono::milliseconds& out) {
    std::int64_t ms = out.count();
    read(object, key, path, ms);
    out = std::chrono::milliseconds(ms);
  }

  BackendConfig backend(const json& j, const std::string& prefix) {
    BackendConfig b;
    if (!j.is_object()) {
      problems.push_back(prefix + " must be an object");
      return b;
    }
    unknown_keys(j, kBackendKeys, prefix + ".");
    read(j, "kind", prefix + ".kind", b.kind);
    read(j, "base_url", prefix + ".base_url", b.spec.base_url);
    read(j, "model", prefix + ".model", b.spec.model_name);
    read(j, "completions_path", prefix + ".completions_path", b.spec.completions_path);
    read(j, "health_path", prefix + ".health_path", b.spec.health_path);
    read_ms(j, "timeout_ms", prefix + ".timeout_ms", b.spec.request_timeout);
    read(j, "max_retries", prefix + ".max_retries", b.spec.max_retries);
    read_ms(j, "retry_backoff_ms", prefix + ".retry_backoff_ms", b.spec.retry_backoff);
    read(j, "max_in_flight", prefix + ".max_in_flight", b.spec.max_in_flight);
    read_path(j, "mock_script", prefix + ".mock_script", b.mock_script);
    return b;
  }
};

void backend_problems(const BackendConfig& b, const std::string& prefix, std::vector<std::string>& out) {
  if (b.kind != "http" && b.kind != "mock") out.push_back(prefix + ".kind must be \"http\" or \"mock\"");
  if (b.kind == "http" && b.spec.base_url.empty()) out.push_back(prefix + ".base_url must be nonempty");
  if (b.spec.request_timeout.count() <= 0) out.push_back(prefix + ".timeout_ms must be > 0");
  if (b.spec.max_retries < 0) out.push_back(prefix + ".max_retries must be ≥ 0");
  if (b.spec.retry_backoff.count() < 0) out.push_back(prefix + ".retry_backoff_ms must be ≥ 0");
  if (b.spec.max_in_flight < 1) out.push_back(prefix + ".max_in_flight must be ≥ 1");
}

json backend_snapshot(const BackendConfig& b) {
  json j = {{"kind", b.kind}};
  if (b.kind == "mock") {
    j["mock_script"] = b.mock_script.string();
  } else {
    j["base_url"] = b.spec.base_url;
    j["model"] = b.spec.model_name;
    j["completions_path"] = b.spec.completions_path;
    j["health_path"] = b.spec.health_path;
  }
  return j;
}

}  // namespace

std::vector<std::string> config_problems(const RunConfig& c) {
  std::vector<std::string> out;
  backend_problems(c.backend, "backend", out);
  if (c.scoring_backend) backend_problems(*c.scoring_backend, "scoring_backend", out);
  if (c.n_rounds < 1) out.push_back("n_rounds must be ≥ 1");
  if (c.per_step_width < 1) out.push_back("per_step_width must be ≥ 1");
  if (c.codes_per_seed < 1) out.push_back("K must be ≥ 1");
  if (c.weight_temperature == 0.0) out.push_back("T must be nonzero");
  if (!(c.generation_temperature > 0.0)) out.push_back("generation_temperature must be > 0");
  if (c.max_tokens < 1) out.push_back("max_tokens must be ≥ 1");
  if (c.summary_max_tokens < 1) out.push_back("summary_max_tokens must be ≥ 1");
  if (c.rd_rewrites < 0) out.push_back("rd_rewrites must be ≥ 0");
  if (c.rd_codes_per_description < 1) out.push_back("rd_codes_per_description must be ≥ 1");
  if (c.paired_descriptions < 0) out.push_back("paired_descriptions must be ≥ 0");
  if (c.codes_per_paired_description < 1) out.push_back("codes_per_paired_description must be ≥ 1");
  if (c.sandbox.limits.wall_timeout.count() <= 0) out.push_back("sandbox.timeout_ms must be > 0");
  if (c.sandbox.limits.memory_bytes == 0) out.push_back("sandbox.memory_bytes must be > 0");
  if (c.sandbox.limits.output_cap_bytes == 0) out.push_back("sandbox.output_cap_bytes must be > 0");
  if (c.sandbox.python.empty()) out.push_back("sandbox.python must be nonempty");
  if (c.sandbox.parallelism < 1) out.push_back("sandbox.parallelism must be ≥ 1");
  if (c.chain_parallelism < 1) out.push_back("chain_parallelism must be ≥ 1");
  if (c.iteration < 1) out.push_back("iteration must be ≥ 1");
  return out;
}

LoadedConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  LoadedConfig loaded;
  RunConfig& c = loaded.config;
  Reader r{.problems = {}, .warnings = {}, .base_dir = base_dir};

  if (j.is_null()) return loaded;
  if (!j.is_object()) throw ConfigError({"configuration must be a JSON object"});
  r.unknown_keys(j, kTopLevelKeys, "");

  if (auto it = j.find("backend"); it != j.end()) c.backend = r.backend(*it, "backend");
  if (auto it = j.find("scoring_backend"); it != j.end() && !it->is_null())
    c.scoring_backend = r.backend(*it, "scoring_backend");

  r.read(j, "n_rounds", "n_rounds", c.n_rounds);
  r.read(j, "per_step_width", "per_step_width", c.per_step_width);
  r.read(j, "K", "K", c.codes_per_seed);
  r.read(j, "T", "T", c.weight_temperature);
  r.read(j, "generation_temperature", "generation_temperature", c.generation_temperature);
  r.read(j, "max_tokens", "max_tokens", c.max_tokens);
  r.read(j, "summary_max_tokens", "summary_max_tokens", c.summary_max_tokens);
  r.read(j, "rd_rewrites", "rd_rewrites", c.rd_rewrites);
  r.read(j, "rd_codes_per_description", "rd_codes_per_description", c.rd_codes_per_description);
  r.read(j, "paired_descriptions", "paired_descriptions", c.paired_descriptions);
  r.read(j, "codes_per_paired_description", "codes_per_paired_description", c.codes_per_paired_description);

  if (auto it = j.find("sandbox"); it != j.end()) {
    if (!it->is_object()) {
      r.problems.push_back("sandbox must be an object");
    } else {
      r.unknown_keys(*it, kSandboxKeys, "sandbox.");
      r.read_ms(*it, "timeout_ms", "sandbox.timeout_ms", c.sandbox.limits.wall_timeout);
      r.read(*it, "memory_bytes", "sandbox.memory_bytes", c.sandbox.limits.memory_bytes);
      r.read(*it, "output_cap_bytes", "sandbox.output_cap_bytes", c.sandbox.limits.output_cap_bytes);
      r.read(*it, "no_network", "sandbox.no_network", c.sandbox.limits.no_network);
      r.read(*it, "python", "sandbox.python", c.sandbox.python);
      r.read(*it, "parallelism", "sandbox.parallelism", c.sandbox.parallelism);
    }
  }

  r.read(j, "include_rft_pool", "include_rft_pool", c.include_rft_pool);
  std::string mode;
  r.read(j, "pairing_mode", "pairing_mode", mode);
  if (!mode.empty()) {
    if (auto m = parse_pairing_mode(mode)) {
      c.pairing_mode = *m;
    } else {
      r.problems.push_back("pairing_mode must be one of seed_only, one_pair, mix_pair");
    }
  }
  r.read(j, "random_seed", "random_seed", c.random_seed);
  r.read(j, "chain_parallelism", "chain_parallelism", c.chain_parallelism);
  r.read(j, "iteration", "iteration", c.iteration);
  r.read_path(j, "seed_dataset", "seed_dataset", c.seed_dataset);
  r.read_path(j, "summary_pool", "summary_pool", c.summary_pool);
  r.read_path(j, "output_dir", "output_dir", c.output_dir);

  for (auto& p : config_problems(c)) r.problems.push_back(std::move(p));
  if (!r.problems.empty()) throw ConfigError(std::move(r.problems));
  loaded.warnings = std::move(r.warnings);
  return loaded;
}

LoadedConfig validate_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  json j;
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError({std::string("malformed JSON: ") + e.what()});
    }
  }
  return parse_config(j, path.parent_path());
}

json config_snapshot(const RunConfig& c) {
  json j = {
      {"backend", backend_snapshot(c.backend)},
      {"n_rounds", c.n_rounds},
      {"per_step_width", c.per_step_width},
      {"K", c.codes_per_seed},
      {"T", c.weight_temperature},
      {"generation_temperature", c.generation_temperature},
      {"max_tokens", c.max_tokens},
      {"summary_max_tokens", c.summary_max_tokens},
      {"rd_rewrites", c.rd_rewrites},
      {"rd_codes_per_description", c.rd_codes_per_description},
      {"paired_descriptions", c.paired_descriptions},
      {"codes_per_paired_description", c.codes_per_paired_description},
      {"sandbox",
       {{"timeout_ms", c.sandbox.limits.wall_timeout.count()},
        {"memory_bytes", c.sandbox.limits.memory_bytes},
        {"output_cap_bytes", c.sandbox.limits.output_cap_bytes},
        {"no_network", c.sandbox.limits.no_network}}},
      {"include_rft_pool", c.include_rft_pool},
      {"pairing_mode", std::string(to_string(c.pairing_mode))},
      {"random_seed", c.random_seed},
      {"iteration", c.iteration},
  };
  if (c.scoring_backend) j["scoring_backend"] = backend_snapshot(*c.scoring_backend);
  return j;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == "mock") {
    if (config.mock_script.empty()) return std::make_unique<MockBackend>(MockScript{});
    return std::make_unique<MockBackend>(MockScript::load(config.mock_script));
  }
  if (config.kind != "http") throw PreconditionError("unknown backend kind '" + config.kind + "'");
  BackendSpec spec = config.spec;
  if (spec.api_key.empty()) {
    if (const char* key = std::getenv("GIFT_API_KEY")) spec.api_key = key;
  }
  return std::make_unique<HttpBackend>(std::move(spec));
}

}  // namespace gift
