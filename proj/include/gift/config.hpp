#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gift/backend.hpp"
#include "gift/core_model.hpp"
#include "gift/sandbox.hpp"

namespace gift {

struct BackendConfig {
  std::string kind = "http";  // "http" or "mock"
  BackendSpec spec;
  std::filesystem::path mock_script;  // kind == "mock"
};

struct SandboxConfig {
  SandboxLimits limits;
  std::string python = "python3";
  int parallelism = 4;
};

/// Settings for one self-training iteration. Defaults match the reference setup:
/// 20 rounds of 3 candidates, K = 8, T = 2, sampling temperature 1.0.
struct RunConfig {
  BackendConfig backend;
  std::optional<BackendConfig> scoring_backend;  // defaults to `backend`

  int n_rounds = 20;
  int per_step_width = 3;
  int codes_per_seed = 8;           // "K"
  double weight_temperature = 2.0;  // "T"; negative favours low-perplexity codes
  double generation_temperature = 1.0;
  int max_tokens = 512;
  int summary_max_tokens = 128;

  int rd_rewrites = 5;
  int rd_codes_per_description = 10;

  int paired_descriptions = 8;
  int codes_per_paired_description = 8;

  SandboxConfig sandbox;
  bool include_rft_pool = false;
  PairingMode pairing_mode = PairingMode::seed_only;
  std::uint64_t random_seed = 1234;
  int chain_parallelism = 4;
  int iteration = 1;

  std::filesystem::path seed_dataset;
  std::filesystem::path summary_pool;
  std::filesystem::path output_dir;
};

struct LoadedConfig {
  RunConfig config;
  std::vector<std::string> warnings;  // unknown fields and similar
};

/// Every violated RunConfig invariant, as "field: message" strings.
std::vector<std::string> config_problems(const RunConfig& config);

/// Parses a JSON config object. Relative paths resolve against `base_dir`.
/// Throws ConfigError listing every problem found.
LoadedConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Reads and validates a config file. An empty file yields the defaults.
LoadedConfig validate_config(const std::filesystem::path& path);

/// Canonical JSON form of a config, used in manifests and run identity.
nlohmann::json config_snapshot(const RunConfig& config);

/// Reads GIFT_API_KEY from the environment into the spec when it holds no key.
std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace gift
