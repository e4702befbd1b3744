#include <doctest.h>

#include <fstream>

#include "gift/config.hpp"
#include "test_support.hpp"

using namespace gift;

namespace {

std::filesystem::path write_config(const std::string& name, const std::string& text) {
  auto dir = gift::testing::scratch_dir("config_" + name);
  std::ofstream(dir / "config.json") << text;
  return dir / "config.json";
}

bool mentions(const ConfigError& e, const std::string& text) {
  for (const auto& p : e.problems())
    if (p.find(text) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("empty file gives the reference defaults") {
  auto loaded = validate_config(write_config("empty", ""));
  const auto& c = loaded.config;
  CHECK(c.n_rounds == 20);
  CHECK(c.per_step_width == 3);
  CHECK(c.codes_per_seed == 8);
  CHECK(c.weight_temperature == 2.0);
  CHECK(c.generation_temperature == 1.0);
  CHECK(c.rd_rewrites == 5);
  CHECK(c.rd_codes_per_description == 10);
  CHECK(c.pairing_mode == PairingMode::seed_only);
  CHECK(loaded.warnings.empty());
}

TEST_CASE("K = 0 is rejected") {
  try {
    validate_config(write_config("k0", R"({"K": 0})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions(e, "K must be ≥ 1"));
  }
}

TEST_CASE("T = 0 is rejected and every problem is reported") {
  try {
    validate_config(write_config("t0", R"({"T": 0, "n_rounds": 0, "generation_temperature": -1})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions(e, "T must be nonzero"));
    CHECK(mentions(e, "n_rounds must be ≥ 1"));
    CHECK(mentions(e, "generation_temperature must be > 0"));
  }
}

TEST_CASE("unknown fields are warnings") {
  auto loaded = validate_config(write_config("unknown", R"({"K": 4, "future_knob": 1, "sandbox": {"gpu": true}})"));
  CHECK(loaded.config.codes_per_seed == 4);
  REQUIRE(loaded.warnings.size() == 2);
  CHECK(loaded.warnings[0].find("future_knob") != std::string::npos);
  CHECK(loaded.warnings[1].find("sandbox.gpu") != std::string::npos);
}

TEST_CASE("type errors name the field path") {
  try {
    validate_config(write_config("types", R"({"K": "eight", "sandbox": {"timeout_ms": 1.5}})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(mentions(e, "K must be an integer"));
    CHECK(mentions(e, "sandbox.timeout_ms must be an integer"));
  }
}

TEST_CASE("relative paths resolve against the config directory") {
  auto path = write_config("paths", R"({"seed_dataset": "seeds.jsonl", "backend": {"kind": "mock", "mock_script": "/abs/m.json"}})");
  auto c = validate_config(path).config;
  CHECK(c.seed_dataset == path.parent_path() / "seeds.jsonl");
  CHECK(c.backend.mock_script == "/abs/m.json");
}

TEST_CASE("negative T and pairing mode parse") {
  auto c = validate_config(write_config("neg", R"({"T": -2.0, "pairing_mode": "mix_pair"})")).config;
  CHECK(c.weight_temperature == -2.0);
  CHECK(c.pairing_mode == PairingMode::mix_pair);
  CHECK_THROWS_AS(validate_config(write_config("badmode", R"({"pairing_mode": "both"})")), ConfigError);
}

TEST_CASE("malformed JSON is a config error") {
  CHECK_THROWS_AS(validate_config(write_config("malformed", "{")), ConfigError);
}

TEST_CASE("snapshot is stable and reflects the config") {
  RunConfig a, b;
  CHECK(config_snapshot(a) == config_snapshot(b));
  b.codes_per_seed = 4;
  CHECK(config_snapshot(b)["K"] == 4);
  CHECK(config_snapshot(a) != config_snapshot(b));
}

TEST_CASE("backend credentials come from the environment") {
  setenv("GIFT_API_KEY", "secret-token", 1);
  BackendConfig http;
  auto backend = make_backend(http);
  auto* typed = dynamic_cast<HttpBackend*>(backend.get());
  REQUIRE(typed != nullptr);
  CHECK(typed->spec().api_key == "secret-token");
  unsetenv("GIFT_API_KEY");
  BackendConfig mock;
  mock.kind = "mock";
  CHECK(dynamic_cast<MockBackend*>(make_backend(mock).get()) != nullptr);
}
