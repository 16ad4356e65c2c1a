#pragma once

// Run configuration files and the run driver used by the command line.
//
// A configuration is a JSON object with the sections "llm", "es",
// "guidance", "eval" and "prompts". Every key is validated and unknown keys
// are rejected with ConfigError; omitted keys take their defaults.

#include "sage/evaluator.hpp"
#include "sage/evolution.hpp"
#include "sage/llm.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace sage::config {

struct LlmConfig {
  std::string provider = "mock";  // "mock" or "http"
  llm::HttpParams http;
  double mock_obedience = 0.8;
  double mock_failure_rate = 0.0;
};

struct EvalConfig {
  std::string kind = "synthetic";  // "synthetic" or "sandbox"
  SyntheticParams synthetic = SyntheticParams::defaults();
  SandboxParams sandbox;
};

struct Config {
  LlmConfig llm;
  evo::RunConfig run;
  EvalConfig eval;
};

/// Throws ConfigError naming the offending key.
Config parse_config(const nlohmann::json& doc);
Config load_config(const std::filesystem::path& path);

/// Fully resolved configuration, including defaults.
nlohmann::json to_json(const Config& config);

std::unique_ptr<llm::Provider> make_provider(const Config& config, std::uint64_t seed);
std::unique_ptr<Evaluator> make_evaluator(const Config& config, std::uint64_t seed);

struct RunOutput {
  evo::RunResult result;
  std::string archive_hash;
  std::size_t archive_size = 0;
};

/// Runs one seed and writes archive.jsonl and manifest.json into `out_dir`.
/// The manifest is also written when the run aborts, with status "aborted",
/// before the error is rethrown.
RunOutput run_to_directory(const Config& config, std::uint64_t seed,
                           const std::filesystem::path& out_dir);

}  // namespace sage::config
