#include "sage/config.hpp"

#include "sage/errors.hpp"

#include <chrono>
#include <fstream>
#include <set>

namespace sage::config {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) {
    ok = v.is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    ok = v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    ok = v.is_string();
  } else {
    ok = true;
  }
  if (!ok) throw ConfigError("'" + where + "." + key + "' has the wrong type");
  try {
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("'" + where + "." + key + "': " + e.what());
  }
}

std::size_t feature_key(const std::string& where, const std::string& name) {
  const auto k = features::feature_index(name);
  if (!k) throw ConfigError("unknown feature '" + name + "' in " + where);
  return *k;
}

void parse_llm(const json& j, LlmConfig& c) {
  check_keys(j, "llm",
             {"provider", "model", "endpoint", "api_key_env", "temperature", "max_inflight",
              "max_retries", "initial_backoff_ms", "timeout_s", "mock_obedience",
              "mock_failure_rate"});
  read(j, "llm", "provider", c.provider);
  if (c.provider != "mock" && c.provider != "http") {
    throw ConfigError("llm.provider must be 'mock' or 'http'");
  }
  read(j, "llm", "model", c.http.model);
  read(j, "llm", "endpoint", c.http.endpoint);
  read(j, "llm", "api_key_env", c.http.api_key_env);
  if (j.contains("temperature") && !j["temperature"].is_null()) {
    double t = 0.0;
    read(j, "llm", "temperature", t);
    c.http.temperature = t;
  }
  read(j, "llm", "max_inflight", c.http.max_inflight);
  read(j, "llm", "max_retries", c.http.max_retries);
  int backoff_ms = static_cast<int>(c.http.initial_backoff.count());
  read(j, "llm", "initial_backoff_ms", backoff_ms);
  c.http.initial_backoff = std::chrono::milliseconds(backoff_ms);
  int timeout_s = static_cast<int>(c.http.request_timeout.count());
  read(j, "llm", "timeout_s", timeout_s);
  c.http.request_timeout = std::chrono::seconds(timeout_s);
  read(j, "llm", "mock_obedience", c.mock_obedience);
  read(j, "llm", "mock_failure_rate", c.mock_failure_rate);
  if (c.mock_obedience < 0.0 || c.mock_obedience > 1.0) {
    throw ConfigError("llm.mock_obedience must lie in [0, 1]");
  }
  if (c.mock_failure_rate < 0.0 || c.mock_failure_rate > 1.0) {
    throw ConfigError("llm.mock_failure_rate must lie in [0, 1]");
  }
  if (c.provider == "http" && (c.http.endpoint.empty() || c.http.model.empty())) {
    throw ConfigError("llm.endpoint and llm.model are required for the http provider");
  }
  if (c.http.max_inflight < 1) throw ConfigError("llm.max_inflight must be >= 1");
}

void parse_es(const json& j, evo::RunConfig& r) {
  check_keys(j, "es", {"mu", "lambda", "budget", "elitism", "workers"});
  read(j, "es", "mu", r.mu);
  read(j, "es", "lambda", r.lambda);
  read(j, "es", "budget", r.budget);
  read(j, "es", "elitism", r.elitism);
  read(j, "es", "workers", r.workers);
}

void parse_guidance(const json& j, evo::RunConfig& r) {
  check_keys(j, "guidance",
             {"enabled", "min_archive", "n_trees", "max_depth", "learning_rate", "min_leaf"});
  read(j, "guidance", "enabled", r.guidance_enabled);
  read(j, "guidance", "min_archive", r.min_archive);
  read(j, "guidance", "n_trees", r.surrogate.n_trees);
  read(j, "guidance", "max_depth", r.surrogate.max_depth);
  read(j, "guidance", "learning_rate", r.surrogate.learning_rate);
  read(j, "guidance", "min_leaf", r.surrogate.min_leaf);
}

void parse_eval(const json& j, EvalConfig& e) {
  check_keys(j, "eval",
             {"kind", "synthetic_weights", "synthetic_ranges", "synthetic_bias", "sandbox_command",
              "problems", "time_limit_s", "kill_grace_s", "aocc_lb", "aocc_ub"});
  read(j, "eval", "kind", e.kind);
  if (e.kind != "synthetic" && e.kind != "sandbox") {
    throw ConfigError("eval.kind must be 'synthetic' or 'sandbox'");
  }
  if (j.contains("synthetic_weights")) {
    const auto& w = j["synthetic_weights"];
    if (!w.is_object()) throw ConfigError("eval.synthetic_weights must map feature names to numbers");
    e.synthetic.weights = {};
    for (const auto& [name, value] : w.items()) {
      if (!value.is_number()) throw ConfigError("eval.synthetic_weights." + name + " must be a number");
      e.synthetic.weights[feature_key("eval.synthetic_weights", name)] = value.get<double>();
    }
  }
  if (j.contains("synthetic_ranges")) {
    const auto& rg = j["synthetic_ranges"];
    if (!rg.is_object()) throw ConfigError("eval.synthetic_ranges must map feature names to [lo, hi]");
    for (const auto& [name, value] : rg.items()) {
      if (!value.is_array() || value.size() != 2 || !value[0].is_number() || !value[1].is_number()) {
        throw ConfigError("eval.synthetic_ranges." + name + " must be [lo, hi]");
      }
      e.synthetic.ranges[feature_key("eval.synthetic_ranges", name)] = {value[0].get<double>(),
                                                                         value[1].get<double>()};
    }
  }
  read(j, "eval", "synthetic_bias", e.synthetic.bias);
  if (j.contains("sandbox_command")) {
    const auto& cmd = j["sandbox_command"];
    if (!cmd.is_array()) throw ConfigError("eval.sandbox_command must be an array of strings");
    e.sandbox.command.clear();
    for (const auto& part : cmd) {
      if (!part.is_string()) throw ConfigError("eval.sandbox_command must be an array of strings");
      e.sandbox.command.push_back(part.get<std::string>());
    }
  }
  if (j.contains("problems")) {
    if (!j["problems"].is_array()) throw ConfigError("eval.problems must be an array");
    e.sandbox.problems.clear();
    for (const auto& p : j["problems"]) {
      check_keys(p, "eval.problems[]",
                 {"suite", "fid", "instance", "dim", "inner_budget", "lb", "ub", "fid_b", "alpha"});
      try {
        e.sandbox.problems.push_back(bench::problem_spec_from_json(p));
      } catch (const json::exception& ex) {
        throw ConfigError(std::string("eval.problems[]: ") + ex.what());
      }
    }
  }
  read(j, "eval", "time_limit_s", e.sandbox.time_limit_s);
  read(j, "eval", "kill_grace_s", e.sandbox.kill_grace_s);
  read(j, "eval", "aocc_lb", e.sandbox.aocc.lb);
  read(j, "eval", "aocc_ub", e.sandbox.aocc.ub);
  if (e.kind == "sandbox") {
    if (e.sandbox.command.empty()) throw ConfigError("eval.sandbox_command is required");
    if (e.sandbox.problems.empty()) throw ConfigError("eval.problems is required");
    for (const auto& p : e.sandbox.problems) {
      try {
        bench::make_problem(p);
      } catch (const Error& ex) {
        throw ConfigError(std::string("eval.problems[]: ") + ex.what());
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string("eval.problems[]: ") + ex.what());
      }
    }
  }
}

void parse_prompts(const json& j, evo::RunConfig& r) {
  check_keys(j, "prompts", {"task", "task_text", "mutation"});
  if (j.contains("task") && j.contains("task_text")) {
    throw ConfigError("set either prompts.task or prompts.task_text, not both");
  }
  if (j.contains("task")) {
    std::string name;
    read(j, "prompts", "task", name);
    r.task_prompt = std::string(llm::task_prompt(llm::task_prompt_from_string(name)));
  }
  read(j, "prompts", "task_text", r.task_prompt);
  if (j.contains("mutation")) {
    if (!j["mutation"].is_array()) throw ConfigError("prompts.mutation must be an array");
    r.mutation_prompts.clear();
    for (const auto& m : j["mutation"]) {
      check_keys(m, "prompts.mutation[]", {"kind", "text"});
      std::string kind, text;
      read(m, "prompts.mutation[]", "kind", kind);
      read(m, "prompts.mutation[]", "text", text);
      r.mutation_prompts.push_back({llm::prompt_kind_from_string(kind), text});
    }
  }
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

Config parse_config(const json& doc) {
  check_keys(doc, "config", {"llm", "es", "guidance", "eval", "prompts"});
  Config c;
  if (doc.contains("llm")) parse_llm(doc["llm"], c.llm);
  if (doc.contains("es")) parse_es(doc["es"], c.run);
  if (doc.contains("guidance")) parse_guidance(doc["guidance"], c.run);
  if (doc.contains("eval")) parse_eval(doc["eval"], c.eval);
  if (doc.contains("prompts")) parse_prompts(doc["prompts"], c.run);
  c.run.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const Config& c) {
  nlohmann::ordered_json j;
  auto& l = j["llm"];
  l["provider"] = c.llm.provider;
  l["model"] = c.llm.http.model;
  l["endpoint"] = c.llm.http.endpoint;
  l["api_key_env"] = c.llm.http.api_key_env;
  l["temperature"] = c.llm.http.temperature ? nlohmann::ordered_json(*c.llm.http.temperature)
                                            : nlohmann::ordered_json(nullptr);
  l["max_inflight"] = c.llm.http.max_inflight;
  l["max_retries"] = c.llm.http.max_retries;
  l["initial_backoff_ms"] = c.llm.http.initial_backoff.count();
  l["timeout_s"] = c.llm.http.request_timeout.count();
  l["mock_obedience"] = c.llm.mock_obedience;
  l["mock_failure_rate"] = c.llm.mock_failure_rate;

  auto& es = j["es"];
  es["mu"] = c.run.mu;
  es["lambda"] = c.run.lambda;
  es["budget"] = c.run.budget;
  es["elitism"] = c.run.elitism;
  es["workers"] = c.run.workers;

  auto& g = j["guidance"];
  g["enabled"] = c.run.guidance_enabled;
  g["min_archive"] = c.run.effective_min_archive();
  g["n_trees"] = c.run.surrogate.n_trees;
  g["max_depth"] = c.run.surrogate.max_depth;
  g["learning_rate"] = c.run.surrogate.learning_rate;
  g["min_leaf"] = c.run.surrogate.min_leaf;

  auto& e = j["eval"];
  e["kind"] = c.eval.kind;
  const auto& names = features::feature_names();
  e["synthetic_weights"] = nlohmann::ordered_json::object();
  e["synthetic_ranges"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < features::kFeatureCount; ++i) {
    const std::string name(names[i]);
    if (c.eval.synthetic.weights[i] != 0.0) e["synthetic_weights"][name] = c.eval.synthetic.weights[i];
    e["synthetic_ranges"][name] = {c.eval.synthetic.ranges[i].first, c.eval.synthetic.ranges[i].second};
  }
  e["synthetic_bias"] = c.eval.synthetic.bias;
  e["sandbox_command"] = c.eval.sandbox.command;
  e["problems"] = nlohmann::ordered_json::array();
  for (const auto& p : c.eval.sandbox.problems) e["problems"].push_back(nlohmann::ordered_json::parse(bench::to_json(p).dump()));
  e["time_limit_s"] = c.eval.sandbox.time_limit_s;
  e["kill_grace_s"] = c.eval.sandbox.kill_grace_s;
  e["aocc_lb"] = c.eval.sandbox.aocc.lb;
  e["aocc_ub"] = c.eval.sandbox.aocc.ub;

  auto& p = j["prompts"];
  p["task_text"] = c.run.task_prompt;
  p["mutation"] = nlohmann::ordered_json::array();
  for (const auto& m : c.run.mutation_prompts) {
    p["mutation"].push_back({{"kind", llm::to_string(m.kind)}, {"text", m.text}});
  }
  return json::parse(j.dump());
}

std::unique_ptr<llm::Provider> make_provider(const Config& config, std::uint64_t seed) {
  if (config.llm.provider == "http") return std::make_unique<llm::HttpProvider>(config.llm.http);
  return std::make_unique<llm::MockProvider>(llm::MockParams{
      .seed = seed, .obedience = config.llm.mock_obedience, .failure_rate = config.llm.mock_failure_rate});
}

std::unique_ptr<Evaluator> make_evaluator(const Config& config, std::uint64_t seed) {
  if (config.eval.kind == "sandbox") {
    SandboxParams params = config.eval.sandbox;
    params.seed = static_cast<std::int64_t>(seed);
    return std::make_unique<SandboxEvaluator>(std::move(params));
  }
  return std::make_unique<SyntheticEvaluator>(config.eval.synthetic);
}

RunOutput run_to_directory(const Config& config, std::uint64_t seed,
                           const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto provider = make_provider(config, seed);
  auto evaluator = make_evaluator(config, seed);
  evo::RunConfig run = config.run;
  run.seed = seed;
  evo::Archive archive(out_dir / "archive.jsonl");
  evo::Engine engine(run, *provider, *evaluator, archive);

  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["started_at"] = utc_now();
  manifest["provider"] = provider->name();
  manifest["temperature"] = config.llm.http.temperature && config.llm.provider == "http"
                                ? nlohmann::ordered_json(*config.llm.http.temperature)
                                : nlohmann::ordered_json("provider default");
  manifest["config"] = to_json(config);

  auto write_manifest = [&] {
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  };

  RunOutput output;
  const auto start = std::chrono::steady_clock::now();
  try {
    output.result = engine.run();
  } catch (const Error& e) {
    std::int64_t prompt = 0, completion = 0;
    for (const auto& c : archive.records()) {
      prompt += c.llm_usage.prompt_tokens;
      completion += c.llm_usage.completion_tokens;
    }
    manifest["status"] = "aborted";
    manifest["error"] = e.what();
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest["total_tokens"] = {
        {"prompt", prompt}, {"completion", completion}, {"total", prompt + completion}};
    manifest["archive_size"] = archive.size();
    manifest["archive_hash"] = evo::canonical_hash(archive.records());
    write_manifest();
    throw;
  }
  output.archive_hash = evo::canonical_hash(archive.records());
  output.archive_size = archive.size();
  const auto& r = output.result;
  manifest["status"] = "completed";
  manifest["error"] = nullptr;
  manifest["wall_time_s"] = r.wall_seconds;
  manifest["total_tokens"] = {{"prompt", r.total_usage.prompt_tokens},
                              {"completion", r.total_usage.completion_tokens},
                              {"total", r.total_usage.total()}};
  manifest["best"] = {{"id", r.best_id}, {"fitness", r.best_fitness}};
  manifest["archive_size"] = output.archive_size;
  manifest["archive_hash"] = output.archive_hash;
  manifest["generations"] = r.generations.size();
  write_manifest();
  return output;
}

}  // namespace sage::config
