#include "sage/config.hpp"
#include "sage/errors.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace sage;
using namespace sage::config;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "sage-config-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

json small_run() {
  return json::parse(R"({"es": {"mu": 4, "lambda": 4, "budget": 16}, "guidance": {"n_trees": 20}})");
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = parse_config(json::object());
  EXPECT_EQ(c.llm.provider, "mock");
  EXPECT_EQ(c.run.mu, 8);
  EXPECT_EQ(c.run.lambda, 8);
  EXPECT_EQ(c.run.budget, 200);
  EXPECT_TRUE(c.run.elitism);
  EXPECT_TRUE(c.run.guidance_enabled);
  EXPECT_EQ(c.run.surrogate.n_trees, 100);
  EXPECT_EQ(c.run.surrogate.max_depth, 3);
  EXPECT_DOUBLE_EQ(c.run.surrogate.learning_rate, 0.1);
  EXPECT_EQ(c.eval.kind, "synthetic");
  EXPECT_EQ(c.run.task_prompt, llm::task_prompt(llm::TaskPrompt::sbox));
}

TEST(Config, ValuesAreRead) {
  const auto c = parse_config(json::parse(R"({
    "llm": {"mock_obedience": 0.5, "temperature": 0.7},
    "es": {"mu": 3, "lambda": 5, "budget": 30, "elitism": false, "workers": 2},
    "guidance": {"enabled": false, "min_archive": 12, "n_trees": 10, "max_depth": 2,
                 "learning_rate": 0.2, "min_leaf": 2},
    "eval": {"synthetic_weights": {"node_count": 2.0}, "synthetic_ranges": {"node_count": [1, 9]},
             "synthetic_bias": -1.5},
    "prompts": {"task": "ma_bbob", "mutation": [{"kind": "refine", "text": "Improve it."}]}
  })"));
  EXPECT_DOUBLE_EQ(c.llm.mock_obedience, 0.5);
  ASSERT_TRUE(c.llm.http.temperature.has_value());
  EXPECT_DOUBLE_EQ(*c.llm.http.temperature, 0.7);
  EXPECT_EQ(c.run.mu, 3);
  EXPECT_EQ(c.run.lambda, 5);
  EXPECT_FALSE(c.run.elitism);
  EXPECT_EQ(c.run.workers, 2);
  EXPECT_FALSE(c.run.guidance_enabled);
  EXPECT_EQ(c.run.effective_min_archive(), 12);
  EXPECT_EQ(c.run.surrogate.min_leaf, 2);
  EXPECT_DOUBLE_EQ(c.eval.synthetic.weights[0], 2.0);
  EXPECT_DOUBLE_EQ(c.eval.synthetic.weights[1], 0.0);
  EXPECT_EQ(c.eval.synthetic.ranges[0], (std::pair<double, double>{1.0, 9.0}));
  EXPECT_DOUBLE_EQ(c.eval.synthetic.bias, -1.5);
  EXPECT_EQ(c.run.task_prompt, llm::task_prompt(llm::TaskPrompt::ma_bbob));
  ASSERT_EQ(c.run.mutation_prompts.size(), 1u);
  EXPECT_EQ(c.run.mutation_prompts[0].text, "Improve it.");
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  for (const char* doc : {
           R"({"extra": 1})",
           R"({"es": {"mu": 4, "sigma": 1}})",
           R"({"es": {"mu": "four"}})",
           R"({"es": {"mu": 0}})",
           R"({"es": {"mu": 8, "budget": 4}})",
           R"({"llm": {"provider": "oracle"}})",
           R"({"llm": {"provider": "http"}})",
           R"({"llm": {"mock_obedience": 1.5}})",
           R"({"guidance": {"enabled": "yes"}})",
           R"({"eval": {"kind": "sandbox"}})",
           R"({"eval": {"synthetic_weights": {"loops": 1}}})",
           R"({"eval": {"synthetic_ranges": {"node_count": [1]}}})",
           R"({"eval": {"problems": [{"suite": "sbox_separable", "fid": 99, "instance": 1, "dim": 5}]}})",
           R"({"prompts": {"task": "tsp"}})",
           R"({"prompts": {"task": "sbox", "task_text": "x"}})",
           R"({"prompts": {"mutation": [{"kind": "crossover", "text": "x"}]}})",
           R"([1, 2])",
       }) {
    EXPECT_THROW(parse_config(json::parse(doc)), ConfigError) << doc;
  }
}

TEST(Config, LoadFileErrors) {
  TempDir dir;
  EXPECT_THROW(load_config(dir.path() / "missing.json"), ConfigError);
  std::ofstream(dir.path() / "bad.json") << "{ not json";
  EXPECT_THROW(load_config(dir.path() / "bad.json"), ConfigError);
}

TEST(Config, ResolvedEchoRoundTrips) {
  const auto c = parse_config(small_run());
  const auto echo = to_json(c);
  EXPECT_EQ(echo["es"]["mu"], 4);
  EXPECT_EQ(echo["guidance"]["max_depth"], 3);
  const auto again = parse_config(echo);
  EXPECT_EQ(to_json(again), echo);
}

TEST(RunToDirectory, WritesArchiveAndManifest) {
  TempDir dir;
  const auto config = parse_config(small_run());
  const auto out = run_to_directory(config, 3, dir.path() / "run");
  EXPECT_EQ(out.archive_size, 16u);

  const auto archive = evo::load_archive(dir.path() / "run" / "archive.jsonl");
  EXPECT_EQ(archive.size(), 16u);
  EXPECT_EQ(evo::canonical_hash(archive), out.archive_hash);

  std::ifstream in(dir.path() / "run" / "manifest.json");
  const auto m = json::parse(in);
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["status"], "completed");
  EXPECT_EQ(m["provider"], "mock");
  EXPECT_EQ(m["temperature"], "provider default");
  EXPECT_EQ(m["archive_hash"], out.archive_hash);
  EXPECT_EQ(m["archive_size"], 16);
  EXPECT_EQ(m["best"]["id"], out.result.best_id);
  EXPECT_EQ(m["total_tokens"]["total"], out.result.total_usage.total());
  EXPECT_EQ(m["config"], to_json(config));
  EXPECT_TRUE(m["error"].is_null());

  // Same seed, same archive.
  EXPECT_EQ(run_to_directory(config, 3, dir.path() / "again").archive_hash, out.archive_hash);
}

TEST(RunToDirectory, SandboxEvaluatorThroughConfig) {
  TempDir dir;
  const auto script = dir.path() / "sandbox.sh";
  std::ofstream(script) << "cat > /dev/null\n"
                           "printf '{\"status\":\"ok\",\"trace\":[10,1,0.001],\"evals_used\":3,"
                           "\"error_message\":null,\"wall_time_s\":0.0}'\n";
  auto doc = small_run();
  doc["eval"] = {{"kind", "sandbox"},
                 {"sandbox_command", {"/bin/sh", script.string()}},
                 {"problems", json::array({{{"suite", "sbox_separable"}, {"fid", 1}, {"instance", 1}, {"dim", 5},
                                            {"inner_budget", 3}}})},
                 {"time_limit_s", 5.0}};
  doc["es"]["budget"] = 8;
  const auto out = run_to_directory(parse_config(doc), 1, dir.path() / "run");
  EXPECT_EQ(out.archive_size, 8u);
  for (const auto& c : evo::load_archive(dir.path() / "run" / "archive.jsonl")) {
    EXPECT_FALSE(c.error.has_value()) << *c.error;
    EXPECT_GT(c.fitness, 0.0);
  }
}

TEST(RunToDirectory, AbortWritesAbortedManifest) {
  TempDir dir;
  auto doc = small_run();
  doc["eval"] = {{"kind", "sandbox"},
                 {"sandbox_command", {"/nonexistent/python3"}},
                 {"problems", json::array({{{"suite", "sbox_separable"}, {"fid", 1}, {"instance", 1}, {"dim", 5},
                                            {"inner_budget", 3}}})}};
  EXPECT_THROW(run_to_directory(parse_config(doc), 1, dir.path() / "run"), EvaluatorUnavailable);
  std::ifstream in(dir.path() / "run" / "manifest.json");
  const auto m = json::parse(in);
  EXPECT_EQ(m["status"], "aborted");
  EXPECT_TRUE(m["error"].is_string());
  EXPECT_EQ(m["archive_size"], 0);
}
