#include "sage/errors.hpp"
#include "sage/evaluator.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

namespace sf = sage::features;
namespace sb = sage::bench;

namespace {

std::string with_params(int n) {
  std::string code = "def f(";
  for (int i = 0; i < n; ++i) code += (i ? ", p" : "p") + std::to_string(i);
  return code + "):\n    return 0\n";
}

/// Writes an executable shell script into a per-test temp file.
class Script {
 public:
  explicit Script(const std::string& body) {
    path_ = std::filesystem::temp_directory_path() /
            ("sage-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++) + ".sh");
    std::ofstream(path_) << "#!/bin/sh\n" << body;
    std::filesystem::permissions(path_, std::filesystem::perms::owner_all);
  }
  ~Script() { std::filesystem::remove(path_); }
  std::string path() const { return path_.string(); }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

sb::ProblemSpec sphere() {
  sb::ProblemSpec spec;
  spec.fid = 1;
  spec.instance = 0;
  spec.dim = 2;
  spec.inner_budget = 4;
  return spec;
}

}  // namespace

TEST(Synthetic, ZeroWeightsGiveOneHalf) {
  sage::SyntheticParams params;
  sage::SyntheticEvaluator eval(params);
  EXPECT_DOUBLE_EQ(eval.evaluate(with_params(3)).fitness, 0.5);
  EXPECT_DOUBLE_EQ(eval.evaluate("x = 1\n").fitness, 0.5);
}

TEST(Synthetic, MonotoneInParameterCount) {
  sage::SyntheticParams params = sage::SyntheticParams::defaults();
  params.weights = {};
  params.weights[sf::index_of(sf::Feature::total_parameter_count)] = 4.0;
  sage::SyntheticEvaluator eval(params);
  double previous = 0.0;
  for (int n = 0; n <= 12; ++n) {
    const auto e = eval.evaluate(with_params(n));
    EXPECT_FALSE(e.error);
    EXPECT_GT(e.fitness, previous);
    EXPECT_GT(e.fitness, 0.0);
    EXPECT_LT(e.fitness, 1.0);
    previous = e.fitness;
  }
}

TEST(Synthetic, ClampsAndHandlesDegenerateRanges) {
  sage::SyntheticParams params;
  const auto k = sf::index_of(sf::Feature::total_parameter_count);
  params.weights[k] = 2.0;
  params.ranges[k] = {0.0, 4.0};
  params.bias = -1.0;
  sf::FeatureVector x{};
  x[k] = 100.0;
  EXPECT_DOUBLE_EQ(sage::synthetic_fitness(x, params), 1.0 / (1.0 + std::exp(-1.0)));
  x[k] = -5.0;
  EXPECT_DOUBLE_EQ(sage::synthetic_fitness(x, params), 1.0 / (1.0 + std::exp(1.0)));
  params.ranges[k] = {3.0, 3.0};
  EXPECT_DOUBLE_EQ(sage::synthetic_fitness(x, params), 1.0 / (1.0 + std::exp(1.0)));
}

TEST(Synthetic, UnparsableCodeScoresZero) {
  sage::SyntheticEvaluator eval;
  const auto e = eval.evaluate("def broken(:\n");
  EXPECT_EQ(e.fitness, 0.0);
  ASSERT_TRUE(e.error);
  EXPECT_NE(e.error->find("ParseError"), std::string::npos);
}

TEST(SandboxProtocol, RequestSchema) {
  sage::SandboxRequest req{"print(1)", sphere(), 12.5, 42};
  const auto j = sage::to_json(req);
  EXPECT_EQ(j.at("code"), "print(1)");
  EXPECT_EQ(j.at("time_limit_s"), 12.5);
  EXPECT_EQ(j.at("seed"), 42);
  const auto& p = j.at("problem");
  for (const char* key : {"suite", "fid", "instance", "dim", "inner_budget", "lb", "ub"}) {
    EXPECT_TRUE(p.contains(key)) << key;
  }
  EXPECT_EQ(p.size(), 7u);
  EXPECT_EQ(j.size(), 4u);
}

TEST(SandboxProtocol, ResponseRoundTrip) {
  sage::SandboxResponse r;
  r.status = sage::SandboxStatus::ok;
  r.trace = {3.0, 2.0, 2.0};
  r.evals_used = 3;
  r.wall_time_s = 0.25;
  const auto j = sage::to_json(r);
  EXPECT_EQ(j.at("status"), "ok");
  EXPECT_TRUE(j.at("error_message").is_null());
  const auto back = sage::sandbox_response_from_json(j);
  EXPECT_EQ(back.trace, r.trace);
  EXPECT_EQ(back.evals_used, 3);
  EXPECT_FALSE(back.error_message);
}

TEST(SandboxProtocol, MalformedResponses) {
  using nlohmann::json;
  EXPECT_THROW(sage::sandbox_response_from_json(json::parse(R"({"status":"ok"})")),
               sage::MalformedResponse);
  EXPECT_THROW(sage::sandbox_response_from_json(json::parse(
                   R"({"status":"maybe","trace":[],"evals_used":0,"wall_time_s":0})")),
               sage::MalformedResponse);
  EXPECT_THROW(sage::sandbox_response_from_json(json::parse(
                   R"({"status":"ok","trace":[],"evals_used":0,"wall_time_s":0})")),
               sage::MalformedResponse);
  EXPECT_THROW(sage::sandbox_response_from_json(json::parse(
                   R"({"status":"ok","trace":[1,2],"evals_used":2,"wall_time_s":0})")),
               sage::MalformedResponse);
  EXPECT_THROW(sage::sandbox_response_from_json(json::parse(
                   R"({"status":"ok","trace":"x","evals_used":2,"wall_time_s":0})")),
               sage::MalformedResponse);
}

TEST(Process, EchoesStdinAndCapturesStderr) {
  const auto r = sage::run_process({"/bin/sh", "-c", "cat; echo oops >&2; exit 3"}, "hello",
                                   std::chrono::seconds(5));
  EXPECT_EQ(r.out, "hello");
  EXPECT_EQ(r.err, "oops\n");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_FALSE(r.killed_on_timeout);
}

TEST(Process, LargeInputDoesNotDeadlock) {
  const std::string big(1 << 20, 'x');
  const auto r = sage::run_process({"/bin/cat"}, big, std::chrono::seconds(10));
  EXPECT_EQ(r.out.size(), big.size());
  EXPECT_EQ(r.exit_code, 0);
}

TEST(Process, RunsInScratchDirectory) {
  const auto r = sage::run_process({"/bin/sh", "-c", "touch marker; pwd"}, "",
                                   std::chrono::seconds(5));
  const std::filesystem::path dir(r.out.substr(0, r.out.find('\n')));
  EXPECT_NE(dir, std::filesystem::current_path());
  EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Process, KillsOnTimeoutIncludingChildren) {
  const auto start = std::chrono::steady_clock::now();
  const auto r = sage::run_process({"/bin/sh", "-c", "sleep 30 & sleep 30"}, "",
                                   std::chrono::milliseconds(300));
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_TRUE(r.killed_on_timeout);
  EXPECT_LT(elapsed, std::chrono::seconds(5));
}

TEST(Process, MissingExecutable) {
  const auto r = sage::run_process({"/nonexistent/sandbox"}, "", std::chrono::seconds(5));
  EXPECT_TRUE(r.spawn_failed);
}

TEST(SandboxEvaluator, ScoresCannedTrace) {
  // Regret 1e-3 sits at 0.5 of the AOCC range for every evaluation.
  Script script(
      "cat > request.json\n"
      "echo '{\"status\":\"ok\",\"trace\":[0.001],\"evals_used\":1,"
      "\"error_message\":null,\"wall_time_s\":0.01}'\n");
  sage::SandboxParams params;
  params.command = {script.path()};
  params.problems = {sphere(), sphere()};
  params.time_limit_s = 5;
  sage::SandboxEvaluator eval(params);
  const auto e = eval.evaluate("anything");
  EXPECT_DOUBLE_EQ(e.fitness, 0.5);
  EXPECT_FALSE(e.error);
  EXPECT_FALSE(e.timed_out);
}

TEST(SandboxEvaluator, ForwardsRequestOnStdin) {
  Script script(
      "req=$(cat)\n"
      "case \"$req\" in *'\"inner_budget\":4'*'\"seed\":7'*) "
      "echo '{\"status\":\"ok\",\"trace\":[1e-9],\"evals_used\":1,\"error_message\":null,"
      "\"wall_time_s\":0}';;\n"
      "*) echo '{\"status\":\"error\",\"trace\":[],\"evals_used\":0,"
      "\"error_message\":\"bad request\",\"wall_time_s\":0}';;\n"
      "esac\n");
  sage::SandboxParams params;
  params.command = {script.path()};
  params.problems = {sphere()};
  params.seed = 7;
  sage::SandboxEvaluator eval(params);
  const auto e = eval.evaluate("code");
  EXPECT_FALSE(e.error) << *e.error;
  EXPECT_DOUBLE_EQ(e.fitness, 1.0);
}

TEST(SandboxEvaluator, CandidateErrorScoresZero) {
  Script script(
      "cat >/dev/null\n"
      "echo '{\"status\":\"error\",\"trace\":[],\"evals_used\":0,"
      "\"error_message\":\"NameError: x\",\"wall_time_s\":0}'\n");
  sage::SandboxParams params;
  params.command = {script.path()};
  params.problems = {sphere()};
  sage::SandboxEvaluator eval(params);
  const auto e = eval.evaluate("code");
  EXPECT_EQ(e.fitness, 0.0);
  ASSERT_TRUE(e.error);
  EXPECT_EQ(*e.error, "NameError: x");
}

TEST(SandboxEvaluator, GarbageOutputIsACandidateError) {
  Script script("cat >/dev/null\necho 'Traceback' >&2\necho not-json\nexit 1\n");
  sage::SandboxParams params;
  params.command = {script.path()};
  params.problems = {sphere()};
  sage::SandboxEvaluator eval(params);
  const auto e = eval.evaluate("code");
  EXPECT_EQ(e.fitness, 0.0);
  ASSERT_TRUE(e.error);
  EXPECT_NE(e.error->find("Traceback"), std::string::npos);
}

TEST(SandboxEvaluator, HungChildIsKilled) {
  Script script("sleep 30\n");
  sage::SandboxParams params;
  params.command = {script.path()};
  params.problems = {sphere()};
  params.time_limit_s = 0.2;
  params.kill_grace_s = 0.2;
  sage::SandboxEvaluator eval(params);
  const auto start = std::chrono::steady_clock::now();
  const auto e = eval.evaluate("while True: pass");
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
  EXPECT_TRUE(e.timed_out);
  EXPECT_EQ(e.fitness, 0.0);
}

TEST(SandboxEvaluator, TimeoutWithPartialTraceIsScored) {
  Script script(
      "cat >/dev/null\n"
      "echo '{\"status\":\"timeout\",\"trace\":[1e-9],\"evals_used\":1,"
      "\"error_message\":\"time limit\",\"wall_time_s\":5}'\n");
  sage::SandboxParams params;
  params.command = {script.path()};
  params.problems = {sphere()};
  sage::SandboxEvaluator eval(params);
  const auto e = eval.evaluate("code");
  EXPECT_TRUE(e.timed_out);
  EXPECT_DOUBLE_EQ(e.fitness, 1.0);
}

TEST(SandboxEvaluator, UnavailableSandboxThrows) {
  sage::SandboxParams params;
  params.command = {"/nonexistent/sandbox"};
  params.problems = {sphere()};
  sage::SandboxEvaluator eval(params);
  EXPECT_THROW(eval.evaluate("code"), sage::EvaluatorUnavailable);
}

TEST(SandboxEvaluator, ConfigErrors) {
  sage::SandboxParams params;
  params.problems = {sphere()};
  EXPECT_THROW(sage::SandboxEvaluator{params}, sage::ConfigError);
  params.command = {"/bin/true"};
  params.problems.clear();
  EXPECT_THROW(sage::SandboxEvaluator{params}, sage::ConfigError);
}
