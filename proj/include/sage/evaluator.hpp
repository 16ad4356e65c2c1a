#pragma once

#include "sage/ast_features.hpp"
#include "sage/benchmarks.hpp"

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sage {

struct Evaluation {
  double fitness = 0.0;
  std::optional<std::string> error;
  bool timed_out = false;
};

/// Scores one candidate program. Implementations must be safe to call from
/// several threads at once. Failures of the candidate itself are reported
/// through Evaluation::error with fitness 0; only infrastructure failures
/// throw (EvaluatorUnavailable).
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual Evaluation evaluate(const std::string& code) = 0;
};

// ---------------------------------------------------------------------------
// In-process synthetic evaluator: fitness is a logistic function of the
// min-max normalized code features. No code is executed.

struct SyntheticParams {
  std::array<double, features::kFeatureCount> weights{};
  std::array<std::pair<double, double>, features::kFeatureCount> ranges{};
  double bias = 0.0;

  /// Rewards total parameter count and total cyclomatic complexity.
  static SyntheticParams defaults();
};

/// logistic(bias + w . z) with z_j = clamp((x_j - lo_j) / (hi_j - lo_j), 0, 1).
double synthetic_fitness(const features::FeatureVector& x, const SyntheticParams& params);

class SyntheticEvaluator final : public Evaluator {
 public:
  explicit SyntheticEvaluator(SyntheticParams params = SyntheticParams::defaults())
      : params_(std::move(params)) {}

  Evaluation evaluate(const std::string& code) override;

 private:
  SyntheticParams params_;
  features::FeatureCache cache_;
};

// ---------------------------------------------------------------------------
// Out-of-process sandbox protocol: one JSON request on the child's standard
// input, one JSON response on its standard output.

struct SandboxRequest {
  std::string code;
  bench::ProblemSpec problem;
  double time_limit_s = 60.0;
  std::int64_t seed = 0;
};

enum class SandboxStatus { ok, error, timeout };

struct SandboxResponse {
  SandboxStatus status = SandboxStatus::error;
  std::vector<double> trace;
  int evals_used = 0;
  std::optional<std::string> error_message;
  double wall_time_s = 0.0;
};

nlohmann::json to_json(const SandboxRequest& request);
nlohmann::json to_json(const SandboxResponse& response);
/// Throws MalformedResponse when fields are missing, mistyped, or violate
/// the status invariants (ok requires a non-empty non-increasing trace).
SandboxResponse sandbox_response_from_json(const nlohmann::json& j);

struct ProcessResult {
  int exit_code = -1;  // -1 when killed by a signal
  bool killed_on_timeout = false;
  bool spawn_failed = false;
  std::string out;
  std::string err;
};

/// Runs `argv` in a fresh scratch working directory, feeds `input` on stdin
/// and kills the whole process group after `timeout`.
ProcessResult run_process(const std::vector<std::string>& argv, const std::string& input,
                          std::chrono::duration<double> timeout);

struct SandboxParams {
  std::vector<std::string> command;
  std::vector<bench::ProblemSpec> problems;
  double time_limit_s = 60.0;
  /// Extra time granted before the parent kills the child.
  double kill_grace_s = 5.0;
  std::int64_t seed = 0;
  bench::AoccParams aocc;
};

/// Executes one request through the sandbox command. A child that cannot be
/// spawned raises EvaluatorUnavailable; a child killed by the parent yields
/// status timeout with an empty trace.
SandboxResponse execute_in_sandbox(const SandboxParams& params, const SandboxRequest& request);

/// Mean AOCC over the configured problems. Any error status yields fitness 0
/// with the error text; timeouts score the partial trace and are flagged.
class SandboxEvaluator final : public Evaluator {
 public:
  explicit SandboxEvaluator(SandboxParams params);

  Evaluation evaluate(const std::string& code) override;

 private:
  SandboxParams params_;
  std::vector<bench::Problem> problems_;
};

}  // namespace sage
