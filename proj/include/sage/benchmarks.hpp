#pragma once

// Benchmark problems and the AOCC anytime-performance score.
//
// The separable suite uses simplified instances: a coordinate shift drawn
// uniformly from [-4, 4]^d and a value offset, both derived from a SplitMix64
// stream seeded by (fid, instance). No rotations or oscillation transforms
// are applied. Instance 0 is the untransformed function with f_opt = 0.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sage::bench {

enum class Suite { sbox_separable, affine_pair, synthetic };

std::string_view to_string(Suite s) noexcept;
Suite suite_from_string(std::string_view s);

struct ProblemSpec {
  Suite suite = Suite::sbox_separable;
  int fid = 1;
  int instance = 1;
  int dim = 5;
  int inner_budget = 500;
  double lb = -5.0;
  double ub = 5.0;
  // affine_pair only: second component and mixing weight in [0, 1].
  int fid_b = 1;
  double alpha = 0.5;
};

nlohmann::json to_json(const ProblemSpec& spec);
ProblemSpec problem_spec_from_json(const nlohmann::json& j);

/// Deterministic stream shared with the out-of-process sandbox so that both
/// sides derive identical instances.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
  std::uint64_t next() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;

 private:
  std::uint64_t state_;
};

struct Bounds {
  std::vector<double> lb;
  std::vector<double> ub;
};

/// A fully instantiated objective. Cheap to copy, immutable, thread-safe.
class Problem {
 public:
  double operator()(std::span<const double> x) const;

  const ProblemSpec& spec() const noexcept { return spec_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  int dim() const noexcept { return spec_.dim; }
  const std::vector<double>& optimum_location() const noexcept { return x_opt_; }
  double optimum_value() const noexcept { return f_opt_; }

 private:
  friend Problem make_problem(const ProblemSpec& spec);

  double raw_value(int fid, std::span<const double> x) const;

  ProblemSpec spec_;
  Bounds bounds_;
  std::vector<double> x_opt_;
  double f_opt_ = 0.0;
};

/// Throws UnknownFid for fids outside 1..5 (1..4 for affine components) and
/// for the synthetic suite, which has no objective function.
Problem make_problem(const ProblemSpec& spec);

/// Best-so-far objective values, non-increasing by construction.
class Trace {
 public:
  Trace() = default;
  /// Throws std::invalid_argument when `best_so_far` increases anywhere.
  explicit Trace(std::vector<double> best_so_far);
  /// Running minimum of raw per-evaluation values.
  static Trace from_raw(std::span<const double> raw);

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

 private:
  std::vector<double> values_;
};

struct AoccParams {
  double lb = -8.0;  // log10 regret floor
  double ub = 2.0;   // log10 regret ceiling
};

/// Area over the convergence curve in [0, 1]. Traces shorter than `budget`
/// are padded with their last value; longer ones are truncated.
/// Throws EmptyTrace.
double aocc(const Trace& trace, int budget, double optimum, const AoccParams& params = {});

/// Unweighted mean; throws std::invalid_argument on empty input.
double aggregate_fitness(std::span<const double> values);

}  // namespace sage::bench
