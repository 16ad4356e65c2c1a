#include "sage/benchmarks.hpp"

#include "sage/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace sage::bench {

namespace {

constexpr double kRegretFloor = 1e-12;

std::uint64_t instance_seed(const ProblemSpec& spec) {
  const auto instance = static_cast<std::uint64_t>(spec.instance);
  if (spec.suite == Suite::affine_pair) {
    const auto pair = static_cast<std::uint64_t>(100 + 10 * spec.fid + spec.fid_b);
    return 1000003ULL * pair + instance;
  }
  return 1000003ULL * static_cast<std::uint64_t>(spec.fid) + instance;
}

double exponent_ratio(int i, int d) {
  return d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
}

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

double sphere(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return s;
}

double ellipsoid(std::span<const double> z) {
  const int d = static_cast<int>(z.size());
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    s += std::pow(10.0, 6.0 * exponent_ratio(i, d)) * z[static_cast<std::size_t>(i)] *
         z[static_cast<std::size_t>(i)];
  }
  return s;
}

double rastrigin(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
  return 10.0 * static_cast<double>(z.size()) + s;
}

double bueche_rastrigin(std::span<const double> z, std::span<const double> x, double bound) {
  const int d = static_cast<int>(z.size());
  std::vector<double> y(z.begin(), z.end());
  for (int i = 0; i < d; ++i) {
    double scale = std::pow(10.0, 0.5 * exponent_ratio(i, d));
    if (y[static_cast<std::size_t>(i)] > 0.0 && i % 2 == 0) scale *= 10.0;
    y[static_cast<std::size_t>(i)] *= scale;
  }
  double penalty = 0.0;
  for (double v : x) {
    const double excess = std::max(0.0, std::abs(v) - bound);
    penalty += excess * excess;
  }
  return rastrigin(y) + 100.0 * penalty;
}

double linear_slope(std::span<const double> x, std::span<const double> x_opt) {
  const int d = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    const double xo = x_opt[static_cast<std::size_t>(i)];
    const double xi = x[static_cast<std::size_t>(i)];
    const double slope = sign_of(xo) * std::pow(10.0, exponent_ratio(i, d));
    const double z = xi * xo < 25.0 ? xi : xo;
    s += 5.0 * std::abs(slope) - slope * z;
  }
  return s;
}

}  // namespace

std::string_view to_string(Suite s) noexcept {
  switch (s) {
    case Suite::sbox_separable: return "sbox_separable";
    case Suite::affine_pair: return "affine_pair";
    case Suite::synthetic: return "synthetic";
  }
  return "";
}

Suite suite_from_string(std::string_view s) {
  if (s == "sbox_separable") return Suite::sbox_separable;
  if (s == "affine_pair") return Suite::affine_pair;
  if (s == "synthetic") return Suite::synthetic;
  throw ConfigError("unknown suite '" + std::string(s) + "'");
}

nlohmann::json to_json(const ProblemSpec& spec) {
  nlohmann::ordered_json j;
  j["suite"] = to_string(spec.suite);
  j["fid"] = spec.fid;
  j["instance"] = spec.instance;
  j["dim"] = spec.dim;
  j["inner_budget"] = spec.inner_budget;
  j["lb"] = spec.lb;
  j["ub"] = spec.ub;
  if (spec.suite == Suite::affine_pair) {
    j["fid_b"] = spec.fid_b;
    j["alpha"] = spec.alpha;
  }
  return nlohmann::json(j);
}

ProblemSpec problem_spec_from_json(const nlohmann::json& j) {
  ProblemSpec spec;
  spec.suite = suite_from_string(j.at("suite").get<std::string>());
  spec.fid = j.at("fid").get<int>();
  spec.instance = j.at("instance").get<int>();
  spec.dim = j.at("dim").get<int>();
  spec.inner_budget = j.at("inner_budget").get<int>();
  spec.lb = j.value("lb", -5.0);
  spec.ub = j.value("ub", 5.0);
  if (spec.suite == Suite::affine_pair) {
    spec.fid_b = j.at("fid_b").get<int>();
    spec.alpha = j.at("alpha").get<double>();
  }
  return spec;
}

std::uint64_t SplitMix64::next() noexcept {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

Problem make_problem(const ProblemSpec& spec) {
  if (spec.dim < 1) throw std::invalid_argument("problem dimension must be >= 1");
  if (spec.inner_budget < 1) throw std::invalid_argument("inner budget must be >= 1");
  switch (spec.suite) {
    case Suite::sbox_separable:
      if (spec.fid < 1 || spec.fid > 5) {
        throw UnknownFid("separable suite has fids 1..5, got " + std::to_string(spec.fid));
      }
      break;
    case Suite::affine_pair:
      if (spec.fid < 1 || spec.fid > 4 || spec.fid_b < 1 || spec.fid_b > 4) {
        throw UnknownFid("affine components must be fids 1..4");
      }
      if (spec.alpha < 0.0 || spec.alpha > 1.0) {
        throw std::invalid_argument("affine alpha must lie in [0, 1]");
      }
      break;
    case Suite::synthetic:
      throw UnknownFid("the synthetic suite scores code features and has no objective");
  }

  Problem p;
  p.spec_ = spec;
  const auto d = static_cast<std::size_t>(spec.dim);
  p.bounds_.lb.assign(d, spec.lb);
  p.bounds_.ub.assign(d, spec.ub);
  p.x_opt_.assign(d, 0.0);
  if (spec.instance != 0) {
    SplitMix64 rng(instance_seed(spec));
    for (auto& v : p.x_opt_) v = -4.0 + 8.0 * rng.uniform();
    p.f_opt_ = std::floor((-1000.0 + 2000.0 * rng.uniform()) * 100.0 + 0.5) / 100.0;
  }
  if (spec.suite == Suite::sbox_separable && spec.fid == 5) {
    for (auto& v : p.x_opt_) v = 5.0 * sign_of(v);
  }
  return p;
}

double Problem::raw_value(int fid, std::span<const double> x) const {
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] - x_opt_[i];
  switch (fid) {
    case 1: return sphere(z);
    case 2: return ellipsoid(z);
    case 3: return rastrigin(z);
    case 4: return bueche_rastrigin(z, x, spec_.ub);
    case 5: return linear_slope(x, x_opt_);
    default: throw UnknownFid("fid " + std::to_string(fid));
  }
}

double Problem::operator()(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != spec_.dim) {
    throw DimensionMismatch("problem expects " + std::to_string(spec_.dim) + " coordinates");
  }
  if (spec_.suite == Suite::affine_pair) {
    const double ra = std::max(raw_value(spec_.fid, x), kRegretFloor);
    const double rb = std::max(raw_value(spec_.fid_b, x), kRegretFloor);
    const double log_regret = (1.0 - spec_.alpha) * std::log10(ra) + spec_.alpha * std::log10(rb);
    return f_opt_ + std::pow(10.0, log_regret);
  }
  return f_opt_ + raw_value(spec_.fid, x);
}

Trace::Trace(std::vector<double> best_so_far) : values_(std::move(best_so_far)) {
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (values_[i] > values_[i - 1]) {
      throw std::invalid_argument("best-so-far trace increases at index " + std::to_string(i));
    }
  }
}

Trace Trace::from_raw(std::span<const double> raw) {
  std::vector<double> best;
  best.reserve(raw.size());
  for (double v : raw) best.push_back(best.empty() ? v : std::min(best.back(), v));
  return Trace(std::move(best));
}

double aocc(const Trace& trace, int budget, double optimum, const AoccParams& params) {
  if (trace.empty()) throw EmptyTrace("AOCC of an empty trace");
  if (budget < 1) throw std::invalid_argument("AOCC budget must be >= 1");
  if (!(params.lb < params.ub)) throw std::invalid_argument("AOCC requires lb < ub");
  const auto& v = trace.values();
  const double span = params.ub - params.lb;
  double sum = 0.0;
  for (int i = 0; i < budget; ++i) {
    const double best = v[std::min(static_cast<std::size_t>(i), v.size() - 1)];
    const double y = std::log10(std::max(best - optimum, kRegretFloor));
    sum += 1.0 - (std::clamp(y, params.lb, params.ub) - params.lb) / span;
  }
  return sum / static_cast<double>(budget);
}

double aggregate_fitness(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate_fitness needs at least one value");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace sage::bench
