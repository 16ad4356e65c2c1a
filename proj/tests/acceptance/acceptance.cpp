// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Uses only the mock provider and the synthetic evaluator.

#include "sage/analytics.hpp"
#include "sage/benchmarks.hpp"
#include "sage/config.hpp"
#include "sage/evolution.hpp"
#include "sage/shap.hpp"
#include "sage/surrogate.hpp"

#include "shapley_oracle.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

using namespace sage;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. AOCC boundary identities.
Outcome aocc_identities() {
  const bench::AoccParams p;  // lb -8, ub 2
  const int budget = 1000;
  const std::size_t n = budget;
  std::vector<double> half(n / 2, 1e2);
  half.resize(n, 1e-8);
  // Regret is measured against an optimum of 0.
  const double a = bench::aocc(bench::Trace(std::vector<double>(n, 1e-8)), budget, 0.0, p);
  const double b = bench::aocc(bench::Trace(std::vector<double>(n, 1e2)), budget, 0.0, p);
  const double c = bench::aocc(bench::Trace(half), budget, 0.0, p);
  return {a == 1.0 && b == 0.0 && c == 0.5, fmt("floor %.17g, ceiling %.17g, half %.17g", a, b, c)};
}

// 2. Feature golden file for the reference RandomSearch program.
Outcome feature_golden() {
  const auto code = read_text(fs::path(SAGE_TEST_DATA_DIR) / "random_search.py");
  const auto golden = nlohmann::json::parse(read_text(fs::path(SAGE_TEST_DATA_DIR) / "random_search.features.json"));
  const auto x = features::extract_features(code);
  const auto& names = features::feature_names();
  int mismatches = 0;
  std::string first;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expected = golden.at(std::string(names[i])).get<double>();
    if (x[i] != expected) {
      if (mismatches++ == 0) first = fmt("%s: got %.17g want %.17g", std::string(names[i]).c_str(), x[i], expected);
    }
  }
  auto at = [&](features::Feature f) { return x[features::index_of(f)]; };
  const bool complexity = at(features::Feature::function_count) == 2 &&
                          at(features::Feature::total_parameter_count) == 5 &&
                          at(features::Feature::total_cyclomatic_complexity) == 4;
  return {mismatches == 0 && complexity,
          mismatches == 0 ? fmt("22/22 features exact; functions %g, params %g, cc %g",
                                at(features::Feature::function_count),
                                at(features::Feature::total_parameter_count),
                                at(features::Feature::total_cyclomatic_complexity))
                          : fmt("%d mismatches, first %s", mismatches, first.c_str())};
}

// 3. Surrogate fit on y = 3 x_k.
Outcome surrogate_fit() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  const std::size_t d = 6, k = 2;
  std::vector<std::vector<double>> x(200, std::vector<double>(d));
  std::vector<double> y;
  for (auto& row : x) {
    for (auto& v : row) v = u(rng);
    y.push_back(3.0 * row[k]);
  }
  const auto model = surrogate::fit(x, y);
  double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double var = 0.0, se = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    var += (y[i] - mean) * (y[i] - mean);
    const double e = surrogate::predict(model, x[i]) - y[i];
    se += e * e;
  }
  const double sd = std::sqrt(var / static_cast<double>(y.size()));
  const double rmse = std::sqrt(se / static_cast<double>(y.size()));
  bool monotone = model.training_mse.size() == 101;
  for (std::size_t r = 1; r < model.training_mse.size(); ++r) {
    monotone = monotone && model.training_mse[r] <= model.training_mse[r - 1];
  }
  return {rmse < 0.1 * sd && monotone,
          fmt("rmse %.4g < %.4g; %zu rounds, mse non-increasing: %s", rmse, 0.1 * sd,
              model.training_mse.size() - 1, monotone ? "yes" : "no")};
}

// 4. TreeSHAP additivity and brute-force equivalence.
Outcome shap_exactness() {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_additivity = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 21;
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 40; ++i) {
      x.push_back(oracle::random_point(rng, d));
      y.push_back(std::sin(6.0 * x.back()[0]) + x.back()[static_cast<std::size_t>(d - 1)] * u(rng));
    }
    const auto model = surrogate::fit(x, y, {.n_trees = 10 + trial % 90, .max_depth = 1 + trial % 4});
    const auto point = oracle::random_point(rng, d);
    const auto attr = shap::shap_values(model, point);
    const double total = attr.phi0 + std::accumulate(attr.phi.begin(), attr.phi.end(), 0.0);
    worst_additivity = std::max(worst_additivity, std::abs(total - surrogate::predict(model, point)));
  }
  double worst_brute = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 8;
    const auto model = oracle::random_model(rng, d, 1 + trial % 5, 1 + trial % 3);
    const auto x = oracle::random_point(rng, d);
    const auto attr = shap::shap_values(model, x);
    const auto expected = oracle::brute_force_shapley(model, x);
    for (int j = 0; j < d; ++j) {
      worst_brute = std::max(worst_brute, std::abs(attr.phi[static_cast<std::size_t>(j)] -
                                                   expected[static_cast<std::size_t>(j)]));
    }
  }
  return {worst_additivity <= 1e-6 && worst_brute <= 1e-6,
          fmt("max additivity error %.3g, max brute-force error %.3g", worst_additivity, worst_brute)};
}

// Shared runs for criteria 5 and 6.
struct LoopRun {
  bool guided = false;
  double evals_to_target = std::numeric_limits<double>::infinity();
  int guided_offspring = 0;
  int named_target = 0;
  bool elitism_held = true;
};

std::vector<LoopRun> closed_loop_runs() {
  std::vector<LoopRun> runs;
  const auto target = features::index_of(features::Feature::total_parameter_count);
  for (bool guided : {true, false}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticParams sp = SyntheticParams::defaults();
      sp.weights = {};
      sp.weights[target] = 8.0;
      sp.bias = -3.0;
      SyntheticEvaluator evaluator(sp);
      llm::MockProvider provider({.seed = seed, .obedience = 0.8});
      evo::RunConfig cfg;
      cfg.mu = 4;
      cfg.lambda = 8;
      cfg.budget = 120;
      cfg.guidance_enabled = guided;
      cfg.seed = seed;
      evo::Archive archive;
      evo::Engine engine(cfg, provider, evaluator, archive);
      engine.run();

      LoopRun r;
      r.guided = guided;
      for (std::size_t i = 0; i < archive.size(); ++i) {
        if (archive[i].fitness >= 0.9) {
          r.evals_to_target = static_cast<double>(i + 1);
          break;
        }
      }
      for (const auto& c : archive.records()) {
        if (!c.guidance) continue;
        ++r.guided_offspring;
        r.named_target += c.guidance->feature == "total_parameter_count";
      }
      const auto& h = engine.history();
      for (std::size_t g = 1; g < h.size(); ++g) {
        r.elitism_held = r.elitism_held && h[g].best_population_fitness >= h[g - 1].best_population_fitness;
      }
      runs.push_back(r);
    }
  }
  return runs;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 5. Closed-loop guidance efficacy.
Outcome guidance_efficacy(const std::vector<LoopRun>& runs) {
  std::vector<double> on, off;
  int guided = 0, named = 0;
  for (const auto& r : runs) {
    (r.guided ? on : off).push_back(r.evals_to_target);
    guided += r.guided_offspring;
    named += r.named_target;
  }
  const double m_on = median(on), m_off = median(off);
  const double share = guided > 0 ? static_cast<double>(named) / guided : 0.0;
  // A run that never reaches 0.9 counts as infinitely slow; the guided median
  // must itself be finite.
  const bool faster = std::isfinite(m_on) && m_on <= 0.5 * m_off;
  return {faster && share > 0.5,
          fmt("median evals to 0.9: guided %g, unguided %g; target named in %d/%d guided offspring (%.1f%%)",
              m_on, m_off, named, guided, 100.0 * share)};
}

// 6. Elitist best fitness never decreases.
Outcome elitism_invariant(const std::vector<LoopRun>& runs) {
  int held = 0;
  for (const auto& r : runs) held += r.elitism_held;
  return {held == static_cast<int>(runs.size()), fmt("%d/%zu runs non-decreasing", held, runs.size())};
}

// 7. Speed-up hand example and missing values.
Outcome speedup_example() {
  const auto s = analytics::speedup_curve({0.5, 0.9}, {0.1, 0.5, 0.7, 0.9});
  const bool hand = s.size() == 2 && s[1].has_value() && *s[1] == 2.0;
  const auto missing = analytics::speedup_curve({0.5, 0.9}, {0.1, 0.5});
  const bool gap = missing.size() == 2 && missing[0].has_value() && !missing[1].has_value();
  return {hand && gap, fmt("m=2, n=4 gives %s; unreached level gives %s",
                           s.size() == 2 && s[1] ? fmt("%.17g", *s[1]).c_str() : "missing",
                           gap ? "missing" : "a value")};
}

// 8. Deterministic archives.
Outcome determinism() {
  std::string tmpl = (fs::temp_directory_path() / "sage-acceptance-XXXXXX").string();
  const fs::path dir(::mkdtemp(tmpl.data()));
  const auto config = config::parse_config(nlohmann::json::object());
  const auto a = config::run_to_directory(config, 42, dir / "a");
  const auto b = config::run_to_directory(config, 42, dir / "b");
  const auto reloaded = evo::canonical_hash(evo::load_archive(dir / "b" / "archive.jsonl"));
  fs::remove_all(dir);
  return {a.archive_hash == b.archive_hash && reloaded == a.archive_hash && a.archive_size == 200,
          fmt("%zu records, hash %.16s... %s", a.archive_size, a.archive_hash.c_str(),
              a.archive_hash == b.archive_hash ? "identical" : "differs")};
}

// 9. Consistency table on a hand-built archive.
Outcome consistency_table() {
  const auto k = features::index_of(features::Feature::total_parameter_count);
  auto make = [&](std::string id, std::optional<std::string> parent, llm::PromptKind kind, double params,
                  std::optional<shap::Direction> dir) {
    evo::Candidate c;
    c.id = std::move(id);
    c.parent_id = std::move(parent);
    c.prompt_kind = kind;
    c.features = features::FeatureVector{};
    (*c.features)[k] = params;
    if (dir) c.guidance = evo::GuidanceRecord{"total_parameter_count", *dir};
    return c;
  };
  using K = llm::PromptKind;
  using D = shap::Direction;
  // Hand count: refine 2 match / 2 mismatch, random_new 1 match / 1 mismatch.
  const std::vector<evo::Candidate> archive = {
      make("p", std::nullopt, K::init, 5, std::nullopt),
      make("a", "p", K::refine, 7, D::increase),      // 5 -> 7 up: match
      make("b", "p", K::refine, 5, D::increase),      // unchanged: mismatch
      make("c", "a", K::refine, 4, D::decrease),      // 7 -> 4 down: match
      make("d", "a", K::refine, 8, D::decrease),      // 7 -> 8 up: mismatch
      make("e", "p", K::random_new, 9, D::increase),  // 5 -> 9 up: match
      make("f", "c", K::random_new, 6, D::decrease),  // 4 -> 6 up: mismatch
  };
  const auto t = analytics::consistency_analysis(archive);
  const analytics::MatchCounts refine{2, 2}, random_new{1, 1};
  const bool ok = t.by_prompt_kind.size() == 2 && t.by_prompt_kind.count("refine") &&
                  t.by_prompt_kind.count("random_new") && t.by_prompt_kind.at("refine") == refine &&
                  t.by_prompt_kind.at("random_new") == random_new && t.skipped == 0;
  auto cell = [&](const char* kind) {
    const auto it = t.by_prompt_kind.find(kind);
    return it == t.by_prompt_kind.end() ? std::string("none") : fmt("%d/%d", it->second.match, it->second.mismatch);
  };
  return {ok, fmt("refine %s, random_new %s (match/mismatch)", cell("refine").c_str(), cell("random_new").c_str())};
}

}  // namespace

int main() {
  using Clock = std::chrono::steady_clock;
  int failures = 0;
  auto report = [&](int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = limit_s <= 0.0 || secs < limit_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %d: %s  %s: %s [%.2f s%s]\n", id, pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
                limit_s > 0.0 ? fmt(", limit %g s", limit_s).c_str() : "");
    std::fflush(stdout);
  };

  std::vector<LoopRun> loop;
  report(1, "AOCC boundary identities", 1.0, aocc_identities);
  report(2, "feature golden file", 1.0, feature_golden);
  report(3, "surrogate fit", 10.0, surrogate_fit);
  report(4, "TreeSHAP exactness", 30.0, shap_exactness);
  report(5, "closed-loop guidance efficacy", 120.0, [&] {
    loop = closed_loop_runs();
    return guidance_efficacy(loop);
  });
  report(6, "elitism invariant", 0.0, [&] { return elitism_invariant(loop); });
  report(7, "speed-up semantics", 1.0, speedup_example);
  report(8, "determinism", 0.0, determinism);
  report(9, "consistency table", 1.0, consistency_table);
  std::printf("%d/9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
