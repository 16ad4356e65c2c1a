#include "sage/errors.hpp"
#include "sage/evolution.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>

using namespace sage;
using namespace sage::evo;
namespace fs = std::filesystem;

namespace {

/// Wraps the mock provider, records every bundle and can fail after a
/// number of calls.
class RecordingProvider final : public llm::Provider {
 public:
  explicit RecordingProvider(llm::MockParams params, int fail_after = -1)
      : inner_(params), fail_after_(fail_after) {}

  llm::Completion complete(const llm::PromptBundle& bundle) override {
    if (fail_after_ >= 0 && calls_.fetch_add(1) >= fail_after_) throw TransportError("connection refused");
    {
      std::lock_guard lock(mutex_);
      bundles_.push_back(bundle);
    }
    return inner_.complete(bundle);
  }
  std::string name() const override { return "recording"; }

  std::vector<llm::PromptBundle> bundles() const {
    std::lock_guard lock(mutex_);
    return bundles_;
  }

 private:
  llm::MockProvider inner_;
  int fail_after_;
  std::atomic<int> calls_{0};
  mutable std::mutex mutex_;
  std::vector<llm::PromptBundle> bundles_;
};

class FailingEvaluator final : public Evaluator {
 public:
  explicit FailingEvaluator(int fail_after) : fail_after_(fail_after) {}
  Evaluation evaluate(const std::string& code) override {
    if (calls_.fetch_add(1) >= fail_after_) throw EvaluatorUnavailable("sandbox interpreter missing");
    return inner_.evaluate(code);
  }

 private:
  SyntheticEvaluator inner_;
  int fail_after_;
  std::atomic<int> calls_{0};
};

RunConfig small_config(std::uint64_t seed = 1) {
  RunConfig c;
  c.mu = 4;
  c.lambda = 8;
  c.budget = 60;
  c.seed = seed;
  c.surrogate.n_trees = 30;
  return c;
}

struct Outcome {
  RunResult result;
  std::vector<Candidate> archive;
  std::vector<GenerationSummary> history;
};

Outcome run_once(const RunConfig& config, double obedience = 0.8, double failure_rate = 0.0) {
  llm::MockProvider provider({config.seed, obedience, failure_rate});
  SyntheticEvaluator evaluator;
  Archive archive;
  Engine engine(config, provider, evaluator, archive);
  Outcome o;
  o.result = engine.run();
  o.archive = archive.records();
  o.history = engine.history();
  return o;
}

}  // namespace

TEST(Engine, ArchiveSizeEqualsBudget) {
  for (int budget : {4, 5, 12, 13, 60}) {
    auto config = small_config();
    config.budget = budget;
    const auto o = run_once(config);
    EXPECT_EQ(o.archive.size(), static_cast<std::size_t>(budget)) << "budget " << budget;
  }
}

TEST(Engine, BudgetEqualToMuRunsOnlyInitialization) {
  auto config = small_config();
  config.budget = config.mu;
  llm::MockProvider provider({1, 0.8, 0.0});
  SyntheticEvaluator evaluator;
  Archive archive;
  Engine engine(config, provider, evaluator, archive);
  engine.initialize();
  EXPECT_FALSE(engine.step_generation());
  EXPECT_EQ(archive.size(), 4u);
  EXPECT_EQ(engine.history().size(), 1u);
  for (const auto& c : archive.records()) {
    EXPECT_EQ(c.prompt_kind, llm::PromptKind::init);
    EXPECT_FALSE(c.parent_id.has_value());
  }
}

TEST(Engine, DefaultBudgetGivesTwentyFourOffspringGenerations) {
  RunConfig config;  // mu 8, lambda 8, budget 200
  config.surrogate.n_trees = 20;
  const auto o = run_once(config);
  EXPECT_EQ(o.archive.size(), 200u);
  ASSERT_EQ(o.history.size(), 25u);
  EXPECT_EQ(o.history.back().generation, 24);
  EXPECT_EQ(o.archive.back().generation, 24);
}

TEST(Engine, ElitistBestFitnessNeverDecreases) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto o = run_once(small_config(seed));
    for (std::size_t g = 1; g < o.history.size(); ++g) {
      EXPECT_GE(o.history[g].best_population_fitness, o.history[g - 1].best_population_fitness);
    }
    double best = 0.0;
    for (const auto& c : o.archive) best = std::max(best, c.fitness);
    EXPECT_EQ(o.result.best_fitness, best);
    EXPECT_EQ(o.history.back().best_population_fitness, best);
  }
}

TEST(Engine, NonElitistSurvivorsAreOffspring) {
  auto config = small_config();
  config.elitism = false;
  llm::MockProvider provider({1, 0.8, 0.0});
  SyntheticEvaluator evaluator;
  Archive archive;
  Engine engine(config, provider, evaluator, archive);
  engine.initialize();
  ASSERT_TRUE(engine.step_generation());
  for (auto i : engine.population()) EXPECT_EQ(archive[i].generation, 1);
  EXPECT_EQ(engine.population().size(), 4u);
}

TEST(Engine, GuidanceAttachedExactlyWhenSurrogateFitted) {
  auto config = small_config();
  config.mu = 8;
  config.min_archive = 8;
  config.budget = 48;
  RecordingProvider provider({1, 0.8, 0.0});
  SyntheticEvaluator evaluator;
  Archive archive;
  Engine engine(config, provider, evaluator, archive);
  engine.run();
  const auto& history = engine.history();
  ASSERT_TRUE(history[1].surrogate_fitted);
  EXPECT_FALSE(history[0].surrogate_fitted);
  int guided = 0;
  for (const auto& c : archive.records()) {
    if (c.generation == 0) {
      EXPECT_FALSE(c.guidance.has_value());
      continue;
    }
    EXPECT_TRUE(c.guidance.has_value()) << c.id;
    guided += c.guidance.has_value();
  }
  EXPECT_EQ(guided, 40);

  // The recorded guidance is the sentence that was sent.
  const auto bundles = provider.bundles();
  ASSERT_EQ(bundles.size(), archive.size());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto& c = archive[i];
    if (!c.guidance) {
      EXPECT_FALSE(bundles[i].guidance_sentence.has_value());
      continue;
    }
    const auto sentence = shap::render_guidance({c.guidance->feature, c.guidance->direction, 0.0});
    EXPECT_EQ(bundles[i].guidance_sentence, sentence);
    EXPECT_NE(bundles[i].render().find(sentence), std::string::npos);
  }
}

TEST(Engine, MinArchiveDelaysGuidance) {
  auto config = small_config();
  config.min_archive = 20;  // reached after generation 2 (4 + 8 + 8)
  const auto o = run_once(config);
  EXPECT_FALSE(o.history[1].surrogate_fitted);
  EXPECT_FALSE(o.history[2].surrogate_fitted);
  EXPECT_TRUE(o.history[3].surrogate_fitted);
  for (const auto& c : o.archive) {
    if (c.generation <= 2) EXPECT_FALSE(c.guidance.has_value()) << c.id;
  }
}

TEST(Engine, GuidanceDisabledNeverGuides) {
  auto config = small_config();
  config.guidance_enabled = false;
  llm::MockProvider provider({1, 0.8, 0.0});
  SyntheticEvaluator evaluator;
  Archive archive;
  Engine engine(config, provider, evaluator, archive);
  engine.run();
  for (const auto& c : archive.records()) EXPECT_FALSE(c.guidance.has_value());
  for (const auto& g : engine.history()) EXPECT_FALSE(g.surrogate_fitted);
  EXPECT_FALSE(engine.surrogate().has_value());
}

TEST(Engine, SameSeedSameArchive) {
  const auto a = run_once(small_config(7));
  const auto b = run_once(small_config(7));
  const auto c = run_once(small_config(8));
  EXPECT_EQ(canonical_hash(a.archive), canonical_hash(b.archive));
  EXPECT_NE(canonical_hash(a.archive), canonical_hash(c.archive));
}

TEST(Engine, LineageFormsForestOverEarlierCandidates) {
  const auto o = run_once(small_config());
  std::map<std::string, const Candidate*> seen;
  std::set<std::string> ids;
  for (const auto& c : o.archive) {
    EXPECT_TRUE(ids.insert(c.id).second);
    if (c.prompt_kind == llm::PromptKind::init) {
      EXPECT_FALSE(c.parent_id.has_value());
      EXPECT_EQ(c.generation, 0);
    } else {
      ASSERT_TRUE(c.parent_id.has_value());
      const auto it = seen.find(*c.parent_id);
      ASSERT_NE(it, seen.end()) << c.id << " parent " << *c.parent_id;
      EXPECT_LT(it->second->generation, c.generation);
    }
    seen[c.id] = &c;
  }
}

TEST(Engine, UnparsableRepliesBecomePenaltyCandidates) {
  const auto o = run_once(small_config(), 0.8, 0.3);
  EXPECT_EQ(o.archive.size(), 60u);
  int penalties = 0;
  for (const auto& c : o.archive) {
    if (c.error && c.error->rfind("Missing", 0) == 0) {
      ++penalties;
      EXPECT_EQ(c.fitness, 0.0);
      EXPECT_FALSE(c.features.has_value());
      EXPECT_FALSE(c.code.empty());
    }
  }
  EXPECT_GT(penalties, 5);
  EXPECT_LT(penalties, 35);
}

TEST(Engine, TokenUsageIsSummed) {
  const auto o = run_once(small_config());
  std::int64_t prompt = 0, completion = 0;
  for (const auto& c : o.archive) {
    EXPECT_GT(c.llm_usage.prompt_tokens, 0);
    prompt += c.llm_usage.prompt_tokens;
    completion += c.llm_usage.completion_tokens;
  }
  EXPECT_EQ(o.result.total_usage.prompt_tokens, prompt);
  EXPECT_EQ(o.result.total_usage.completion_tokens, completion);
}

TEST(Engine, LlmOutageAbortsAndKeepsPartialArchive) {
  std::string tmpl = (fs::temp_directory_path() / "sage-evo-XXXXXX").string();
  const fs::path dir(::mkdtemp(tmpl.data()));
  const auto path = dir / "archive.jsonl";
  {
    RecordingProvider provider({1, 0.8, 0.0}, 10);
    SyntheticEvaluator evaluator;
    Archive archive(path);
    Engine engine(small_config(), provider, evaluator, archive);
    EXPECT_THROW(engine.run(), LLMUnavailable);
    EXPECT_EQ(archive.size(), 10u);
  }
  EXPECT_EQ(load_archive(path).size(), 10u);
  fs::remove_all(dir);
}

TEST(Engine, EvaluatorOutageAborts) {
  llm::MockProvider provider({1, 0.8, 0.0});
  FailingEvaluator evaluator(6);
  Archive archive;
  Engine engine(small_config(), provider, evaluator, archive);
  EXPECT_THROW(engine.run(), EvaluatorUnavailable);
  EXPECT_EQ(archive.size(), 6u);
}

TEST(Engine, ConcurrentWorkersRespectBudgetAndOrder) {
  auto config = small_config();
  config.workers = 4;
  config.budget = 45;
  const auto o = run_once(config);
  ASSERT_EQ(o.archive.size(), 45u);
  for (std::size_t i = 0; i < o.archive.size(); ++i) {
    char expected[16];
    std::snprintf(expected, sizeof expected, "c%04zu", i);
    EXPECT_EQ(o.archive[i].id, expected);
  }
}

TEST(Engine, InvalidConfigRejected) {
  llm::MockProvider provider({1, 0.8, 0.0});
  SyntheticEvaluator evaluator;
  auto check = [&](auto mutate) {
    auto config = small_config();
    mutate(config);
    Archive archive;
    EXPECT_THROW(Engine(config, provider, evaluator, archive), ConfigError);
  };
  check([](RunConfig& c) { c.mu = 0; });
  check([](RunConfig& c) { c.lambda = 0; });
  check([](RunConfig& c) { c.budget = 3; });
  check([](RunConfig& c) { c.workers = 0; });
  check([](RunConfig& c) { c.mutation_prompts.clear(); });
  check([](RunConfig& c) { c.mutation_prompts = {{llm::PromptKind::init, "x"}}; });
  check([](RunConfig& c) { c.surrogate.learning_rate = 0.0; });
}
