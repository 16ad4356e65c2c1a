#pragma once

// (mu + lambda) evolution of LLM-generated programs with optional
// surrogate-derived mutation guidance.

#include "sage/archive.hpp"
#include "sage/evaluator.hpp"
#include "sage/llm.hpp"
#include "sage/surrogate.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sage::evo {

struct RunConfig {
  int mu = 8;
  int lambda = 8;
  int budget = 200;
  /// true: survivors are the mu best of parents and offspring.
  /// false: survivors come from the offspring, topped up with parents.
  bool elitism = true;
  bool guidance_enabled = true;
  /// Archive size that enables surrogate fitting; 0 means mu.
  int min_archive = 0;
  surrogate::FitParams surrogate;
  std::string task_prompt = std::string(llm::task_prompt(llm::TaskPrompt::sbox));
  std::vector<llm::MutationPrompt> mutation_prompts = llm::default_mutation_prompts();
  std::uint64_t seed = 0;
  /// Offspring of one generation produced concurrently. Archives are only
  /// reproducible with a single worker.
  int workers = 1;

  int effective_min_archive() const noexcept { return min_archive > 0 ? min_archive : mu; }
  /// Throws ConfigError.
  void validate() const;
};

struct GenerationSummary {
  int generation = 0;
  std::size_t archive_size = 0;
  double best_population_fitness = 0.0;
  bool surrogate_fitted = false;
};

struct RunResult {
  std::string best_id;
  double best_fitness = 0.0;
  std::vector<GenerationSummary> generations;
  llm::Usage total_usage;
  double wall_seconds = 0.0;
};

class Engine {
 public:
  /// The archive must be empty; it receives every evaluated candidate.
  Engine(RunConfig config, llm::Provider& provider, Evaluator& evaluator, Archive& archive);

  /// Generates and evaluates the initial population.
  void initialize();
  /// One generation of offspring and survivor selection. Returns false when
  /// the budget was already exhausted.
  bool step_generation();
  /// initialize() followed by generations until the budget is spent.
  /// LLMUnavailable and EvaluatorUnavailable propagate; records archived
  /// before the failure stay in the archive.
  RunResult run();

  /// Archive positions of the current population.
  const std::vector<std::size_t>& population() const noexcept { return population_; }
  const std::vector<GenerationSummary>& history() const noexcept { return history_; }
  int generation() const noexcept { return generation_; }
  /// Surrogate fitted for the most recent generation, if any.
  const std::optional<surrogate::SurrogateModel>& surrogate() const noexcept { return model_; }

  /// Called after each generation, e.g. for progress logging.
  std::function<void(const GenerationSummary&)> on_generation;

 private:
  struct Job {
    std::string id;
    std::optional<std::size_t> parent;
    std::optional<std::string> parent_id;
    llm::PromptBundle bundle;
    std::optional<GuidanceRecord> guidance;
  };

  Candidate produce(const Job& job);
  std::vector<Candidate> produce_all(const std::vector<Job>& jobs);
  std::string next_id();
  void fit_surrogate();
  void record_generation();

  RunConfig config_;
  llm::Provider& provider_;
  Evaluator& evaluator_;
  Archive& archive_;
  features::FeatureCache feature_cache_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> population_;
  std::vector<GenerationSummary> history_;
  std::optional<surrogate::SurrogateModel> model_;
  int generation_ = -1;
  int next_id_ = 0;
};

}  // namespace sage::evo
