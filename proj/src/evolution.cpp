#include "sage/evolution.hpp"

#include "sage/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <future>

namespace sage::evo {

namespace {

using Clock = std::chrono::steady_clock;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

const std::vector<std::string>& canonical_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (auto n : features::feature_names()) v.emplace_back(n);
    return v;
  }();
  return names;
}

}  // namespace

void RunConfig::validate() const {
  if (mu < 1) throw ConfigError("es.mu must be >= 1");
  if (lambda < 1) throw ConfigError("es.lambda must be >= 1");
  if (budget < mu) throw ConfigError("es.budget must be >= es.mu");
  if (effective_min_archive() < 2) throw ConfigError("guidance.min_archive must be >= 2");
  if (mutation_prompts.empty()) throw ConfigError("prompts.mutation must not be empty");
  for (const auto& p : mutation_prompts) {
    if (p.kind == llm::PromptKind::init) {
      throw ConfigError("mutation prompts must be random_new or refine");
    }
    if (p.text.empty()) throw ConfigError("mutation prompt text must not be empty");
  }
  if (task_prompt.empty()) throw ConfigError("prompts.task must not be empty");
  if (workers < 1) throw ConfigError("es.workers must be >= 1");
  if (surrogate.n_trees < 0 || surrogate.max_depth < 1 || surrogate.min_leaf < 1 ||
      !(surrogate.learning_rate > 0.0)) {
    throw ConfigError("invalid surrogate parameters");
  }
}

Engine::Engine(RunConfig config, llm::Provider& provider, Evaluator& evaluator, Archive& archive)
    : config_(std::move(config)),
      provider_(provider),
      evaluator_(evaluator),
      archive_(archive),
      rng_(config_.seed) {
  config_.validate();
  if (archive_.size() != 0) throw std::invalid_argument("engine needs an empty archive");
}

std::string Engine::next_id() {
  char buf[24];
  std::snprintf(buf, sizeof buf, "c%04d", next_id_++);
  return buf;
}

Candidate Engine::produce(const Job& job) {
  Candidate c;
  c.id = job.id;
  c.generation = generation_;
  c.prompt_kind = job.bundle.kind;
  c.guidance = job.guidance;
  c.parent_id = job.parent_id;
  c.timestamps.created_at = utc_now();

  const auto llm_start = Clock::now();
  llm::Completion completion;
  try {
    completion = provider_.complete(job.bundle);
  } catch (const TransportError& e) {
    throw LLMUnavailable(std::string("LLM request failed: ") + e.what());
  } catch (const MalformedResponse& e) {
    c.timestamps.llm_seconds = seconds_since(llm_start);
    c.error = std::string("MalformedResponse: ") + e.what();
    return c;
  }
  c.timestamps.llm_seconds = seconds_since(llm_start);
  c.llm_usage = completion.usage;

  llm::ParsedReply reply;
  try {
    reply = llm::parse_response(completion.raw_text);
  } catch (const MissingDescription& e) {
    c.code = completion.raw_text;
    c.error = std::string("MissingDescription: ") + e.what();
    return c;
  } catch (const MissingCodeBlock& e) {
    c.code = completion.raw_text;
    c.error = std::string("MissingCodeBlock: ") + e.what();
    return c;
  }
  c.description = std::move(reply.description);
  c.code = std::move(reply.code);

  try {
    c.features = feature_cache_.get(c.code);
  } catch (const ParseError&) {
    // The evaluator reports the failure; there is no feature vector.
  }

  const auto eval_start = Clock::now();
  const Evaluation e = evaluator_.evaluate(c.code);
  c.timestamps.eval_seconds = seconds_since(eval_start);
  c.fitness = e.error && !e.timed_out ? 0.0 : e.fitness;
  c.error = e.error;
  c.timed_out = e.timed_out;
  return c;
}

std::vector<Candidate> Engine::produce_all(const std::vector<Job>& jobs) {
  std::vector<Candidate> out;
  if (config_.workers == 1 || jobs.size() <= 1) {
    for (const auto& job : jobs) {
      out.push_back(produce(job));
      archive_.append(out.back());
    }
    return out;
  }
  // Batches of `workers` concurrent jobs, archived in job order. After a
  // failure the remaining jobs of the batch finish but are not archived.
  const auto width = static_cast<std::size_t>(config_.workers);
  for (std::size_t begin = 0; begin < jobs.size(); begin += width) {
    std::vector<std::future<Candidate>> batch;
    for (std::size_t i = begin; i < std::min(jobs.size(), begin + width); ++i) {
      batch.push_back(std::async(std::launch::async, [this, &job = jobs[i]] { return produce(job); }));
    }
    std::exception_ptr failure;
    for (auto& f : batch) {
      try {
        Candidate c = f.get();
        if (!failure) {
          archive_.append(c);
          out.push_back(std::move(c));
        }
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  return out;
}

void Engine::record_generation() {
  GenerationSummary s;
  s.generation = generation_;
  s.archive_size = archive_.size();
  s.surrogate_fitted = model_.has_value();
  double best = 0.0;
  bool first = true;
  for (auto i : population_) {
    if (first || archive_[i].fitness > best) best = archive_[i].fitness;
    first = false;
  }
  s.best_population_fitness = best;
  history_.push_back(s);
  if (on_generation) on_generation(s);
}

void Engine::initialize() {
  if (generation_ >= 0) throw std::logic_error("population already initialized");
  generation_ = 0;
  std::vector<Job> jobs;
  for (int i = 0; i < config_.mu; ++i) {
    Job job;
    job.id = next_id();
    job.bundle.task_prompt = config_.task_prompt;
    job.bundle.kind = llm::PromptKind::init;
    jobs.push_back(std::move(job));
  }
  const std::size_t first = archive_.size();
  produce_all(jobs);
  for (std::size_t i = first; i < archive_.size(); ++i) population_.push_back(i);
  record_generation();
}

void Engine::fit_surrogate() {
  model_.reset();
  if (!config_.guidance_enabled) return;
  if (archive_.size() < static_cast<std::size_t>(config_.effective_min_archive())) return;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& c : archive_.records()) {
    if (!c.features) continue;
    x.emplace_back(c.features->begin(), c.features->end());
    y.push_back(c.fitness);
  }
  try {
    model_ = surrogate::fit(x, y, config_.surrogate, canonical_names());
  } catch (const InsufficientData&) {
    model_.reset();
  }
}

bool Engine::step_generation() {
  if (generation_ < 0) throw std::logic_error("initialize() must run first");
  const auto budget = static_cast<std::size_t>(config_.budget);
  if (archive_.size() >= budget) return false;
  ++generation_;
  fit_surrogate();

  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(config_.lambda),
                                                  budget - archive_.size());
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < count; ++k) {
    Job job;
    job.id = next_id();
    job.parent = population_[std::uniform_int_distribution<std::size_t>(
        0, population_.size() - 1)(rng_)];
    const auto& prompt = config_.mutation_prompts[std::uniform_int_distribution<std::size_t>(
        0, config_.mutation_prompts.size() - 1)(rng_)];
    const Candidate& parent = archive_[*job.parent];
    job.parent_id = parent.id;

    job.bundle.task_prompt = config_.task_prompt;
    job.bundle.parent =
        llm::ParentContext{parent.code, parent.description, parent.fitness, parent.error};
    job.bundle.kind = prompt.kind;
    job.bundle.mutation_instruction = prompt.text;
    if (model_ && parent.features) {
      const auto attribution = shap::shap_values(*model_, *parent.features);
      if (auto g = shap::select_guidance(attribution, canonical_names())) {
        job.bundle.guidance_sentence = shap::render_guidance(*g);
        job.guidance = GuidanceRecord{g->feature_name, g->direction};
      }
    }
    jobs.push_back(std::move(job));
  }

  const std::size_t first = archive_.size();
  produce_all(jobs);

  std::vector<std::size_t> offspring;
  for (std::size_t i = first; i < archive_.size(); ++i) offspring.push_back(i);
  auto better = [this](std::size_t a, std::size_t b) {
    if (archive_[a].fitness != archive_[b].fitness) return archive_[a].fitness > archive_[b].fitness;
    return a < b;
  };
  const auto mu = static_cast<std::size_t>(config_.mu);
  std::vector<std::size_t> survivors;
  if (config_.elitism) {
    survivors = population_;
    survivors.insert(survivors.end(), offspring.begin(), offspring.end());
    std::sort(survivors.begin(), survivors.end(), better);
    survivors.resize(std::min(mu, survivors.size()));
  } else {
    std::sort(offspring.begin(), offspring.end(), better);
    survivors.assign(offspring.begin(), offspring.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(mu, offspring.size())));
    auto parents = population_;
    std::sort(parents.begin(), parents.end(), better);
    for (auto p : parents) {
      if (survivors.size() >= mu) break;
      survivors.push_back(p);
    }
  }
  population_ = std::move(survivors);
  record_generation();
  return true;
}

RunResult Engine::run() {
  const auto start = Clock::now();
  initialize();
  while (step_generation()) {
  }
  RunResult r;
  r.generations = history_;
  bool first = true;
  for (const auto& c : archive_.records()) {
    if (first || c.fitness > r.best_fitness) {
      r.best_fitness = c.fitness;
      r.best_id = c.id;
    }
    first = false;
    r.total_usage.prompt_tokens += c.llm_usage.prompt_tokens;
    r.total_usage.completion_tokens += c.llm_usage.completion_tokens;
  }
  r.wall_seconds = seconds_since(start);
  return r;
}

}  // namespace sage::evo
