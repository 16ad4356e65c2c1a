#include "sage/llm.hpp"

#include "sage/ast_features.hpp"
#include "sage/errors.hpp"
#include "sage/shap.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <regex>
#include <sstream>
#include <thread>

namespace sage::llm {

namespace detail {
extern const std::string_view kSboxPrompt;
extern const std::string_view kMaBbobPrompt;
}  // namespace detail

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string format_fitness(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", f);
  return buf;
}

}  // namespace

std::string_view task_prompt(TaskPrompt which) noexcept {
  return which == TaskPrompt::sbox ? detail::kSboxPrompt : detail::kMaBbobPrompt;
}

TaskPrompt task_prompt_from_string(std::string_view s) {
  if (s == "sbox") return TaskPrompt::sbox;
  if (s == "ma_bbob") return TaskPrompt::ma_bbob;
  throw ConfigError("unknown task prompt '" + std::string(s) + "'");
}

std::string_view to_string(PromptKind k) noexcept {
  switch (k) {
    case PromptKind::init: return "init";
    case PromptKind::random_new: return "random_new";
    case PromptKind::refine: return "refine";
  }
  return "";
}

PromptKind prompt_kind_from_string(std::string_view s) {
  if (s == "init") return PromptKind::init;
  if (s == "random_new") return PromptKind::random_new;
  if (s == "refine") return PromptKind::refine;
  throw ConfigError("unknown prompt kind '" + std::string(s) + "'");
}

std::vector<MutationPrompt> default_mutation_prompts() {
  return {{PromptKind::random_new, std::string(kRandomNewInstruction)},
          {PromptKind::refine, std::string(kRefineInstruction)}};
}

std::string PromptBundle::render() const {
  std::string out = task_prompt;
  if (parent) {
    out += "\nThe selected solution to update is:\n" + parent->description + "\n\nWith code:\n```python\n" +
           parent->code;
    if (!parent->code.empty() && parent->code.back() != '\n') out += '\n';
    out += "```\n";
    if (parent->error) {
      out += "The solution failed with the following error:\n" + *parent->error + "\n";
    } else {
      out += "The fitness score of this solution is " + format_fitness(parent->fitness) + ".\n";
    }
  }
  if (!mutation_instruction.empty()) out += "\n" + mutation_instruction + "\n";
  if (guidance_sentence) out += *guidance_sentence + "\n";
  return out;
}

ParsedReply parse_response(std::string_view raw) {
  static constexpr std::string_view kDescription = "# Description:";
  ParsedReply reply;
  bool have_description = false;
  bool in_block = false;
  bool have_block = false;
  std::string code;
  std::size_t pos = 0;
  while (pos <= raw.size() && !have_block) {
    auto end = raw.find('\n', pos);
    if (end == std::string_view::npos) end = raw.size();
    const std::string_view line = raw.substr(pos, end - pos);
    const std::string_view stripped = trim(line);
    if (in_block) {
      if (stripped.starts_with("```")) {
        have_block = true;
      } else {
        code.append(line);
        code += '\n';
      }
    } else if (stripped.starts_with("```")) {
      in_block = true;
    } else if (!have_description && stripped.starts_with(kDescription)) {
      reply.description = std::string(trim(stripped.substr(kDescription.size())));
      have_description = !reply.description.empty();
    }
    pos = end + 1;
  }
  if (!have_description) {
    // The description may also follow the code block.
    const auto at = raw.find(kDescription);
    if (at != std::string_view::npos) {
      auto end = raw.find('\n', at);
      if (end == std::string_view::npos) end = raw.size();
      reply.description =
          std::string(trim(raw.substr(at + kDescription.size(), end - at - kDescription.size())));
      have_description = !reply.description.empty();
    }
  }
  if (!have_description) throw MissingDescription("reply has no '# Description:' line");
  if (!have_block || trim(code).empty()) throw MissingCodeBlock("reply has no fenced code block");
  reply.code = std::move(code);
  return reply;
}

std::int64_t count_words(std::string_view text) noexcept {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

LLMResponse generate(Provider& provider, const PromptBundle& bundle) {
  Completion c = provider.complete(bundle);
  ParsedReply parsed = parse_response(c.raw_text);
  return LLMResponse{std::move(c.raw_text), std::move(parsed.description), std::move(parsed.code),
                     c.usage};
}

// ---------------------------------------------------------------------------
// HTTP provider

struct HttpProvider::Impl {
  std::string scheme_host_port;
  std::string path;
  std::string api_key;
  std::mutex mutex;
  std::condition_variable cv;
  int inflight = 0;
};

HttpProvider::HttpProvider(HttpParams params)
    : params_(std::move(params)), impl_(std::make_unique<Impl>()) {
  const auto scheme_end = params_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("llm endpoint must be an absolute URL: '" + params_.endpoint + "'");
  }
  const auto path_start = params_.endpoint.find('/', scheme_end + 3);
  impl_->scheme_host_port = params_.endpoint.substr(0, path_start);
  impl_->path = path_start == std::string::npos ? "/" : params_.endpoint.substr(path_start);
  if (!params_.api_key_env.empty()) {
    const char* key = std::getenv(params_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("environment variable " + params_.api_key_env + " is not set");
    }
    impl_->api_key = key;
  }
  if (params_.model.empty()) throw ConfigError("llm model is empty");
  if (params_.max_inflight < 1) throw ConfigError("llm max_inflight must be >= 1");
  if (params_.max_retries < 0) throw ConfigError("llm max_retries must be >= 0");
}

HttpProvider::~HttpProvider() = default;

Completion HttpProvider::complete(const PromptBundle& bundle) {
  {
    std::unique_lock lock(impl_->mutex);
    impl_->cv.wait(lock, [&] { return impl_->inflight < params_.max_inflight; });
    ++impl_->inflight;
  }
  struct Release {
    Impl& impl;
    ~Release() {
      {
        std::lock_guard lock(impl.mutex);
        --impl.inflight;
      }
      impl.cv.notify_one();
    }
  } release{*impl_};

  nlohmann::json body;
  body["model"] = params_.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", bundle.render()}}});
  if (params_.temperature) body["temperature"] = *params_.temperature;
  const std::string payload = body.dump();

  httplib::Client client(impl_->scheme_host_port);
  client.set_connection_timeout(std::chrono::seconds(30));
  client.set_read_timeout(params_.request_timeout);
  client.set_write_timeout(std::chrono::seconds(60));
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);

  auto backoff = params_.initial_backoff;
  std::string last_error;
  bool rate_limited = false;
  for (int attempt = 0; attempt <= params_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    const auto res = client.Post(impl_->path, headers, payload, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      rate_limited = false;
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      rate_limited = res->status == 429;
      continue;
    }
    if (res->status != 200) {
      throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }
    try {
      const auto doc = nlohmann::json::parse(res->body);
      Completion c;
      c.raw_text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      if (doc.contains("usage") && doc["usage"].is_object()) {
        c.usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
        c.usage.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
      }
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse(std::string("chat completion body: ") + e.what());
    }
  }
  if (rate_limited) throw RateLimited(last_error);
  throw TransportError(last_error);
}

// ---------------------------------------------------------------------------
// Mock provider

namespace {

constexpr int kMaxInitExtra = 12;
constexpr int kMaxHelpers = 4;
constexpr int kMaxHelperParams = 8;
constexpr int kMaxBranches = 8;
constexpr int kMaxNesting = 4;
constexpr int kMaxStatements = 12;

constexpr std::string_view kMarker = "# mock-genome:";

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

MockGenome random_genome(std::mt19937_64& rng) {
  MockGenome g;
  g.family = uniform_int(rng, 0, kMockFamilies - 1);
  g.init_extra = uniform_int(rng, 0, 2);
  const int helpers = uniform_int(rng, 0, 2);
  for (int i = 0; i < helpers; ++i) g.helper_params.push_back(uniform_int(rng, 1, 3));
  g.branches = uniform_int(rng, 0, 2);
  g.nesting = uniform_int(rng, 0, 2);
  g.statements = uniform_int(rng, 0, 3);
  return g;
}

enum class Knob { params, helpers, branches, nesting, statements };

Knob knob_for(std::size_t feature) {
  using F = features::Feature;
  switch (static_cast<F>(feature)) {
    case F::total_parameter_count:
    case F::mean_parameter_count:
    case F::max_parameter_count: return Knob::params;
    case F::function_count: return Knob::helpers;
    case F::total_cyclomatic_complexity:
    case F::mean_cyclomatic_complexity:
    case F::max_cyclomatic_complexity: return Knob::branches;
    case F::depth_min:
    case F::depth_mean:
    case F::depth_max:
    case F::diameter:
    case F::avg_shortest_path: return Knob::nesting;
    default: return Knob::statements;
  }
}

void copy_knob(MockGenome& child, const MockGenome& parent, Knob knob) {
  switch (knob) {
    case Knob::params:
    case Knob::helpers:
      child.init_extra = parent.init_extra;
      child.helper_params = parent.helper_params;
      break;
    case Knob::branches: child.branches = parent.branches; break;
    case Knob::nesting: child.nesting = parent.nesting; break;
    case Knob::statements: child.statements = parent.statements; break;
  }
}

void directed_move(MockGenome& g, Knob knob, bool up, std::mt19937_64& rng) {
  switch (knob) {
    case Knob::params: {
      const int amount = uniform_int(rng, 1, 3);
      if (up) {
        // Grow __init__, an existing helper, or a new helper.
        const int slots = static_cast<int>(g.helper_params.size()) + 2;
        const int pick = uniform_int(rng, 0, slots - 1);
        if (pick == 0) {
          g.init_extra += amount;
        } else if (pick == slots - 1) {
          g.helper_params.push_back(amount);
        } else {
          g.helper_params[static_cast<std::size_t>(pick - 1)] += amount;
        }
      } else {
        std::vector<int*> targets;
        if (g.init_extra > 0) targets.push_back(&g.init_extra);
        for (auto& p : g.helper_params) {
          if (p > 1) targets.push_back(&p);
        }
        if (!targets.empty()) {
          int& t = *targets[static_cast<std::size_t>(
              uniform_int(rng, 0, static_cast<int>(targets.size()) - 1))];
          t = std::max(&t == &g.init_extra ? 0 : 1, t - amount);
        } else if (!g.helper_params.empty()) {
          g.helper_params.pop_back();
        }
      }
      break;
    }
    case Knob::helpers:
      if (up) {
        g.helper_params.push_back(1);
      } else if (!g.helper_params.empty()) {
        g.helper_params.pop_back();
      }
      break;
    case Knob::branches:
      g.branches = std::max(0, g.branches + (up ? 1 : -1) * uniform_int(rng, 1, 2));
      break;
    case Knob::nesting: g.nesting = std::max(0, g.nesting + (up ? 1 : -1)); break;
    case Knob::statements:
      g.statements = std::max(0, g.statements + (up ? 1 : -1) * uniform_int(rng, 1, 3));
      break;
  }
}

// Unguided mutation: a +-1 step on a knob that can move both ways, or a
// family switch. Restricting to interior knobs keeps the sign of feature
// changes unbiased.
void random_move(MockGenome& g, std::mt19937_64& rng) {
  const int step = uniform_int(rng, 0, 1) == 0 ? -1 : 1;
  auto interior = [](int v, int lo, int hi) { return v > lo && v < hi; };
  std::vector<int*> knobs;
  if (interior(g.init_extra, 0, kMaxInitExtra)) knobs.push_back(&g.init_extra);
  for (auto& p : g.helper_params) {
    if (interior(p, 1, kMaxHelperParams)) knobs.push_back(&p);
  }
  if (interior(g.branches, 0, kMaxBranches)) knobs.push_back(&g.branches);
  if (interior(g.nesting, 0, kMaxNesting)) knobs.push_back(&g.nesting);
  if (interior(g.statements, 0, kMaxStatements)) knobs.push_back(&g.statements);
  const bool helpers_movable =
      interior(static_cast<int>(g.helper_params.size()), 0, kMaxHelpers);
  const int choices = static_cast<int>(knobs.size()) + (helpers_movable ? 1 : 0) + 1;
  const int pick = uniform_int(rng, 0, choices - 1);
  if (pick < static_cast<int>(knobs.size())) {
    *knobs[static_cast<std::size_t>(pick)] += step;
  } else if (helpers_movable && pick == static_cast<int>(knobs.size())) {
    if (step > 0) {
      g.helper_params.push_back(1);
    } else {
      g.helper_params.pop_back();
    }
  } else {
    g.family = (g.family + uniform_int(rng, 1, kMockFamilies - 1)) % kMockFamilies;
  }
}

const char* family_class(int family) {
  switch (family) {
    case 1: return "AdaptiveHillClimber";
    case 2: return "RestartLocalSearch";
    default: return "ScaledRandomSearch";
  }
}

const char* family_description(int family) {
  switch (family) {
    case 1: return "Hill climber with a self-adapting Gaussian step size.";
    case 2: return "Local search around the incumbent with periodic uniform restarts.";
    default: return "Uniform random search with a shrinking sampling radius around the best point.";
  }
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out.empty() ? "-" : out;
}

}  // namespace

std::string render_mock_program(const MockGenome& g) {
  std::ostringstream o;
  o << kMarker << " family=" << g.family << " init_extra=" << g.init_extra
    << " helpers=" << join_ints(g.helper_params) << " branches=" << g.branches
    << " nesting=" << g.nesting << " statements=" << g.statements << "\n";
  o << "import numpy as np\n\n";
  for (std::size_t h = 0; h < g.helper_params.size(); ++h) {
    o << "\ndef blend_" << h << "(x";
    for (int p = 1; p < g.helper_params[h]; ++p) o << ", w" << p;
    o << "):\n    return x";
    for (int p = 1; p < g.helper_params[h]; ++p) o << " + 0.0 * w" << p;
    o << "\n\n";
  }
  o << "\nclass " << family_class(g.family) << ":\n";
  o << "    def __init__(self, budget=10000, dim=10";
  for (int k = 0; k < g.init_extra; ++k) o << ", c" << k << "=" << (k + 1) * 0.1;
  o << "):\n";
  o << "        self.budget = budget\n        self.dim = dim\n";
  for (int k = 0; k < g.init_extra; ++k) o << "        self.c" << k << " = c" << k << "\n";
  o << "\n    def __call__(self, func):\n";
  o << "        self.f_opt = np.inf\n        self.x_opt = None\n";
  o << "        lb = func.bounds.lb\n        ub = func.bounds.ub\n";
  o << "        step = 0.5 * (ub - lb)\n";
  if (g.family == 2) o << "        period = max(1, self.budget // 5)\n";
  o << "        for i in range(self.budget):\n";
  switch (g.family) {
    case 1:
      o << "            center = np.random.uniform(lb, ub) if self.x_opt is None else self.x_opt\n";
      o << "            x = center + step * np.random.normal(size=self.dim)\n";
      break;
    case 2:
      o << "            restart = self.x_opt is None or i % period == 0\n";
      o << "            center = np.random.uniform(lb, ub) if restart else self.x_opt\n";
      o << "            x = center + 0.1 * step * np.random.uniform(-1.0, 1.0, self.dim)\n";
      break;
    default:
      o << "            x = np.random.uniform(lb, ub)\n";
      o << "            if self.x_opt is not None:\n";
      o << "                x = self.x_opt + step * (x - self.x_opt) / (ub - lb)\n";
      break;
  }
  std::string clipped = "x";
  for (int k = 0; k < g.nesting; ++k) clipped = "np.clip(" + clipped + ", lb, ub)";
  o << "            x = np.clip(" << clipped << ", lb, ub)\n";
  for (std::size_t h = 0; h < g.helper_params.size(); ++h) {
    o << "            x = blend_" << h << "(x";
    for (int p = 1; p < g.helper_params[h]; ++p) o << ", " << p;
    o << ")\n";
  }
  for (int k = 0; k < g.statements; ++k) {
    o << "            scale_" << k << " = (i + " << k + 1 << ") / (self.budget + " << k + 2
      << ")\n";
  }
  o << "            f = func(x)\n";
  o << "            if f < self.f_opt:\n";
  o << "                self.f_opt = f\n                self.x_opt = x\n";
  o << "                step = step * 1.1\n";
  o << "            else:\n                step = step * 0.98\n";
  for (int k = 0; k < g.branches; ++k) {
    o << "            if i % " << k + 7 << " == 0:\n";
    o << "                step = np.maximum(step * " << 0.9 + 0.01 * k << ", 1e-8)\n";
  }
  o << "        return self.f_opt, self.x_opt\n";
  return o.str();
}

std::optional<MockGenome> genome_from_code(std::string_view code) {
  static const std::regex re(
      R"(# mock-genome: family=(\d+) init_extra=(\d+) helpers=([-0-9,]+) branches=(\d+) )"
      R"(nesting=(\d+) statements=(\d+))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(code.begin(), code.end(), m, re)) return std::nullopt;
  MockGenome g;
  g.family = std::stoi(m[1].str()) % kMockFamilies;
  g.init_extra = std::stoi(m[2].str());
  const std::string helpers = m[3].str();
  if (helpers != "-") {
    std::stringstream ss(helpers);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) g.helper_params.push_back(std::max(1, std::stoi(item)));
    }
  }
  g.branches = std::stoi(m[4].str());
  g.nesting = std::stoi(m[5].str());
  g.statements = std::stoi(m[6].str());
  return g;
}

MockGenome MockProvider::mutate(const PromptBundle& bundle, std::mt19937_64& rng) const {
  std::optional<MockGenome> parent;
  if (bundle.parent) parent = genome_from_code(bundle.parent->code);
  if (bundle.kind == PromptKind::init || !parent) return random_genome(rng);

  std::optional<shap::Guidance> guidance;
  if (bundle.guidance_sentence) guidance = shap::parse_guidance(*bundle.guidance_sentence);
  std::optional<std::size_t> feature;
  if (guidance) feature = features::feature_index(guidance->feature_name);
  const bool obey =
      feature && std::bernoulli_distribution(std::clamp(params_.obedience, 0.0, 1.0))(rng);

  MockGenome child;
  if (bundle.kind == PromptKind::random_new) {
    child = random_genome(rng);
    if (child.family == parent->family) child.family = (child.family + 1) % kMockFamilies;
    if (obey) {
      const Knob knob = knob_for(*feature);
      copy_knob(child, *parent, knob);
      directed_move(child, knob, guidance->direction == shap::Direction::increase, rng);
    }
    return child;
  }
  child = *parent;
  if (obey) {
    directed_move(child, knob_for(*feature), guidance->direction == shap::Direction::increase, rng);
  } else {
    random_move(child, rng);
  }
  return child;
}

Completion MockProvider::complete(const PromptBundle& bundle) {
  std::uint64_t n;
  {
    std::lock_guard lock(mutex_);
    n = counter_++;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(params_.seed), static_cast<std::uint32_t>(params_.seed >> 32),
                    static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32)};
  std::mt19937_64 rng(seq);
  const MockGenome genome = mutate(bundle, rng);

  Completion c;
  if (params_.failure_rate > 0.0 &&
      std::bernoulli_distribution(std::min(params_.failure_rate, 1.0))(rng)) {
    c.raw_text = "I would suggest an evolutionary strategy with adaptive step sizes.\n";
  } else {
    c.raw_text = std::string("# Description: ") + family_description(genome.family) +
                 "\n# Code: \n```python\n" + render_mock_program(genome) + "```\n";
  }
  c.usage.prompt_tokens = count_words(bundle.render());
  c.usage.completion_tokens = count_words(c.raw_text);
  return c;
}

}  // namespace sage::llm
