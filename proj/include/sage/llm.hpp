#pragma once

// Prompt assembly, response parsing and LLM providers.

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sage::llm {

enum class TaskPrompt { sbox, ma_bbob };

/// Task prompts, verbatim.
std::string_view task_prompt(TaskPrompt which) noexcept;
TaskPrompt task_prompt_from_string(std::string_view s);

enum class PromptKind { init, random_new, refine };

std::string_view to_string(PromptKind k) noexcept;
PromptKind prompt_kind_from_string(std::string_view s);

struct MutationPrompt {
  PromptKind kind = PromptKind::refine;
  std::string text;
};

inline constexpr std::string_view kRandomNewInstruction =
    "Generate a new algorithm that is different from the algorithms you have tried before.";
inline constexpr std::string_view kRefineInstruction =
    "Refine the strategy of the selected solution to improve it.";

std::vector<MutationPrompt> default_mutation_prompts();

struct ParentContext {
  std::string code;
  std::string description;
  double fitness = 0.0;
  std::optional<std::string> error;
};

struct PromptBundle {
  std::string task_prompt;
  std::optional<ParentContext> parent;
  PromptKind kind = PromptKind::init;
  std::string mutation_instruction;
  std::optional<std::string> guidance_sentence;

  /// Task prompt, then the parent, then the instruction, guidance last.
  std::string render() const;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t total() const noexcept { return prompt_tokens + completion_tokens; }
};

struct Completion {
  std::string raw_text;
  Usage usage;
};

struct LLMResponse {
  std::string raw_text;
  std::string description;
  std::string code;
  Usage usage;
};

struct ParsedReply {
  std::string description;
  std::string code;
};

/// Remainder of the first "# Description:" line and the body of the first
/// fenced code block. Throws MissingDescription or MissingCodeBlock.
ParsedReply parse_response(std::string_view raw);

/// Whitespace-separated token count.
std::int64_t count_words(std::string_view text) noexcept;

class Provider {
 public:
  virtual ~Provider() = default;
  /// One request per call. Must be safe to call concurrently.
  virtual Completion complete(const PromptBundle& bundle) = 0;
  virtual std::string name() const = 0;
};

/// Completes and parses in one step; parse errors propagate.
LLMResponse generate(Provider& provider, const PromptBundle& bundle);

// ---------------------------------------------------------------------------

struct HttpParams {
  /// Full URL of the chat-completions endpoint, e.g.
  /// "https://api.openai.com/v1/chat/completions".
  std::string endpoint;
  std::string model;
  /// Name of the environment variable holding the bearer token. Empty for
  /// endpoints without authentication.
  std::string api_key_env;
  std::optional<double> temperature;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds request_timeout{300};
  int max_inflight = 4;
};

/// OpenAI-style chat-completions client. Transport errors, 429 and 5xx are
/// retried with exponential backoff; after the last retry TransportError
/// (RateLimited for 429) is thrown.
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpParams params);
  ~HttpProvider() override;

  Completion complete(const PromptBundle& bundle) override;
  std::string name() const override { return "http:" + params_.model; }

 private:
  struct Impl;
  HttpParams params_;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------

/// Knobs of the mock's template family. Each knob drives a different part of
/// the generated program.
struct MockGenome {
  int family = 0;                  // 0 random search, 1 hill climber, 2 restarts
  int init_extra = 0;              // extra keyword arguments of __init__
  std::vector<int> helper_params;  // one entry per module-level helper
  int branches = 0;                // extra conditionals in the main loop
  int nesting = 0;                 // depth of the nested update block
  int statements = 0;              // extra arithmetic statements

  bool operator==(const MockGenome&) const = default;
};

inline constexpr int kMockFamilies = 3;

std::string render_mock_program(const MockGenome& genome);
/// Reads the genome back from the marker comment of a generated program.
std::optional<MockGenome> genome_from_code(std::string_view code);

struct MockParams {
  std::uint64_t seed = 0;
  /// Probability of following a guidance sentence.
  double obedience = 0.8;
  /// Probability of answering with an unparsable reply.
  double failure_rate = 0.0;
};

/// Deterministic offline provider. The reply for the n-th request depends
/// only on (seed, n, bundle), so single-worker runs are reproducible.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(MockParams params) : params_(params) {}

  Completion complete(const PromptBundle& bundle) override;
  std::string name() const override { return "mock"; }

  /// Child genome for a bundle, using the given generator. Exposed for tests.
  MockGenome mutate(const PromptBundle& bundle, std::mt19937_64& rng) const;

 private:
  MockParams params_;
  std::mutex mutex_;
  std::uint64_t counter_ = 0;
};

}  // namespace sage::llm
