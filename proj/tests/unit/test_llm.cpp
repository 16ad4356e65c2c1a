#include "sage/ast_features.hpp"
#include "sage/errors.hpp"
#include "sage/evaluator.hpp"
#include "sage/llm.hpp"
#include "sage/shap.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace sl = sage::llm;
namespace sf = sage::features;

namespace {

std::size_t occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Two-sided exact binomial test p-value for k successes in n fair trials.
double binomial_two_sided(int k, int n) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    pmf[static_cast<std::size_t>(i)] =
        std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                 n * std::log(2.0));
  }
  const double observed = pmf[static_cast<std::size_t>(k)];
  double p = 0.0;
  for (double v : pmf) {
    if (v <= observed * (1.0 + 1e-9)) p += v;
  }
  return std::min(1.0, p);
}

sl::PromptBundle child_bundle(const std::string& parent_code, sl::PromptKind kind,
                              std::optional<std::string> guidance = std::nullopt) {
  sl::PromptBundle b;
  b.task_prompt = std::string(sl::task_prompt(sl::TaskPrompt::sbox));
  b.parent = sl::ParentContext{parent_code, "parent", 0.5, std::nullopt};
  b.kind = kind;
  b.mutation_instruction = std::string(kind == sl::PromptKind::refine ? sl::kRefineInstruction
                                                                      : sl::kRandomNewInstruction);
  b.guidance_sentence = std::move(guidance);
  return b;
}

sl::PromptBundle init_bundle() {
  sl::PromptBundle b;
  b.task_prompt = std::string(sl::task_prompt(sl::TaskPrompt::sbox));
  return b;
}

std::string increase_params() {
  return sage::shap::render_guidance(
      {"total_parameter_count", sage::shap::Direction::increase, 1.0});
}

double feature(const std::string& code, sf::Feature f) {
  return sf::extract_features(code)[sf::index_of(f)];
}

}  // namespace

TEST(Prompts, TaskPromptsAreVerbatim) {
  for (auto which : {sl::TaskPrompt::sbox, sl::TaskPrompt::ma_bbob}) {
    const auto p = sl::task_prompt(which);
    EXPECT_TRUE(p.starts_with("You are an excellent Python programmer.\n"));
    EXPECT_TRUE(p.ends_with("# Code: \n```python\n<code>\n```\n"));
    EXPECT_EQ(occurrences(p, "class RandomSearch:"), 1u);
  }
  const auto sbox = sl::task_prompt(sl::TaskPrompt::sbox);
  EXPECT_NE(sbox.find("You can use numpy v2 and some other standard libraries."),
            std::string_view::npos);
  // The example listing in the prompt is the reference RandomSearch program.
  EXPECT_NE(sbox.find(read_file(std::string(SAGE_TEST_DATA_DIR) + "/random_search.py")),
            std::string_view::npos);
  EXPECT_EQ(sl::task_prompt(sl::TaskPrompt::ma_bbob).find("import math"), std::string_view::npos);
  EXPECT_THROW(sl::task_prompt_from_string("bbob"), sage::ConfigError);
}

TEST(Prompts, DefaultMutationPrompts) {
  const auto prompts = sl::default_mutation_prompts();
  ASSERT_EQ(prompts.size(), 2u);
  EXPECT_EQ(prompts[0].kind, sl::PromptKind::random_new);
  EXPECT_EQ(prompts[0].text,
            "Generate a new algorithm that is different from the algorithms you have tried "
            "before.");
  EXPECT_EQ(prompts[1].kind, sl::PromptKind::refine);
  EXPECT_EQ(prompts[1].text, "Refine the strategy of the selected solution to improve it.");
}

TEST(Prompts, RenderOrder) {
  auto b = child_bundle("def f():\n    pass\n", sl::PromptKind::refine, increase_params());
  const auto text = b.render();
  EXPECT_EQ(occurrences(text, b.task_prompt), 1u);
  EXPECT_TRUE(text.starts_with(b.task_prompt));
  const auto code_at = text.find("def f():");
  const auto instruction_at = text.find(sl::kRefineInstruction);
  const auto guidance_at = text.find(*b.guidance_sentence);
  ASSERT_NE(code_at, std::string::npos);
  ASSERT_NE(instruction_at, std::string::npos);
  ASSERT_NE(guidance_at, std::string::npos);
  EXPECT_LT(code_at, instruction_at);
  EXPECT_LT(instruction_at, guidance_at);
  EXPECT_NE(text.find("0.5"), std::string::npos);

  b.parent->error = "ZeroDivisionError: division by zero";
  EXPECT_NE(b.render().find("ZeroDivisionError: division by zero"), std::string::npos);
  EXPECT_EQ(init_bundle().render(), init_bundle().task_prompt);
}

TEST(ParseResponse, WellFormedReply) {
  const std::string raw =
      "# Description: Differential evolution with archive.\n# Code: \n```python\nimport numpy as "
      "np\n\nclass DE:\n    pass\n```\n";
  const auto r = sl::parse_response(raw);
  EXPECT_EQ(r.description, "Differential evolution with archive.");
  EXPECT_EQ(r.code, "import numpy as np\n\nclass DE:\n    pass\n");
}

TEST(ParseResponse, FirstBlockWinsAndTagIsDropped) {
  const std::string raw =
      "Sure!\n# Description: A\n```py\nx = 1\n```\ntext\n```python\ny = 2\n```\n";
  const auto r = sl::parse_response(raw);
  EXPECT_EQ(r.code, "x = 1\n");
  EXPECT_EQ(r.description, "A");
}

TEST(ParseResponse, DescriptionAfterCode) {
  const auto r = sl::parse_response("```\nx = 1\n```\n# Description: late\n");
  EXPECT_EQ(r.description, "late");
}

TEST(ParseResponse, Errors) {
  EXPECT_THROW(sl::parse_response("```python\nx = 1\n```\n"), sage::MissingDescription);
  EXPECT_THROW(sl::parse_response("# Description:   \n```python\nx = 1\n```\n"),
               sage::MissingDescription);
  EXPECT_THROW(sl::parse_response("# Description: d\nno code here\n"), sage::MissingCodeBlock);
  EXPECT_THROW(sl::parse_response("# Description: d\n```python\nx = 1\n"), sage::MissingCodeBlock);
  EXPECT_THROW(sl::parse_response("# Description: d\n```python\n\n```\n"), sage::MissingCodeBlock);
  EXPECT_THROW(sl::parse_response(""), sage::MalformedResponse);
}

TEST(CountWords, Whitespace) {
  EXPECT_EQ(sl::count_words(""), 0);
  EXPECT_EQ(sl::count_words("  a\tb\n\nc  "), 3);
}

TEST(MockGenome, RoundTripsThroughCode) {
  std::mt19937_64 rng(3);
  sl::MockProvider mock({.seed = 1});
  for (int i = 0; i < 50; ++i) {
    const auto g = mock.mutate(init_bundle(), rng);
    const auto back = sl::genome_from_code(sl::render_mock_program(g));
    ASSERT_TRUE(back);
    EXPECT_EQ(*back, g);
  }
  EXPECT_FALSE(sl::genome_from_code("x = 1\n"));
}

TEST(MockGenome, ParameterCountFollowsGenome) {
  sl::MockGenome g;
  g.init_extra = 2;
  g.helper_params = {3, 1};
  const auto x = sf::extract_features(sl::render_mock_program(g));
  // __init__(self, budget, dim, c0, c1) + __call__(self, func) + helpers.
  EXPECT_EQ(x[sf::index_of(sf::Feature::total_parameter_count)], 5.0 + 2.0 + 4.0);
  EXPECT_EQ(x[sf::index_of(sf::Feature::function_count)], 4.0);
}

TEST(MockProvider, DeterministicPerSeed) {
  auto run = [](std::uint64_t seed) {
    sl::MockProvider mock({.seed = seed});
    std::vector<std::string> out;
    std::string parent = sl::parse_response(mock.complete(init_bundle()).raw_text).code;
    for (int i = 0; i < 20; ++i) {
      const auto kind = i % 2 ? sl::PromptKind::refine : sl::PromptKind::random_new;
      out.push_back(mock.complete(child_bundle(parent, kind, increase_params())).raw_text);
      parent = sl::parse_response(out.back()).code;
    }
    return out;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(MockProvider, EveryReplyParsesAndExtracts) {
  sl::MockProvider mock({.seed = 9});
  std::mt19937 pick(1);
  std::vector<std::string> pool{sl::parse_response(mock.complete(init_bundle()).raw_text).code};
  const auto& names = sf::feature_names();
  for (int i = 0; i < 300; ++i) {
    const auto& parent = pool[pick() % pool.size()];
    std::optional<std::string> guidance;
    if (i % 3 != 0) {
      guidance = sage::shap::render_guidance(
          {std::string(names[pick() % names.size()]),
           pick() % 2 ? sage::shap::Direction::increase : sage::shap::Direction::decrease, 1.0});
    }
    const auto kind = i % 2 ? sl::PromptKind::refine : sl::PromptKind::random_new;
    const auto reply = sl::generate(mock, child_bundle(parent, kind, guidance));
    EXPECT_NO_THROW(sf::extract_features(reply.code)) << reply.code;
    pool.push_back(reply.code);
  }
}

TEST(MockProvider, TokenUsageIsWordCount) {
  sl::MockProvider mock({.seed = 2});
  const auto b = init_bundle();
  const auto c = mock.complete(b);
  EXPECT_EQ(c.usage.prompt_tokens, sl::count_words(b.render()));
  EXPECT_EQ(c.usage.completion_tokens, sl::count_words(c.raw_text));
  EXPECT_GT(c.usage.total(), 0);
}

TEST(MockProvider, FailureRate) {
  sl::MockProvider mock({.seed = 2, .failure_rate = 1.0});
  EXPECT_THROW(sl::generate(mock, init_bundle()), sage::MalformedResponse);
}

TEST(MockProvider, FullObedienceAlwaysIncreasesParameters) {
  sl::MockProvider mock({.seed = 11, .obedience = 1.0});
  sl::MockProvider source({.seed = 12});
  for (int i = 0; i < 200; ++i) {
    const auto parent = sl::parse_response(source.complete(init_bundle()).raw_text).code;
    const auto kind = i % 2 ? sl::PromptKind::refine : sl::PromptKind::random_new;
    const auto child = sl::generate(mock, child_bundle(parent, kind, increase_params())).code;
    EXPECT_GT(feature(child, sf::Feature::total_parameter_count),
              feature(parent, sf::Feature::total_parameter_count));
  }
}

TEST(MockProvider, ObedienceRateMatchesSetting) {
  sl::MockProvider mock({.seed = 21, .obedience = 0.8});
  sl::MockProvider source({.seed = 22});
  int matches = 0;
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    const auto parent = sl::parse_response(source.complete(init_bundle()).raw_text).code;
    const auto child =
        sl::generate(mock, child_bundle(parent, sl::PromptKind::refine, increase_params())).code;
    if (feature(child, sf::Feature::total_parameter_count) >
        feature(parent, sf::Feature::total_parameter_count)) {
      ++matches;
    }
  }
  const double rate = static_cast<double>(matches) / n;
  EXPECT_GE(rate, 0.7);
  EXPECT_LE(rate, 0.9);
}

TEST(MockProvider, UnguidedDeltasAreSignBalanced) {
  for (auto kind : {sl::PromptKind::refine, sl::PromptKind::random_new}) {
    sl::MockProvider mock({.seed = 31});
    sl::MockProvider source({.seed = 32});
    std::vector<std::string> parents, children;
    for (int i = 0; i < 200; ++i) {
      parents.push_back(sl::parse_response(source.complete(init_bundle()).raw_text).code);
      children.push_back(sl::generate(mock, child_bundle(parents.back(), kind)).code);
    }
    for (auto f : {sf::Feature::total_parameter_count, sf::Feature::total_cyclomatic_complexity,
                   sf::Feature::total_token_count, sf::Feature::depth_max}) {
      int up = 0, down = 0;
      for (std::size_t i = 0; i < parents.size(); ++i) {
        const double d = feature(children[i], f) - feature(parents[i], f);
        up += d > 0;
        down += d < 0;
      }
      if (up + down == 0) continue;
      EXPECT_GT(binomial_two_sided(up, up + down), 0.01)
          << sl::to_string(kind) << " " << sf::feature_names()[sf::index_of(f)] << ": " << up
          << " up, " << down << " down";
    }
  }
}

TEST(MockProvider, ProgramsRunUnderPython) {
  if (std::system("python3 -c 'import numpy' >/dev/null 2>&1") != 0) {
    GTEST_SKIP() << "python3 with numpy is not available";
  }
  std::mt19937_64 rng(8);
  sl::MockProvider mock({.seed = 4});
  for (int i = 0; i < 6; ++i) {
    auto g = mock.mutate(init_bundle(), rng);
    g.family = i % sl::kMockFamilies;
    const std::string harness =
        sl::render_mock_program(g) +
        "\nimport types\n"
        "calls = 0\n"
        "def sphere(x):\n"
        "    global calls\n"
        "    calls += 1\n"
        "    return float(np.sum(x * x))\n"
        "sphere.bounds = types.SimpleNamespace(lb=-5.0 * np.ones(3), ub=5.0 * np.ones(3))\n"
        "algo = [v for v in list(globals().values()) if isinstance(v, type) and "
        "v.__module__ == '__main__'][0](budget=50, dim=3)\n"
        "f, x = algo(sphere)\n"
        "assert calls == 50, calls\n"
        "assert np.all(np.abs(x) <= 5.0)\n"
        "print('ok')\n";
    const auto r = sage::run_process({"python3", "-"}, harness, std::chrono::seconds(30));
    EXPECT_EQ(r.out, "ok\n") << r.err << "\n" << sl::render_mock_program(g);
  }
}

// ---------------------------------------------------------------------------

namespace {

class FakeChatServer {
 public:
  FakeChatServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = calls_++;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      const int status = n < static_cast<int>(statuses_.size()) ? statuses_[n] : 200;
      res.status = status;
      if (status != 200) {
        res.set_content("{\"error\":\"busy\"}", "application/json");
        return;
      }
      nlohmann::json body = {
          {"choices", {{{"message", {{"role", "assistant"}, {"content", reply_}}}}}},
          {"usage", {{"prompt_tokens", 123}, {"completion_tokens", 45}, {"total_tokens", 168}}}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChatServer() {
    server_.stop();
    thread_.join();
  }

  sl::HttpParams params() const {
    sl::HttpParams p;
    p.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    p.model = "test-model";
    p.initial_backoff = std::chrono::milliseconds(1);
    p.request_timeout = std::chrono::seconds(5);
    return p;
  }

  std::vector<int> statuses_;
  std::string reply_ = "# Description: d\n```python\nx = 1\n```\n";
  std::atomic<int> calls_{0};
  std::string last_body_;
  std::string last_auth_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(HttpProvider, CopiesUsageAndSendsRequest) {
  FakeChatServer server;
  ::setenv("SAGE_TEST_KEY", "secret", 1);
  auto params = server.params();
  params.api_key_env = "SAGE_TEST_KEY";
  params.temperature = 0.7;
  sl::HttpProvider provider(params);
  const auto r = sl::generate(provider, init_bundle());
  EXPECT_EQ(r.code, "x = 1\n");
  EXPECT_EQ(r.usage.prompt_tokens, 123);
  EXPECT_EQ(r.usage.completion_tokens, 45);
  EXPECT_EQ(server.last_auth_, "Bearer secret");
  const auto body = nlohmann::json::parse(server.last_body_);
  EXPECT_EQ(body.at("model"), "test-model");
  EXPECT_EQ(body.at("temperature"), 0.7);
  EXPECT_EQ(body.at("messages").at(0).at("content"), init_bundle().render());
}

TEST(HttpProvider, RetriesServerErrors) {
  FakeChatServer server;
  server.statuses_ = {500, 503, 429};
  sl::HttpProvider provider(server.params());
  EXPECT_NO_THROW(provider.complete(init_bundle()));
  EXPECT_EQ(server.calls_, 4);
}

TEST(HttpProvider, GivesUpAfterMaxRetries) {
  FakeChatServer server;
  server.statuses_ = {503, 503, 503, 503, 503};
  sl::HttpProvider provider(server.params());
  EXPECT_THROW(provider.complete(init_bundle()), sage::TransportError);
  EXPECT_EQ(server.calls_, 4);
}

TEST(HttpProvider, RateLimitSurfacesAsRateLimited) {
  FakeChatServer server;
  server.statuses_ = {429, 429, 429, 429};
  sl::HttpProvider provider(server.params());
  EXPECT_THROW(provider.complete(init_bundle()), sage::RateLimited);
}

TEST(HttpProvider, ClientErrorsAreNotRetried) {
  FakeChatServer server;
  server.statuses_ = {400};
  sl::HttpProvider provider(server.params());
  EXPECT_THROW(provider.complete(init_bundle()), sage::TransportError);
  EXPECT_EQ(server.calls_, 1);
}

TEST(HttpProvider, UnreachableEndpoint) {
  sl::HttpParams p;
  p.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  p.model = "m";
  p.initial_backoff = std::chrono::milliseconds(1);
  sl::HttpProvider provider(p);
  EXPECT_THROW(provider.complete(init_bundle()), sage::TransportError);
}

TEST(HttpProvider, ConfigErrors) {
  sl::HttpParams p;
  p.endpoint = "not a url";
  p.model = "m";
  EXPECT_THROW(sl::HttpProvider{p}, sage::ConfigError);
  p.endpoint = "http://localhost/x";
  p.api_key_env = "SAGE_TEST_KEY_THAT_IS_NOT_SET";
  EXPECT_THROW(sl::HttpProvider{p}, sage::ConfigError);
}
