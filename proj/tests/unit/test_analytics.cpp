#include "sage/analytics.hpp"
#include "sage/errors.hpp"

#include <gtest/gtest.h>

using namespace sage;
using namespace sage::analytics;
using evo::GuidanceRecord;
using shap::Direction;

namespace {

const std::size_t kParams = *features::feature_index("total_parameter_count");

Candidate node(const std::string& id, std::optional<std::string> parent, llm::PromptKind kind,
               std::optional<double> params, std::optional<Direction> dir = std::nullopt,
               double fitness = 0.5) {
  Candidate c;
  c.id = id;
  c.parent_id = std::move(parent);
  c.generation = c.parent_id ? 1 : 0;
  c.prompt_kind = kind;
  c.fitness = fitness;
  if (params) {
    c.features = features::FeatureVector{};
    (*c.features)[kParams] = *params;
  }
  if (dir) c.guidance = GuidanceRecord{"total_parameter_count", *dir};
  return c;
}

using K = llm::PromptKind;

}  // namespace

TEST(Consistency, HandBuiltTable) {
  const std::vector<Candidate> archive = {
      node("p", std::nullopt, K::init, 5.0),
      node("a", "p", K::refine, 7.0, Direction::increase),      // match
      node("b", "p", K::refine, 5.0, Direction::increase),      // unchanged: mismatch
      node("c", "p", K::refine, 3.0, Direction::decrease),      // match
      node("d", "p", K::random_new, 4.0, Direction::increase),  // mismatch
      node("e", "p", K::random_new, 2.0, Direction::decrease),  // match
      node("f", "p", K::refine, 9.0),                           // unguided: ignored
  };
  const auto table = consistency_analysis(archive);
  ASSERT_EQ(table.by_prompt_kind.size(), 2u);
  EXPECT_EQ(table.by_prompt_kind.at("refine"), (MatchCounts{2, 1}));
  EXPECT_EQ(table.by_prompt_kind.at("random_new"), (MatchCounts{1, 1}));
  EXPECT_EQ(table.skipped, 0);
  const auto j = to_json(table);
  EXPECT_EQ(j["by_prompt_kind"]["refine"]["match"], 2);
  EXPECT_EQ(j["by_prompt_kind"]["random_new"]["mismatch"], 1);
}

TEST(Consistency, MissingFeaturesAreSkipped) {
  const std::vector<Candidate> archive = {
      node("p", std::nullopt, K::init, 5.0),
      node("a", "p", K::refine, std::nullopt, Direction::increase),
      node("q", std::nullopt, K::init, std::nullopt),
      node("b", "q", K::refine, 4.0, Direction::decrease),
  };
  const auto table = consistency_analysis(archive);
  EXPECT_TRUE(table.by_prompt_kind.empty());
  EXPECT_EQ(table.skipped, 2);
}

TEST(Convergence, BestSoFar) {
  std::vector<Candidate> archive;
  for (double f : {0.2, 0.1, 0.5, 0.3, 0.7}) {
    archive.push_back(node("c" + std::to_string(archive.size()), std::nullopt, K::init, 1.0, std::nullopt, f));
  }
  EXPECT_EQ(best_so_far(archive), (std::vector<double>{0.2, 0.2, 0.5, 0.5, 0.7}));
}

TEST(Convergence, MeanAndInterval) {
  const auto c = convergence_curve({{1, 2, 3}, {3, 4, 5}});
  EXPECT_EQ(c.runs, 2u);
  EXPECT_FALSE(c.warning.has_value());
  ASSERT_EQ(c.mean.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(c.mean[i], 2.0 + static_cast<double>(i));
    // sd = sqrt(2), n = 2: half width 1.96 * sqrt(2) / sqrt(2).
    EXPECT_NEAR(c.upper[i] - c.mean[i], 1.96, 1e-12);
    EXPECT_NEAR(c.mean[i] - c.lower[i], 1.96, 1e-12);
  }
}

TEST(Convergence, SingleRunHasZeroWidth) {
  const auto c = convergence_curve({{0.1, 0.4}});
  EXPECT_EQ(c.lower, c.mean);
  EXPECT_EQ(c.upper, c.mean);
}

TEST(Convergence, UnequalLengthsTruncateWithWarning) {
  const auto c = convergence_curve({{1, 2, 3, 4}, {1, 2}});
  EXPECT_EQ(c.mean.size(), 2u);
  ASSERT_TRUE(c.warning.has_value());
  EXPECT_NE(c.warning->find("truncated to 2"), std::string::npos);
  EXPECT_THROW(convergence_curve({}), std::invalid_argument);
}

TEST(Speedup, HandExample) {
  const auto s = speedup_curve({0.5, 0.9}, {0.1, 0.5, 0.7, 0.9});
  ASSERT_EQ(s.size(), 2u);
  ASSERT_TRUE(s[0] && s[1]);
  EXPECT_DOUBLE_EQ(*s[0], 2.0);  // B reaches 0.5 at n = 2, A at m = 1
  EXPECT_DOUBLE_EQ(*s[1], 2.0);  // B reaches 0.9 at n = 4, A at m = 2
}

TEST(Speedup, MissingWhenBNeverReaches) {
  const auto s = speedup_curve({0.2, 0.8}, {0.1, 0.3, 0.5});
  ASSERT_EQ(s.size(), 2u);
  ASSERT_TRUE(s[0].has_value());
  EXPECT_DOUBLE_EQ(*s[0], 2.0);
  EXPECT_FALSE(s[1].has_value());
}

TEST(Speedup, IdenticalCurvesGiveOne) {
  const std::vector<double> a = {0.1, 0.1, 0.4, 0.4, 0.4, 0.9};
  for (const auto& v : speedup_curve(a, a)) {
    ASSERT_TRUE(v.has_value());
    EXPECT_DOUBLE_EQ(*v, 1.0);
  }
}

TEST(Effect, AucAndCliffsDelta) {
  EXPECT_DOUBLE_EQ(auc({1, 2, 3}), 6.0);
  EXPECT_DOUBLE_EQ(cliffs_delta({3, 4}, {1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(cliffs_delta({1, 2}, {3, 4}), -1.0);
  EXPECT_DOUBLE_EQ(cliffs_delta({1, 2}, {0, 3}), 0.0);
  EXPECT_DOUBLE_EQ(cliffs_delta({1, 1}, {1}), 0.0);
  EXPECT_DOUBLE_EQ(cliffs_delta({2, 3, 4}, {1, 3}), 3.0 / 6.0);
  EXPECT_THROW(cliffs_delta({}, {1}), std::invalid_argument);

  const auto e = auc_and_effect({{1, 1}, {2, 2}}, {{0, 1}});
  EXPECT_EQ(e.auc_a, (std::vector<double>{2, 4}));
  EXPECT_EQ(e.auc_b, (std::vector<double>{1}));
  EXPECT_DOUBLE_EQ(e.mean_diff, 2.0);
  EXPECT_DOUBLE_EQ(e.cliffs_delta, 1.0);
}

TEST(Ceg, NodesEdgesAndClasses) {
  const std::vector<Candidate> archive = {
      node("p", std::nullopt, K::init, 5.0, std::nullopt, 0.2),
      node("a", "p", K::refine, 6.0, std::nullopt, 0.4),
      node("b", "p", K::random_new, 6.0, std::nullopt, 0.6),
      node("c", "p", K::refine, 6.0, Direction::increase, 0.8),
      node("d", "p", K::random_new, 6.0, Direction::increase, 1.0),
      node("e", "p", K::refine, std::nullopt, Direction::decrease, 0.0),
  };
  const auto doc = build_ceg(archive, "total_parameter_count");
  ASSERT_EQ(doc.nodes.size(), 6u);
  ASSERT_EQ(doc.edges.size(), 5u);
  const std::vector<EdgeClass> expected = {EdgeClass::refine, EdgeClass::random_new, EdgeClass::refine_increase,
                                           EdgeClass::random_new_increase, EdgeClass::decrease};
  const std::vector<std::string> colors = {"gold", "lightblue", "darkgreen", "darkblue", "red"};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(doc.edges[i].edge_class, expected[i]);
    EXPECT_EQ(edge_color(doc.edges[i].edge_class), colors[i]);
    EXPECT_EQ(doc.edges[i].parent, "p");
  }
  EXPECT_DOUBLE_EQ(doc.nodes[0].normalized_fitness, 0.2);
  EXPECT_DOUBLE_EQ(doc.nodes[4].normalized_fitness, 1.0);
  EXPECT_DOUBLE_EQ(doc.nodes[5].normalized_fitness, 0.0);
  EXPECT_EQ(doc.nodes[0].feature_value, 5.0);
  EXPECT_FALSE(doc.nodes[5].feature_value.has_value());

  const auto j = to_json(doc);
  EXPECT_EQ(j["nodes"].size(), 6u);
  EXPECT_EQ(j["edges"][4]["color"], "red");
  EXPECT_TRUE(j["nodes"][5]["feature_value"].is_null());

  const auto dot = to_dot(doc);
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);
  for (const auto& color : colors) EXPECT_NE(dot.find("color=" + color), std::string::npos) << color;
  EXPECT_NE(dot.find("fillcolor=\"#440154\""), std::string::npos);  // lowest fitness
  EXPECT_NE(dot.find("fillcolor=\"#fde725\""), std::string::npos);  // highest fitness
  EXPECT_NE(dot.find("\"p\" -> \"a\""), std::string::npos);
}

TEST(Ceg, ConstantFitnessAndUnknownFeature) {
  const std::vector<Candidate> archive = {node("p", std::nullopt, K::init, 1.0),
                                          node("a", "p", K::refine, 2.0)};
  for (const auto& n : build_ceg(archive, "total_parameter_count").nodes) {
    EXPECT_DOUBLE_EQ(n.normalized_fitness, 0.5);
  }
  EXPECT_THROW(build_ceg(archive, "loop_count"), ConfigError);
  EXPECT_TRUE(build_ceg({}, "node_count").nodes.empty());
}

TEST(Convergence, ConstantRunsAverage) {
  const auto c = convergence_curve({{0.2, 0.2, 0.2}, {0.4, 0.4, 0.4}});
  for (double m : c.mean) EXPECT_DOUBLE_EQ(m, 0.3);
}

TEST(Effect, HandEnumeratedDeltas) {
  EXPECT_DOUBLE_EQ(cliffs_delta({3, 3}, {1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(cliffs_delta({2, 3}, {2, 3}), 0.0);
  const std::vector<std::vector<double>> runs = {{0.1, 0.5}, {0.2, 0.3}, {0.4, 0.4}};
  const auto e = auc_and_effect(runs, runs);
  EXPECT_DOUBLE_EQ(e.mean_diff, 0.0);
  EXPECT_DOUBLE_EQ(e.cliffs_delta, 0.0);
}
