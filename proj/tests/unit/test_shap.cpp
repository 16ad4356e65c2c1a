#include "sage/errors.hpp"
#include "sage/shap.hpp"

#include "shapley_oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

namespace ss = sage::surrogate;
namespace sh = sage::shap;

using namespace sage::oracle;

TEST(ShapValues, ZeroTreeModel) {
  ss::SurrogateModel m;
  m.base_prediction = 0.42;
  m.feature_names = {"a", "b", "c"};
  const auto attr = sh::shap_values(m, std::vector<double>{1, 2, 3});
  EXPECT_DOUBLE_EQ(attr.phi0, 0.42);
  for (double p : attr.phi) EXPECT_EQ(p, 0.0);
  EXPECT_DOUBLE_EQ(attr.prediction, 0.42);
}

TEST(ShapValues, SingleSplitAttributesOneFeature) {
  ss::SurrogateModel m;
  m.base_prediction = 0.0;
  m.learning_rate = 1.0;
  m.feature_names = {"a", "b", "c"};
  ss::RegressionTree tree;
  tree.nodes = {{1, 0.5, 1, 2, 0.0, 10}, {-1, 0.0, -1, -1, -1.0, 4}, {-1, 0.0, -1, -1, 2.0, 6}};
  m.trees.push_back(tree);
  const auto attr = sh::shap_values(m, std::vector<double>{9.0, 0.9, -3.0});
  EXPECT_EQ(attr.phi[0], 0.0);
  EXPECT_EQ(attr.phi[2], 0.0);
  // E = 0.4 * -1 + 0.6 * 2 = 0.8; x goes right (2.0).
  EXPECT_NEAR(attr.phi0, 0.8, 1e-15);
  EXPECT_NEAR(attr.phi[1], 1.2, 1e-15);
}

TEST(ShapValues, DimensionMismatch) {
  ss::SurrogateModel m;
  m.feature_names = {"a", "b"};
  EXPECT_THROW(sh::shap_values(m, std::vector<double>{1.0}), sage::DimensionMismatch);
}

TEST(ShapValues, AdditivityOnFittedModels) {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 21;
    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 30; ++i) {
      x.push_back(random_point(rng, d));
      y.push_back(x.back()[0] * x.back()[1 % d] + u(rng));
    }
    const auto model = ss::fit(x, y, {.n_trees = 25, .max_depth = 1 + trial % 4});
    const auto point = random_point(rng, d);
    const auto attr = sh::shap_values(model, point);
    const double total = attr.phi0 + std::accumulate(attr.phi.begin(), attr.phi.end(), 0.0);
    EXPECT_NEAR(total, ss::predict(model, point), 1e-6);
  }
}

TEST(ShapValues, MatchesBruteForceShapley) {
  std::mt19937 rng(1234);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = 2 + trial % 7;
    const auto model = random_model(rng, d, 1 + trial % 5, 1 + trial % 3);
    const auto x = random_point(rng, d);
    const auto attr = sh::shap_values(model, x);
    const auto oracle = brute_force_shapley(model, x);
    for (int j = 0; j < d; ++j) {
      EXPECT_NEAR(attr.phi[static_cast<std::size_t>(j)], oracle[static_cast<std::size_t>(j)], 1e-9)
          << "trial " << trial << " feature " << j;
    }
    EXPECT_NEAR(attr.phi0, ensemble_value(model, x, 0u), 1e-12);
  }
}

TEST(ShapValues, RepeatedFeatureOnPath) {
  // Both levels split on feature 0, exercising the path unwinding.
  ss::SurrogateModel m;
  m.learning_rate = 1.0;
  m.feature_names = {"a", "b"};
  ss::RegressionTree tree;
  tree.nodes = {{0, 0.5, 1, 2, 0, 10}, {0, 0.2, 3, 4, 0, 6}, {1, 0.5, 5, 6, 0, 4},
                {-1, 0, -1, -1, 1.0, 2}, {-1, 0, -1, -1, 3.0, 4},
                {-1, 0, -1, -1, -2.0, 1}, {-1, 0, -1, -1, 5.0, 3}};
  m.trees.push_back(tree);
  for (const std::vector<double> x : {std::vector<double>{0.1, 0.9}, {0.3, 0.1}, {0.8, 0.7}}) {
    const auto attr = sh::shap_values(m, x);
    const auto oracle = brute_force_shapley(m, x);
    EXPECT_NEAR(attr.phi[0], oracle[0], 1e-12);
    EXPECT_NEAR(attr.phi[1], oracle[1], 1e-12);
  }
}

TEST(ShapValues, UnusedFeatureGetsExactlyZero) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back({u(rng), 0.5, u(rng)});  // column 1 is constant, never split
    y.push_back(x.back()[0] - x.back()[2]);
  }
  const auto model = ss::fit(x, y);
  for (int i = 0; i < 10; ++i) {
    const auto attr = sh::shap_values(model, std::vector<double>{u(rng), u(rng), u(rng)});
    EXPECT_EQ(attr.phi[1], 0.0);
  }
}

TEST(SelectGuidance, LargestMagnitudeAndSign) {
  const std::vector<std::string> names = {"alpha", "beta"};
  sh::Attribution attr;
  attr.phi = {0.5, -0.9};
  const auto g = sh::select_guidance(attr, names);
  ASSERT_TRUE(g.has_value());
  EXPECT_EQ(g->feature_name, "beta");
  EXPECT_EQ(g->direction, sh::Direction::decrease);
  EXPECT_DOUBLE_EQ(g->magnitude, 0.9);
}

TEST(SelectGuidance, TieGoesToLowestIndex) {
  const std::vector<std::string> names = {"alpha", "beta"};
  sh::Attribution attr;
  attr.phi = {0.3, 0.3};
  const auto g = sh::select_guidance(attr, names);
  ASSERT_TRUE(g.has_value());
  EXPECT_EQ(g->feature_name, "alpha");
  EXPECT_EQ(g->direction, sh::Direction::increase);
}

TEST(SelectGuidance, NoSignal) {
  const std::vector<std::string> names = {"alpha", "beta"};
  sh::Attribution attr;
  attr.phi = {0.0, 0.0};
  EXPECT_FALSE(sh::select_guidance(attr, names).has_value());
  attr.phi = {1e-13, -5e-13};
  EXPECT_FALSE(sh::select_guidance(attr, names).has_value());
}

TEST(SelectGuidance, DeterministicForSameParent) {
  std::mt19937 rng(4);
  const auto model = random_model(rng, 5, 4, 3);
  const auto x = random_point(rng, 5);
  const auto a = sh::select_guidance(sh::shap_values(model, x), model.feature_names);
  const auto b = sh::select_guidance(sh::shap_values(model, x), model.feature_names);
  ASSERT_EQ(a.has_value(), b.has_value());
  if (a) {
    EXPECT_EQ(a->feature_name, b->feature_name);
    EXPECT_EQ(a->direction, b->direction);
  }
}

TEST(RenderGuidance, Template) {
  EXPECT_EQ(sh::render_guidance({"total_parameter_count", sh::Direction::increase, 0.2}),
            "Based on archive analysis, try to increase the total parameter count of the "
            "solution.");
  EXPECT_EQ(sh::render_guidance({"degree_entropy", sh::Direction::decrease, 0.1}),
            "Based on archive analysis, try to decrease the degree entropy of the solution.");
}

TEST(RenderGuidance, ParsesBack) {
  for (const char* name : {"node_count", "total_cyclomatic_complexity", "avg_shortest_path"}) {
    for (auto dir : {sh::Direction::increase, sh::Direction::decrease}) {
      const std::string prompt = "Refine the strategy of the selected solution to improve it. " +
                                 sh::render_guidance({name, dir, 1.0});
      const auto back = sh::parse_guidance(prompt);
      ASSERT_TRUE(back.has_value());
      EXPECT_EQ(back->feature_name, name);
      EXPECT_EQ(back->direction, dir);
    }
  }
  EXPECT_FALSE(sh::parse_guidance("Refine the strategy.").has_value());
}
