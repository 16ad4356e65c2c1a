#include "sage/errors.hpp"
#include "sage/surrogate.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numeric>
#include <random>

namespace ss = sage::surrogate;

namespace {

struct Dataset {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
};

Dataset random_dataset(std::mt19937& rng, std::size_t n, std::size_t d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> small(0, 4);
  Dataset data;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d);
    // Mix continuous and heavily tied columns.
    for (std::size_t j = 0; j < d; ++j) row[j] = j % 2 == 0 ? u(rng) : small(rng);
    data.y.push_back(std::sin(3.0 * row[0]) + 0.5 * row[1 % d] + 0.1 * u(rng));
    data.x.push_back(std::move(row));
  }
  return data;
}

double leaf_sum_by_hand(const ss::SurrogateModel& model, const std::vector<double>& x) {
  double sum = 0.0;
  for (const auto& tree : model.trees) {
    std::size_t id = 0;
    while (tree.nodes[id].feature >= 0) {
      const auto& node = tree.nodes[id];
      id = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                        ? node.left
                                        : node.right);
    }
    sum += tree.nodes[id].value;
  }
  return sum;
}

double stddev(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double a : v) s += (a - mean) * (a - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(SurrogateFit, ConstantTargets) {
  const std::vector<std::vector<double>> x = {{1, 2}, {3, 4}, {5, 6}, {7, 8}};
  const std::vector<double> y(4, 0.37);
  const auto model = ss::fit(x, y);
  for (const auto& row : x) EXPECT_DOUBLE_EQ(ss::predict(model, row), 0.37);
  EXPECT_DOUBLE_EQ(ss::predict(model, std::vector<double>{-10, 100}), 0.37);
  for (const auto& tree : model.trees) EXPECT_EQ(tree.nodes.size(), 1u);
}

TEST(SurrogateFit, ZeroTreesPredictsMean) {
  const std::vector<std::vector<double>> x = {{0}, {1}, {2}};
  const std::vector<double> y = {1.0, 2.0, 6.0};
  const auto model = ss::fit(x, y, {.n_trees = 0});
  EXPECT_TRUE(model.trees.empty());
  EXPECT_DOUBLE_EQ(ss::predict(model, std::vector<double>{0.5}), 3.0);
}

TEST(SurrogateFit, Errors) {
  EXPECT_THROW(ss::fit({{1.0}}, std::vector<double>{1.0}), sage::InsufficientData);
  EXPECT_THROW(ss::fit({}, std::vector<double>{}), sage::InsufficientData);
  EXPECT_THROW(ss::fit({{1.0}, {1.0, 2.0}}, std::vector<double>{1.0, 2.0}),
               sage::DimensionMismatch);
  const auto model = ss::fit({{1.0, 2.0}, {2.0, 3.0}}, std::vector<double>{1.0, 2.0});
  EXPECT_THROW(ss::predict(model, std::vector<double>{1.0}), sage::DimensionMismatch);
}

TEST(SurrogateFit, LinearTargetOnOneFeature) {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t d = 6;
  const std::size_t k = 3;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> row(d);
    for (auto& v : row) v = u(rng);
    y.push_back(3.0 * row[k]);
    x.push_back(std::move(row));
  }
  const auto model = ss::fit(x, y);
  std::vector<double> pred;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    pred.push_back(ss::predict(model, x[i]));
    sse += (pred.back() - y[i]) * (pred.back() - y[i]);
  }
  const double rmse = std::sqrt(sse / static_cast<double>(x.size()));
  EXPECT_LT(rmse, 0.1 * stddev(y));
  EXPECT_GT(pearson(pred, y), 0.95);
  // The first round must pick the informative feature.
  EXPECT_EQ(model.trees.front().nodes.front().feature, static_cast<int>(k));
}

TEST(SurrogateFit, TrainingErrorNeverIncreases) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = random_dataset(rng, 10 + static_cast<std::size_t>(trial) * 7, 5);
    const auto model = ss::fit(data.x, data.y, {.n_trees = 60, .max_depth = 1 + trial % 4});
    ASSERT_EQ(model.training_mse.size(), 61u);
    for (std::size_t t = 1; t < model.training_mse.size(); ++t) {
      EXPECT_LE(model.training_mse[t], model.training_mse[t - 1]) << "trial " << trial;
    }
  }
}

TEST(SurrogateFit, TreeStructureInvariants) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = random_dataset(rng, 40, 4);
    const int min_leaf = 1 + trial % 5;
    const int max_depth = 1 + trial % 3;
    const auto model =
        ss::fit(data.x, data.y, {.n_trees = 20, .max_depth = max_depth, .min_leaf = min_leaf});
    for (const auto& tree : model.trees) {
      EXPECT_LE(tree.depth(), static_cast<std::size_t>(max_depth));
      EXPECT_EQ(tree.nodes[0].cover, 40u);
      for (const auto& node : tree.nodes) {
        if (node.is_leaf()) continue;
        const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
        const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
        EXPECT_EQ(node.cover, l.cover + r.cover);
        EXPECT_GE(l.cover, static_cast<std::size_t>(min_leaf));
        EXPECT_GE(r.cover, static_cast<std::size_t>(min_leaf));
        EXPECT_GE(node.feature, 0);
        EXPECT_LT(node.feature, 4);
      }
    }
  }
}

TEST(SurrogateFit, TiesPreferLowestFeatureThenSmallestThreshold) {
  // Columns 0 and 1 are identical, so every split scores the same on both.
  const std::vector<std::vector<double>> x = {{1, 1}, {2, 2}, {3, 3}, {4, 4}};
  const std::vector<double> y = {0.0, 1.0, 1.0, 0.0};
  const auto model = ss::fit(x, y, {.n_trees = 1, .max_depth = 1, .learning_rate = 1.0});
  const auto& root = model.trees[0].nodes[0];
  EXPECT_EQ(root.feature, 0);
  // Splits at 1.5 and 3.5 reduce the error equally; the smaller one wins.
  EXPECT_DOUBLE_EQ(root.threshold, 1.5);
}

TEST(SurrogateFit, Deterministic) {
  std::mt19937 rng(3);
  const auto data = random_dataset(rng, 50, 6);
  const auto a = ss::to_json(ss::fit(data.x, data.y));
  const auto b = ss::to_json(ss::fit(data.x, data.y));
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(SurrogatePredict, MatchesIndependentTraversal) {
  std::mt19937 rng(9);
  const auto data = random_dataset(rng, 60, 5);
  const auto model = ss::fit(data.x, data.y, {.n_trees = 30});
  for (const auto& row : data.x) {
    EXPECT_NEAR(ss::predict(model, row),
                model.base_prediction + model.learning_rate * leaf_sum_by_hand(model, row),
                1e-12);
  }
}

TEST(SurrogateJson, RoundTripPreservesPredictions) {
  std::mt19937 rng(21);
  const auto data = random_dataset(rng, 30, 3);
  const auto model = ss::fit(data.x, data.y, {.n_trees = 15}, {"a", "b", "c"});
  const auto doc = ss::to_json(model);
  const auto back = ss::model_from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back.feature_names, model.feature_names);
  EXPECT_EQ(ss::to_json(back).dump(), doc.dump());
  for (const auto& row : data.x) EXPECT_EQ(ss::predict(back, row), ss::predict(model, row));
}
