#pragma once

// Test oracles for TreeSHAP: an exponential-time Shapley computation and
// random trees with consistent covers built without the fitting code.

#include "sage/surrogate.hpp"

#include <bit>
#include <random>
#include <string>
#include <vector>

namespace sage::oracle {

namespace ss = sage::surrogate;

// Brute-force Shapley oracle. The value of a coalition S is the
// cover-weighted conditional expectation of the ensemble: splits on features
// in S follow x, all other splits average both children by cover.
inline double coalition_value(const ss::RegressionTree& tree, int id, const std::vector<double>& x,
                       unsigned mask) {
  const auto& node = tree.nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) return node.value;
  if (mask & (1u << node.feature)) {
    return coalition_value(tree, x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                     ? node.left
                                     : node.right,
                           x, mask);
  }
  const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
  const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
  return (static_cast<double>(l.cover) * coalition_value(tree, node.left, x, mask) +
          static_cast<double>(r.cover) * coalition_value(tree, node.right, x, mask)) /
         static_cast<double>(node.cover);
}

inline double ensemble_value(const ss::SurrogateModel& m, const std::vector<double>& x, unsigned mask) {
  double s = 0.0;
  for (const auto& t : m.trees) s += coalition_value(t, 0, x, mask);
  return m.base_prediction + m.learning_rate * s;
}

inline std::vector<double> brute_force_shapley(const ss::SurrogateModel& m, const std::vector<double>& x) {
  const int d = static_cast<int>(x.size());
  std::vector<double> factorial(static_cast<std::size_t>(d) + 1, 1.0);
  for (int i = 1; i <= d; ++i) factorial[static_cast<std::size_t>(i)] = factorial[static_cast<std::size_t>(i) - 1] * i;
  std::vector<double> phi(static_cast<std::size_t>(d), 0.0);
  for (int j = 0; j < d; ++j) {
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
      if (mask & (1u << j)) continue;
      const int s = std::popcount(mask);
      const double w = factorial[static_cast<std::size_t>(s)] *
                       factorial[static_cast<std::size_t>(d - s - 1)] /
                       factorial[static_cast<std::size_t>(d)];
      phi[static_cast<std::size_t>(j)] +=
          w * (ensemble_value(m, x, mask | (1u << j)) - ensemble_value(m, x, mask));
    }
  }
  return phi;
}

// Random tree with consistent covers, built without the fitting code.
inline void grow_random(ss::RegressionTree& tree, int id, int depth, int max_depth, int d,
                 std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t cover = tree.nodes[static_cast<std::size_t>(id)].cover;
  if (depth >= max_depth || cover < 2 || u(rng) < 0.2) {
    tree.nodes[static_cast<std::size_t>(id)].value = u(rng) * 4.0 - 2.0;
    return;
  }
  std::uniform_int_distribution<int> feature(0, d - 1);
  std::uniform_int_distribution<std::size_t> split(1, cover - 1);
  const std::size_t left_cover = split(rng);
  const int l = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({-1, 0.0, -1, -1, 0.0, left_cover});
  const int r = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({-1, 0.0, -1, -1, 0.0, cover - left_cover});
  auto& node = tree.nodes[static_cast<std::size_t>(id)];
  node.feature = feature(rng);
  node.threshold = u(rng);
  node.left = l;
  node.right = r;
  grow_random(tree, l, depth + 1, max_depth, d, rng);
  grow_random(tree, r, depth + 1, max_depth, d, rng);
}

inline ss::SurrogateModel random_model(std::mt19937& rng, int d, int n_trees, int max_depth) {
  ss::SurrogateModel m;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  m.base_prediction = u(rng);
  m.learning_rate = 0.1 + 0.9 * u(rng);
  for (int j = 0; j < d; ++j) m.feature_names.push_back("f" + std::to_string(j));
  std::uniform_int_distribution<std::size_t> cover(20, 200);
  for (int t = 0; t < n_trees; ++t) {
    ss::RegressionTree tree;
    tree.nodes.push_back({-1, 0.0, -1, -1, 0.0, cover(rng)});
    grow_random(tree, 0, 0, max_depth, d, rng);
    m.trees.push_back(std::move(tree));
  }
  return m;
}

inline std::vector<double> random_point(std::mt19937& rng, int d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(d));
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace sage::oracle
