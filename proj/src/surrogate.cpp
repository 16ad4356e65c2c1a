#include "sage/surrogate.hpp"

#include "sage/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sage::surrogate {

namespace {

using Matrix = std::vector<std::vector<double>>;

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

bool strictly_better(double candidate, double incumbent) {
  return candidate > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent));
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<double>& residual, const FitParams& params)
      : x_(x), residual_(residual), params_(params), dimension_(x.front().size()) {}

  RegressionTree build() {
    std::vector<std::size_t> all(x_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    tree_.nodes.clear();
    grow(all, 0);
    return std::move(tree_);
  }

 private:
  int grow(const std::vector<std::size_t>& samples, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (std::size_t i : samples) sum += residual_[i];
    const auto n = static_cast<double>(samples.size());
    tree_.nodes[id].cover = samples.size();
    tree_.nodes[id].value = sum / n;

    if (depth >= params_.max_depth) return id;
    const Split split = best_split(samples, sum);
    if (split.feature < 0) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i : samples) {
      (x_[i][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right)
          .push_back(i);
    }
    tree_.nodes[id].feature = split.feature;
    tree_.nodes[id].threshold = split.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  // Exact greedy search: maximizes the reduction in squared error. Ties go to
  // the lowest feature index, then the smallest threshold.
  Split best_split(const std::vector<std::size_t>& samples, double total) const {
    const std::size_t n = samples.size();
    const auto min_leaf = static_cast<std::size_t>(std::max(params_.min_leaf, 1));
    if (n < 2 * min_leaf) return {};
    const double parent_score = total * total / static_cast<double>(n);
    double residual_scale = 0.0;
    for (std::size_t i : samples) residual_scale += residual_[i] * residual_[i];

    Split best;
    std::vector<std::size_t> order(samples);
    for (std::size_t f = 0; f < dimension_; ++f) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x_[a][f] < x_[b][f];
      });
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left_sum += residual_[order[k]];
        const double lo = x_[order[k]][f];
        const double hi = x_[order[k + 1]][f];
        if (!(lo < hi)) continue;
        const std::size_t nl = k + 1;
        const std::size_t nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - parent_score;
        if (strictly_better(gain, best.gain)) {
          best = Split{static_cast<int>(f), lo + (hi - lo) / 2.0, gain};
        }
      }
    }
    // Reject numerically negligible improvements.
    if (best.feature >= 0 && best.gain <= 1e-12 * std::max(residual_scale, 1e-300)) return {};
    return best;
  }

  const Matrix& x_;
  const std::vector<double>& residual_;
  const FitParams& params_;
  std::size_t dimension_;
  RegressionTree tree_;
};

double mse(const std::vector<double>& residual) {
  double s = 0.0;
  for (double r : residual) s += r * r;
  return s / static_cast<double>(residual.size());
}

nlohmann::json node_to_json(const RegressionTree& tree, int id) {
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) return {{"value", node.value}, {"cover", node.cover}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"cover", node.cover},
          {"left", node_to_json(tree, node.left)},
          {"right", node_to_json(tree, node.right)}};
}

int node_from_json(const nlohmann::json& j, RegressionTree& tree) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[id].cover = j.at("cover").get<std::size_t>();
  if (j.contains("value")) {
    tree.nodes[id].value = j.at("value").get<double>();
    return id;
  }
  tree.nodes[id].feature = j.at("feature").get<int>();
  tree.nodes[id].threshold = j.at("threshold").get<double>();
  const int l = node_from_json(j.at("left"), tree);
  const int r = node_from_json(j.at("right"), tree);
  tree.nodes[id].left = l;
  tree.nodes[id].right = r;
  return id;
}

}  // namespace

double RegressionTree::predict(std::span<const double> x) const {
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(id)].value;
}

std::size_t RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::size_t deepest = 0;
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      deepest = std::max(deepest, d);
    } else {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return deepest;
}

SurrogateModel fit(const std::vector<std::vector<double>>& features,
                   std::span<const double> targets, const FitParams& params,
                   std::vector<std::string> feature_names) {
  if (features.size() != targets.size()) {
    throw DimensionMismatch("feature rows and targets differ in count");
  }
  if (features.size() < 2) {
    throw InsufficientData("surrogate needs at least 2 samples, got " +
                           std::to_string(features.size()));
  }
  const std::size_t d = features.front().size();
  for (const auto& row : features) {
    if (row.size() != d) throw DimensionMismatch("feature rows differ in length");
  }
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < d; ++j) feature_names.push_back("f" + std::to_string(j));
  } else if (feature_names.size() != d) {
    throw DimensionMismatch("feature name count does not match row length");
  }

  SurrogateModel model;
  model.learning_rate = params.learning_rate;
  model.feature_names = std::move(feature_names);
  model.training_size = targets.size();
  model.base_prediction =
      std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());

  std::vector<double> residual(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) residual[i] = targets[i] - model.base_prediction;
  model.training_mse.push_back(mse(residual));

  for (int t = 0; t < params.n_trees; ++t) {
    RegressionTree tree = TreeBuilder(features, residual, params).build();
    for (std::size_t i = 0; i < residual.size(); ++i) {
      residual[i] -= params.learning_rate * tree.predict(features[i]);
    }
    model.trees.push_back(std::move(tree));
    model.training_mse.push_back(mse(residual));
  }
  return model;
}

double predict(const SurrogateModel& model, std::span<const double> x) {
  if (x.size() != model.dimension()) {
    throw DimensionMismatch("expected " + std::to_string(model.dimension()) +
                            " features, got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  for (const auto& tree : model.trees) sum += tree.predict(x);
  return model.base_prediction + model.learning_rate * sum;
}

nlohmann::json to_json(const SurrogateModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) trees.push_back(node_to_json(tree, 0));
  return {{"base_prediction", model.base_prediction},
          {"learning_rate", model.learning_rate},
          {"training_size", model.training_size},
          {"feature_names", model.feature_names},
          {"trees", std::move(trees)}};
}

SurrogateModel model_from_json(const nlohmann::json& doc) {
  SurrogateModel model;
  model.base_prediction = doc.at("base_prediction").get<double>();
  model.learning_rate = doc.at("learning_rate").get<double>();
  model.training_size = doc.at("training_size").get<std::size_t>();
  model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  for (const auto& t : doc.at("trees")) {
    RegressionTree tree;
    node_from_json(t, tree);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace sage::surrogate
