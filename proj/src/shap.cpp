#include "sage/shap.hpp"

#include "sage/errors.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

namespace sage::shap {

namespace {

using surrogate::RegressionTree;
using surrogate::TreeNode;

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

// Grows the path by one split, updating the permutation weights of every
// subset size.
void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction,
                 int feature) {
  path[depth] = PathElement{feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / (depth + 1.0);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / (depth + 1.0);
  }
}

// Undoes extend_path for the element at `index`.
void unwind_path(PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * (depth + 1.0) / ((i + 1.0) * one_fraction);
      next = tmp - path[i].weight * zero_fraction * (depth - i) / (depth + 1.0);
    } else {
      path[i].weight = path[i].weight * (depth + 1.0) / (zero_fraction * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total weight the path would have with element `index` unwound.
double unwound_sum(const PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next * (depth + 1.0) / ((i + 1.0) * one_fraction);
      total += tmp;
      next = path[i].weight - tmp * zero_fraction * ((depth - i) / (depth + 1.0));
    } else if (zero_fraction != 0.0) {
      total += (path[i].weight / zero_fraction) / ((depth - i) / (depth + 1.0));
    }
  }
  return total;
}

class TreeExplainer {
 public:
  TreeExplainer(const RegressionTree& tree, std::span<const double> x, std::vector<double>& phi)
      : tree_(tree), x_(x), phi_(phi) {
    const auto depth = static_cast<std::size_t>(tree.depth());
    storage_.resize((depth + 2) * (depth + 3) / 2 + depth + 2);
  }

  void run() { recurse(0, 0, storage_.data(), 1.0, 1.0, -1); }

 private:
  void recurse(int node_id, int depth, PathElement* parent_path, double zero_fraction,
               double one_fraction, int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero_fraction, one_fraction, feature);

    const TreeNode& node = tree_.nodes[static_cast<std::size_t>(node_id)];
    if (node.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_sum(path, depth, i);
        const PathElement& el = path[i];
        phi_[static_cast<std::size_t>(el.feature)] +=
            w * (el.one_fraction - el.zero_fraction) * node.value;
      }
      return;
    }

    const bool goes_left = x_[static_cast<std::size_t>(node.feature)] <= node.threshold;
    const int hot = goes_left ? node.left : node.right;
    const int cold = goes_left ? node.right : node.left;
    const auto cover = static_cast<double>(node.cover);
    const double hot_zero = static_cast<double>(tree_.nodes[static_cast<std::size_t>(hot)].cover) / cover;
    const double cold_zero = static_cast<double>(tree_.nodes[static_cast<std::size_t>(cold)].cover) / cover;

    double incoming_zero = 1.0;
    double incoming_one = 1.0;
    int index = 0;
    while (index <= depth && path[index].feature != node.feature) ++index;
    if (index <= depth) {
      incoming_zero = path[index].zero_fraction;
      incoming_one = path[index].one_fraction;
      unwind_path(path, depth, index);
      --depth;
    }
    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, node.feature);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, node.feature);
  }

  const RegressionTree& tree_;
  std::span<const double> x_;
  std::vector<double>& phi_;
  std::vector<PathElement> storage_;
};

}  // namespace

std::string_view to_string(Direction d) noexcept {
  return d == Direction::increase ? "increase" : "decrease";
}

std::optional<Direction> direction_from_string(std::string_view s) noexcept {
  if (s == "increase") return Direction::increase;
  if (s == "decrease") return Direction::decrease;
  return std::nullopt;
}

double expected_value(const RegressionTree& tree) {
  const auto root_cover = static_cast<double>(tree.nodes.front().cover);
  double sum = 0.0;
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) sum += node.value * static_cast<double>(node.cover) / root_cover;
  }
  return sum;
}

Attribution shap_values(const surrogate::SurrogateModel& model, std::span<const double> x) {
  if (x.size() != model.dimension()) {
    throw DimensionMismatch("expected " + std::to_string(model.dimension()) +
                            " features, got " + std::to_string(x.size()));
  }
  Attribution out;
  out.point.assign(x.begin(), x.end());
  out.phi.assign(x.size(), 0.0);
  double expected = 0.0;
  std::vector<double> tree_phi(x.size());
  for (const auto& tree : model.trees) {
    expected += expected_value(tree);
    std::fill(tree_phi.begin(), tree_phi.end(), 0.0);
    TreeExplainer(tree, x, tree_phi).run();
    for (std::size_t j = 0; j < x.size(); ++j) out.phi[j] += model.learning_rate * tree_phi[j];
  }
  out.phi0 = model.base_prediction + model.learning_rate * expected;
  out.prediction = surrogate::predict(model, x);
  return out;
}

std::optional<Guidance> select_guidance(const Attribution& attribution,
                                        std::span<const std::string> names) {
  if (names.size() != attribution.phi.size()) {
    throw DimensionMismatch("attribution and feature names differ in length");
  }
  std::size_t best = 0;
  double best_abs = -1.0;
  for (std::size_t j = 0; j < attribution.phi.size(); ++j) {
    const double a = std::abs(attribution.phi[j]);
    if (a > best_abs) {
      best_abs = a;
      best = j;
    }
  }
  if (best_abs < kMinAttribution) return std::nullopt;
  return Guidance{names[best],
                  attribution.phi[best] > 0.0 ? Direction::increase : Direction::decrease,
                  best_abs};
}

std::string render_guidance(const Guidance& guidance) {
  std::string name = guidance.feature_name;
  std::replace(name.begin(), name.end(), '_', ' ');
  return "Based on archive analysis, try to " + std::string(to_string(guidance.direction)) +
         " the " + name + " of the solution.";
}

std::optional<Guidance> parse_guidance(std::string_view sentence) {
  static const std::regex pattern(
      R"(Based on archive analysis, try to (increase|decrease) the (.+?) of the solution\.)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(sentence.begin(), sentence.end(), m, pattern)) return std::nullopt;
  Guidance g;
  g.direction = *direction_from_string(m[1].str());
  g.feature_name = m[2].str();
  std::replace(g.feature_name.begin(), g.feature_name.end(), ' ', '_');
  return g;
}

}  // namespace sage::shap
