#pragma once

// Gradient-boosted regression trees with squared-error loss.
//
// Every round fits one tree to the current residuals with exact greedy
// variance-reduction splits. There is no subsampling and no regularization,
// so a fit is a deterministic function of its inputs.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sage::surrogate {

struct TreeNode {
  // Internal nodes have feature >= 0 and valid child indices; leaves have
  // feature == -1.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  std::size_t cover = 0;

  bool is_leaf() const noexcept { return feature < 0; }
};

/// Flat node array; index 0 is the root. Samples with x[feature] <= threshold
/// go left.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  std::size_t depth() const;
};

struct FitParams {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 1;
};

class SurrogateModel {
 public:
  double base_prediction = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
  std::vector<std::string> feature_names;
  std::size_t training_size = 0;
  /// Training mean squared error after the base prediction (entry 0) and
  /// after every boosting round.
  std::vector<double> training_mse;

  std::size_t dimension() const noexcept { return feature_names.size(); }
};

/// Throws InsufficientData when fewer than two samples are given and
/// DimensionMismatch when rows differ in length.
SurrogateModel fit(const std::vector<std::vector<double>>& features,
                   std::span<const double> targets, const FitParams& params = {},
                   std::vector<std::string> feature_names = {});

/// Throws DimensionMismatch when x has the wrong length.
double predict(const SurrogateModel& model, std::span<const double> x);

nlohmann::json to_json(const SurrogateModel& model);
SurrogateModel model_from_json(const nlohmann::json& doc);

}  // namespace sage::surrogate
