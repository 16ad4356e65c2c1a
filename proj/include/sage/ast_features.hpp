#pragma once

// Structural code features of candidate programs.
//
// Source text is parsed with the tree-sitter Python grammar. The named nodes
// of the concrete syntax tree (minus comments and line continuations) form a
// rooted parent->child graph; graph-theoretic statistics of its undirected
// view plus per-function complexity aggregates make up a fixed-order vector
// of 22 features.

#include <array>
#include <atomic>
#include <cstddef>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sage::features {

inline constexpr std::size_t kFeatureCount = 22;
inline constexpr std::size_t kGraphMetricCount = 13;

enum class Feature : std::size_t {
  node_count,
  edge_count,
  degree_mean,
  degree_variance,
  degree_entropy,
  max_degree,
  depth_min,
  depth_mean,
  depth_max,
  avg_clustering,
  degree_assortativity,
  diameter,
  avg_shortest_path,
  function_count,
  total_cyclomatic_complexity,
  mean_cyclomatic_complexity,
  max_cyclomatic_complexity,
  total_token_count,
  mean_token_count,
  total_parameter_count,
  mean_parameter_count,
  max_parameter_count,
};

constexpr std::size_t index_of(Feature f) noexcept { return static_cast<std::size_t>(f); }

/// Canonical snake_case names, in vector order.
const std::array<std::string_view, kFeatureCount>& feature_names();

/// Name used in prompts, e.g. "total cyclomatic complexity".
std::string human_readable_name(std::size_t index);

/// Accepts either the snake_case or the human-readable spelling.
std::optional<std::size_t> feature_index(std::string_view name);

using FeatureVector = std::array<double, kFeatureCount>;
using GraphMetrics = std::array<double, kGraphMetricCount>;

struct SyntaxNode {
  int id = 0;
  std::string kind;
  bool is_leaf = true;
};

/// Rooted tree; ids are dense and assigned in depth-first pre-order, so the
/// root is always 0 and every parent id is smaller than its children's.
struct SyntaxGraph {
  std::vector<SyntaxNode> nodes;
  std::vector<std::pair<int, int>> edges;  // (parent, child)
  int root_id = 0;

  std::size_t node_count() const noexcept { return nodes.size(); }
  std::size_t edge_count() const noexcept { return edges.size(); }
};

struct FunctionComplexity {
  std::string name;
  int cyclomatic = 1;
  int tokens = 0;
  int parameters = 0;
};

struct ComplexityProfile {
  std::vector<FunctionComplexity> functions;

  std::size_t function_count() const noexcept { return functions.size(); }
  int total_cyclomatic() const noexcept;
  int max_cyclomatic() const noexcept;
  double mean_cyclomatic() const noexcept;
  int total_tokens() const noexcept;
  double mean_tokens() const noexcept;
  int total_parameters() const noexcept;
  double mean_parameters() const noexcept;
  int max_parameters() const noexcept;
};

/// Throws ParseError when the grammar reports an error or missing node.
SyntaxGraph parse_to_graph(std::string_view code);

/// The first 13 feature slots, computed on the undirected view of `graph`.
GraphMetrics compute_graph_metrics(const SyntaxGraph& graph);

/// Per-function McCabe complexity, leaf-token and parameter counts.
ComplexityProfile compute_complexity(std::string_view code);

/// Parses once and fills all 22 slots.
FeatureVector extract_features(std::string_view code);

FeatureVector assemble_features(const GraphMetrics& graph, const ComplexityProfile& profile);

/// Memoizes extract_features by source text. Safe for concurrent use.
class FeatureCache {
 public:
  FeatureVector get(std::string_view code);

  std::size_t size() const;
  std::size_t hits() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, FeatureVector> entries_;
  std::atomic<std::size_t> hits_{0};
};

}  // namespace sage::features
