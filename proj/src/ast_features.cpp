#include "sage/ast_features.hpp"

#include "sage/errors.hpp"

#include <tree_sitter/api.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>

extern "C" const TSLanguage* tree_sitter_python();

namespace sage::features {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kNames = {
    "node_count",
    "edge_count",
    "degree_mean",
    "degree_variance",
    "degree_entropy",
    "max_degree",
    "depth_min",
    "depth_mean",
    "depth_max",
    "avg_clustering",
    "degree_assortativity",
    "diameter",
    "avg_shortest_path",
    "function_count",
    "total_cyclomatic_complexity",
    "mean_cyclomatic_complexity",
    "max_cyclomatic_complexity",
    "total_token_count",
    "mean_token_count",
    "total_parameter_count",
    "mean_parameter_count",
    "max_parameter_count",
};

struct ParserDeleter {
  void operator()(TSParser* p) const noexcept { ts_parser_delete(p); }
};
struct TreeDeleter {
  void operator()(TSTree* t) const noexcept { ts_tree_delete(t); }
};

// Owns one parse of a source text. The text must outlive the tree only for
// node_text(), which copies.
class ParsedSource {
 public:
  explicit ParsedSource(std::string_view code) : code_(code) {
    std::unique_ptr<TSParser, ParserDeleter> parser(ts_parser_new());
    ts_parser_set_language(parser.get(), tree_sitter_python());
    tree_.reset(ts_parser_parse_string(parser.get(), nullptr, code.data(),
                                       static_cast<uint32_t>(code.size())));
    if (!tree_) {
      throw ParseError("parser returned no tree", 1, 1);
    }
    TSNode root = ts_tree_root_node(tree_.get());
    if (ts_node_has_error(root)) {
      report_first_error(root);
    }
  }

  TSNode root() const { return ts_tree_root_node(tree_.get()); }

  std::string node_text(TSNode node) const {
    const auto begin = ts_node_start_byte(node);
    const auto end = ts_node_end_byte(node);
    return std::string(code_.substr(begin, end - begin));
  }

 private:
  [[noreturn]] static void report_first_error(TSNode root) {
    std::vector<TSNode> stack{root};
    while (!stack.empty()) {
      TSNode node = stack.back();
      stack.pop_back();
      if (ts_node_is_error(node) || ts_node_is_missing(node)) {
        const TSPoint at = ts_node_start_point(node);
        const int line = static_cast<int>(at.row) + 1;
        const int column = static_cast<int>(at.column) + 1;
        std::string what = ts_node_is_missing(node)
                               ? std::string("missing '") + ts_node_type(node) + "'"
                               : std::string("syntax error");
        throw ParseError(what + " at line " + std::to_string(line) + ", column " +
                             std::to_string(column),
                         line, column);
      }
      if (!ts_node_has_error(node)) continue;
      const uint32_t n = ts_node_child_count(node);
      for (uint32_t i = n; i-- > 0;) stack.push_back(ts_node_child(node, i));
    }
    throw ParseError("syntax error", 1, 1);
  }

  std::string_view code_;
  std::unique_ptr<TSTree, TreeDeleter> tree_;
};

bool is_trivia(std::string_view kind) {
  return kind == "comment" || kind == "line_continuation";
}

SyntaxGraph build_graph(const ParsedSource& parsed) {
  SyntaxGraph graph;
  // (node, parent graph id)
  std::vector<std::pair<TSNode, int>> stack{{parsed.root(), -1}};
  while (!stack.empty()) {
    auto [node, parent] = stack.back();
    stack.pop_back();
    const std::string_view kind = ts_node_type(node);
    if (is_trivia(kind)) continue;
    int self = parent;
    if (ts_node_is_named(node)) {
      self = static_cast<int>(graph.nodes.size());
      graph.nodes.push_back(SyntaxNode{self, std::string(kind), true});
      if (parent >= 0) {
        graph.edges.emplace_back(parent, self);
        graph.nodes[static_cast<std::size_t>(parent)].is_leaf = false;
      }
    }
    const uint32_t n = ts_node_child_count(node);
    for (uint32_t i = n; i-- > 0;) stack.emplace_back(ts_node_child(node, i), self);
  }
  return graph;
}

// McCabe decision points. Nested function and class bodies are scored on
// their own.
const std::unordered_set<std::string_view>& decision_kinds() {
  static const std::unordered_set<std::string_view> kinds = {
      "if_statement",      "elif_clause",      "conditional_expression",
      "for_statement",     "while_statement",  "except_clause",
      "except_group_clause", "boolean_operator", "if_clause",
      "assert_statement",  "case_clause",
  };
  return kinds;
}

int count_decisions(TSNode function) {
  int decisions = 0;
  std::vector<TSNode> stack;
  const uint32_t n = ts_node_named_child_count(function);
  for (uint32_t i = 0; i < n; ++i) stack.push_back(ts_node_named_child(function, i));
  while (!stack.empty()) {
    TSNode node = stack.back();
    stack.pop_back();
    const std::string_view kind = ts_node_type(node);
    if (kind == "function_definition" || kind == "class_definition") continue;
    if (decision_kinds().contains(kind)) ++decisions;
    const uint32_t m = ts_node_named_child_count(node);
    for (uint32_t i = 0; i < m; ++i) stack.push_back(ts_node_named_child(node, i));
  }
  return decisions;
}

int count_tokens(TSNode subtree) {
  int tokens = 0;
  std::vector<TSNode> stack{subtree};
  while (!stack.empty()) {
    TSNode node = stack.back();
    stack.pop_back();
    const uint32_t n = ts_node_child_count(node);
    if (n == 0) {
      if (!is_trivia(ts_node_type(node)) &&
          ts_node_end_byte(node) > ts_node_start_byte(node)) {
        ++tokens;
      }
      continue;
    }
    for (uint32_t i = 0; i < n; ++i) stack.push_back(ts_node_child(node, i));
  }
  return tokens;
}

int count_parameters(TSNode function) {
  TSNode params = ts_node_child_by_field_name(function, "parameters", 10);
  if (ts_node_is_null(params)) return 0;
  int count = 0;
  const uint32_t n = ts_node_named_child_count(params);
  for (uint32_t i = 0; i < n; ++i) {
    const std::string_view kind = ts_node_type(ts_node_named_child(params, i));
    if (kind == "keyword_separator" || kind == "positional_separator" || is_trivia(kind)) {
      continue;
    }
    ++count;
  }
  return count;
}

ComplexityProfile build_profile(const ParsedSource& parsed) {
  ComplexityProfile profile;
  std::vector<TSNode> stack{parsed.root()};
  while (!stack.empty()) {
    TSNode node = stack.back();
    stack.pop_back();
    if (std::string_view(ts_node_type(node)) == "function_definition") {
      FunctionComplexity fc;
      TSNode name = ts_node_child_by_field_name(node, "name", 4);
      if (!ts_node_is_null(name)) fc.name = parsed.node_text(name);
      fc.cyclomatic = 1 + count_decisions(node);
      fc.tokens = count_tokens(node);
      fc.parameters = count_parameters(node);
      profile.functions.push_back(std::move(fc));
    }
    const uint32_t n = ts_node_named_child_count(node);
    for (uint32_t i = n; i-- > 0;) stack.push_back(ts_node_named_child(node, i));
  }
  return profile;
}

double mean_or_zero(int total, std::size_t count) {
  return count == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(count);
}

// Blocked pairwise summation in the same order as numpy's float64 add
// reduction, so graph statistics agree bit for bit with the reference
// numpy/networkx implementation.
double pairwise_sum(const double* a, std::size_t n) {
  if (n < 8) {
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += a[i];
    return res;
  }
  if (n <= 128) {
    double r[8];
    for (std::size_t j = 0; j < 8; ++j) r[j] = a[j];
    std::size_t i = 8;
    for (; i < n - n % 8; i += 8) {
      for (std::size_t j = 0; j < 8; ++j) r[j] += a[i + j];
    }
    double res = ((r[0] + r[1]) + (r[2] + r[3])) + ((r[4] + r[5]) + (r[6] + r[7]));
    for (; i < n; ++i) res += a[i];
    return res;
  }
  std::size_t n2 = n / 2;
  n2 -= n2 % 8;
  return pairwise_sum(a, n2) + pairwise_sum(a + n2, n - n2);
}

double pairwise_sum(const std::vector<double>& a) { return pairwise_sum(a.data(), a.size()); }

// Degree assortativity as the correlation over the normalized degree mixing
// matrix, rows and columns ordered by ascending degree.
double degree_assortativity(const std::vector<double>& degree,
                            const std::vector<std::pair<int, int>>& edges) {
  std::vector<double> values(degree);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const std::size_t k = values.size();
  auto slot = [&](int v) {
    const double d = degree[static_cast<std::size_t>(v)];
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), d) - values.begin());
  };
  std::vector<double> m(k * k, 0.0);
  for (const auto& [u, v] : edges) {
    m[slot(u) * k + slot(v)] += 1.0;
    m[slot(v) * k + slot(u)] += 1.0;
  }
  const double total = pairwise_sum(m);
  if (total == 0.0) return 0.0;
  for (auto& x : m) x /= total;
  const double renorm = pairwise_sum(m);
  if (renorm != 1.0) {
    for (auto& x : m) x /= renorm;
  }
  std::vector<double> a(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 1; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) a[j] += m[i * k + j];
  }
  std::vector<double> b(k);
  for (std::size_t i = 0; i < k; ++i) b[i] = pairwise_sum(m.data() + i * k, k);
  std::vector<double> t1(k), t2(k);
  auto variance = [&](const std::vector<double>& w) {
    for (std::size_t i = 0; i < k; ++i) {
      t1[i] = w[i] * (values[i] * values[i]);
      t2[i] = w[i] * values[i];
    }
    const double mean = pairwise_sum(t2);
    return pairwise_sum(t1) - mean * mean;
  };
  const double var_a = variance(a);
  const double var_b = variance(b);
  std::vector<double> terms(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      terms[i * k + j] = (values[i] * values[j]) * (m[i * k + j] - a[i] * b[j]);
    }
  }
  const double den = std::sqrt(var_a * var_b);
  return den == 0.0 ? 0.0 : pairwise_sum(terms) / den;
}

}  // namespace

const std::array<std::string_view, kFeatureCount>& feature_names() { return kNames; }

std::string human_readable_name(std::size_t index) {
  std::string name(kNames.at(index));
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kNames[i] == name || human_readable_name(i) == name) return i;
  }
  return std::nullopt;
}

int ComplexityProfile::total_cyclomatic() const noexcept {
  int total = 0;
  for (const auto& f : functions) total += f.cyclomatic;
  return total;
}

int ComplexityProfile::max_cyclomatic() const noexcept {
  int best = 0;
  for (const auto& f : functions) best = std::max(best, f.cyclomatic);
  return best;
}

double ComplexityProfile::mean_cyclomatic() const noexcept {
  return mean_or_zero(total_cyclomatic(), function_count());
}

int ComplexityProfile::total_tokens() const noexcept {
  int total = 0;
  for (const auto& f : functions) total += f.tokens;
  return total;
}

double ComplexityProfile::mean_tokens() const noexcept {
  return mean_or_zero(total_tokens(), function_count());
}

int ComplexityProfile::total_parameters() const noexcept {
  int total = 0;
  for (const auto& f : functions) total += f.parameters;
  return total;
}

double ComplexityProfile::mean_parameters() const noexcept {
  return mean_or_zero(total_parameters(), function_count());
}

int ComplexityProfile::max_parameters() const noexcept {
  int best = 0;
  for (const auto& f : functions) best = std::max(best, f.parameters);
  return best;
}

SyntaxGraph parse_to_graph(std::string_view code) { return build_graph(ParsedSource(code)); }

ComplexityProfile compute_complexity(std::string_view code) {
  return build_profile(ParsedSource(code));
}

GraphMetrics compute_graph_metrics(const SyntaxGraph& graph) {
  GraphMetrics out{};
  const std::size_t n = graph.node_count();
  out[0] = static_cast<double>(n);
  out[1] = static_cast<double>(graph.edge_count());
  if (n <= 1) return out;

  std::vector<std::vector<int>> adjacency(n);
  std::vector<std::vector<int>> children(n);
  for (const auto& [parent, child] : graph.edges) {
    adjacency[static_cast<std::size_t>(parent)].push_back(child);
    adjacency[static_cast<std::size_t>(child)].push_back(parent);
    children[static_cast<std::size_t>(parent)].push_back(child);
  }
  for (auto& list : adjacency) std::sort(list.begin(), list.end());

  // Degree statistics.
  std::vector<double> degree(n);
  std::map<std::size_t, std::size_t> histogram;
  std::size_t max_degree = 0;
  for (std::size_t v = 0; v < n; ++v) {
    degree[v] = static_cast<double>(adjacency[v].size());
    max_degree = std::max(max_degree, adjacency[v].size());
    ++histogram[adjacency[v].size()];
  }
  const double dn = static_cast<double>(n);
  const double degree_mean = pairwise_sum(degree) / dn;
  std::vector<double> squares(n);
  for (std::size_t v = 0; v < n; ++v) squares[v] = (degree[v] - degree_mean) * (degree[v] - degree_mean);
  const double degree_var = pairwise_sum(squares) / dn;
  double entropy = 0.0;
  for (const auto& [value, count] : histogram) {
    const double p = static_cast<double>(count) / dn;
    entropy -= p * std::log2(p);
  }
  out[2] = degree_mean;
  out[3] = degree_var;
  out[4] = histogram.size() == 1 ? 0.0 : entropy;
  out[5] = static_cast<double>(max_degree);

  // Leaf depths from the root along parent->child edges.
  std::vector<int> depth(n, 0);
  std::deque<int> queue{graph.root_id};
  int depth_min = -1;
  int depth_max = 0;
  double depth_sum = 0.0;
  std::size_t leaves = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    const auto& kids = children[static_cast<std::size_t>(v)];
    if (kids.empty()) {
      const int d = depth[static_cast<std::size_t>(v)];
      depth_min = depth_min < 0 ? d : std::min(depth_min, d);
      depth_max = std::max(depth_max, d);
      depth_sum += d;
      ++leaves;
    }
    for (int c : kids) {
      depth[static_cast<std::size_t>(c)] = depth[static_cast<std::size_t>(v)] + 1;
      queue.push_back(c);
    }
  }
  out[6] = static_cast<double>(std::max(depth_min, 0));
  out[7] = leaves == 0 ? 0.0 : depth_sum / static_cast<double>(leaves);
  out[8] = static_cast<double>(depth_max);

  // Average local clustering; nodes of degree < 2 contribute 0.
  double clustering_sum = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = adjacency[v];
    const std::size_t k = nb.size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& other = adjacency[static_cast<std::size_t>(nb[i])];
      for (std::size_t j = i + 1; j < k; ++j) {
        if (std::binary_search(other.begin(), other.end(), nb[j])) ++links;
      }
    }
    clustering_sum += 2.0 * static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  out[9] = clustering_sum / dn;

  out[10] = degree_assortativity(degree, graph.edges);

  // Exact all-pairs distances by breadth-first search from every node.
  std::size_t diameter = 0;
  double path_sum = 0.0;
  std::vector<int> dist(n);
  std::vector<int> frontier;
  frontier.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    frontier.clear();
    frontier.push_back(static_cast<int>(s));
    for (std::size_t head = 0; head < frontier.size(); ++head) {
      const int v = frontier[head];
      for (int w : adjacency[static_cast<std::size_t>(v)]) {
        if (dist[static_cast<std::size_t>(w)] < 0) {
          dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(v)] + 1;
          frontier.push_back(w);
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (t == s || dist[t] < 0) continue;
      diameter = std::max(diameter, static_cast<std::size_t>(dist[t]));
      path_sum += dist[t];
    }
  }
  out[11] = static_cast<double>(diameter);
  out[12] = path_sum / (dn * (dn - 1.0));
  return out;
}

FeatureVector assemble_features(const GraphMetrics& graph, const ComplexityProfile& profile) {
  FeatureVector v{};
  std::copy(graph.begin(), graph.end(), v.begin());
  v[index_of(Feature::function_count)] = static_cast<double>(profile.function_count());
  v[index_of(Feature::total_cyclomatic_complexity)] = profile.total_cyclomatic();
  v[index_of(Feature::mean_cyclomatic_complexity)] = profile.mean_cyclomatic();
  v[index_of(Feature::max_cyclomatic_complexity)] = profile.max_cyclomatic();
  v[index_of(Feature::total_token_count)] = profile.total_tokens();
  v[index_of(Feature::mean_token_count)] = profile.mean_tokens();
  v[index_of(Feature::total_parameter_count)] = profile.total_parameters();
  v[index_of(Feature::mean_parameter_count)] = profile.mean_parameters();
  v[index_of(Feature::max_parameter_count)] = profile.max_parameters();
  return v;
}

FeatureVector extract_features(std::string_view code) {
  const ParsedSource parsed(code);
  return assemble_features(compute_graph_metrics(build_graph(parsed)), build_profile(parsed));
}

FeatureVector FeatureCache::get(std::string_view code) {
  {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(std::string(code)); it != entries_.end()) {
      ++hits_;
      return it->second;
    }
  }
  FeatureVector v = extract_features(code);
  std::unique_lock lock(mutex_);
  entries_.emplace(std::string(code), v);
  return v;
}

std::size_t FeatureCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t FeatureCache::hits() const { return hits_.load(); }

}  // namespace sage::features
