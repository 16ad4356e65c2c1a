#include "sage/ast_features.hpp"
#include "sage/errors.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace sf = sage::features;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string random_search_source() {
  return read_file(std::string(SAGE_TEST_DATA_DIR) + "/random_search.py");
}

sf::SyntaxGraph make_tree(int n, const std::vector<std::pair<int, int>>& edges) {
  sf::SyntaxGraph g;
  for (int i = 0; i < n; ++i) g.nodes.push_back({i, "n", true});
  g.edges = edges;
  for (const auto& [p, c] : edges) g.nodes[static_cast<std::size_t>(p)].is_leaf = false;
  return g;
}

double at(const sf::GraphMetrics& m, sf::Feature f) { return m[sf::index_of(f)]; }
double at(const sf::FeatureVector& m, sf::Feature f) { return m[sf::index_of(f)]; }

}  // namespace

TEST(FeatureNames, CanonicalOrderAndHumanNames) {
  EXPECT_EQ(sf::feature_names().size(), 22u);
  EXPECT_EQ(sf::feature_names()[14], "total_cyclomatic_complexity");
  EXPECT_EQ(sf::human_readable_name(14), "total cyclomatic complexity");
  EXPECT_EQ(sf::human_readable_name(19), "total parameter count");
  EXPECT_EQ(sf::feature_index("degree entropy"), 4u);
  EXPECT_EQ(sf::feature_index("max_parameter_count"), 21u);
  EXPECT_FALSE(sf::feature_index("bogus").has_value());
}

TEST(ParseToGraph, PassStatement) {
  const auto g = sf::parse_to_graph("pass");
  ASSERT_EQ(g.node_count(), 2u);
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(g.nodes[0].kind, "module");
  EXPECT_EQ(g.nodes[1].kind, "pass_statement");
  EXPECT_TRUE(g.nodes[1].is_leaf);
}

TEST(ParseToGraph, AssignmentGolden) {
  const auto g = sf::parse_to_graph("x = 1");
  std::vector<std::string> kinds;
  for (const auto& n : g.nodes) kinds.push_back(n.kind);
  const std::vector<std::string> expected = {"module", "expression_statement", "assignment",
                                             "identifier", "integer"};
  EXPECT_EQ(kinds, expected);
  const std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 3}, {2, 4}};
  EXPECT_EQ(g.edges, edges);
}

TEST(ParseToGraph, PreOrderIdsAndTreeShape) {
  const auto g = sf::parse_to_graph(random_search_source());
  ASSERT_EQ(g.edge_count() + 1, g.node_count());
  std::vector<int> parents(g.node_count(), 0);
  for (const auto& [p, c] : g.edges) {
    EXPECT_LT(p, c);
    ++parents[static_cast<std::size_t>(c)];
  }
  EXPECT_EQ(parents[0], 0);
  for (std::size_t i = 1; i < parents.size(); ++i) EXPECT_EQ(parents[i], 1) << i;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) EXPECT_EQ(g.nodes[i].id, static_cast<int>(i));
}

TEST(ParseToGraph, SyntaxErrorCarriesLocation) {
  try {
    sf::parse_to_graph("def f(:\n    return 1\n");
    FAIL() << "expected ParseError";
  } catch (const sage::ParseError& e) {
    EXPECT_EQ(e.line(), 1);
    EXPECT_GE(e.column(), 1);
  }
  EXPECT_THROW(sf::extract_features("class A:\n  def f(self) return 1\n"), sage::ParseError);
}

TEST(GraphMetrics, Star) {
  const auto m = sf::compute_graph_metrics(make_tree(4, {{0, 1}, {0, 2}, {0, 3}}));
  EXPECT_EQ(at(m, sf::Feature::max_degree), 3.0);
  EXPECT_EQ(at(m, sf::Feature::diameter), 2.0);
  EXPECT_EQ(at(m, sf::Feature::depth_min), 1.0);
  EXPECT_EQ(at(m, sf::Feature::depth_max), 1.0);
  EXPECT_EQ(at(m, sf::Feature::avg_clustering), 0.0);
  // Star graphs are perfectly disassortative.
  EXPECT_DOUBLE_EQ(at(m, sf::Feature::degree_assortativity), -1.0);
}

TEST(GraphMetrics, PathOfThree) {
  const auto m = sf::compute_graph_metrics(make_tree(3, {{0, 1}, {1, 2}}));
  EXPECT_DOUBLE_EQ(at(m, sf::Feature::avg_shortest_path), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(at(m, sf::Feature::degree_mean), 4.0 / 3.0);
  EXPECT_EQ(at(m, sf::Feature::diameter), 2.0);
  EXPECT_EQ(at(m, sf::Feature::depth_mean), 2.0);
}

TEST(GraphMetrics, DegenerateGraphs) {
  const auto single = sf::compute_graph_metrics(make_tree(1, {}));
  EXPECT_EQ(single[0], 1.0);
  for (std::size_t i = 1; i < single.size(); ++i) EXPECT_EQ(single[i], 0.0) << i;

  // Two nodes: uniform degrees, Pearson denominator is zero.
  const auto pair = sf::compute_graph_metrics(make_tree(2, {{0, 1}}));
  EXPECT_EQ(at(pair, sf::Feature::degree_assortativity), 0.0);
  EXPECT_EQ(at(pair, sf::Feature::degree_entropy), 0.0);
  EXPECT_EQ(at(pair, sf::Feature::degree_variance), 0.0);
  for (double v : pair) EXPECT_TRUE(std::isfinite(v));
}

TEST(Complexity, SimpleFunction) {
  const auto p = sf::compute_complexity("def f(a, b): return a + b\n");
  ASSERT_EQ(p.function_count(), 1u);
  EXPECT_EQ(p.functions[0].name, "f");
  EXPECT_EQ(p.functions[0].cyclomatic, 1);
  EXPECT_EQ(p.functions[0].parameters, 2);
  // def f ( a , b ) : return a + b
  EXPECT_EQ(p.functions[0].tokens, 12);
}

TEST(Complexity, IfAndFor) {
  const auto p = sf::compute_complexity(
      "def g(xs):\n"
      "    for x in xs:\n"
      "        if x:\n"
      "            return x\n"
      "    return None\n");
  ASSERT_EQ(p.function_count(), 1u);
  EXPECT_EQ(p.functions[0].cyclomatic, 3);
}

TEST(Complexity, FullRuleSet) {
  const auto p = sf::compute_complexity(
      "def h(a, b=1, *args, c, d=2, **kw):\n"
      "    if a and b and c:\n"            // if +1, two extra operands +2
      "        pass\n"
      "    elif b or c:\n"                  // elif +1, or +1
      "        pass\n"
      "    y = 1 if a else 2\n"             // +1
      "    while a:\n"                      // +1
      "        a -= 1\n"
      "    try:\n"
      "        pass\n"
      "    except ValueError:\n"            // +1
      "        pass\n"
      "    except KeyError:\n"              // +1
      "        pass\n"
      "    zs = [z for z in kw if z if z]\n"  // two filters +2
      "    assert y\n"                      // +1
      "    match y:\n"
      "        case 1:\n"                   // +1
      "            pass\n"
      "        case _:\n"                   // +1
      "            pass\n"
      "    return zs\n");
  ASSERT_EQ(p.function_count(), 1u);
  EXPECT_EQ(p.functions[0].cyclomatic, 1 + 3 + 2 + 1 + 1 + 2 + 2 + 1 + 2);
  EXPECT_EQ(p.functions[0].parameters, 6);
}

TEST(Complexity, SeparatorsAreNotParameters) {
  const auto p = sf::compute_complexity("def f(a, /, b, *, c):\n    pass\n");
  ASSERT_EQ(p.function_count(), 1u);
  EXPECT_EQ(p.functions[0].parameters, 3);
}

TEST(Complexity, NestedFunctionsScoredSeparately) {
  const auto p = sf::compute_complexity(
      "def outer(a):\n"
      "    def inner(b):\n"
      "        if b:\n"
      "            return 1\n"
      "        return 0\n"
      "    return inner(a)\n");
  ASSERT_EQ(p.function_count(), 2u);
  EXPECT_EQ(p.functions[0].name, "outer");
  EXPECT_EQ(p.functions[0].cyclomatic, 1);
  EXPECT_EQ(p.functions[1].name, "inner");
  EXPECT_EQ(p.functions[1].cyclomatic, 2);
}

TEST(Complexity, RandomSearchListing) {
  const auto p = sf::compute_complexity(random_search_source());
  ASSERT_EQ(p.function_count(), 2u);
  EXPECT_EQ(p.functions[0].name, "__init__");
  EXPECT_EQ(p.functions[0].parameters, 3);
  EXPECT_EQ(p.functions[0].cyclomatic, 1);
  EXPECT_EQ(p.functions[1].name, "__call__");
  EXPECT_EQ(p.functions[1].parameters, 2);
  EXPECT_EQ(p.functions[1].cyclomatic, 3);
  EXPECT_EQ(p.total_parameters(), 5);
  EXPECT_EQ(p.total_cyclomatic(), 4);
}

// Golden values were produced by tests/oracles/feature_oracle.py (networkx
// for the graph metrics, Python's ast/tokenize for the complexity slots).
TEST(ExtractFeatures, RandomSearchGolden) {
  const auto golden = nlohmann::json::parse(
      read_file(std::string(SAGE_TEST_DATA_DIR) + "/random_search.features.json"));
  const auto v = sf::extract_features(random_search_source());
  for (std::size_t i = 0; i < sf::kFeatureCount; ++i) {
    const std::string name(sf::feature_names()[i]);
    const double expected = golden.at(name).get<double>();
    EXPECT_NEAR(v[i], expected, 1e-12 * std::max(1.0, std::abs(expected))) << name;
  }
}

TEST(ExtractFeatures, NoFunctionsMeansZeroComplexitySlots) {
  const auto v = sf::extract_features("x = 1\ny = [x, 2]\nprint(y)\n");
  for (std::size_t i = 13; i < sf::kFeatureCount; ++i) EXPECT_EQ(v[i], 0.0) << i;
}

TEST(ExtractFeatures, Deterministic) {
  const auto src = random_search_source();
  const auto a = sf::extract_features(src);
  const auto b = sf::extract_features(src);
  EXPECT_EQ(a, b);
}

TEST(ExtractFeatures, CommentsChangeNothing) {
  const auto src = random_search_source();
  const auto base = sf::extract_features(src);
  EXPECT_EQ(sf::extract_features(src + "# trailing remark\n"), base);
  EXPECT_EQ(sf::extract_features("# leading remark\n" + src), base);
  std::string inline_comment = src;
  inline_comment.insert(inline_comment.find("self.dim = dim") + 14, "  # keep dim");
  EXPECT_EQ(sf::extract_features(inline_comment), base);
}

namespace {

// Generates small random but syntactically valid programs.
std::string random_program(std::mt19937& rng) {
  std::uniform_int_distribution<int> pick(0, 5);
  std::uniform_int_distribution<int> count(1, 4);
  std::ostringstream out;
  const int functions = count(rng) - 1;
  for (int f = 0; f < functions; ++f) {
    out << "def fn" << f << "(a";
    for (int p = 0; p < count(rng) - 1; ++p) out << ", p" << p;
    out << "):\n";
    const int stmts = count(rng);
    for (int s = 0; s < stmts; ++s) {
      switch (pick(rng)) {
        case 0: out << "    a = a + " << s << "\n"; break;
        case 1: out << "    if a > " << s << ":\n        a -= 1\n"; break;
        case 2: out << "    for i in range(" << s + 1 << "):\n        a += i\n"; break;
        case 3: out << "    while a > 10 and a < 100:\n        a //= 2\n"; break;
        case 4: out << "    b = [x for x in range(3) if x]\n"; break;
        default: out << "    assert a is not None\n"; break;
      }
    }
    out << "    return a\n";
  }
  out << "value = " << count(rng) << "\n";
  return out.str();
}

}  // namespace

TEST(ExtractFeatures, PropertiesOnRandomPrograms) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string src = random_program(rng);
    const auto v = sf::extract_features(src);
    ASSERT_EQ(v, sf::extract_features(src)) << src;
    for (double x : v) ASSERT_TRUE(std::isfinite(x)) << src;
    const double n = at(v, sf::Feature::node_count);
    EXPECT_EQ(at(v, sf::Feature::edge_count), n - 1.0);
    EXPECT_EQ(at(v, sf::Feature::avg_clustering), 0.0);
    EXPECT_GE(at(v, sf::Feature::diameter), at(v, sf::Feature::depth_max));
    EXPECT_LE(at(v, sf::Feature::depth_min), at(v, sf::Feature::depth_mean));
    EXPECT_LE(at(v, sf::Feature::depth_mean), at(v, sf::Feature::depth_max));
    EXPECT_GE(at(v, sf::Feature::degree_entropy), 0.0);
    EXPECT_LE(at(v, sf::Feature::degree_entropy), std::log2(n) + 1e-12);
    EXPECT_EQ(sf::extract_features(src + "# note\n"), v);
  }
}

TEST(FeatureCache, ReusesEntriesAcrossThreads) {
  sf::FeatureCache cache;
  const std::string src = random_search_source();
  const auto expected = sf::extract_features(src);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&] {
      for (int i = 0; i < 10; ++i) EXPECT_EQ(cache.get(src), expected);
    });
  }
  for (auto& w : workers) w.join();
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_GE(cache.hits(), 36u);
}
