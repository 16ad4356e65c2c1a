#include "sage/analytics.hpp"

#include "sage/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace sage::analytics {

ConsistencyTable consistency_analysis(const std::vector<Candidate>& archive) {
  std::unordered_map<std::string, const Candidate*> by_id;
  for (const auto& c : archive) by_id.emplace(c.id, &c);

  ConsistencyTable table;
  for (const auto& c : archive) {
    if (!c.guidance) continue;
    const Candidate* parent = nullptr;
    if (c.parent_id) {
      const auto it = by_id.find(*c.parent_id);
      if (it != by_id.end()) parent = it->second;
    }
    const auto k = features::feature_index(c.guidance->feature);
    if (!parent || !k || !c.features || !parent->features) {
      ++table.skipped;
      continue;
    }
    const double delta = (*c.features)[*k] - (*parent->features)[*k];
    const bool match = c.guidance->direction == shap::Direction::increase ? delta > 0.0 : delta < 0.0;
    auto& counts = table.by_prompt_kind[std::string(llm::to_string(c.prompt_kind))];
    (match ? counts.match : counts.mismatch) += 1;
  }
  return table;
}

nlohmann::json to_json(const ConsistencyTable& table) {
  nlohmann::json j;
  j["by_prompt_kind"] = nlohmann::json::object();
  for (const auto& [kind, counts] : table.by_prompt_kind) {
    j["by_prompt_kind"][kind] = {{"match", counts.match}, {"mismatch", counts.mismatch}};
  }
  j["skipped"] = table.skipped;
  return j;
}

std::vector<double> best_so_far(const std::vector<Candidate>& archive) {
  std::vector<double> out;
  out.reserve(archive.size());
  for (const auto& c : archive) out.push_back(out.empty() ? c.fitness : std::max(out.back(), c.fitness));
  return out;
}

ConvergenceCurve convergence_curve(const std::vector<std::vector<double>>& runs) {
  if (runs.empty()) throw std::invalid_argument("convergence curve needs at least one run");
  ConvergenceCurve curve;
  curve.runs = runs.size();
  std::size_t len = runs.front().size();
  bool unequal = false;
  for (const auto& r : runs) {
    unequal = unequal || r.size() != len;
    len = std::min(len, r.size());
  }
  if (unequal) {
    curve.warning = "runs have unequal lengths; truncated to " + std::to_string(len) + " evaluations";
  }
  const auto n = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0.0;
    for (const auto& r : runs) sum += r[i];
    const double mean = sum / n;
    double half = 0.0;
    if (runs.size() > 1) {
      double ss = 0.0;
      for (const auto& r : runs) ss += (r[i] - mean) * (r[i] - mean);
      half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    curve.mean.push_back(mean);
    curve.lower.push_back(mean - half);
    curve.upper.push_back(mean + half);
  }
  return curve;
}

std::vector<std::optional<double>> speedup_curve(const std::vector<double>& a,
                                                 const std::vector<double>& b) {
  std::vector<std::optional<double>> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = a[i];
    std::size_t m = 0;
    while (a[m] < f) ++m;
    std::optional<double> value;
    for (std::size_t n = 0; n < b.size(); ++n) {
      if (b[n] >= f) {
        value = static_cast<double>(n + 1) / static_cast<double>(m + 1);
        break;
      }
    }
    out.push_back(value);
  }
  return out;
}

double auc(const std::vector<double>& curve) {
  return std::accumulate(curve.begin(), curve.end(), 0.0);
}

double cliffs_delta(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("Cliff's delta needs two non-empty samples");
  long long score = 0;
  for (double x : a) {
    for (double y : b) score += (x > y) - (x < y);
  }
  return static_cast<double>(score) / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

EffectSize auc_and_effect(const std::vector<std::vector<double>>& runs_a,
                          const std::vector<std::vector<double>>& runs_b) {
  if (runs_a.empty() || runs_b.empty()) throw std::invalid_argument("both run sets must be non-empty");
  EffectSize e;
  for (const auto& r : runs_a) e.auc_a.push_back(auc(r));
  for (const auto& r : runs_b) e.auc_b.push_back(auc(r));
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  e.mean_diff = mean(e.auc_a) - mean(e.auc_b);
  e.cliffs_delta = cliffs_delta(e.auc_a, e.auc_b);
  return e;
}

std::string_view to_string(EdgeClass c) noexcept {
  switch (c) {
    case EdgeClass::refine: return "refine";
    case EdgeClass::random_new: return "random_new";
    case EdgeClass::refine_increase: return "refine+increase";
    case EdgeClass::random_new_increase: return "random_new+increase";
    case EdgeClass::decrease: return "decrease";
  }
  return "";
}

std::string_view edge_color(EdgeClass c) noexcept {
  switch (c) {
    case EdgeClass::refine: return "gold";
    case EdgeClass::random_new: return "lightblue";
    case EdgeClass::refine_increase: return "darkgreen";
    case EdgeClass::random_new_increase: return "darkblue";
    case EdgeClass::decrease: return "red";
  }
  return "black";
}

CegDocument build_ceg(const std::vector<Candidate>& archive, const std::string& feature) {
  const auto k = features::feature_index(feature);
  if (!k) throw ConfigError("unknown feature '" + feature + "'");
  CegDocument doc;
  doc.feature = std::string(features::feature_names()[*k]);
  if (archive.empty()) return doc;

  const auto [lo, hi] = std::minmax_element(archive.begin(), archive.end(),
                                            [](const Candidate& a, const Candidate& b) {
                                              return a.fitness < b.fitness;
                                            });
  const double fmin = lo->fitness;
  const double fmax = hi->fitness;
  for (const auto& c : archive) {
    CegNode node;
    node.id = c.id;
    node.generation = c.generation;
    node.normalized_fitness = fmax > fmin ? (c.fitness - fmin) / (fmax - fmin) : 0.5;
    if (c.features) node.feature_value = (*c.features)[*k];
    doc.nodes.push_back(std::move(node));
    if (!c.parent_id) continue;
    CegEdge edge;
    edge.parent = *c.parent_id;
    edge.child = c.id;
    edge.prompt_kind = std::string(llm::to_string(c.prompt_kind));
    const bool random_new = c.prompt_kind == llm::PromptKind::random_new;
    if (c.guidance) {
      edge.guidance_direction = std::string(shap::to_string(c.guidance->direction));
      if (c.guidance->direction == shap::Direction::decrease) {
        edge.edge_class = EdgeClass::decrease;
      } else {
        edge.edge_class = random_new ? EdgeClass::random_new_increase : EdgeClass::refine_increase;
      }
    } else {
      edge.edge_class = random_new ? EdgeClass::random_new : EdgeClass::refine;
    }
    doc.edges.push_back(std::move(edge));
  }
  return doc;
}

nlohmann::json to_json(const CegDocument& doc) {
  nlohmann::ordered_json j;
  j["feature"] = doc.feature;
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : doc.nodes) {
    nlohmann::ordered_json node;
    node["id"] = n.id;
    node["generation"] = n.generation;
    node["normalized_fitness"] = n.normalized_fitness;
    node["feature_value"] = n.feature_value ? nlohmann::ordered_json(*n.feature_value)
                                            : nlohmann::ordered_json(nullptr);
    j["nodes"].push_back(std::move(node));
  }
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& e : doc.edges) {
    nlohmann::ordered_json edge;
    edge["parent"] = e.parent;
    edge["child"] = e.child;
    edge["prompt_kind"] = e.prompt_kind;
    edge["guidance_direction"] = e.guidance_direction ? nlohmann::ordered_json(*e.guidance_direction)
                                                      : nlohmann::ordered_json(nullptr);
    edge["class"] = to_string(e.edge_class);
    edge["color"] = edge_color(e.edge_class);
    j["edges"].push_back(std::move(edge));
  }
  return nlohmann::json::parse(j.dump());
}

namespace {

// Dark blue for low fitness through yellow for high fitness.
std::string fitness_color(double t) {
  static constexpr double stops[][3] = {
      {0x44, 0x01, 0x54}, {0x3b, 0x52, 0x8b}, {0x21, 0x91, 0x8c}, {0x5e, 0xc9, 0x62}, {0xfd, 0xe7, 0x25}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double w = t - i;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[i][0] + w * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + w * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + w * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string to_dot(const CegDocument& doc) {
  std::ostringstream o;
  o << "digraph ceg {\n";
  o << "  graph [label=\"" << doc.feature << "\", rankdir=LR];\n";
  o << "  node [shape=circle, style=filled, fontsize=8];\n";
  for (const auto& n : doc.nodes) {
    o << "  \"" << n.id << "\" [fillcolor=\"" << fitness_color(n.normalized_fitness)
      << "\", generation=" << n.generation << ", fitness=" << fmt(n.normalized_fitness);
    if (n.feature_value) o << ", value=" << fmt(*n.feature_value);
    o << "];\n";
  }
  for (const auto& e : doc.edges) {
    o << "  \"" << e.parent << "\" -> \"" << e.child << "\" [color=" << edge_color(e.edge_class)
      << ", class=\"" << to_string(e.edge_class) << "\"];\n";
  }
  o << "}\n";
  return o.str();
}

}  // namespace sage::analytics
