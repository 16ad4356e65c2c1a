#pragma once

// Offline analyses over finished run archives.

#include "sage/archive.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sage::analytics {

using evo::Candidate;

// --- guidance consistency ---------------------------------------------------

struct MatchCounts {
  int match = 0;
  int mismatch = 0;

  bool operator==(const MatchCounts&) const = default;
};

struct ConsistencyTable {
  /// Keyed by prompt kind name ("random_new", "refine").
  std::map<std::string, MatchCounts> by_prompt_kind;
  /// Guided offspring whose own or parent's features are missing.
  int skipped = 0;
};

/// For each guided offspring, match iff the guided feature moved strictly in
/// the requested direction relative to the parent. Equal values mismatch.
ConsistencyTable consistency_analysis(const std::vector<Candidate>& archive);

nlohmann::json to_json(const ConsistencyTable& table);

// --- convergence ------------------------------------------------------------

/// Running maximum of fitness in archive order.
std::vector<double> best_so_far(const std::vector<Candidate>& archive);

struct ConvergenceCurve {
  std::vector<double> mean;
  std::vector<double> lower;  // mean - 1.96 * sd / sqrt(n)
  std::vector<double> upper;
  std::size_t runs = 0;
  /// Set when runs had unequal lengths and were cut to the shortest.
  std::optional<std::string> warning;
};

/// Pointwise mean and normal-approximation 95% interval across runs.
/// Throws std::invalid_argument when `runs` is empty.
ConvergenceCurve convergence_curve(const std::vector<std::vector<double>>& runs);

/// Speed-up of A over B at every evaluation. For A's value f at index m
/// (1-based, m being the first evaluation where A attains f), n is the first
/// evaluation where B reaches at least f; the entry is n / m, or empty when B
/// never gets there.
std::vector<std::optional<double>> speedup_curve(const std::vector<double>& a,
                                                 const std::vector<double>& b);

/// Rectangle-rule area under a best-so-far curve.
double auc(const std::vector<double>& curve);

/// (#{a > b} - #{a < b}) / (|a| |b|) over all cross pairs.
double cliffs_delta(const std::vector<double>& a, const std::vector<double>& b);

struct EffectSize {
  std::vector<double> auc_a;
  std::vector<double> auc_b;
  double mean_diff = 0.0;  // mean(auc_a) - mean(auc_b)
  double cliffs_delta = 0.0;
};

/// Per-run AUC on each side and their effect size. Throws
/// std::invalid_argument when either side is empty.
EffectSize auc_and_effect(const std::vector<std::vector<double>>& runs_a,
                          const std::vector<std::vector<double>>& runs_b);

// --- code evolution graph -----------------------------------------------------

enum class EdgeClass { refine, random_new, refine_increase, random_new_increase, decrease };

std::string_view to_string(EdgeClass c) noexcept;
/// DOT color name of an edge class.
std::string_view edge_color(EdgeClass c) noexcept;

struct CegNode {
  std::string id;
  int generation = 0;
  double normalized_fitness = 0.0;
  std::optional<double> feature_value;
};

struct CegEdge {
  std::string parent;
  std::string child;
  std::string prompt_kind;
  std::optional<std::string> guidance_direction;
  EdgeClass edge_class = EdgeClass::refine;
};

struct CegDocument {
  std::string feature;
  std::vector<CegNode> nodes;
  std::vector<CegEdge> edges;
};

/// Fitness is min-max normalized over the archive; a constant-fitness
/// archive maps every node to 0.5. Throws ConfigError for unknown features.
CegDocument build_ceg(const std::vector<Candidate>& archive, const std::string& feature);

nlohmann::json to_json(const CegDocument& doc);
std::string to_dot(const CegDocument& doc);

}  // namespace sage::analytics
