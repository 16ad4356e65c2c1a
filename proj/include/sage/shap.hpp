#pragma once

// Exact path-dependent TreeSHAP attributions for a boosted ensemble and the
// single-feature mutation guidance derived from them.

#include "sage/surrogate.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sage::shap {

struct Attribution {
  double phi0 = 0.0;
  std::vector<double> phi;
  std::vector<double> point;
  double prediction = 0.0;
};

enum class Direction { increase, decrease };

std::string_view to_string(Direction d) noexcept;
std::optional<Direction> direction_from_string(std::string_view s) noexcept;

struct Guidance {
  std::string feature_name;  // canonical snake_case name
  Direction direction = Direction::increase;
  double magnitude = 0.0;
};

/// Attributions below this absolute value carry no usable signal.
inline constexpr double kMinAttribution = 1e-12;

/// Per-tree TreeSHAP using node covers as conditional weights, summed over
/// the ensemble and scaled by the learning rate. phi0 + sum(phi) equals the
/// model prediction at x.
Attribution shap_values(const surrogate::SurrogateModel& model, std::span<const double> x);

/// Cover-weighted mean leaf value of one tree.
double expected_value(const surrogate::RegressionTree& tree);

/// Largest |phi|, lowest index on ties. Positive attribution means
/// "increase", negative "decrease". Empty when max |phi| < kMinAttribution.
std::optional<Guidance> select_guidance(const Attribution& attribution,
                                        std::span<const std::string> names);

/// "Based on archive analysis, try to <direction> the <feature> of the solution."
std::string render_guidance(const Guidance& guidance);

/// Inverse of render_guidance; magnitude is not recoverable and is left 0.
std::optional<Guidance> parse_guidance(std::string_view sentence);

}  // namespace sage::shap
