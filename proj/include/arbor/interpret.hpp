#pragma once

#include <string>
#include <vector>

#include "arbor/growth.hpp"
#include "arbor/reward_tree.hpp"
#include "json.hpp"

namespace arbor {

// One conjunctive rule per leaf; rules are mutually exclusive and jointly
// exhaustive.
struct Rule {
  std::size_t leaf = 0;
  Box bounds;  // merged interval per dimension; unconstrained dims are infinite
  double mean = 0.0;
  double variance = 0.0;

  bool matches(std::span<const double> sa) const;
  // e.g. "x >= 7.95 AND y >= 8.06", or "TRUE" for the unconditional rule.
  std::string condition(const std::vector<std::string>& names) const;
};

std::vector<Rule> to_dnf(const RewardTree& tree);

// Share of total RSS reduction contributed by splits on each dimension.
// All zeros when the tree has no splits.
std::vector<double> feature_importance(const RewardTree& tree);

struct ProjectedRectangle {
  std::size_t leaf = 0;
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  double mean = 0.0;
  double mass = 0.0;  // store samples in the leaf
};

// An atomic cell of the overlaid projections: the leaves whose rectangles
// cover it, how many store samples of each project into it, and the
// mass-weighted mean reward a renderer should show.
struct ProjectionCell {
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  std::vector<std::pair<std::size_t, double>> leaf_mass;
  double blended_mean = 0.0;
};

struct RectangleProjection {
  std::size_t dim_x = 0;
  std::size_t dim_y = 1;
  std::vector<ProjectedRectangle> rectangles;
  std::vector<ProjectionCell> cells;
  bool has_overlaps = false;
};

// Projects every leaf box onto (dim_x, dim_y); infinite sides are clipped to
// the observed store range. Throws std::invalid_argument on equal or
// out-of-range dims.
RectangleProjection rectangle_projection(const RewardTree& tree, std::size_t dim_x,
                                         std::size_t dim_y, const TrajectoryStore& store);

// Split/merge dependency between consecutive trees: new leaf `to` overlaps old
// leaf `from` with positive volume; `mass` counts store samples in both.
struct LineageEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  double mass = 0.0;
};

std::vector<LineageEdge> lineage(const RewardTree& previous, const RewardTree& next,
                                 const TrajectoryStore& store);

// Versioned tree document: nodes, leaves, split sequence, DNF rules and
// feature importance.
nlohmann::json tree_to_json(const RewardTree& tree, const std::vector<std::string>& names,
                            std::size_t version = 0);
RewardTree tree_from_json(const nlohmann::json& doc);

nlohmann::json history_to_json(const GrowthHistory& history);
nlohmann::json projection_to_json(const RectangleProjection& projection,
                                  const std::vector<std::string>& names);

}  // namespace arbor
