#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "arbor/feature_counts.hpp"
#include "arbor/fitness.hpp"
#include "arbor/types.hpp"

namespace arbor {

struct LeafStats {
  double mean = 0.0;
  double variance = 0.0;
  double mass = 0.0;  // store samples routed to the leaf when last installed
};

// Internal nodes route (s,a)_dim >= threshold to `right`, everything else to
// `left`. Leaf nodes carry their dense leaf index.
struct TreeNode {
  std::size_t dim = 0;
  double threshold = 0.0;
  std::ptrdiff_t left = -1;
  std::ptrdiff_t right = -1;
  std::ptrdiff_t leaf = -1;

  bool is_leaf() const { return leaf >= 0; }
};

// One accepted split. `leaf` is the index of the split leaf at the time it
// was split; `gain` is the drop in total RSS it produced.
struct SplitRecord {
  std::size_t leaf = 0;
  std::size_t dim = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

// Half-open interval [lo, hi) along one dimension.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

using Box = std::vector<Interval>;

// Binary tree partitioning state-action space into axis-aligned boxes, with a
// Gaussian reward component on each leaf. Leaves are numbered in
// left-to-right order; splitting leaf x yields children x (left) and x+1
// (right) and shifts every later leaf up by one. The tree also remembers the
// split sequence that built it from a single leaf, so any smaller prefix can
// be rebuilt.
class RewardTree {
 public:
  explicit RewardTree(std::size_t dims = 1);

  std::size_t dims() const { return dims_; }
  std::size_t leaf_count() const { return leaves_.size(); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::vector<LeafStats>& leaves() const { return leaves_; }
  const std::vector<SplitRecord>& splits() const { return splits_; }

  std::size_t assign_leaf(std::span<const double> sa) const;
  std::pair<double, double> predict(std::span<const double> sa) const;

  // New tree with `leaf` split; both children start with zeroed stats.
  RewardTree split(std::size_t leaf, std::size_t dim, double threshold, double gain = 0.0) const;

  // Tree rebuilt from the first `leaves - 1` splits, with zeroed stats.
  RewardTree prefix(std::size_t leaves) const;

  void set_components(std::span<const double> means, std::span<const double> variances);
  void set_masses(std::span<const double> masses);

  std::vector<double> means() const;
  std::vector<double> variances() const;

  // Region of every leaf, indexed by leaf.
  std::vector<Box> leaf_boxes() const;

  friend bool operator==(const RewardTree& a, const RewardTree& b);

 private:
  std::size_t dims_;
  std::vector<TreeNode> nodes_;
  std::vector<std::size_t> leaf_node_;  // leaf index -> node index
  std::vector<LeafStats> leaves_;
  std::vector<SplitRecord> splits_;
};

FeatureCounts feature_counts(const RewardTree& tree, const TrajectoryStore& store);
// Columns follow `indices` order.
FeatureCounts feature_counts(const RewardTree& tree, const TrajectoryStore& store,
                             std::span<const std::size_t> indices);

struct ComponentFit {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> mass;  // labelled timesteps per leaf

  bool operator==(const ComponentFit&) const = default;
};

// Per-leaf weighted mean and variance of mu_i / T over labelled trajectories,
// weighted by timesteps spent in the leaf. `counts` columns are store
// indices. Leaves without labelled mass get (0, 0).
ComponentFit fit_components(const FeatureCounts& counts, const FitnessEstimate& fitness,
                            std::size_t horizon);

// Installs fitted components and store masses on `tree`.
void install_components(RewardTree& tree, const ComponentFit& fit, const FeatureCounts& counts);

}  // namespace arbor
