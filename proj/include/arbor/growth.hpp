#pragma once

#include <optional>
#include <vector>

#include "arbor/reward_tree.hpp"

namespace arbor {

// Components fitted at one tree size during growth.
struct ComponentSnapshot {
  std::vector<double> mean;
  std::vector<double> variance;
};

// The split sequence from a single leaf up to the grown size, with the
// component fit at every intermediate size (snapshots[m - 1] is size m).
struct GrowthHistory {
  std::size_t dims = 1;
  std::vector<SplitRecord> splits;
  std::vector<ComponentSnapshot> snapshots;

  std::size_t grown_size() const { return splits.size() + 1; }
  // The tree with `leaves` leaves and its snapshot installed.
  RewardTree tree_at(std::size_t leaves) const;
};

// Labelled timesteps exploded into unit-weight regression samples with
// target mu_i / T.
struct SampleSet {
  std::size_t dims = 0;
  std::vector<double> values;  // row-major, samples x dims
  std::vector<double> targets;

  std::size_t size() const { return targets.size(); }
  double value(std::size_t s, std::size_t d) const { return values[s * dims + d]; }
};

SampleSet build_samples(const TrajectoryStore& store, const FitnessEstimate& fitness);

struct SplitCandidate {
  std::size_t leaf = 0;
  std::size_t dim = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

struct GrowOptions {
  std::size_t m_max = 16;
  ThresholdMode threshold_mode = ThresholdMode::kMidpoint;
};

// Gains closer than this are ties, and a split must beat it to be accepted.
double gain_tolerance(const SampleSet& samples);

// Best split of the current tree by RSS reduction over all leaves,
// dimensions and candidate thresholds; ties go to the lowest (leaf, dim,
// threshold). Returns nothing when no split has a gain above tolerance.
std::optional<SplitCandidate> best_split(const RewardTree& tree, const SampleSet& samples,
                                         ThresholdMode mode);

struct GrowResult {
  RewardTree tree;
  GrowthHistory history;
};

// Greedily splits `start` up to m_max leaves. The history covers `start`'s
// own split sequence too, refitted against the current fitness estimate.
GrowResult grow(const RewardTree& start, const TrajectoryStore& store,
                const PreferenceDataset& dataset, const FitnessEstimate& fitness,
                const GrowOptions& options);

struct PruneResult {
  std::size_t best_m = 1;
  RewardTree tree;
  std::vector<double> loss;         // raw labelling loss, index m - 1
  std::vector<double> regularized;  // loss + alpha * m
};

// Raw labelling loss of every prefix size of the history, index m - 1.
std::vector<double> sweep_losses(const GrowthHistory& history, const TrajectoryStore& store,
                                 const PreferenceDataset& dataset, double variance_floor = 1e-8);

// Picks the size minimizing loss + alpha * m (ties to the smaller tree) and
// installs that prefix with store masses.
PruneResult choose_size(const GrowthHistory& history, const TrajectoryStore& store,
                        std::vector<double> loss, double alpha);

// Sweeps every prefix size of the history, scoring labelling loss plus
// alpha * m, and returns the minimizer (ties to the smaller tree).
PruneResult prune_sweep(const GrowthHistory& history, const TrajectoryStore& store,
                        const PreferenceDataset& dataset, double alpha,
                        double variance_floor = 1e-8);

}  // namespace arbor
