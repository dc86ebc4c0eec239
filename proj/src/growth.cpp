#include "arbor/growth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "arbor/preference.hpp"

namespace arbor {

RewardTree GrowthHistory::tree_at(std::size_t leaves) const {
  if (leaves < 1 || leaves > grown_size()) throw std::out_of_range("history size out of range");
  RewardTree tree(dims);
  for (std::size_t s = 0; s + 1 < leaves; ++s) {
    const auto& rec = splits[s];
    tree = tree.split(rec.leaf, rec.dim, rec.threshold, rec.gain);
  }
  if (leaves <= snapshots.size()) {
    tree.set_components(snapshots[leaves - 1].mean, snapshots[leaves - 1].variance);
  }
  return tree;
}

SampleSet build_samples(const TrajectoryStore& store, const FitnessEstimate& fitness) {
  SampleSet samples;
  samples.dims = store.dims();
  const auto horizon = static_cast<double>(store.horizon());
  samples.values.reserve(fitness.labelled.size() * store.horizon() * store.dims());
  for (std::size_t k = 0; k < fitness.labelled.size(); ++k) {
    const double target = fitness.mu[k] / horizon;
    for (const auto& step : store[fitness.labelled[k]].steps) {
      samples.values.insert(samples.values.end(), step.begin(), step.end());
      samples.targets.push_back(target);
    }
  }
  return samples;
}

double gain_tolerance(const SampleSet& samples) {
  double sum_sq = 0.0;
  for (double t : samples.targets) sum_sq += t * t;
  return 1e-12 * sum_sq;
}

namespace {

// Sorted distinct values per dimension, the candidate pool for observed-value
// thresholds.
std::vector<std::vector<double>> observed_candidates(const SampleSet& samples) {
  std::vector<std::vector<double>> out(samples.dims);
  for (std::size_t d = 0; d < samples.dims; ++d) {
    auto& v = out[d];
    v.reserve(samples.size());
    for (std::size_t s = 0; s < samples.size(); ++s) v.push_back(samples.value(s, d));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

double midpoint(double below, double above) {
  const double mid = below + 0.5 * (above - below);
  return mid > below ? mid : above;
}

bool improves(const std::optional<SplitCandidate>& best, double gain, double tol) {
  return !best || gain > best->gain + tol;
}

class SplitSearch {
 public:
  SplitSearch(const SampleSet& samples, ThresholdMode mode)
      : samples_(samples), mode_(mode), tol_(gain_tolerance(samples)) {
    if (mode_ == ThresholdMode::kObserved) candidates_ = observed_candidates(samples);
  }

  double tolerance() const { return tol_; }

  std::optional<SplitCandidate> search_leaf(std::size_t leaf,
                                            const std::vector<std::size_t>& members) const {
    std::optional<SplitCandidate> best;
    const std::size_t n = members.size();
    if (n < 2) return best;
    double mean = 0.0;
    for (auto s : members) mean += samples_.targets[s];
    mean /= static_cast<double>(n);
    double total = 0.0;
    for (auto s : members) total += samples_.targets[s] - mean;

    std::vector<std::size_t> order(members);
    for (std::size_t d = 0; d < samples_.dims; ++d) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return samples_.value(a, d) < samples_.value(b, d);
      });
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        left += samples_.targets[order[k]] - mean;
        const double below = samples_.value(order[k], d);
        const double above = samples_.value(order[k + 1], d);
        if (!(above > below)) continue;
        const auto nl = static_cast<double>(k + 1);
        const auto nr = static_cast<double>(n - k - 1);
        const double right = total - left;
        const double gain = left * left / nl + right * right / nr;
        if (improves(best, gain, tol_)) best = SplitCandidate{leaf, d, threshold(d, below, above), gain};
      }
    }
    return best;
  }

 private:
  double threshold(std::size_t d, double below, double above) const {
    if (mode_ == ThresholdMode::kMidpoint) return midpoint(below, above);
    // Smallest observed value that still separates `below` from `above`.
    const auto& pool = candidates_[d];
    return *std::upper_bound(pool.begin(), pool.end(), below);
  }

  const SampleSet& samples_;
  ThresholdMode mode_;
  double tol_;
  std::vector<std::vector<double>> candidates_;
};

std::vector<std::vector<std::size_t>> members_by_leaf(const std::vector<std::size_t>& leaf_of,
                                                      std::size_t leaves) {
  std::vector<std::vector<std::size_t>> members(leaves);
  for (std::size_t s = 0; s < leaf_of.size(); ++s) members[leaf_of[s]].push_back(s);
  return members;
}

std::optional<SplitCandidate> pick(const std::vector<std::optional<SplitCandidate>>& per_leaf,
                                   double tol) {
  std::optional<SplitCandidate> best;
  for (const auto& c : per_leaf) {
    if (c && improves(best, c->gain, tol)) best = c;
  }
  if (best && !(best->gain > tol)) return std::nullopt;
  return best;
}

void apply_split(std::vector<std::size_t>& leaf_of, const SampleSet& samples,
                 const SplitRecord& rec) {
  for (std::size_t s = 0; s < leaf_of.size(); ++s) {
    if (leaf_of[s] > rec.leaf) {
      ++leaf_of[s];
    } else if (leaf_of[s] == rec.leaf && samples.value(s, rec.dim) >= rec.threshold) {
      ++leaf_of[s];
    }
  }
}

double leaf_rss(const SampleSet& samples, const std::vector<std::size_t>& leaf_of, std::size_t leaf) {
  double sum = 0.0;
  double n = 0.0;
  for (std::size_t s = 0; s < leaf_of.size(); ++s) {
    if (leaf_of[s] == leaf) {
      sum += samples.targets[s];
      n += 1.0;
    }
  }
  if (n == 0.0) return 0.0;
  const double mean = sum / n;
  double rss = 0.0;
  for (std::size_t s = 0; s < leaf_of.size(); ++s) {
    if (leaf_of[s] == leaf) rss += (samples.targets[s] - mean) * (samples.targets[s] - mean);
  }
  return rss;
}

// Labelled-only feature counts with store-indexed columns.
FeatureCounts labelled_counts(const RewardTree& tree, const TrajectoryStore& store,
                              const std::vector<std::size_t>& labelled) {
  FeatureCounts counts(tree.leaf_count(), store.size());
  for (auto i : labelled) {
    for (const auto& step : store[i].steps) ++counts(tree.assign_leaf(step), i);
  }
  return counts;
}

FeatureCounts counts_from_samples(const std::vector<std::size_t>& leaf_of, std::size_t leaves,
                                  const FitnessEstimate& fitness, std::size_t store_size,
                                  std::size_t horizon) {
  FeatureCounts counts(leaves, store_size);
  for (std::size_t s = 0; s < leaf_of.size(); ++s) ++counts(leaf_of[s], fitness.labelled[s / horizon]);
  return counts;
}

}  // namespace

std::optional<SplitCandidate> best_split(const RewardTree& tree, const SampleSet& samples,
                                         ThresholdMode mode) {
  SplitSearch search(samples, mode);
  std::vector<std::size_t> leaf_of(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    leaf_of[s] = tree.assign_leaf(std::span<const double>(&samples.values[s * samples.dims], samples.dims));
  }
  const auto members = members_by_leaf(leaf_of, tree.leaf_count());
  std::vector<std::optional<SplitCandidate>> per_leaf;
  for (std::size_t x = 0; x < tree.leaf_count(); ++x) per_leaf.push_back(search.search_leaf(x, members[x]));
  return pick(per_leaf, search.tolerance());
}

GrowResult grow(const RewardTree& start, const TrajectoryStore& store,
                const PreferenceDataset& dataset, const FitnessEstimate& fitness,
                const GrowOptions& options) {
  (void)dataset;
  if (fitness.empty()) throw std::invalid_argument("grow needs a non-empty fitness estimate");
  const SampleSet samples = build_samples(store, fitness);
  const SplitSearch search(samples, options.threshold_mode);
  const std::size_t horizon = store.horizon();

  GrowResult result{RewardTree(store.dims()), GrowthHistory{}};
  result.history.dims = store.dims();
  RewardTree& tree = result.tree;
  std::vector<std::size_t> leaf_of(samples.size(), 0);

  auto snapshot = [&] {
    const auto counts = counts_from_samples(leaf_of, tree.leaf_count(), fitness, store.size(), horizon);
    const auto fit = fit_components(counts, fitness, horizon);
    tree.set_components(fit.mean, fit.variance);
    result.history.snapshots.push_back({fit.mean, fit.variance});
  };
  snapshot();

  for (const auto& inherited : start.splits()) {
    if (tree.leaf_count() >= options.m_max) break;
    const double before = leaf_rss(samples, leaf_of, inherited.leaf);
    SplitRecord rec = inherited;
    apply_split(leaf_of, samples, rec);
    rec.gain = std::max(0.0, before - leaf_rss(samples, leaf_of, rec.leaf) -
                                 leaf_rss(samples, leaf_of, rec.leaf + 1));
    tree = tree.split(rec.leaf, rec.dim, rec.threshold, rec.gain);
    result.history.splits.push_back(rec);
    snapshot();
  }

  auto members = members_by_leaf(leaf_of, tree.leaf_count());
  std::vector<std::optional<SplitCandidate>> per_leaf;
  for (std::size_t x = 0; x < tree.leaf_count(); ++x) per_leaf.push_back(search.search_leaf(x, members[x]));

  while (tree.leaf_count() < options.m_max) {
    const auto best = pick(per_leaf, search.tolerance());
    if (!best) break;
    const SplitRecord rec{best->leaf, best->dim, best->threshold, best->gain};
    apply_split(leaf_of, samples, rec);
    tree = tree.split(rec.leaf, rec.dim, rec.threshold, rec.gain);
    result.history.splits.push_back(rec);
    snapshot();

    // Only the two children need a fresh search; later leaves shift by one.
    std::vector<std::size_t> left_members;
    std::vector<std::size_t> right_members;
    for (auto s : members[rec.leaf]) (leaf_of[s] == rec.leaf ? left_members : right_members).push_back(s);
    members[rec.leaf] = std::move(left_members);
    members.insert(members.begin() + static_cast<std::ptrdiff_t>(rec.leaf) + 1, std::move(right_members));
    per_leaf.insert(per_leaf.begin() + static_cast<std::ptrdiff_t>(rec.leaf) + 1, std::nullopt);
    for (std::size_t x = rec.leaf + 2; x < per_leaf.size(); ++x) {
      if (per_leaf[x]) per_leaf[x]->leaf = x;
    }
    per_leaf[rec.leaf] = search.search_leaf(rec.leaf, members[rec.leaf]);
    per_leaf[rec.leaf + 1] = search.search_leaf(rec.leaf + 1, members[rec.leaf + 1]);
  }
  return result;
}

std::vector<double> sweep_losses(const GrowthHistory& history, const TrajectoryStore& store,
                                 const PreferenceDataset& dataset, double variance_floor) {
  if (history.snapshots.size() != history.grown_size()) {
    throw std::invalid_argument("growth history lacks component snapshots");
  }
  const auto labelled = dataset.labelled();
  std::vector<double> loss(history.grown_size(), 0.0);
  for (std::size_t m = 1; m <= loss.size(); ++m) {
    const RewardTree tree = history.tree_at(m);
    const auto counts = labelled_counts(tree, store, labelled);
    const auto& snap = history.snapshots[m - 1];
    loss[m - 1] = labelling_loss(dataset, counts, snap.mean, snap.variance, variance_floor);
  }
  return loss;
}

PruneResult choose_size(const GrowthHistory& history, const TrajectoryStore& store,
                        std::vector<double> loss, double alpha) {
  if (loss.size() != history.grown_size()) throw std::invalid_argument("loss curve does not match history");
  PruneResult result;
  result.loss = std::move(loss);
  result.regularized.resize(result.loss.size());
  for (std::size_t m = 1; m <= result.loss.size(); ++m) {
    result.regularized[m - 1] = result.loss[m - 1] + alpha * static_cast<double>(m);
  }
  result.best_m = 1;
  for (std::size_t m = 2; m <= result.loss.size(); ++m) {
    if (result.regularized[m - 1] < result.regularized[result.best_m - 1]) result.best_m = m;
  }
  result.tree = history.tree_at(result.best_m);
  const auto full = feature_counts(result.tree, store);
  std::vector<double> masses(result.tree.leaf_count(), 0.0);
  for (std::size_t i = 0; i < full.trajectories(); ++i) {
    for (std::size_t x = 0; x < masses.size(); ++x) masses[x] += static_cast<double>(full(x, i));
  }
  result.tree.set_masses(masses);
  return result;
}

PruneResult prune_sweep(const GrowthHistory& history, const TrajectoryStore& store,
                        const PreferenceDataset& dataset, double alpha, double variance_floor) {
  return choose_size(history, store, sweep_losses(history, store, dataset, variance_floor), alpha);
}

}  // namespace arbor
