#include <cmath>
#include <random>

#include "arbor/fitness.hpp"
#include "arbor/growth.hpp"
#include "arbor/preference.hpp"
#include "doctest.h"
#include "testkit.hpp"

using namespace arbor;

namespace {

TrajectoryStore line_store(const std::vector<double>& xs, std::size_t horizon) {
  TrajectoryStore store(horizon, 1, 0, {"x"});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Trajectory t{"t" + std::to_string(i), {}, TrajectorySource::kPilot, i};
    for (std::size_t s = 0; s < horizon; ++s) t.steps.push_back({xs[i] + 0.01 * static_cast<double>(s)});
    store.append(std::move(t));
  }
  return store;
}

// Compares every step of a grow run against the exhaustive scan.
void check_against_brute_force(const GrowResult& grown, const TrajectoryStore& store, const FitnessEstimate& fitness,
                               ThresholdMode mode, std::size_t m_max) {
  const double tol = gain_tolerance(build_samples(store, fitness));
  for (std::size_t step = 0; step <= grown.history.splits.size(); ++step) {
    const RewardTree at = grown.history.tree_at(step + 1);
    const auto oracle = testkit::brute_force_split(at, store, fitness, mode, tol);
    if (step == grown.history.splits.size()) {
      // Growth stopped: either the cap or no positive gain remains.
      CHECK((at.leaf_count() == m_max || !oracle));
      break;
    }
    REQUIRE(oracle);
    const auto& got = grown.history.splits[step];
    CHECK(got.leaf == oracle->leaf);
    CHECK(got.dim == oracle->dim);
    CHECK(got.threshold == oracle->threshold);
    CHECK(std::abs(got.gain - oracle->gain) <= tol);
  }
}

}  // namespace

TEST_SUITE("growth") {

TEST_CASE("equal fitness leaves the tree unsplit") {
  std::mt19937_64 rng(41);
  const auto store = testkit::random_store(rng, 5, 10, 2);
  FitnessEstimate flat{{0, 1, 2, 3, 4}, {0.3, 0.3, 0.3, 0.3, 0.3}};
  const auto grown = grow(RewardTree(2), store, PreferenceDataset(0.1), flat, {16, ThresholdMode::kMidpoint});
  CHECK(grown.tree.leaf_count() == 1);
  CHECK(grown.history.grown_size() == 1);
  CHECK(grown.tree.leaves()[0].mean == doctest::Approx(0.03));
}

TEST_CASE("a step in one dimension is found at the step") {
  // Trajectories left of 5 have fitness -1, right of 5 have +1.
  const auto store = line_store({1.0, 2.0, 3.3, 5.6, 7.0, 8.0}, 5);
  const FitnessEstimate f{{0, 1, 2, 3, 4, 5}, {-1, -1, -1, 1, 1, 1}};
  const auto observed = grow(RewardTree(1), store, PreferenceDataset(0.1), f, {2, ThresholdMode::kObserved});
  REQUIRE(observed.history.splits.size() == 1);
  CHECK(observed.history.splits[0].dim == 0);
  CHECK(observed.history.splits[0].threshold == 5.6);  // smallest observed value above the step
  const auto mid = grow(RewardTree(1), store, PreferenceDataset(0.1), f, {2, ThresholdMode::kMidpoint});
  REQUIRE(mid.history.splits.size() == 1);
  CHECK(mid.history.splits[0].threshold == doctest::Approx((3.34 + 5.6) / 2));
  CHECK(mid.tree.leaves()[0].mean == doctest::Approx(-0.2));
  CHECK(mid.tree.leaves()[1].mean == doctest::Approx(0.2));
}

TEST_CASE("every growth step matches the exhaustive split scan") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const std::size_t horizon = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const std::size_t dims = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const int grid = trial % 3 == 0 ? 4 : 0;
    const auto store = testkit::random_store(rng, n, horizon, dims, grid);
    const auto fitness = testkit::random_fitness(rng, n);
    const auto mode = trial % 2 ? ThresholdMode::kObserved : ThresholdMode::kMidpoint;
    const std::size_t m_max = 8;
    const auto grown = grow(RewardTree(dims), store, PreferenceDataset(0.1), fitness, {m_max, mode});
    check_against_brute_force(grown, store, fitness, mode, m_max);
    const auto mono = testkit::check_growth_monotone(grown.history, store, fitness);
    CHECK_MESSAGE(!mono, mono.value_or(""));
  }
}

TEST_CASE("growth from an existing tree keeps its splits and refits their gains") {
  std::mt19937_64 rng(43);
  const auto store = testkit::random_store(rng, 8, 10, 2);
  const auto f1 = testkit::random_fitness(rng, 8);
  const auto first = grow(RewardTree(2), store, PreferenceDataset(0.1), f1, {4, ThresholdMode::kMidpoint});
  const auto start = first.history.tree_at(3);
  const auto f2 = testkit::random_fitness(rng, 8);
  const auto second = grow(start, store, PreferenceDataset(0.1), f2, {8, ThresholdMode::kMidpoint});
  REQUIRE(second.history.splits.size() >= 2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(second.history.splits[s].leaf == first.history.splits[s].leaf);
    CHECK(second.history.splits[s].dim == first.history.splits[s].dim);
    CHECK(second.history.splits[s].threshold == first.history.splits[s].threshold);
  }
  // Inherited gains are the RSS drops under the new fitness.
  const double r1 = testkit::total_rss(second.history.tree_at(1), store, f2);
  const double r2 = testkit::total_rss(second.history.tree_at(2), store, f2);
  CHECK(second.history.splits[0].gain == doctest::Approx(r1 - r2).epsilon(1e-9));
  // History replay reproduces the grown tree.
  CHECK(second.history.tree_at(second.history.grown_size()) == second.tree);
}

TEST_CASE("prune sweep picks the regularized minimum") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 30; ++trial) {
    const auto store = testkit::random_store(rng, 6, 8, 2);
    const auto dataset = testkit::random_connected_dataset(rng, 6, 10);
    const auto fitness = solve_fitness(dataset);
    const auto grown = grow(RewardTree(2), store, dataset, fitness, {10, ThresholdMode::kMidpoint});
    const auto losses = sweep_losses(grown.history, store, dataset);
    CHECK(losses.size() == grown.history.grown_size());

    const auto huge = prune_sweep(grown.history, store, dataset, 1e9);
    CHECK(huge.best_m == 1);
    const auto none = prune_sweep(grown.history, store, dataset, 0.0);
    const double min_loss = *std::min_element(losses.begin(), losses.end());
    CHECK(none.loss[none.best_m - 1] == min_loss);
    for (std::size_t m = 1; m < none.best_m; ++m) CHECK(losses[m - 1] > min_loss);

    const double alpha = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
    const auto pruned = prune_sweep(grown.history, store, dataset, alpha);
    const auto argmin = testkit::check_prune_argmin(pruned, alpha);
    CHECK_MESSAGE(!argmin, argmin.value_or(""));
    CHECK(pruned.tree.means() == grown.history.snapshots[pruned.best_m - 1].mean);
    double mass = 0.0;
    for (const auto& leaf : pruned.tree.leaves()) mass += leaf.mass;
    CHECK(mass == 6 * 8);
  }
}

TEST_CASE("sweep losses are the labelling loss of each prefix") {
  std::mt19937_64 rng(45);
  const auto store = testkit::random_store(rng, 6, 8, 2);
  const auto dataset = testkit::random_connected_dataset(rng, 6, 9);
  const auto fitness = solve_fitness(dataset);
  const auto grown = grow(RewardTree(2), store, dataset, fitness, {6, ThresholdMode::kMidpoint});
  const auto losses = sweep_losses(grown.history, store, dataset);
  for (std::size_t m = 1; m <= losses.size(); ++m) {
    const auto tree = grown.history.tree_at(m);
    const auto counts = feature_counts(tree, store);
    CHECK(losses[m - 1] == doctest::Approx(labelling_loss(dataset, counts, tree.means(), tree.variances())));
  }
}

}  // TEST_SUITE
