#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "arbor/feature_counts.hpp"
#include "arbor/types.hpp"

namespace arbor {

// Row-major n x n pair-sampling distribution; entry (i, j) presents i first.
struct SamplingMatrix {
  std::size_t n = 0;
  std::vector<double> weights;

  double operator()(std::size_t i, std::size_t j) const { return weights[i * n + j]; }
};

// Optimistic trajectory fitness N^T r + lambda * sqrt(diag(N^T Sigma N)) for
// diagonal Sigma.
std::vector<double> ucb_fitness(const FeatureCounts& counts, std::span<const double> means,
                                std::span<const double> variances, double lambda);

// Returns nothing when every pair is excluded (all pairs sampled).
std::optional<SamplingMatrix> offline_weights(std::span<const double> ucb,
                                              const PreferenceDataset& dataset);

// Offline weights with the extra restriction that at least one index lies in
// the newest f_l trajectories of batch `batch` (1-based).
std::optional<SamplingMatrix> online_weights(std::span<const double> ucb,
                                             const PreferenceDataset& dataset, std::size_t batch,
                                             std::size_t f_l);

// Labels to collect in batch `batch` (1-based), rounded half away from zero.
std::size_t batch_size(std::size_t batch, std::size_t f_l, std::size_t n_max, std::size_t k_max);

// Unrounded batch size, for budget accounting checks.
double batch_size_exact(std::size_t batch, std::size_t f_l, std::size_t n_max, std::size_t k_max);

// Full schedule over n_max / f_l batches; the final batch absorbs the rounding
// residual so the schedule sums to k_max.
std::vector<std::size_t> batch_schedule(std::size_t f_l, std::size_t n_max, std::size_t k_max);

// Seedable generator that counts its draws so a run can report or restore
// its position.
class CountingRng {
 public:
  using result_type = std::mt19937_64::result_type;
  explicit CountingRng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() {
    ++draws_;
    return engine_();
  }
  std::uint64_t draws() const { return draws_; }
  void discard(std::uint64_t n) {
    engine_.discard(n);
    draws_ += n;
  }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(*this); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

std::pair<std::size_t, std::size_t> sample_pair(const SamplingMatrix& psi, CountingRng& rng);

}  // namespace arbor
