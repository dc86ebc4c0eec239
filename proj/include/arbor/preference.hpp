#pragma once

#include <span>

#include "arbor/feature_counts.hpp"
#include "arbor/types.hpp"

namespace arbor {

struct GaussianFitnessPair {
  double mu_i = 0.0;
  double mu_j = 0.0;
  double var_diff = 0.0;  // C_ii + C_jj - 2 C_ij
};

// Thurstone probability that the first trajectory has higher fitness.
// Throws std::domain_error for zero variance with distinct means.
double preference_prob(const GaussianFitnessPair& pair);

// Squared error between probit(y) and the variance-scaled predicted fitness
// difference, summed over every row. The predicted variance of a difference
// is floored at `variance_floor`, which also covers n_i == n_j.
double labelling_loss(const PreferenceDataset& dataset, const FeatureCounts& counts,
                      std::span<const double> means, std::span<const double> variances,
                      double variance_floor = 1e-8);

}  // namespace arbor
