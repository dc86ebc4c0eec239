#include "arbor/preference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "arbor/normal.hpp"

namespace arbor {

double preference_prob(const GaussianFitnessPair& pair) {
  if (pair.var_diff < 0.0) throw std::domain_error("negative variance of fitness difference");
  if (pair.var_diff == 0.0) {
    if (pair.mu_i == pair.mu_j) return 0.5;
    throw std::domain_error("degenerate variance with distinct means");
  }
  return std_normal_cdf((pair.mu_i - pair.mu_j) / std::sqrt(pair.var_diff));
}

double labelling_loss(const PreferenceDataset& dataset, const FeatureCounts& counts,
                      std::span<const double> means, std::span<const double> variances,
                      double variance_floor) {
  const std::size_t m = counts.leaves();
  if (means.size() != m || variances.size() != m) {
    throw std::invalid_argument("component count does not match feature counts");
  }
  double loss = 0.0;
  for (const auto& row : dataset.rows()) {
    const auto ni = counts.column(row.i);
    const auto nj = counts.column(row.j);
    double mean_diff = 0.0;
    double var_diff = 0.0;
    for (std::size_t x = 0; x < m; ++x) {
      const double delta = static_cast<double>(ni[x] - nj[x]);
      mean_diff += means[x] * delta;
      var_diff += variances[x] * delta * delta;
    }
    const double scaled = mean_diff / std::sqrt(std::max(var_diff, variance_floor));
    const double residual = inv_std_normal_cdf(row.y) - scaled;
    loss += residual * residual;
  }
  return loss;
}

}  // namespace arbor
