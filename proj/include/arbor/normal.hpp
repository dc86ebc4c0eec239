#pragma once

namespace arbor {

// Standard normal CDF.
double std_normal_cdf(double z);

// Inverse standard normal CDF. Throws std::domain_error unless 0 < p < 1.
double inv_std_normal_cdf(double p);

}  // namespace arbor
