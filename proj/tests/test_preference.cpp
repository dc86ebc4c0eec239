#include <cmath>
#include <random>

#include "arbor/feature_counts.hpp"
#include "arbor/normal.hpp"
#include "arbor/preference.hpp"
#include "doctest.h"
#include "testkit.hpp"

using namespace arbor;

TEST_SUITE("preference") {

TEST_CASE("normal cdf at fixed points") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std::abs(std_normal_cdf(1.0) - 0.8413447460685429) <= 1e-12);
  CHECK(std::abs(std_normal_cdf(1.0) - testkit::cdf_series(1.0)) <= 1e-12);
  CHECK(std::abs(std_normal_cdf(-0.73) + std_normal_cdf(0.73) - 1.0) <= 1e-15);
}

TEST_CASE("normal cdf matches the series oracle within 1e-12") {
  for (double z = -6.0; z <= 6.0; z += 0.01) {
    CHECK(std::abs(std_normal_cdf(z) - testkit::cdf_series(z)) <= 1e-12);
  }
  CHECK(std_normal_cdf(-40.0) >= 0.0);
  CHECK(std_normal_cdf(40.0) <= 1.0);
}

TEST_CASE("inverse cdf at fixed points") {
  CHECK(std::abs(inv_std_normal_cdf(0.5)) <= 1e-15);
  const double q = inv_std_normal_cdf(0.975);
  CHECK(std::abs(q - testkit::inv_cdf_bisect(0.975)) <= 1e-9);
  CHECK(std::abs(q - 1.959963984540054) <= 1e-9);
  CHECK(std::abs(inv_std_normal_cdf(std_normal_cdf(1.2345)) - 1.2345) <= 1e-8);
}

TEST_CASE("inverse cdf is accurate across the unit interval") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 20000; ++k) {
    const double p = unit(rng);
    if (p <= 0.0) continue;
    CHECK(std::abs(std_normal_cdf(inv_std_normal_cdf(p)) - p) <= 1e-10);
  }
  for (double p : {1e-300, 1e-15, 1e-8, 0.02425, 0.97575, 1.0 - 1e-12}) {
    CHECK(std::abs(std_normal_cdf(inv_std_normal_cdf(p)) - p) <= 1e-10);
  }
}

TEST_CASE("inverse cdf rejects probabilities outside (0, 1)") {
  CHECK_THROWS_AS(inv_std_normal_cdf(0.0), std::domain_error);
  CHECK_THROWS_AS(inv_std_normal_cdf(1.0), std::domain_error);
  CHECK_THROWS_AS(inv_std_normal_cdf(-0.1), std::domain_error);
  CHECK_THROWS_AS(inv_std_normal_cdf(std::nan("")), std::domain_error);
}

TEST_CASE("round trip and symmetry properties") {
  std::mt19937_64 rng(2);
  const auto roundtrip = testkit::check_normal_roundtrip(rng, 5000);
  CHECK_MESSAGE(!roundtrip, roundtrip.value_or(""));
  const auto symmetry = testkit::check_preference_symmetry(rng, 5000);
  CHECK_MESSAGE(!symmetry, symmetry.value_or(""));
}

TEST_CASE("preference probability") {
  CHECK(preference_prob({2.0, 2.0, 3.0}) == 0.5);
  CHECK(preference_prob({1.0, 1.0, 0.0}) == 0.5);
  CHECK(std::abs(preference_prob({1.0, 0.0, 1.0}) - testkit::cdf_series(1.0)) <= 1e-12);
  CHECK(std::abs(preference_prob({0.0, 3.0, 4.0}) - testkit::cdf_series(-1.5)) <= 1e-12);
  CHECK_THROWS_AS(preference_prob({1.0, 0.0, 0.0}), std::domain_error);
  CHECK_THROWS_AS(preference_prob({1.0, 0.0, -1.0}), std::domain_error);
}

TEST_CASE("labelling loss examples") {
  // m = 1: every trajectory has count T in the only leaf.
  FeatureCounts one(1, 2);
  one(0, 0) = 10;
  one(0, 1) = 10;
  PreferenceDataset d(0.1);
  d.append(0, 1, 0.8413);
  const std::vector<double> zero{0.0}, var{1.0};
  const double expect = std::pow(testkit::inv_cdf_bisect(0.8413), 2);
  CHECK(std::abs(labelling_loss(d, one, zero, var) - expect) <= 1e-12);
  CHECK(labelling_loss(d, one, zero, var) == doctest::Approx(1.0).epsilon(1e-3));

  // Rows fitted exactly give zero loss.
  FeatureCounts two(2, 3);
  two(0, 0) = 4;
  two(1, 1) = 4;
  two(0, 2) = 2;
  two(1, 2) = 2;
  const std::vector<double> r{0.25, -0.25}, s{0.5, 0.5};
  PreferenceDataset exact(0.01);
  auto scaled = [&](std::size_t i, std::size_t j) {
    double num = 0.0, den = 0.0;
    for (std::size_t x = 0; x < 2; ++x) {
      const double dn = two(x, i) - two(x, j);
      num += r[x] * dn;
      den += dn * dn * s[x];
    }
    return num / std::sqrt(den);
  };
  exact.append(0, 1, testkit::cdf_series(scaled(0, 1)));
  exact.append(2, 0, testkit::cdf_series(scaled(2, 0)));
  CHECK(labelling_loss(exact, two, r, s) <= 1e-20);
}

TEST_CASE("duplicating rows doubles the loss") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = testkit::random_connected_dataset(rng, 6, 5);
    FeatureCounts n(3, 6);
    std::uniform_int_distribution<int> split(0, 20);
    for (std::size_t i = 0; i < 6; ++i) {
      const int a = split(rng), b = split(rng);
      n(0, i) = std::min(a, b);
      n(1, i) = std::max(a, b) - std::min(a, b);
      n(2, i) = 20 - std::max(a, b);
    }
    const std::vector<double> r{0.3, -0.1, 0.05}, s{0.02, 0.5, 0.1};
    // The set P forbids repeated pairs, so the copy goes through reversed
    // orientation, which the model treats as the same comparison.
    PreferenceDataset mirrored(d.epsilon());
    for (const auto& row : d.rows()) mirrored.append(row.j, row.i, 1.0 - row.y);
    const double once = labelling_loss(d, n, r, s);
    CHECK(once + labelling_loss(mirrored, n, r, s) == doctest::Approx(2.0 * once).epsilon(1e-12));
    const auto orient = testkit::check_orientation_invariance(d, n, r, s);
    CHECK_MESSAGE(!orient, orient.value_or(""));
  }
}

TEST_CASE("variance floor keeps identical counts finite") {
  FeatureCounts n(2, 2);
  n(0, 0) = 5;
  n(1, 0) = 5;
  n(0, 1) = 5;
  n(1, 1) = 5;
  PreferenceDataset d(0.1);
  d.append(0, 1, 0.9);
  const std::vector<double> r{1.0, 2.0}, zero_var{0.0, 0.0};
  const double loss = labelling_loss(d, n, r, zero_var, 1e-8);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(std::pow(testkit::inv_cdf_bisect(0.9), 2)).epsilon(1e-12));
}

}  // TEST_SUITE
