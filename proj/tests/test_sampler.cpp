#include <cmath>
#include <numeric>
#include <random>

#include "arbor/sampler.hpp"
#include "doctest.h"
#include "testkit.hpp"

using namespace arbor;

namespace {

double total(const SamplingMatrix& psi) { return std::accumulate(psi.weights.begin(), psi.weights.end(), 0.0); }

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("ucb fitness") {
  FeatureCounts n(1, 3);
  for (std::size_t i = 0; i < 3; ++i) n(0, i) = 20;
  const std::vector<double> r{0.3}, v{0.04};
  const auto u = ucb_fitness(n, r, v, 1.0);
  for (double ui : u) CHECK(ui == doctest::Approx(20 * 0.3 + 20 * 0.2));
  const auto plain = ucb_fitness(n, r, v, 0.0);
  for (double ui : plain) CHECK(ui == 20 * 0.3);

  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> count(0, 10);
  std::uniform_real_distribution<double> mean(-1.0, 1.0), var(0.0, 2.0), lambda(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    FeatureCounts c(4, 5);
    std::vector<double> m(4), s(4);
    for (std::size_t x = 0; x < 4; ++x) {
      m[x] = mean(rng);
      s[x] = var(rng);
      for (std::size_t i = 0; i < 5; ++i) c(x, i) = count(rng);
    }
    const double l = lambda(rng);
    const auto optimistic = ucb_fitness(c, m, s, l);
    const auto base = ucb_fitness(c, m, s, 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
      double sq = 0.0;
      for (std::size_t x = 0; x < 4; ++x) sq += c(x, i) * c(x, i) * s[x];
      CHECK(optimistic[i] == doctest::Approx(base[i] + l * std::sqrt(sq)).epsilon(1e-12));
      CHECK(optimistic[i] >= base[i]);
    }
  }
}

TEST_CASE("offline weights examples") {
  const std::vector<double> flat{2.0, 2.0, 2.0, 2.0};
  const auto uniform = offline_weights(flat, PreferenceDataset(0.1));
  REQUIRE(uniform);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(uniform->operator()(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 12));
  }

  PreferenceDataset done(0.1);
  done.append(0, 1, 0.9);
  CHECK(!offline_weights(std::vector<double>{1.0, 0.0}, done));

  PreferenceDataset p(0.1);
  p.append(0, 1, 0.9);
  const auto psi = offline_weights(std::vector<double>{3.0, 1.0, 0.0}, p);
  REQUIRE(psi);
  CHECK(psi->operator()(0, 2) == 1.0);
  CHECK(total(*psi) == doctest::Approx(1.0));
}

TEST_CASE("online weights restrict to the newest batch") {
  const std::vector<double> u{0.5, 1.0, 2.0, 0.1, 3.0, 1.5};
  PreferenceDataset p(0.1);
  p.append(0, 1, 0.7);
  p.append(2, 1, 0.7);
  const auto off = offline_weights(u, p);
  const auto first = online_weights(u, p, 1, 3);
  REQUIRE(off);
  REQUIRE(first);
  CHECK(off->weights == first->weights);
  const auto second = online_weights(u, p, 2, 3);
  REQUIRE(second);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (second->operator()(i, j) > 0.0) CHECK((i >= 3 || j >= 3));
    }
  }
  CHECK(total(*second) == doctest::Approx(1.0));

  // With f_l equal to the store size the single batch is the offline case.
  const auto same = online_weights(u, p, 1, 6);
  REQUIRE(same);
  CHECK(same->weights == off->weights);
}

TEST_CASE("weight invariants on random instances") {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> value(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 9)(rng);
    std::vector<double> u(n);
    for (auto& v : u) v = value(rng);
    const auto p = trial % 5 == 0 ? PreferenceDataset(0.1)
                                  : testkit::random_connected_dataset(rng, n, std::uniform_int_distribution<std::size_t>(1, 12)(rng));
    const std::size_t f_l = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const std::size_t batch = std::uniform_int_distribution<std::size_t>(1, (n + f_l - 1) / f_l)(rng);
    const auto psi = online_weights(u, p, batch, f_l);
    if (!psi) continue;
    CHECK(total(*psi) == doctest::Approx(1.0).epsilon(1e-12));
    double min_raw = INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(psi->operator()(i, i) == 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = psi->operator()(i, j);
        CHECK(w >= 0.0);
        if (w > 0.0) {
          // Positive weight only on new pairs anchored in the labelled set.
          CHECK(!p.contains_pair(i, j));
          CHECK((p.empty() || p.is_labelled(i)));
          CHECK((i >= f_l * (batch - 1) || j >= f_l * (batch - 1)));
        }
      }
    }
    // The smallest eligible raw weight is calibrated to zero unless every
    // eligible entry is equal.
    std::vector<double> eligible;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const bool ok = i != j && !p.contains_pair(i, j) && (p.empty() || p.is_labelled(i)) &&
                        (i >= f_l * (batch - 1) || j >= f_l * (batch - 1));
        if (ok) {
          eligible.push_back(u[i] + u[j]);
          min_raw = std::min(min_raw, u[i] + u[j]);
        }
      }
    }
    REQUIRE(!eligible.empty());
    const double max_raw = *std::max_element(eligible.begin(), eligible.end());
    if (max_raw > min_raw) {
      std::size_t zeros = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const bool ok = i != j && !p.contains_pair(i, j) && (p.empty() || p.is_labelled(i)) &&
                          (i >= f_l * (batch - 1) || j >= f_l * (batch - 1));
          if (ok && u[i] + u[j] == min_raw) {
            CHECK(psi->operator()(i, j) == 0.0);
            ++zeros;
          }
        }
      }
      CHECK(zeros >= 1);
    }
  }
}

TEST_CASE("batch sizes") {
  CHECK(batch_size(1, 10, 200, 600) == 1);
  CHECK(batch_size(20, 10, 200, 600) == 59);
  CHECK(batch_size_exact(1, 10, 200, 600) == doctest::Approx(600.0 * 90 / 39800));
  CHECK(batch_size(1, 200, 200, 600) == 600);
  CHECK(batch_schedule(200, 200, 600) == std::vector<std::size_t>{600});
  CHECK(batch_schedule(10, 200, 600).size() == 20);

  for (auto [f_l, n_max] : {std::pair<std::size_t, std::size_t>{10, 200}, {5, 100}, {20, 400}, {1, 50}, {25, 100}}) {
    for (std::size_t k_max : {0, 1, 37, 600, 1000}) {
      const std::size_t batches = n_max / f_l;
      double exact = 0.0;
      std::size_t rounded = 0;
      for (std::size_t b = 1; b <= batches; ++b) {
        exact += batch_size_exact(b, f_l, n_max, k_max);
        rounded += batch_size(b, f_l, n_max, k_max);
        if (b > 1) CHECK(batch_size(b, f_l, n_max, k_max) >= batch_size(b - 1, f_l, n_max, k_max));
      }
      CHECK(exact == doctest::Approx(static_cast<double>(k_max)).epsilon(1e-12));
      CHECK(std::abs(static_cast<double>(rounded) - static_cast<double>(k_max)) <= batches / 2.0);
      const auto schedule = batch_schedule(f_l, n_max, k_max);
      CHECK(schedule.size() == batches);
      CHECK(std::accumulate(schedule.begin(), schedule.end(), std::size_t{0}) == k_max);
      for (std::size_t b = 0; b + 1 < batches; ++b) CHECK(schedule[b] == batch_size(b + 1, f_l, n_max, k_max));
    }
  }
}

TEST_CASE("sampling a pair follows the distribution") {
  SamplingMatrix single{3, std::vector<double>(9, 0.0)};
  single.weights[2 * 3 + 1] = 1.0;
  CountingRng rng(7, 1);
  for (int k = 0; k < 100; ++k) CHECK(sample_pair(single, rng) == std::pair<std::size_t, std::size_t>{2, 1});

  const std::vector<double> u{0.0, 1.0, 2.5, 4.0};
  PreferenceDataset p(0.1);
  p.append(0, 1, 0.7);
  const auto psi = offline_weights(u, p);
  REQUIRE(psi);
  const int draws = 100000;
  std::vector<int> hits(16, 0);
  for (int k = 0; k < draws; ++k) {
    const auto [i, j] = sample_pair(*psi, rng);
    ++hits[i * 4 + j];
  }
  for (std::size_t e = 0; e < 16; ++e) {
    const double pe = psi->weights[e];
    if (pe == 0.0) {
      CHECK(hits[e] == 0);
      continue;
    }
    const double sigma = std::sqrt(draws * pe * (1 - pe));
    CHECK(std::abs(hits[e] - draws * pe) <= 3 * sigma);
  }
}

TEST_CASE("counting rng is reproducible and counts draws") {
  CountingRng a(5, 2), b(5, 2), c(5, 3);
  for (int k = 0; k < 10; ++k) CHECK(a() == b());
  CHECK(a.draws() == 10);
  CHECK(a() != c());
  CountingRng e(5, 2), f(5, 2);
  e.discard(4);
  for (int k = 0; k < 4; ++k) f();
  CHECK(e() == f());
  CHECK(e.draws() == f.draws());
}

}  // TEST_SUITE
