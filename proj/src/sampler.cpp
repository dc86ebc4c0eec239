#include "arbor/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace arbor {

std::vector<double> ucb_fitness(const FeatureCounts& counts, std::span<const double> means,
                                std::span<const double> variances, double lambda) {
  if (means.size() != counts.leaves() || variances.size() != counts.leaves()) {
    throw std::invalid_argument("component count does not match feature counts");
  }
  std::vector<double> u(counts.trajectories(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto col = counts.column(i);
    double mean = 0.0;
    double var = 0.0;
    for (std::size_t x = 0; x < col.size(); ++x) {
      const auto c = static_cast<double>(col[x]);
      mean += c * means[x];
      var += c * c * variances[x];
    }
    u[i] = mean + lambda * std::sqrt(var);
  }
  return u;
}

namespace {

std::optional<SamplingMatrix> weights(std::span<const double> ucb, const PreferenceDataset& dataset,
                                      std::size_t recent_from) {
  const std::size_t n = ucb.size();
  SamplingMatrix w{n, std::vector<double>(n * n, 0.0)};
  std::vector<char> eligible(n * n, 0);
  const bool any_labels = !dataset.empty();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (any_labels && !dataset.is_labelled(i)) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || (i < recent_from && j < recent_from) || dataset.contains_pair(i, j)) continue;
      eligible[i * n + j] = 1;
      const double raw = ucb[i] + ucb[j];
      w.weights[i * n + j] = raw;
      lo = std::min(lo, raw);
      hi = std::max(hi, raw);
    }
  }
  if (!(lo <= hi)) return std::nullopt;
  double total = 0.0;
  for (std::size_t k = 0; k < n * n; ++k) {
    if (!eligible[k]) continue;
    w.weights[k] = lo == hi ? 1.0 : w.weights[k] - lo;
    total += w.weights[k];
  }
  // Non-uniform weights always leave at least one strictly positive entry.
  for (double& v : w.weights) v /= total;
  return w;
}

}  // namespace

std::optional<SamplingMatrix> offline_weights(std::span<const double> ucb,
                                              const PreferenceDataset& dataset) {
  return weights(ucb, dataset, 0);
}

std::optional<SamplingMatrix> online_weights(std::span<const double> ucb,
                                             const PreferenceDataset& dataset, std::size_t batch,
                                             std::size_t f_l) {
  if (batch < 1) throw std::invalid_argument("batch index is 1-based");
  return weights(ucb, dataset, f_l * (batch - 1));
}

double batch_size_exact(std::size_t batch, std::size_t f_l, std::size_t n_max, std::size_t k_max) {
  const auto b = static_cast<double>(batch);
  const auto fl = static_cast<double>(f_l);
  const auto nm = static_cast<double>(n_max);
  return static_cast<double>(k_max) * (fl * fl * (2.0 * b - 1.0) - fl) / (nm * (nm - 1.0));
}

std::size_t batch_size(std::size_t batch, std::size_t f_l, std::size_t n_max, std::size_t k_max) {
  const double k = std::round(batch_size_exact(batch, f_l, n_max, k_max));
  return k <= 0.0 ? 0 : static_cast<std::size_t>(k);
}

std::vector<std::size_t> batch_schedule(std::size_t f_l, std::size_t n_max, std::size_t k_max) {
  const std::size_t batches = n_max / f_l;
  std::vector<std::size_t> schedule;
  std::size_t spent = 0;
  for (std::size_t b = 1; b < batches; ++b) {
    schedule.push_back(batch_size(b, f_l, n_max, k_max));
    spent += schedule.back();
  }
  schedule.push_back(spent >= k_max ? 0 : k_max - spent);
  return schedule;
}

CountingRng::CountingRng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  engine_.seed(seq);
}

std::pair<std::size_t, std::size_t> sample_pair(const SamplingMatrix& psi, CountingRng& rng) {
  const double target = rng.uniform();
  double acc = 0.0;
  std::size_t last = psi.weights.size();
  for (std::size_t k = 0; k < psi.weights.size(); ++k) {
    if (psi.weights[k] <= 0.0) continue;
    last = k;
    acc += psi.weights[k];
    if (target < acc) return {k / psi.n, k % psi.n};
  }
  if (last == psi.weights.size()) throw std::invalid_argument("sampling matrix has no positive entry");
  return {last / psi.n, last % psi.n};
}

}  // namespace arbor
