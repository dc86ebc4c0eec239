#include "arbor/fitness.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "arbor/normal.hpp"

namespace arbor {

std::optional<double> FitnessEstimate::at(std::size_t index) const {
  auto it = std::lower_bound(labelled.begin(), labelled.end(), index);
  if (it == labelled.end() || *it != index) return std::nullopt;
  return mu[static_cast<std::size_t>(it - labelled.begin())];
}

namespace {

std::string describe(const std::vector<std::vector<std::size_t>>& components) {
  std::ostringstream out;
  out << "comparison graph has " << components.size() << " components:";
  for (const auto& c : components) {
    out << " {";
    for (std::size_t k = 0; k < c.size(); ++k) out << (k ? "," : "") << c[k];
    out << "}";
  }
  return out.str();
}

std::size_t position(const std::vector<std::size_t>& sorted, std::size_t value) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), value) -
                                  sorted.begin());
}

}  // namespace

DisconnectedComparisonsError::DisconnectedComparisonsError(
    std::vector<std::vector<std::size_t>> components)
    : std::runtime_error(describe(components)), components_(std::move(components)) {}

std::vector<std::vector<std::size_t>> comparison_components(const PreferenceDataset& dataset) {
  const auto labelled = dataset.labelled();
  std::vector<std::size_t> parent(labelled.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& row : dataset.rows()) {
    const auto a = find(position(labelled, row.i));
    const auto b = find(position(labelled, row.j));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::vector<std::size_t>> components;
  std::vector<std::ptrdiff_t> slot(labelled.size(), -1);
  for (std::size_t k = 0; k < labelled.size(); ++k) {
    const auto root = find(k);
    if (slot[root] < 0) {
      slot[root] = static_cast<std::ptrdiff_t>(components.size());
      components.emplace_back();
    }
    components[static_cast<std::size_t>(slot[root])].push_back(labelled[k]);
  }
  return components;
}

bool comparison_graph_connected(const PreferenceDataset& dataset) {
  return comparison_components(dataset).size() <= 1;
}

FitnessEstimate solve_fitness(const PreferenceDataset& dataset) {
  FitnessEstimate estimate;
  if (dataset.empty()) return estimate;
  auto components = comparison_components(dataset);
  if (components.size() > 1) throw DisconnectedComparisonsError(std::move(components));

  estimate.labelled = dataset.labelled();
  const auto p = static_cast<Eigen::Index>(estimate.labelled.size());

  // Normal equations A^T A mu = A^T probit(y). A^T A is the comparison-graph
  // Laplacian whose null space is the constant vector; adding the all-ones
  // matrix makes it positive definite and forces sum(mu) = 0, because
  // 1^T A^T = 0.
  Eigen::MatrixXd system = Eigen::MatrixXd::Ones(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (const auto& row : dataset.rows()) {
    const auto a = static_cast<Eigen::Index>(position(estimate.labelled, row.i));
    const auto b = static_cast<Eigen::Index>(position(estimate.labelled, row.j));
    const double target = inv_std_normal_cdf(row.y);
    system(a, a) += 1.0;
    system(b, b) += 1.0;
    system(a, b) -= 1.0;
    system(b, a) -= 1.0;
    rhs(a) += target;
    rhs(b) -= target;
  }
  const Eigen::VectorXd mu = system.llt().solve(rhs);
  estimate.mu.assign(mu.data(), mu.data() + p);
  return estimate;
}

}  // namespace arbor
