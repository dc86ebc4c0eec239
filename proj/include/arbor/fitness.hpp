#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "arbor/types.hpp"

namespace arbor {

// Trajectory-level mean fitness, defined only on labelled trajectories and
// pinned to zero mean over them.
struct FitnessEstimate {
  std::vector<std::size_t> labelled;  // sorted store indices
  std::vector<double> mu;             // aligned with `labelled`

  bool empty() const { return labelled.empty(); }
  std::optional<double> at(std::size_t index) const;
};

class DisconnectedComparisonsError : public std::runtime_error {
 public:
  explicit DisconnectedComparisonsError(std::vector<std::vector<std::size_t>> components);
  const std::vector<std::vector<std::size_t>>& components() const { return components_; }

 private:
  std::vector<std::vector<std::size_t>> components_;
};

// Connected components of the comparison graph over labelled trajectories.
std::vector<std::vector<std::size_t>> comparison_components(const PreferenceDataset& dataset);

bool comparison_graph_connected(const PreferenceDataset& dataset);

// Minimum-norm least-squares solution of A mu ~ probit(y) over the labelled
// trajectories. Throws DisconnectedComparisonsError if the graph is split.
FitnessEstimate solve_fitness(const PreferenceDataset& dataset);

}  // namespace arbor
