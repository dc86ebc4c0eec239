#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace arbor {

// A state-action vector: state elements first, then action elements.
using StateAction = std::vector<double>;

enum class TrajectorySource { kPilot, kPbrlAgent };

std::string to_string(TrajectorySource source);
TrajectorySource source_from_string(const std::string& name);

struct Trajectory {
  std::string id;
  std::vector<StateAction> steps;
  TrajectorySource source = TrajectorySource::kPilot;
  std::size_t episode_index = 0;
};

// Fixed-length trajectories in generation order. Indices are dense and never
// reassigned, so the position of a trajectory is its identity for the
// sampler and the preference dataset.
class TrajectoryStore {
 public:
  TrajectoryStore() = default;
  TrajectoryStore(std::size_t horizon, std::size_t state_dims, std::size_t action_dims,
                  std::vector<std::string> dimension_names = {});

  std::size_t size() const { return trajectories_.size(); }
  bool empty() const { return trajectories_.empty(); }
  std::size_t horizon() const { return horizon_; }
  std::size_t state_dims() const { return state_dims_; }
  std::size_t action_dims() const { return action_dims_; }
  std::size_t dims() const { return state_dims_ + action_dims_; }
  const std::vector<std::string>& dimension_names() const { return names_; }

  const Trajectory& operator[](std::size_t i) const { return trajectories_.at(i); }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }

  // Throws std::invalid_argument if the trajectory length or any step width
  // disagrees with the store, or a value is non-finite.
  std::size_t append(Trajectory trajectory);

  // Observed [min, max] per dimension over every stored step.
  std::vector<std::pair<double, double>> observed_ranges() const;

  friend bool operator==(const TrajectoryStore& a, const TrajectoryStore& b);

 private:
  std::size_t horizon_ = 0;
  std::size_t state_dims_ = 0;
  std::size_t action_dims_ = 0;
  std::vector<std::string> names_;
  std::vector<Trajectory> trajectories_;
};

bool operator==(const Trajectory& a, const Trajectory& b);

struct PreferenceRow {
  std::size_t i = 0;  // +1 in A
  std::size_t j = 0;  // -1 in A
  double y = 0.5;
};

// Append-only record of elicited preferences (the set P, and A, y in sparse
// row form). Rows keep the orientation in which the pair was presented.
class PreferenceDataset {
 public:
  explicit PreferenceDataset(double epsilon = 0.1);

  double epsilon() const { return epsilon_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const std::vector<PreferenceRow>& rows() const { return rows_; }
  const PreferenceRow& operator[](std::size_t k) const { return rows_.at(k); }

  bool contains_pair(std::size_t i, std::size_t j) const;
  bool is_labelled(std::size_t i) const;
  // Sorted indices of every trajectory that appears in at least one row.
  std::vector<std::size_t> labelled() const;

  // Throws std::invalid_argument on i == j, a repeated pair, or y outside
  // [epsilon, 1 - epsilon].
  void append(std::size_t i, std::size_t j, double y);

  friend bool operator==(const PreferenceDataset& a, const PreferenceDataset& b);

 private:
  static std::uint64_t key(std::size_t i, std::size_t j);

  double epsilon_;
  std::vector<PreferenceRow> rows_;
  std::vector<std::uint64_t> pair_keys_;  // sorted
  std::vector<std::size_t> labelled_;     // sorted
};

enum class OracleMode { kHard, kThurstone };
enum class ThresholdMode { kMidpoint, kObserved };

struct OracleConfig {
  OracleMode mode = OracleMode::kHard;
  double scale = 1.0;        // thurstone mode
  bool stochastic = false;   // draw a hard label with the thurstone probability
};

struct AgentConfig {
  std::size_t state_bins = 20;
  std::size_t action_levels = 3;
  double learning_rate = 0.1;
  double discount = 1.0;
  double explore_start = 1.0;
  double explore_end = 0.05;
  // Episodes over which exploration decays linearly; 0 means "use the
  // length of the training run".
  std::size_t explore_decay_episodes = 0;
  // Mean number of steps an exploratory action is repeated; 1 is plain
  // epsilon-greedy. Unset picks a per-environment default.
  std::optional<double> explore_persistence;
};

struct RunConfig {
  std::string environment = "foodlava";
  double epsilon = 0.1;
  double lambda = 1.0;
  // Unset selects 0.05 * loss(m=1) / m_max, evaluated at each model update.
  std::optional<double> alpha;
  std::size_t m_max = 16;
  std::size_t f_l = 10;
  std::size_t f_u = 10;
  std::size_t k_max = 600;
  std::size_t n_max = 200;
  std::size_t n_post_fix = 600;
  std::size_t agent_episodes = 1500;
  std::uint64_t seed = 0;
  OracleConfig oracle;
  double variance_floor = 1e-8;
  ThresholdMode threshold_mode = ThresholdMode::kMidpoint;
  bool regrow_from_scratch = false;
  AgentConfig agent;
};

// Every violated constraint, as a human-readable message; empty means ok.
std::vector<std::string> validate_config(const RunConfig& config);

}  // namespace arbor
