#include "arbor/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace arbor {

std::string to_string(TrajectorySource source) {
  return source == TrajectorySource::kPilot ? "pilot" : "pbrl-agent";
}

TrajectorySource source_from_string(const std::string& name) {
  if (name == "pilot") return TrajectorySource::kPilot;
  if (name == "pbrl-agent") return TrajectorySource::kPbrlAgent;
  throw std::invalid_argument("unknown trajectory source: " + name);
}

TrajectoryStore::TrajectoryStore(std::size_t horizon, std::size_t state_dims,
                                 std::size_t action_dims, std::vector<std::string> dimension_names)
    : horizon_(horizon), state_dims_(state_dims), action_dims_(action_dims),
      names_(std::move(dimension_names)) {
  if (names_.empty()) {
    for (std::size_t d = 0; d < dims(); ++d) names_.push_back("d" + std::to_string(d));
  }
  if (names_.size() != dims()) throw std::invalid_argument("dimension name count mismatch");
}

std::size_t TrajectoryStore::append(Trajectory trajectory) {
  if (trajectory.steps.size() != horizon_) {
    throw std::invalid_argument("trajectory length " + std::to_string(trajectory.steps.size()) +
                                " != horizon " + std::to_string(horizon_));
  }
  for (const auto& step : trajectory.steps) {
    if (step.size() != dims()) throw std::invalid_argument("state-action width mismatch");
    for (double v : step) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite state-action value");
    }
  }
  if (trajectory.id.empty()) trajectory.id = "t" + std::to_string(trajectories_.size());
  trajectories_.push_back(std::move(trajectory));
  return trajectories_.size() - 1;
}

std::vector<std::pair<double, double>> TrajectoryStore::observed_ranges() const {
  std::vector<std::pair<double, double>> ranges(
      dims(), {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
  for (const auto& t : trajectories_) {
    for (const auto& step : t.steps) {
      for (std::size_t d = 0; d < step.size(); ++d) {
        ranges[d].first = std::min(ranges[d].first, step[d]);
        ranges[d].second = std::max(ranges[d].second, step[d]);
      }
    }
  }
  for (auto& r : ranges) {
    if (r.first > r.second) r = {0.0, 0.0};
  }
  return ranges;
}

bool operator==(const Trajectory& a, const Trajectory& b) {
  return a.id == b.id && a.steps == b.steps && a.source == b.source &&
         a.episode_index == b.episode_index;
}

bool operator==(const TrajectoryStore& a, const TrajectoryStore& b) {
  return a.horizon_ == b.horizon_ && a.state_dims_ == b.state_dims_ &&
         a.action_dims_ == b.action_dims_ && a.names_ == b.names_ &&
         a.trajectories_ == b.trajectories_;
}

PreferenceDataset::PreferenceDataset(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.5)) throw std::invalid_argument("epsilon out of (0, 0.5]");
}

std::uint64_t PreferenceDataset::key(std::size_t i, std::size_t j) {
  const auto lo = static_cast<std::uint64_t>(std::min(i, j));
  const auto hi = static_cast<std::uint64_t>(std::max(i, j));
  return (lo << 32) | hi;
}

bool PreferenceDataset::contains_pair(std::size_t i, std::size_t j) const {
  return std::binary_search(pair_keys_.begin(), pair_keys_.end(), key(i, j));
}

bool PreferenceDataset::is_labelled(std::size_t i) const {
  return std::binary_search(labelled_.begin(), labelled_.end(), i);
}

std::vector<std::size_t> PreferenceDataset::labelled() const { return labelled_; }

void PreferenceDataset::append(std::size_t i, std::size_t j, double y) {
  if (i == j) throw std::invalid_argument("preference pair compares a trajectory to itself");
  if (contains_pair(i, j)) throw std::invalid_argument("preference pair already labelled");
  if (!(y >= epsilon_ && y <= 1.0 - epsilon_)) {
    throw std::invalid_argument("label outside [epsilon, 1 - epsilon]");
  }
  rows_.push_back({i, j, y});
  const auto k = key(i, j);
  pair_keys_.insert(std::upper_bound(pair_keys_.begin(), pair_keys_.end(), k), k);
  for (auto idx : {i, j}) {
    auto it = std::lower_bound(labelled_.begin(), labelled_.end(), idx);
    if (it == labelled_.end() || *it != idx) labelled_.insert(it, idx);
  }
}

bool operator==(const PreferenceDataset& a, const PreferenceDataset& b) {
  if (a.epsilon_ != b.epsilon_ || a.rows_.size() != b.rows_.size()) return false;
  for (std::size_t k = 0; k < a.rows_.size(); ++k) {
    const auto& ra = a.rows_[k];
    const auto& rb = b.rows_[k];
    if (ra.i != rb.i || ra.j != rb.j || ra.y != rb.y) return false;
  }
  return true;
}

std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> errors;
  if (!(c.epsilon > 0.0 && c.epsilon <= 0.5)) errors.push_back("epsilon out of (0, 0.5]");
  if (!(c.lambda >= 0.0)) errors.push_back("lambda must be >= 0");
  if (c.alpha && !(*c.alpha >= 0.0)) errors.push_back("alpha must be >= 0");
  if (c.m_max < 1) errors.push_back("m_max must be >= 1");
  if (c.f_l < 1) errors.push_back("f_l must be >= 1");
  if (c.f_u < 1) errors.push_back("f_u must be >= 1");
  if (c.n_max < 2) errors.push_back("n_max must be >= 2");
  if (c.f_l >= 1 && c.n_max % c.f_l != 0) errors.push_back("f_l must divide n_max");
  if (!(c.variance_floor > 0.0)) errors.push_back("variance floor must be > 0");
  if (c.oracle.mode == OracleMode::kThurstone && !(c.oracle.scale > 0.0)) {
    errors.push_back("oracle scale must be > 0");
  }
  if (c.agent.state_bins < 1) errors.push_back("agent state_bins must be >= 1");
  if (c.agent.action_levels < 2) errors.push_back("agent action_levels must be >= 2");
  if (!(c.agent.learning_rate > 0.0 && c.agent.learning_rate <= 1.0)) {
    errors.push_back("agent learning_rate out of (0, 1]");
  }
  if (!(c.agent.discount > 0.0 && c.agent.discount <= 1.0)) {
    errors.push_back("agent discount out of (0, 1]");
  }
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (c.agent.explore_persistence && !(*c.agent.explore_persistence >= 1.0)) {
    errors.push_back("agent explore_persistence must be >= 1");
  }
  if (!in_unit(c.agent.explore_start) || !in_unit(c.agent.explore_end)) {
    errors.push_back("exploration rate out of [0, 1]");
  }
  return errors;
}

}  // namespace arbor
