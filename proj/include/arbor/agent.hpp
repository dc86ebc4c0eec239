#pragma once

#include <functional>
#include <span>
#include <vector>

#include "arbor/environment.hpp"
#include "arbor/reward_tree.hpp"

namespace arbor {

// Per-step reward used for learning. Swapping the function between episodes
// is how a live reward tree is hot-swapped into a running learner.
using RewardFn = std::function<double(std::span<const double>)>;

RewardFn ground_truth_reward(const Environment& env);
// Mean reward of the leaf a state-action vector falls in.
RewardFn tree_reward(RewardTree tree);

struct EpisodeResult {
  Trajectory trajectory;
  double return_learnt = 0.0;
  double return_ground_truth = 0.0;
};

// Exploratory-action persistence used when the config leaves it unset. The
// sparse FoodLava reward is out of reach of a one-step random walk.
double default_explore_persistence(const std::string& environment);

// Tabular epsilon-greedy Q-learning over uniformly binned observations and a
// grid of actions spanning the action box.
class QAgent {
 public:
  // Every action value starts at `initial_value`.
  QAgent(const EnvironmentSpec& spec, const AgentConfig& config, double initial_value = 0.0);

  std::size_t state_count() const { return state_count_; }
  std::size_t action_count() const { return actions_.size(); }
  const std::vector<double>& action(std::size_t a) const { return actions_[a]; }

  std::size_t state_index(std::span<const double> observation) const;
  // Lowest-index argmax.
  std::size_t greedy_action(std::size_t state) const;

  double q(std::size_t state, std::size_t a) const { return table_[state * actions_.size() + a]; }
  double& q(std::size_t state, std::size_t a) { return table_[state * actions_.size() + a]; }

  // Exploration rate for `episode` of a run of `total` episodes.
  double exploration(std::size_t episode, std::size_t total) const;

  // Rolls out one episode; learns from `reward` when `learn` is set.
  EpisodeResult run_episode(const Environment& env, const RewardFn& reward, double explore,
                            bool learn, CountingRng& rng);

 private:
  AgentConfig config_;
  double persistence_ = 1.0;
  std::vector<std::pair<double, double>> state_ranges_;
  std::size_t state_count_ = 1;
  std::vector<std::vector<double>> actions_;
  std::vector<double> table_;
};

struct TrainResult {
  QAgent policy;
  TrajectoryStore store;
  std::vector<double> returns_learnt;
  std::vector<double> returns_ground_truth;
};

TrainResult train(const Environment& env, const AgentConfig& config, const RewardFn& reward,
                  std::size_t episodes, CountingRng& rng,
                  TrajectorySource source = TrajectorySource::kPbrlAgent);

struct ReturnStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> returns;
};

struct Evaluation {
  ReturnStats learnt;
  ReturnStats ground_truth;
};

// Greedy rollouts scored under both the given reward and ground truth.
Evaluation evaluate(QAgent policy, const Environment& env, const RewardFn& reward,
                    std::size_t episodes, CountingRng& rng);

// Trajectories of a pilot learner trained on ground truth, in generation
// order.
TrajectoryStore generate_pilot_dataset(const Environment& env, const AgentConfig& config,
                                       std::size_t episodes, CountingRng& rng);

TrajectoryStore empty_store(const Environment& env);

}  // namespace arbor
