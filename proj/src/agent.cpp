#include "arbor/agent.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace arbor {

RewardFn ground_truth_reward(const Environment& env) {
  return [&env](std::span<const double> sa) { return env.reward(sa); };
}

RewardFn tree_reward(RewardTree tree) {
  auto shared = std::make_shared<const RewardTree>(std::move(tree));
  return [shared](std::span<const double> sa) { return shared->predict(sa).first; };
}

double default_explore_persistence(const std::string& environment) {
  return environment == "foodlava" ? 10.0 : 1.0;
}

QAgent::QAgent(const EnvironmentSpec& spec, const AgentConfig& config, double initial_value)
    : config_(config),
      persistence_(config.explore_persistence.value_or(default_explore_persistence(spec.name))) {
  state_ranges_.assign(spec.ranges.begin(), spec.ranges.begin() + static_cast<std::ptrdiff_t>(spec.state_dims));
  for (std::size_t d = 0; d < spec.state_dims; ++d) state_count_ *= config.state_bins;

  // Cartesian grid of `action_levels` evenly spaced values per action dim.
  actions_.push_back({});
  for (std::size_t d = 0; d < spec.action_dims; ++d) {
    const auto [lo, hi] = spec.ranges[spec.state_dims + d];
    std::vector<std::vector<double>> next;
    for (const auto& prefix : actions_) {
      for (std::size_t l = 0; l < config.action_levels; ++l) {
        auto a = prefix;
        a.push_back(lo + (hi - lo) * static_cast<double>(l) / static_cast<double>(config.action_levels - 1));
        next.push_back(std::move(a));
      }
    }
    actions_ = std::move(next);
  }
  table_.assign(state_count_ * actions_.size(), initial_value);
}

std::size_t QAgent::state_index(std::span<const double> observation) const {
  std::size_t index = 0;
  const auto bins = config_.state_bins;
  for (std::size_t d = 0; d < state_ranges_.size(); ++d) {
    const auto [lo, hi] = state_ranges_[d];
    const double unit = hi > lo ? (observation[d] - lo) / (hi - lo) : 0.0;
    const auto bin = static_cast<std::size_t>(
        std::clamp(std::floor(unit * static_cast<double>(bins)), 0.0, static_cast<double>(bins - 1)));
    index = index * bins + bin;
  }
  return index;
}

std::size_t QAgent::greedy_action(std::size_t state) const {
  std::size_t best = 0;
  for (std::size_t a = 1; a < actions_.size(); ++a) {
    if (q(state, a) > q(state, best)) best = a;
  }
  return best;
}

double QAgent::exploration(std::size_t episode, std::size_t total) const {
  const std::size_t span = config_.explore_decay_episodes ? config_.explore_decay_episodes : total;
  if (span <= 1) return config_.explore_end;
  const double frac = std::min(1.0, static_cast<double>(episode) / static_cast<double>(span - 1));
  return config_.explore_start + (config_.explore_end - config_.explore_start) * frac;
}

EpisodeResult QAgent::run_episode(const Environment& env, const RewardFn& reward, double explore,
                                  bool learn, CountingRng& rng) {
  const auto& spec = env.spec();
  EpisodeResult result;
  result.trajectory.steps.reserve(spec.horizon);
  auto sim = env.reset(rng);
  auto obs = env.observe(sim);
  std::size_t s = state_index(obs);
  std::size_t held = 0;
  std::size_t held_left = 0;
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    std::size_t a = greedy_action(s);
    if (held_left > 0) {
      a = held;
      --held_left;
    } else if (explore > 0.0 && rng.uniform() < explore) {
      a = static_cast<std::size_t>(rng() % actions_.size());
      // Exploratory actions are held for a geometric number of steps.
      held = a;
      const double stop = 1.0 / std::max(1.0, persistence_);
      while (rng.uniform() >= stop) ++held_left;
    }
    StateAction sa(obs);
    sa.insert(sa.end(), actions_[a].begin(), actions_[a].end());
    const double r = reward(sa);
    result.return_learnt += r;
    result.return_ground_truth += env.reward(sa);
    result.trajectory.steps.push_back(std::move(sa));

    sim = env.step(sim, actions_[a], rng);
    obs = env.observe(sim);
    const std::size_t next = state_index(obs);
    if (learn) {
      double target = r;
      if (t + 1 < spec.horizon) target += config_.discount * q(next, greedy_action(next));
      q(s, a) += config_.learning_rate * (target - q(s, a));
    }
    s = next;
  }
  return result;
}

TrajectoryStore empty_store(const Environment& env) {
  const auto& spec = env.spec();
  return TrajectoryStore(spec.horizon, spec.state_dims, spec.action_dims, spec.names);
}

TrainResult train(const Environment& env, const AgentConfig& config, const RewardFn& reward,
                  std::size_t episodes, CountingRng& rng, TrajectorySource source) {
  TrainResult result{QAgent(env.spec(), config), empty_store(env), {}, {}};
  for (std::size_t e = 0; e < episodes; ++e) {
    auto ep = result.policy.run_episode(env, reward, result.policy.exploration(e, episodes), true, rng);
    ep.trajectory.source = source;
    ep.trajectory.episode_index = e;
    result.store.append(std::move(ep.trajectory));
    result.returns_learnt.push_back(ep.return_learnt);
    result.returns_ground_truth.push_back(ep.return_ground_truth);
  }
  return result;
}

namespace {

ReturnStats stats(std::vector<double> returns) {
  ReturnStats s;
  if (returns.empty()) return s;
  s.min = *std::min_element(returns.begin(), returns.end());
  s.max = *std::max_element(returns.begin(), returns.end());
  double total = 0.0;
  for (double r : returns) total += r;
  s.mean = total / static_cast<double>(returns.size());
  s.returns = std::move(returns);
  return s;
}

}  // namespace

Evaluation evaluate(QAgent policy, const Environment& env, const RewardFn& reward,
                    std::size_t episodes, CountingRng& rng) {
  std::vector<double> learnt;
  std::vector<double> truth;
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto ep = policy.run_episode(env, reward, 0.0, false, rng);
    learnt.push_back(ep.return_learnt);
    truth.push_back(ep.return_ground_truth);
  }
  return {stats(std::move(learnt)), stats(std::move(truth))};
}

TrajectoryStore generate_pilot_dataset(const Environment& env, const AgentConfig& config,
                                       std::size_t episodes, CountingRng& rng) {
  if (episodes < 2) throw std::invalid_argument("pilot dataset needs at least two episodes");
  return train(env, config, ground_truth_reward(env), episodes, rng, TrajectorySource::kPilot).store;
}

}  // namespace arbor
