#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "arbor/sampler.hpp"
#include "arbor/types.hpp"
#include "json.hpp"

namespace arbor {

// Declared shape of a fixed-horizon environment. `ranges` covers every
// state-action dimension, state first.
struct EnvironmentSpec {
  std::string name;
  std::size_t state_dims = 0;
  std::size_t action_dims = 0;
  std::size_t horizon = 0;
  std::vector<std::string> names;
  std::vector<std::pair<double, double>> ranges;

  std::size_t dims() const { return state_dims + action_dims; }
};

// An episodic MDP without reward, plus the hand-engineered per-step reward
// that stands in for ground-truth fitness. The simulator state may carry
// more than the observed state (RoboCar keeps its pose and goal).
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvironmentSpec& spec() const = 0;
  virtual std::vector<double> reset(CountingRng& rng) const = 0;
  virtual std::vector<double> step(const std::vector<double>& state, std::span<const double> action,
                                   CountingRng& rng) const = 0;
  virtual std::vector<double> observe(const std::vector<double>& state) const = 0;
  // Ground-truth reward of one state-action vector.
  virtual double reward(std::span<const double> sa) const = 0;
  // Every numeric parameter, as written to an environment spec file.
  virtual nlohmann::json parameters() const = 0;
};

struct FoodLavaParams {
  double size = 10.0;
  double max_step = 0.25;
  std::size_t horizon = 200;
  double food_x = 8.0, food_y = 8.0, food_reward = 1.0;
  double lava_y_lo = 3.5, lava_y_hi = 4.5, lava_gap = 2.0, lava_reward = -1.0;
  double start_lo = 0.5, start_hi = 1.5;
};

struct PendulumParams {
  double gravity = 10.0;
  double length = 1.0;
  double mass = 1.0;
  double damping = 0.05;
  double dt = 0.05;
  double max_torque = 2.0;
  double max_speed = 8.0;
  double velocity_weight = 0.1;
  std::size_t horizon = 200;
};

struct RoboCarParams {
  double arena = 10.0;
  double max_speed = 0.5;
  double max_steer = 0.5;
  double goal_distance_lo = 4.0;
  double goal_distance_hi = 8.0;
  double goal_radius = 1.0;
  double goal_bonus = 1.0;
  std::size_t horizon = 100;
};

std::unique_ptr<Environment> make_foodlava(const FoodLavaParams& params = {});
std::unique_ptr<Environment> make_pendulum(const PendulumParams& params = {});
std::unique_ptr<Environment> make_robocar(const RoboCarParams& params = {});

// By name ("foodlava", "pendulum", "robocar") with default parameters.
std::unique_ptr<Environment> make_environment(const std::string& name);

// Environment spec file: {"format", "name", "parameters"}.
nlohmann::json environment_to_json(const Environment& env);
std::unique_ptr<Environment> environment_from_json(const nlohmann::json& doc);
// SHA-256 of the canonical spec document, hex encoded.
std::string environment_hash(const Environment& env);

double ground_truth_fitness(const Environment& env, const Trajectory& trajectory);

// Synthetic labeller with query access to ground-truth fitness. Output lies
// in [epsilon, 1 - epsilon]. The rng is only used in stochastic mode.
double oracle_label(double fitness_i, double fitness_j, const OracleConfig& oracle, double epsilon,
                    CountingRng& rng);

}  // namespace arbor
