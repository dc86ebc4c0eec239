#include "arbor/environment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "arbor/normal.hpp"

namespace arbor {

using nlohmann::json;

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

double uniform(CountingRng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

class FoodLava final : public Environment {
 public:
  explicit FoodLava(const FoodLavaParams& p) : p_(p) {
    spec_.name = "foodlava";
    spec_.state_dims = 2;
    spec_.action_dims = 2;
    spec_.horizon = p.horizon;
    spec_.names = {"x", "y", "dx", "dy"};
    spec_.ranges = {{0.0, p.size}, {0.0, p.size}, {-p.max_step, p.max_step}, {-p.max_step, p.max_step}};
  }

  const EnvironmentSpec& spec() const override { return spec_; }

  std::vector<double> reset(CountingRng& rng) const override {
    const double x = uniform(rng, p_.start_lo, p_.start_hi);
    const double y = uniform(rng, p_.start_lo, p_.start_hi);
    return {x, y};
  }

  std::vector<double> step(const std::vector<double>& s, std::span<const double> a,
                           CountingRng&) const override {
    const double dx = std::clamp(a[0], -p_.max_step, p_.max_step);
    const double dy = std::clamp(a[1], -p_.max_step, p_.max_step);
    return {std::clamp(s[0] + dx, 0.0, p_.size), std::clamp(s[1] + dy, 0.0, p_.size)};
  }

  std::vector<double> observe(const std::vector<double>& s) const override { return s; }

  double reward(std::span<const double> sa) const override {
    const double x = sa[0];
    const double y = sa[1];
    if (x >= p_.food_x && y >= p_.food_y) return p_.food_reward;
    if (y >= p_.lava_y_lo && y <= p_.lava_y_hi && x < p_.size - p_.lava_gap) return p_.lava_reward;
    return 0.0;
  }

  json parameters() const override {
    return {{"size", p_.size},           {"max_step", p_.max_step},       {"horizon", p_.horizon},
            {"food_x", p_.food_x},       {"food_y", p_.food_y},           {"food_reward", p_.food_reward},
            {"lava_y_lo", p_.lava_y_lo}, {"lava_y_hi", p_.lava_y_hi},     {"lava_gap", p_.lava_gap},
            {"lava_reward", p_.lava_reward}, {"start_lo", p_.start_lo},   {"start_hi", p_.start_hi}};
  }

 private:
  FoodLavaParams p_;
  EnvironmentSpec spec_;
};

// Angle 0 is upright; the hanging position (+-pi) is the stable equilibrium.
class Pendulum final : public Environment {
 public:
  explicit Pendulum(const PendulumParams& p) : p_(p) {
    spec_.name = "pendulum";
    spec_.state_dims = 2;
    spec_.action_dims = 1;
    spec_.horizon = p.horizon;
    spec_.names = {"angle", "angular_velocity", "torque"};
    spec_.ranges = {{-std::numbers::pi, std::numbers::pi},
                    {-p.max_speed, p.max_speed},
                    {-p.max_torque, p.max_torque}};
  }

  const EnvironmentSpec& spec() const override { return spec_; }

  std::vector<double> reset(CountingRng& rng) const override {
    return {uniform(rng, -std::numbers::pi, std::numbers::pi), 0.0};
  }

  std::vector<double> step(const std::vector<double>& s, std::span<const double> a,
                           CountingRng&) const override {
    const double torque = std::clamp(a[0], -p_.max_torque, p_.max_torque);
    const double inertia = p_.mass * p_.length * p_.length;
    const double accel = 1.5 * p_.gravity / p_.length * std::sin(s[0]) + 3.0 * torque / inertia -
                         p_.damping * s[1];
    const double omega = std::clamp(s[1] + accel * p_.dt, -p_.max_speed, p_.max_speed);
    return {wrap_angle(s[0] + omega * p_.dt), omega};
  }

  std::vector<double> observe(const std::vector<double>& s) const override { return s; }

  double reward(std::span<const double> sa) const override {
    return -(sa[0] * sa[0] + p_.velocity_weight * sa[1] * sa[1]);
  }

  json parameters() const override {
    return {{"gravity", p_.gravity},     {"length", p_.length},         {"mass", p_.mass},
            {"damping", p_.damping},     {"dt", p_.dt},                 {"max_torque", p_.max_torque},
            {"max_speed", p_.max_speed}, {"velocity_weight", p_.velocity_weight},
            {"horizon", p_.horizon}};
  }

 private:
  PendulumParams p_;
  EnvironmentSpec spec_;
};

// Simulator state: (px, py, heading, gx, gy). Observation: (y, d, bearing).
class RoboCar final : public Environment {
 public:
  explicit RoboCar(const RoboCarParams& p) : p_(p) {
    spec_.name = "robocar";
    spec_.state_dims = 3;
    spec_.action_dims = 2;
    spec_.horizon = p.horizon;
    spec_.names = {"y", "distance", "bearing", "speed", "steer"};
    spec_.ranges = {{-p.arena, p.arena},
                    {0.0, 2.0 * std::numbers::sqrt2 * p.arena},
                    {-std::numbers::pi, std::numbers::pi},
                    {0.0, p.max_speed},
                    {-p.max_steer, p.max_steer}};
  }

  const EnvironmentSpec& spec() const override { return spec_; }

  std::vector<double> reset(CountingRng& rng) const override {
    const double angle = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const double dist = uniform(rng, p_.goal_distance_lo, p_.goal_distance_hi);
    return {0.0, 0.0, 0.0, dist * std::cos(angle), dist * std::sin(angle)};
  }

  std::vector<double> step(const std::vector<double>& s, std::span<const double> a,
                           CountingRng&) const override {
    const double speed = std::clamp(a[0], 0.0, p_.max_speed);
    const double steer = std::clamp(a[1], -p_.max_steer, p_.max_steer);
    const double heading = wrap_angle(s[2] + steer);
    return {std::clamp(s[0] + speed * std::cos(heading), -p_.arena, p_.arena),
            std::clamp(s[1] + speed * std::sin(heading), -p_.arena, p_.arena), heading, s[3], s[4]};
  }

  std::vector<double> observe(const std::vector<double>& s) const override {
    const double dx = s[3] - s[0];
    const double dy = s[4] - s[1];
    return {s[1], std::hypot(dx, dy), wrap_angle(std::atan2(dy, dx) - s[2])};
  }

  // Distance reduction implied by the relative geometry, plus a bonus inside
  // the goal radius.
  double reward(std::span<const double> sa) const override {
    const double d = sa[1];
    const double speed = std::clamp(sa[3], 0.0, p_.max_speed);
    const double bearing = sa[2] - std::clamp(sa[4], -p_.max_steer, p_.max_steer);
    const double next = std::hypot(d * std::cos(bearing) - speed, d * std::sin(bearing));
    return (d - next) + (d < p_.goal_radius ? p_.goal_bonus : 0.0);
  }

  json parameters() const override {
    return {{"arena", p_.arena},
            {"max_speed", p_.max_speed},
            {"max_steer", p_.max_steer},
            {"goal_distance_lo", p_.goal_distance_lo},
            {"goal_distance_hi", p_.goal_distance_hi},
            {"goal_radius", p_.goal_radius},
            {"goal_bonus", p_.goal_bonus},
            {"horizon", p_.horizon}};
  }

 private:
  RoboCarParams p_;
  EnvironmentSpec spec_;
};

template <typename T>
void take(const json& doc, const char* key, T& field) {
  if (auto it = doc.find(key); it != doc.end()) field = it->get<T>();
}

}  // namespace

std::unique_ptr<Environment> make_foodlava(const FoodLavaParams& params) {
  return std::make_unique<FoodLava>(params);
}

std::unique_ptr<Environment> make_pendulum(const PendulumParams& params) {
  return std::make_unique<Pendulum>(params);
}

std::unique_ptr<Environment> make_robocar(const RoboCarParams& params) {
  return std::make_unique<RoboCar>(params);
}

std::unique_ptr<Environment> make_environment(const std::string& name) {
  return environment_from_json({{"format", "arbor.env/1"}, {"name", name}, {"parameters", json::object()}});
}

json environment_to_json(const Environment& env) {
  return {{"format", "arbor.env/1"}, {"name", env.spec().name}, {"parameters", env.parameters()}};
}

std::unique_ptr<Environment> environment_from_json(const json& doc) {
  if (doc.value("format", "") != "arbor.env/1") throw std::runtime_error("unsupported environment format");
  const auto name = doc.at("name").get<std::string>();
  const json params = doc.value("parameters", json::object());
  if (name == "foodlava") {
    FoodLavaParams p;
    take(params, "size", p.size);
    take(params, "max_step", p.max_step);
    take(params, "horizon", p.horizon);
    take(params, "food_x", p.food_x);
    take(params, "food_y", p.food_y);
    take(params, "food_reward", p.food_reward);
    take(params, "lava_y_lo", p.lava_y_lo);
    take(params, "lava_y_hi", p.lava_y_hi);
    take(params, "lava_gap", p.lava_gap);
    take(params, "lava_reward", p.lava_reward);
    take(params, "start_lo", p.start_lo);
    take(params, "start_hi", p.start_hi);
    return make_foodlava(p);
  }
  if (name == "pendulum") {
    PendulumParams p;
    take(params, "gravity", p.gravity);
    take(params, "length", p.length);
    take(params, "mass", p.mass);
    take(params, "damping", p.damping);
    take(params, "dt", p.dt);
    take(params, "max_torque", p.max_torque);
    take(params, "max_speed", p.max_speed);
    take(params, "velocity_weight", p.velocity_weight);
    take(params, "horizon", p.horizon);
    return make_pendulum(p);
  }
  if (name == "robocar") {
    RoboCarParams p;
    take(params, "arena", p.arena);
    take(params, "max_speed", p.max_speed);
    take(params, "max_steer", p.max_steer);
    take(params, "goal_distance_lo", p.goal_distance_lo);
    take(params, "goal_distance_hi", p.goal_distance_hi);
    take(params, "goal_radius", p.goal_radius);
    take(params, "goal_bonus", p.goal_bonus);
    take(params, "horizon", p.horizon);
    return make_robocar(p);
  }
  throw std::invalid_argument("unknown environment: " + name);
}

std::string environment_hash(const Environment& env) {
  const std::string canonical = environment_to_json(env).dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(canonical.data(), canonical.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < length; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 0xf];
  }
  return out;
}

double ground_truth_fitness(const Environment& env, const Trajectory& trajectory) {
  double total = 0.0;
  for (const auto& step : trajectory.steps) total += env.reward(step);
  return total;
}

double oracle_label(double fitness_i, double fitness_j, const OracleConfig& oracle, double epsilon,
                    CountingRng& rng) {
  if (fitness_i == fitness_j) return 0.5;
  if (oracle.mode == OracleMode::kHard && !oracle.stochastic) {
    return fitness_i > fitness_j ? 1.0 - epsilon : epsilon;
  }
  const double p = std_normal_cdf((fitness_i - fitness_j) / oracle.scale);
  if (oracle.stochastic) return rng.uniform() < p ? 1.0 - epsilon : epsilon;
  return std::clamp(p, epsilon, 1.0 - epsilon);
}

}  // namespace arbor
