#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "arbor/agent.hpp"
#include "arbor/environment.hpp"
#include "arbor/interpret.hpp"
#include "arbor/run.hpp"
#include "arbor/service.hpp"
#include "arbor/store_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace arbor;

namespace {

// Exit codes by failure class.
enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kBadConfig = 2,
  kInputError = 3,
  kRunFailed = 4,
  kMismatch = 5,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t repeats = 1;
};

void add_common(CLI::App& cmd, Common& c, bool out_required) {
  cmd.add_option("--config", c.config_path, "run config file (JSON, mirrors RunConfig)");
  cmd.add_option("--seed", c.seed, "RNG seed (overrides the config)");
  auto* out = cmd.add_option("--out", c.out, "output path");
  if (out_required) out->required();
  cmd.add_option("--repeats", c.repeats, "seeded repeats, written to <out>/seed-<s>")->check(CLI::PositiveNumber);
}

RunConfig base_config(const Common& c) {
  RunConfig config;
  if (!c.config_path.empty()) {
    json doc;
    try {
      doc = json::parse(read_text(c.config_path));
    } catch (const std::exception& e) {
      throw InputError("cannot read config: " + std::string(e.what()));
    }
    try {
      config = config_from_json(doc);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.seed) config.seed = *c.seed;
  return config;
}

void check_config(const RunConfig& config) {
  const auto errors = validate_config(config);
  if (errors.empty()) return;
  std::string joined;
  for (const auto& e : errors) joined += (joined.empty() ? "" : "; ") + e;
  throw ConfigError(joined);
}

void apply_oracle(RunConfig& config, const std::string& oracle, std::optional<double> scale) {
  if (oracle.empty()) return;
  if (oracle == "hard") {
    config.oracle.mode = OracleMode::kHard;
    config.oracle.stochastic = false;
  } else if (oracle == "thurstone") {
    config.oracle.mode = OracleMode::kThurstone;
    config.oracle.stochastic = false;
  } else if (oracle == "stochastic") {
    config.oracle.mode = OracleMode::kThurstone;
    config.oracle.stochastic = true;
  } else {
    throw ConfigError("unknown oracle: " + oracle);
  }
  if (scale) config.oracle.scale = *scale;
}

fs::path repeat_dir(const Common& c, std::uint64_t seed) {
  return c.repeats > 1 ? fs::path(c.out) / ("seed-" + std::to_string(seed)) : fs::path(c.out);
}

template <typename F>
void for_each_repeat(const Common& c, RunConfig config, F&& body) {
  const std::uint64_t first = config.seed;
  for (std::size_t r = 0; r < c.repeats; ++r) {
    config.seed = first + r;
    body(config, repeat_dir(c, config.seed));
  }
}

void print_summary(const Run& run, const fs::path& dir) {
  std::printf("%s: %s run, %zu labels, tree v%zu with %zu components", dir.string().c_str(),
              to_string(run.mode()).c_str(), run.labels_spent(), run.version(), run.tree().leaf_count());
  if (run.evaluation()) {
    std::printf(", greedy ground-truth return %.3f", run.evaluation()->ground_truth.mean);
  }
  std::printf("\n");
}

int gen_pilot(const Common& c, const std::string& env_name, std::size_t episodes) {
  RunConfig config = base_config(c);
  if (!env_name.empty()) config.environment = env_name;
  check_config(config);
  std::shared_ptr<const Environment> env;
  try {
    env = make_environment(config.environment);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  for_each_repeat(c, config, [&](const RunConfig& cfg, const fs::path& dir) {
    CountingRng rng(cfg.seed, 0);
    const auto result = train(*env, cfg.agent, ground_truth_reward(*env), episodes, rng, TrajectorySource::kPilot);
    save_store(result.store, dir);
    save_environment(*env, dir);
    json doc{{"format", "arbor.pilot/1"},
             {"environment", env->spec().name},
             {"environment_hash", environment_hash(*env)},
             {"episodes", episodes},
             {"seed", cfg.seed},
             {"config", config_to_json(cfg)},
             {"returns_ground_truth", result.returns_ground_truth}};
    write_text(dir / "pilot.json", doc.dump(2) + "\n");
    std::printf("%s: %zu pilot episodes of %s\n", dir.string().c_str(), episodes, env->spec().name.c_str());
  });
  return kOk;
}

std::shared_ptr<const Environment> store_environment(const fs::path& store_dir, const RunConfig& config,
                                                     bool env_given) {
  std::shared_ptr<const Environment> env;
  try {
    env = load_environment(store_dir);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (!env) return make_environment(config.environment);
  if (env_given && env->spec().name != config.environment) {
    throw ConfigError("store holds " + env->spec().name + " trajectories but the config names " + config.environment);
  }
  return env;
}

int run_offline(const Common& c, const std::string& store_path, const std::string& oracle,
                std::optional<double> scale, std::optional<std::size_t> k_max) {
  RunConfig config = base_config(c);
  apply_oracle(config, oracle, scale);
  if (k_max) config.k_max = *k_max;
  TrajectoryStore store;
  try {
    store = load_store(store_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  const bool env_named = !c.config_path.empty();
  auto env = store_environment(store_path, config, env_named);
  config.environment = env->spec().name;
  check_config(config);
  for_each_repeat(c, config, [&](const RunConfig& cfg, const fs::path& dir) {
    Run run(cfg, env, store);
    RunDirectory out(dir, true);
    run.set_observer(&out);
    out.write_all(run);
    CountingRng rng(cfg.seed, 2);
    drive_with_oracle(run, rng);
    out.write_all(run);
    print_summary(run, dir);
  });
  return kOk;
}

struct OnlineFlags {
  std::string env;
  std::optional<std::size_t> n_max, f_l, k_max, n_post_fix;
};

int run_online(const Common& c, const OnlineFlags& f, const std::string& oracle, std::optional<double> scale) {
  RunConfig config = base_config(c);
  apply_oracle(config, oracle, scale);
  if (!f.env.empty()) config.environment = f.env;
  if (f.n_max) config.n_max = *f.n_max;
  if (f.f_l) config.f_l = *f.f_l;
  if (f.k_max) config.k_max = *f.k_max;
  if (f.n_post_fix) config.n_post_fix = *f.n_post_fix;
  check_config(config);
  std::shared_ptr<const Environment> env;
  try {
    env = make_environment(config.environment);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  for_each_repeat(c, config, [&](const RunConfig& cfg, const fs::path& dir) {
    Run run(cfg, env);
    RunDirectory out(dir, true);
    run.set_observer(&out);
    out.write_all(run);
    CountingRng rng(cfg.seed, 2);
    drive_with_oracle(run, rng);
    out.write_all(run);
    print_summary(run, dir);
  });
  return kOk;
}

std::size_t latest_version(const fs::path& run_dir) {
  const json manifest = json::parse(read_text(run_dir / "manifest.json"));
  return manifest.at("tree_version").get<std::size_t>();
}

RewardTree load_tree(const fs::path& run_dir, std::size_t version) {
  return tree_from_json(json::parse(read_text(run_dir / "checkpoints" / ("tree-v" + std::to_string(version) + ".json"))));
}

int export_artifact(const Common& c, const std::string& run_path, const std::string& what,
                    std::optional<std::size_t> version, std::size_t d1, std::size_t d2) {
  const fs::path dir = run_path;
  std::string text;
  try {
    if (!fs::exists(dir / "manifest.json")) throw InputError("not a run directory: " + run_path);
    const std::size_t v = version.value_or(latest_version(dir));
    auto env = load_environment(dir);
    if (!env) throw InputError("run directory lacks environment.json");
    const auto& names = env->spec().names;
    if (what == "dnf") {
      const RewardTree tree = load_tree(dir, v);
      for (const auto& rule : to_dnf(tree)) {
        char line[96];
        std::snprintf(line, sizeof line, "component %zu: mean %.6g, variance %.6g  IF ", rule.leaf + 1, rule.mean,
                      rule.variance);
        text += line + rule.condition(names) + "\n";
      }
    } else if (what == "tree") {
      text = json::parse(read_text(dir / "checkpoints" / ("tree-v" + std::to_string(v) + ".json"))).dump(2) + "\n";
    } else if (what == "rectangles") {
      const RewardTree tree = load_tree(dir, v);
      auto doc = projection_to_json(rectangle_projection(tree, d1, d2, load_store(dir / "trajectories")), names);
      doc["tree_version"] = v;
      text = doc.dump(2) + "\n";
    } else if (what == "timeline") {
      text = read_text(dir / "timeline.json");
    } else if (what == "traces") {
      text = read_text(dir / "traces.json");
    } else if (what.rfind("report:", 0) == 0) {
      const auto episode = static_cast<std::size_t>(std::stoul(what.substr(7)));
      const json traces = json::parse(read_text(dir / "traces.json"));
      const auto& items = traces.at("episodes");
      if (episode >= items.size()) throw InputError("no such episode: " + std::to_string(episode));
      const auto tree_version = items[episode].at("tree_version").get<std::size_t>();
      const TrajectoryStore episodes = load_store(dir / "episodes");
      ReportCard card = report_card(load_tree(dir, tree_version), episodes[episode], names);
      card.tree_version = tree_version;
      card.ground_truth_return = items[episode].at("return_ground_truth").get<double>();
      text = report_to_json(card).dump(2) + "\n";
    } else {
      throw ConfigError("unknown export: " + what + " (dnf, tree, rectangles, timeline, traces, report:EP)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (c.out.empty()) {
    std::cout << text;
  } else {
    write_text(c.out, text);
  }
  return kOk;
}

int finish_replay(const Common& c, const Run& run, std::size_t label_count, const std::string& expect_path) {
  if (!c.out.empty()) RunDirectory(c.out, true).write_all(run);
  const json final_tree = tree_to_json(run.tree(), run.environment().spec().names, run.version());
  std::printf("replayed %zu labels: tree v%zu with %zu components\n", label_count, run.version(),
              run.tree().leaf_count());
  if (!expect_path.empty()) {
    const RewardTree expected = tree_from_json(json::parse(read_text(expect_path)));
    if (!(expected == run.tree())) throw MismatchError("replayed tree differs from " + expect_path);
    std::printf("matches %s\n", expect_path.c_str());
  }
  if (c.out.empty()) std::cout << final_tree.dump(2) << "\n";
  return kOk;
}

int replay(const Common& c, const std::string& labels_path, const std::string& store_path,
           const std::string& expect_path) {
  RunConfig config = base_config(c);
  // A log inside a run directory carries its config in the manifest.
  const fs::path manifest = fs::path(labels_path).parent_path() / "manifest.json";
  if (c.config_path.empty() && fs::exists(manifest)) {
    try {
      config = config_from_json(json::parse(read_text(manifest)).at("config"));
    } catch (const std::exception& e) {
      throw InputError("cannot read " + manifest.string() + ": " + e.what());
    }
    if (c.seed) config.seed = *c.seed;
  }
  std::vector<LabelRecord> labels;
  try {
    labels = read_label_log(labels_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  // Without a store the log is replayed online: the seeded agent regenerates
  // the pool.
  if (store_path.empty()) {
    check_config(config);
    std::shared_ptr<const Environment> env = make_environment(config.environment);
    return finish_replay(c, replay_labels(config, env, labels), labels.size(), expect_path);
  }
  TrajectoryStore store;
  try {
    store = load_store(store_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  auto env = store_environment(store_path, config, !c.config_path.empty());
  config.environment = env->spec().name;
  check_config(config);
  return finish_replay(c, replay_labels(config, env, store, labels), labels.size(), expect_path);
}

int serve_runs(const Common& c, const std::string& host, int port) {
  Service service(c.out.empty() ? fs::path("runs") : fs::path(c.out));
  if (!c.config_path.empty()) {
    RunConfig config = base_config(c);
    check_config(config);
    const auto reply = service.create_run({{"mode", "online"}, {"config", config_to_json(config)}});
    if (reply.status != 201) throw ConfigError(reply.body.value("error", "cannot start run"));
    std::printf("started run %s\n", reply.body.at("id").get<std::string>().c_str());
  }
  std::printf("serving %s on %s:%d\n", service.root().string().c_str(), host.c_str(), port);
  std::fflush(stdout);
  if (!serve(service, host, port)) throw InputError("cannot listen on " + host + ":" + std::to_string(port));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based reward learning with reward trees"};
  app.require_subcommand(1);

  Common common;
  std::string env_name, store_path, oracle, run_path, what = "dnf", labels_path, expect_path, host = "127.0.0.1";
  std::size_t episodes = 1000, d1 = 0, d2 = 1;
  std::optional<std::size_t> k_max, version;
  std::optional<double> scale;
  OnlineFlags online;
  int port = 8080;

  auto* gen = app.add_subcommand("gen-pilot", "train a pilot agent on ground truth and store its episodes");
  add_common(*gen, common, true);
  gen->add_option("--env", env_name, "foodlava, pendulum or robocar");
  gen->add_option("--episodes", episodes, "pilot episodes")->check(CLI::Range(2, 1000000));

  auto* off = app.add_subcommand("run-offline", "label a fixed trajectory store with the oracle");
  add_common(*off, common, true);
  off->add_option("--store", store_path, "trajectory store directory")->required();
  off->add_option("--oracle", oracle, "hard, thurstone or stochastic");
  off->add_option("--oracle-scale", scale, "thurstone scale");
  off->add_option("--k-max", k_max, "label budget");

  auto* on = app.add_subcommand("run-online", "label the PbRL agent's own episodes as it trains");
  add_common(*on, common, true);
  on->add_option("--env", online.env, "environment");
  on->add_option("--n-max", online.n_max, "episodes labelled before the reward is fixed");
  on->add_option("--f-l", online.f_l, "episodes per labelling batch");
  on->add_option("--k-max", online.k_max, "label budget");
  on->add_option("--n-post-fix", online.n_post_fix, "episodes after the reward is fixed");
  on->add_option("--oracle", oracle, "hard, thurstone or stochastic");
  on->add_option("--oracle-scale", scale, "thurstone scale");

  auto* exp = app.add_subcommand("export", "print an artifact of a finished run");
  add_common(*exp, common, false);
  exp->add_option("--run", run_path, "run directory")->required();
  exp->add_option("--what", what, "dnf, tree, rectangles, timeline, traces or report:EP");
  exp->add_option("--version", version, "tree version (default latest)");
  exp->add_option("--d1", d1, "first rectangle dimension");
  exp->add_option("--d2", d2, "second rectangle dimension");

  auto* srv = app.add_subcommand("serve", "serve runs over HTTP for the labelling UI");
  add_common(*srv, common, false);
  srv->add_option("--host", host, "bind address");
  srv->add_option("--port", port, "port")->check(CLI::Range(1, 65535));

  auto* rep = app.add_subcommand("replay", "rebuild a run's final tree from its label log");
  add_common(*rep, common, false);
  rep->add_option("--labels", labels_path, "labels.log")->required();
  rep->add_option("--store", store_path, "trajectory store directory; omit to replay an online run");
  rep->add_option("--expect", expect_path, "tree export the replay must reproduce");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return gen_pilot(common, env_name, episodes);
    if (*off) return run_offline(common, store_path, oracle, scale, k_max);
    if (*on) return run_online(common, online, oracle, scale);
    if (*exp) return export_artifact(common, run_path, what, version, d1, d2);
    if (*srv) return serve_runs(common, host, port);
    if (*rep) return replay(common, labels_path, store_path, expect_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kBadConfig;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInputError;
  } catch (const MismatchError& e) {
    std::fprintf(stderr, "mismatch: %s\n", e.what());
    return kMismatch;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return kRunFailed;
  }
  return kUsage;
}
