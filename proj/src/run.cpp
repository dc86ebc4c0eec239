#include "arbor/run.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "arbor/growth.hpp"
#include "arbor/sampler.hpp"

namespace arbor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSamplerStream = 1;
constexpr std::uint64_t kAgentStream = 3;
constexpr std::uint64_t kEvaluationStream = 4;
constexpr std::size_t kEvaluationEpisodes = 50;
constexpr std::size_t kReportedEpisodes = 10;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RunConfig checked(RunConfig config) {
  const auto errors = validate_config(config);
  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) joined += (joined.empty() ? "" : "; ") + e;
    throw std::invalid_argument("invalid config: " + joined);
  }
  return config;
}

RewardTree initial_tree(const TrajectoryStore& pool) {
  RewardTree tree(pool.dims());
  tree.set_masses(std::vector<double>{static_cast<double>(pool.size() * pool.horizon())});
  return tree;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string to_string(RunMode mode) { return mode == RunMode::kOffline ? "offline" : "online"; }

RunMode run_mode_from_string(const std::string& name) {
  if (name == "offline") return RunMode::kOffline;
  if (name == "online") return RunMode::kOnline;
  throw std::invalid_argument("unknown run mode: " + name);
}

Run::Run(RunConfig config, std::shared_ptr<const Environment> env, TrajectoryStore pool)
    : mode_(RunMode::kOffline),
      config_(checked(std::move(config))),
      env_(std::move(env)),
      pool_(std::move(pool)),
      episodes_(empty_store(*env_)),
      dataset_(config_.epsilon),
      agent_(env_->spec(), config_.agent),
      agent_total_(config_.agent_episodes),
      sampler_rng_(config_.seed, kSamplerStream),
      agent_rng_(config_.seed, kAgentStream) {
  const auto& spec = env_->spec();
  if (pool_.horizon() != spec.horizon || pool_.state_dims() != spec.state_dims ||
      pool_.action_dims() != spec.action_dims) {
    throw std::invalid_argument("trajectory store does not match environment " + spec.name);
  }
  if (pool_.size() < 2) throw std::invalid_argument("offline run needs at least two trajectories");
  schedule_ = {config_.k_max};
  checkpoints_.push_back(initial_tree(pool_));
  start();
}

Run::Run(RunConfig config, std::shared_ptr<const Environment> env)
    : mode_(RunMode::kOnline),
      config_(checked(std::move(config))),
      env_(std::move(env)),
      pool_(empty_store(*env_)),
      episodes_(empty_store(*env_)),
      dataset_(config_.epsilon),
      agent_(env_->spec(), config_.agent),
      agent_total_(config_.n_max + config_.n_post_fix),
      sampler_rng_(config_.seed, kSamplerStream),
      agent_rng_(config_.seed, kAgentStream) {
  schedule_ = batch_schedule(config_.f_l, config_.n_max, config_.k_max);
  checkpoints_.push_back(initial_tree(pool_));
  start();
}

void Run::start() {
  if (mode_ == RunMode::kOnline) train_episodes(config_.f_l, false);
  batch_ = 1;
  begin_batch();
  advance();
}

void Run::begin_batch() {
  batch_spent_ = 0;
  ucb_ = ucb_fitness(feature_counts(tree(), pool_), tree().means(), tree().variances(), config_.lambda);
}

bool Run::sample_pending() {
  const auto psi = mode_ == RunMode::kOffline ? offline_weights(ucb_, dataset_)
                                              : online_weights(ucb_, dataset_, batch_, config_.f_l);
  if (!psi) return false;
  const auto [i, j] = sample_pair(*psi, sampler_rng_);
  pending_ = PendingQuery{labels_.size(), i, j, batch_, make_nonce(labels_.size(), i, j)};
  return true;
}

void Run::advance() {
  while (!finished_) {
    if (batch_spent_ < schedule_[batch_ - 1]) {
      if (sample_pending()) return;
      ++exhausted_batches_;
      log_.push_back("batch " + std::to_string(batch_) + " ran out of eligible pairs after " +
                     std::to_string(batch_spent_) + " labels");
    }
    if (since_update_ > 0) model_update();
    if (mode_ == RunMode::kOffline) {
      train_episodes(agent_total_, true);
      finish();
      return;
    }
    if (batch_ < schedule_.size()) {
      train_episodes(config_.f_l, false);
      ++batch_;
      begin_batch();
      continue;
    }
    train_episodes(config_.n_post_fix, true);
    finish();
  }
}

void Run::submit(double y, std::int64_t timestamp_ms, const std::string& source) {
  if (!pending_) throw std::logic_error("no pair is awaiting a label");
  if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("label outside [0, 1]");
  record_label(pending_->i, pending_->j, y, timestamp_ms, source);
}

void Run::submit_pair(std::size_t i, std::size_t j, double y, std::int64_t timestamp_ms,
                      const std::string& source) {
  if (finished_ || !pending_) throw std::logic_error("run is not accepting labels");
  if (i >= pool_.size() || j >= pool_.size()) throw std::out_of_range("label refers to an unknown trajectory");
  if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("label outside [0, 1]");
  record_label(i, j, y, timestamp_ms, source);
}

void Run::record_label(std::size_t i, std::size_t j, double y, std::int64_t timestamp_ms,
                       const std::string& source) {
  y = std::clamp(y, config_.epsilon, 1.0 - config_.epsilon);
  dataset_.append(i, j, y);
  labels_.push_back({labels_.size(), i, j, y, timestamp_ms, source});
  pending_.reset();
  ++batch_spent_;
  ++since_update_;
  if (observer_) observer_->on_label(*this, labels_.back());
  if (batch_spent_ % config_.f_u == 0) model_update();
  advance();
}

void Run::model_update() {
  since_update_ = 0;
  FitnessEstimate fitness;
  try {
    fitness = solve_fitness(dataset_);
  } catch (const DisconnectedComparisonsError& e) {
    log_.push_back(std::string("update skipped: ") + e.what());
    return;
  }
  fitness_ = std::move(fitness);

  const RewardTree& previous = tree();
  const RewardTree start = config_.regrow_from_scratch ? RewardTree(pool_.dims()) : previous;
  const auto grown = grow(start, pool_, dataset_, fitness_, {config_.m_max, config_.threshold_mode});
  auto loss = sweep_losses(grown.history, pool_, dataset_, config_.variance_floor);
  const double alpha = config_.alpha ? *config_.alpha : 0.05 * loss.front() / static_cast<double>(config_.m_max);
  auto pruned = choose_size(grown.history, pool_, std::move(loss), alpha);

  RewardTree next = pruned.tree;
  const auto counts = feature_counts(next, pool_);
  install_components(next, fit_components(counts, fitness_, pool_.horizon()), counts);

  TimelineRecord rec;
  rec.version = checkpoints_.size();
  rec.batch = batch_;
  rec.batch_labels = schedule_[batch_ - 1];
  rec.labels = labels_.size();
  rec.alpha = alpha;
  rec.loss = std::move(pruned.loss);
  rec.regularized = std::move(pruned.regularized);
  rec.chosen_m = pruned.best_m;
  rec.mean = next.means();
  rec.variance = next.variances();
  rec.lineage = lineage(previous, next, pool_);
  timeline_.push_back(std::move(rec));
  checkpoints_.push_back(std::move(next));

  ucb_ = ucb_fitness(counts, tree().means(), tree().variances(), config_.lambda);
  if (observer_) observer_->on_update(*this);
}

void Run::train_episodes(std::size_t count, bool reward_fixed) {
  const RewardFn reward = tree_reward(tree());
  for (std::size_t e = 0; e < count; ++e) {
    const std::size_t index = traces_.size();
    auto ep = agent_.run_episode(*env_, reward, agent_.exploration(index, agent_total_), true, agent_rng_);
    ep.trajectory.id = "e" + std::to_string(index);
    ep.trajectory.source = TrajectorySource::kPbrlAgent;
    ep.trajectory.episode_index = index;
    if (mode_ == RunMode::kOnline && !reward_fixed) pool_.append(ep.trajectory);
    episodes_.append(std::move(ep.trajectory));
    traces_.push_back({index, version(), reward_fixed, ep.return_learnt, ep.return_ground_truth});
  }
}

void Run::finish() {
  CountingRng rng(config_.seed, kEvaluationStream);
  evaluation_ = evaluate(agent_, *env_, tree_reward(tree()), kEvaluationEpisodes, rng);
  finished_ = true;
  pending_.reset();
  if (observer_) observer_->on_finish(*this);
}

std::string Run::make_nonce(std::size_t k, std::size_t i, std::size_t j) const {
  std::uint64_t h = splitmix(config_.seed);
  for (std::uint64_t v : {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(j)}) {
    h = splitmix(h ^ v);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> Run::learnt_fitness(std::size_t version) const {
  const RewardTree& t = checkpoints_.at(version);
  const auto counts = feature_counts(t, pool_);
  const auto means = t.means();
  std::vector<double> out(pool_.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t x = 0; x < means.size(); ++x) out[i] += static_cast<double>(counts(x, i)) * means[x];
  }
  return out;
}

std::vector<double> Run::pool_ground_truth() const {
  std::vector<double> out;
  out.reserve(pool_.size());
  for (const auto& t : pool_.trajectories()) out.push_back(ground_truth_fitness(*env_, t));
  return out;
}

void drive_with_oracle(Run& run, CountingRng& rng) {
  const auto& env = run.environment();
  while (const auto q = run.next_query()) {
    const double fi = ground_truth_fitness(env, run.pool()[q->i]);
    const double fj = ground_truth_fitness(env, run.pool()[q->j]);
    const double y = oracle_label(fi, fj, run.config().oracle, run.config().epsilon, rng);
    run.submit(y, now_ms(), "oracle:" + q->nonce);
  }
}

Run replay_labels(const RunConfig& config, std::shared_ptr<const Environment> env, TrajectoryStore pool,
                  const std::vector<LabelRecord>& labels) {
  Run run(config, std::move(env), std::move(pool));
  for (const auto& rec : labels) run.submit_pair(rec.i, rec.j, rec.y, rec.timestamp_ms, rec.source);
  return run;
}

Run replay_labels(const RunConfig& config, std::shared_ptr<const Environment> env,
                  const std::vector<LabelRecord>& labels) {
  Run run(config, std::move(env));
  for (const auto& rec : labels) run.submit_pair(rec.i, rec.j, rec.y, rec.timestamp_ms, rec.source);
  return run;
}

ReportCard report_card(const RewardTree& tree, const Trajectory& trajectory,
                       const std::vector<std::string>& names) {
  std::vector<std::size_t> steps(tree.leaf_count(), 0);
  for (const auto& sa : trajectory.steps) ++steps[tree.assign_leaf(sa)];
  const auto rules = to_dnf(tree);
  ReportCard card;
  card.episode = trajectory.episode_index;
  for (std::size_t x = 0; x < steps.size(); ++x) {
    if (steps[x] == 0) continue;
    const double mean = tree.leaves()[x].mean;
    card.entries.push_back({x, rules[x].condition(names), mean, steps[x], static_cast<double>(steps[x]) * mean});
  }
  std::stable_sort(card.entries.begin(), card.entries.end(),
                   [](const ReportEntry& a, const ReportEntry& b) { return a.timesteps > b.timesteps; });
  for (const auto& e : card.entries) card.learnt_return += e.contribution;
  return card;
}

ReportCard report_card(const Run& run, std::size_t episode) {
  if (episode >= run.traces().size()) throw std::out_of_range("no such episode: " + std::to_string(episode));
  const auto& trace = run.traces()[episode];
  ReportCard card = report_card(run.checkpoints()[trace.tree_version], run.episodes()[episode],
                                run.environment().spec().names);
  card.tree_version = trace.tree_version;
  card.ground_truth_return = trace.return_ground_truth;
  return card;
}

std::string ReportCard::text() const {
  std::ostringstream out;
  out.precision(6);
  out << "Episode " << episode << " (tree v" << tree_version << "): learnt return " << learnt_return
      << ", ground-truth return " << ground_truth_return << "\n";
  for (const auto& e : entries) {
    out << "  component " << e.leaf + 1 << ": " << e.timesteps << " steps x mean " << e.mean << " = "
        << e.contribution << "  [" << e.rule << "]\n";
  }
  return out.str();
}

json report_to_json(const ReportCard& card) {
  json entries = json::array();
  for (const auto& e : card.entries) {
    entries.push_back({{"component", e.leaf + 1},
                       {"rule", e.rule},
                       {"mean", e.mean},
                       {"timesteps", e.timesteps},
                       {"contribution", e.contribution}});
  }
  return {{"format", "arbor.report/1"},
          {"episode", card.episode},
          {"tree_version", card.tree_version},
          {"learnt_return", card.learnt_return},
          {"ground_truth_return", card.ground_truth_return},
          {"components", std::move(entries)},
          {"text", card.text()}};
}

json timeline_to_json(const Run& run) {
  json records = json::array();
  for (const auto& r : run.timeline()) {
    json edges = json::array();
    for (const auto& e : r.lineage) edges.push_back({{"from", e.from + 1}, {"to", e.to + 1}, {"mass", e.mass}});
    records.push_back({{"version", r.version},
                       {"batch", r.batch},
                       {"batch_labels", r.batch_labels},
                       {"labels", r.labels},
                       {"alpha", r.alpha},
                       {"loss", r.loss},
                       {"regularized_loss", r.regularized},
                       {"chosen_m", r.chosen_m},
                       {"mean", r.mean},
                       {"variance", r.variance},
                       {"lineage", std::move(edges)}});
  }
  return {{"format", "arbor.timeline/1"},
          {"mode", to_string(run.mode())},
          {"batches_completed", run.finished() ? run.batch_count() : run.batch() - 1},
          {"batch_count", run.batch_count()},
          {"records", std::move(records)}};
}

json traces_to_json(const Run& run, std::optional<std::size_t> version) {
  const std::size_t v = version.value_or(run.version());
  if (v > run.version()) throw std::out_of_range("no such tree version: " + std::to_string(v));
  const RewardTree& tree = run.checkpoints()[v];
  const auto means = tree.means();

  json episodes = json::array();
  for (const auto& t : run.traces()) {
    episodes.push_back({{"episode", t.episode},
                        {"tree_version", t.tree_version},
                        {"reward_fixed", t.reward_fixed},
                        {"return_learnt", t.return_learnt},
                        {"return_ground_truth", t.return_ground_truth}});
  }
  const auto counts = feature_counts(tree, run.episodes());
  json occupancy = json::array();
  json contributions = json::array();
  for (std::size_t e = 0; e < counts.trajectories(); ++e) {
    std::vector<long> n(means.size());
    std::vector<double> c(means.size());
    for (std::size_t x = 0; x < means.size(); ++x) {
      n[x] = counts(x, e);
      c[x] = static_cast<double>(n[x]) * means[x];
    }
    occupancy.push_back(n);
    contributions.push_back(c);
  }
  const auto learnt = run.learnt_fitness(v);
  const auto truth = run.pool_ground_truth();
  json pool = json::array();
  for (std::size_t i = 0; i < learnt.size(); ++i) {
    pool.push_back({{"index", i}, {"learnt", learnt[i]}, {"ground_truth", truth[i]}});
  }
  return {{"format", "arbor.traces/1"},
          {"episodes", std::move(episodes)},
          {"decomposed",
           {{"tree_version", v},
            {"component_means", means},
            {"occupancy", std::move(occupancy)},
            {"contributions", std::move(contributions)}}},
          {"pool_fitness", {{"tree_version", v}, {"trajectories", std::move(pool)}}}};
}

json manifest_to_json(const Run& run) {
  json doc;
  doc["format"] = "arbor.run/1";
  doc["mode"] = to_string(run.mode());
  doc["status"] = run.finished() ? "complete" : "labelling";
  doc["config"] = config_to_json(run.config());
  doc["environment"] = environment_to_json(run.environment());
  doc["environment_hash"] = environment_hash(run.environment());
  doc["labels_spent"] = run.labels_spent();
  doc["tree_version"] = run.version();
  doc["tree_leaves"] = run.tree().leaf_count();
  doc["batch"] = run.batch();
  doc["batch_count"] = run.batch_count();
  doc["exhausted_batches"] = run.exhausted_batches();
  doc["pool_size"] = run.pool().size();
  doc["agent_episodes"] = run.episodes().size();
  if (const auto& ev = run.evaluation()) {
    doc["evaluation"] = {{"episodes", ev->ground_truth.returns.size()},
                         {"mean_learnt", ev->learnt.mean},
                         {"mean_ground_truth", ev->ground_truth.mean},
                         {"min_ground_truth", ev->ground_truth.min},
                         {"max_ground_truth", ev->ground_truth.max}};
  }
  doc["log"] = run.log();
  return doc;
}

RunDirectory::RunDirectory(fs::path dir, bool fresh) : dir_(std::move(dir)) {
  fs::create_directories(dir_ / "checkpoints");
  fs::create_directories(dir_ / "reports");
  if (fresh || !fs::exists(dir_ / "labels.log")) write_text(dir_ / "labels.log", "");
}

void RunDirectory::write_checkpoint(const Run& run, std::size_t version) const {
  write_text(dir_ / "checkpoints" / ("tree-v" + std::to_string(version) + ".json"),
             tree_to_json(run.checkpoints()[version], run.environment().spec().names, version).dump(2) + "\n");
}

void RunDirectory::write_manifest(const Run& run) const {
  write_text(dir_ / "manifest.json", manifest_to_json(run).dump(2) + "\n");
}

void RunDirectory::write_all(const Run& run) const {
  write_manifest(run);
  save_environment(run.environment(), dir_);
  save_store(run.pool(), dir_ / "trajectories");
  save_store(run.episodes(), dir_ / "episodes");
  std::string log;
  for (const auto& rec : run.labels()) log += format_label_record(rec) + "\n";
  write_text(dir_ / "labels.log", log);
  for (std::size_t v = 0; v <= run.version(); ++v) write_checkpoint(run, v);
  write_text(dir_ / "timeline.json", timeline_to_json(run).dump(2) + "\n");
  write_text(dir_ / "traces.json", traces_to_json(run).dump() + "\n");
  const std::size_t n = run.traces().size();
  for (std::size_t e = n - std::min(n, kReportedEpisodes); e < n; ++e) {
    const auto card = report_card(run, e);
    write_text(dir_ / "reports" / ("episode-" + std::to_string(e) + ".json"), report_to_json(card).dump(2) + "\n");
    write_text(dir_ / "reports" / ("episode-" + std::to_string(e) + ".txt"), card.text());
  }
}

void RunDirectory::on_label(const Run&, const LabelRecord& record) {
  append_label_record(dir_ / "labels.log", record);
}

void RunDirectory::on_update(const Run& run) {
  write_checkpoint(run, run.version());
  write_text(dir_ / "timeline.json", timeline_to_json(run).dump(2) + "\n");
  write_manifest(run);
}

void RunDirectory::on_finish(const Run& run) { write_all(run); }

void save_environment(const Environment& env, const fs::path& dir) {
  write_text(dir / "environment.json", environment_to_json(env).dump(2) + "\n");
}

std::unique_ptr<Environment> load_environment(const fs::path& dir) {
  if (!fs::exists(dir / "environment.json")) return nullptr;
  return environment_from_json(json::parse(read_text(dir / "environment.json")));
}

std::unique_ptr<Run> resume_run(const fs::path& dir) {
  const json manifest = json::parse(read_text(dir / "manifest.json"));
  if (manifest.value("format", "") != "arbor.run/1") throw std::runtime_error("not a run directory: " + dir.string());
  const RunConfig config = config_from_json(manifest.at("config"));
  std::shared_ptr<const Environment> env = load_environment(dir);
  if (!env) throw std::runtime_error("run directory lacks environment.json");
  if (environment_hash(*env) != manifest.at("environment_hash").get<std::string>()) {
    throw std::runtime_error("environment does not match the hash recorded in the manifest");
  }
  std::unique_ptr<Run> run;
  if (run_mode_from_string(manifest.at("mode").get<std::string>()) == RunMode::kOffline) {
    run = std::make_unique<Run>(config, env, load_store(dir / "trajectories"));
  } else {
    run = std::make_unique<Run>(config, env);
  }
  for (const auto& rec : read_label_log(dir / "labels.log")) {
    const auto q = run->next_query();
    if (!q || q->i != rec.i || q->j != rec.j) {
      throw std::runtime_error("label log diverges from re-execution at k = " + std::to_string(rec.k));
    }
    run->submit(rec.y, rec.timestamp_ms, rec.source);
  }
  return run;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t k = 0; k < order.size();) {
    std::size_t end = k;
    while (end + 1 < order.size() && v[order[end + 1]] == v[order[k]]) ++end;
    const double r = 0.5 * static_cast<double>(k + end) + 1.0;
    for (std::size_t q = k; q <= end; ++q) rank[order[q]] = r;
    k = end + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs two equal-length samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    sab += (ra[k] - ma) * (rb[k] - mb);
    saa += (ra[k] - ma) * (ra[k] - ma);
    sbb += (rb[k] - mb) * (rb[k] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace arbor
