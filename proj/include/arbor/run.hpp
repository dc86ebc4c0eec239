#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arbor/agent.hpp"
#include "arbor/environment.hpp"
#include "arbor/fitness.hpp"
#include "arbor/interpret.hpp"
#include "arbor/reward_tree.hpp"
#include "arbor/store_io.hpp"
#include "arbor/types.hpp"
#include "json.hpp"

namespace arbor {

enum class RunMode { kOffline, kOnline };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

// One model update: the prune sweep that chose the new tree, the components
// it installed and how its leaves descend from the previous tree's.
struct TimelineRecord {
  std::size_t version = 0;
  std::size_t batch = 0;
  std::size_t batch_labels = 0;  // k_b
  std::size_t labels = 0;        // labels spent when the update ran
  double alpha = 0.0;
  std::vector<double> loss;
  std::vector<double> regularized;
  std::size_t chosen_m = 1;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<LineageEdge> lineage;
};

// One PbRL agent episode. `tree_version` is the reward tree it trained on.
struct EpisodeTrace {
  std::size_t episode = 0;
  std::size_t tree_version = 0;
  bool reward_fixed = false;
  double return_learnt = 0.0;
  double return_ground_truth = 0.0;
};

// A pair awaiting its label. Indices refer to the run's pool.
struct PendingQuery {
  std::size_t k = 0;  // position the label will take in the log
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t batch = 0;
  std::string nonce;
};

// A complete preference-elicitation run. Offline runs label a fixed pool and
// then train the PbRL agent on the final tree; online runs grow the pool from
// the PbRL agent's own episodes in batches of f_l, labelling after each,
// then fix the tree for n_post_fix further episodes.
//
// The run pre-samples the next pair as soon as one is needed, so
// next_query() is idempotent. Every other mutation happens inside submit().
class Run {
 public:
  // Offline run over `pool`; config.f_l and config.n_max are ignored.
  Run(RunConfig config, std::shared_ptr<const Environment> env, TrajectoryStore pool);
  // Online run; the pool starts empty.
  Run(RunConfig config, std::shared_ptr<const Environment> env);

  RunMode mode() const { return mode_; }
  const RunConfig& config() const { return config_; }
  const Environment& environment() const { return *env_; }
  std::shared_ptr<const Environment> environment_ptr() const { return env_; }

  const TrajectoryStore& pool() const { return pool_; }
  const TrajectoryStore& episodes() const { return episodes_; }
  const PreferenceDataset& dataset() const { return dataset_; }
  const std::vector<LabelRecord>& labels() const { return labels_; }
  const FitnessEstimate& fitness() const { return fitness_; }
  const RewardTree& tree() const { return checkpoints_.back(); }
  std::size_t version() const { return checkpoints_.size() - 1; }
  const std::vector<RewardTree>& checkpoints() const { return checkpoints_; }
  const std::vector<TimelineRecord>& timeline() const { return timeline_; }
  const std::vector<EpisodeTrace>& traces() const { return traces_; }
  const std::vector<std::string>& log() const { return log_; }

  std::size_t batch() const { return batch_; }
  std::size_t batch_count() const { return schedule_.size(); }
  const std::vector<std::size_t>& schedule() const { return schedule_; }
  std::size_t batch_spent() const { return batch_spent_; }
  std::size_t labels_spent() const { return labels_.size(); }
  // Batches that ran out of eligible pairs before their quota.
  std::size_t exhausted_batches() const { return exhausted_batches_; }
  bool finished() const { return finished_; }
  const std::optional<Evaluation>& evaluation() const { return evaluation_; }

  std::optional<PendingQuery> next_query() const { return pending_; }

  // Labels the pending pair (y is clamped to [epsilon, 1 - epsilon]) and runs
  // whatever work the label unlocks. Throws std::logic_error with no pending
  // pair and std::invalid_argument for y outside [0, 1].
  void submit(double y, std::int64_t timestamp_ms, const std::string& source);

  // Labels an explicit pair instead of the pending one. Used to replay a log
  // recorded under a different sampler.
  void submit_pair(std::size_t i, std::size_t j, double y, std::int64_t timestamp_ms,
                   const std::string& source);

  // Trajectory-level fitness of every pool trajectory under a tree version.
  std::vector<double> learnt_fitness(std::size_t version) const;
  std::vector<double> pool_ground_truth() const;

  // Called after every accepted label and every model update.
  struct Observer {
    virtual ~Observer() = default;
    virtual void on_label(const Run&, const LabelRecord&) {}
    virtual void on_update(const Run&) {}
    virtual void on_finish(const Run&) {}
  };
  void set_observer(Observer* observer) { observer_ = observer; }

 private:
  void start();
  void advance();
  void begin_batch();
  bool sample_pending();
  void model_update();
  void train_episodes(std::size_t count, bool reward_fixed);
  void finish();
  void record_label(std::size_t i, std::size_t j, double y, std::int64_t timestamp_ms,
                    const std::string& source);
  std::string make_nonce(std::size_t k, std::size_t i, std::size_t j) const;

  RunMode mode_;
  RunConfig config_;
  std::shared_ptr<const Environment> env_;
  TrajectoryStore pool_;
  TrajectoryStore episodes_;
  PreferenceDataset dataset_;
  std::vector<LabelRecord> labels_;
  FitnessEstimate fitness_;
  std::vector<RewardTree> checkpoints_;
  std::vector<TimelineRecord> timeline_;
  std::vector<EpisodeTrace> traces_;
  std::vector<std::string> log_;
  std::vector<double> ucb_;

  QAgent agent_;
  std::size_t agent_total_ = 0;
  CountingRng sampler_rng_;
  CountingRng agent_rng_;

  std::vector<std::size_t> schedule_;
  std::size_t batch_ = 0;
  std::size_t batch_spent_ = 0;
  std::size_t since_update_ = 0;
  std::size_t exhausted_batches_ = 0;
  bool finished_ = false;
  std::optional<PendingQuery> pending_;
  std::optional<Evaluation> evaluation_;
  Observer* observer_ = nullptr;
};

// Labels every query with the synthetic oracle until the run finishes.
// Label sources are written as "oracle:<nonce>".
void drive_with_oracle(Run& run, CountingRng& rng);

// Reruns `config` against `labels` (offline, over `pool`), feeding each
// recorded pair verbatim. The final tree equals the recorded run's when the
// config matches.
Run replay_labels(const RunConfig& config, std::shared_ptr<const Environment> env,
                  TrajectoryStore pool, const std::vector<LabelRecord>& labels);
// Online counterpart: the pool is regenerated by the seeded agent.
Run replay_labels(const RunConfig& config, std::shared_ptr<const Environment> env,
                  const std::vector<LabelRecord>& labels);

struct ReportEntry {
  std::size_t leaf = 0;
  std::string rule;
  double mean = 0.0;
  std::size_t timesteps = 0;
  double contribution = 0.0;
};

// Visited components of one trajectory, ordered by time spent (ties by
// component index).
struct ReportCard {
  std::size_t episode = 0;
  std::size_t tree_version = 0;
  double learnt_return = 0.0;
  double ground_truth_return = 0.0;
  std::vector<ReportEntry> entries;

  std::string text() const;
};

ReportCard report_card(const RewardTree& tree, const Trajectory& trajectory,
                       const std::vector<std::string>& names);
// Report for PbRL agent episode `episode`, scored under the tree it trained on.
ReportCard report_card(const Run& run, std::size_t episode);

nlohmann::json report_to_json(const ReportCard& card);
nlohmann::json timeline_to_json(const Run& run);
// Episode traces plus the decomposed learning curve (per-component
// contributions of every agent episode) and learnt-vs-true pool fitness,
// both under `version` (default latest).
nlohmann::json traces_to_json(const Run& run, std::optional<std::size_t> version = std::nullopt);
nlohmann::json manifest_to_json(const Run& run);

// Run directory: manifest.json, environment.json, trajectories/ (the pool),
// episodes/ (agent episodes), labels.log, checkpoints/tree-v{N}.json,
// timeline.json, traces.json, reports/.
//
// Keeps a run directory in step with a live run: labels are appended to
// labels.log as they arrive and checkpoints are written on every update.
class RunDirectory : public Run::Observer {
 public:
  // `fresh` truncates labels.log; otherwise the existing log is kept.
  RunDirectory(std::filesystem::path dir, bool fresh);

  const std::filesystem::path& path() const { return dir_; }
  // Writes every artifact.
  void write_all(const Run& run) const;

  void on_label(const Run& run, const LabelRecord& record) override;
  void on_update(const Run& run) override;
  void on_finish(const Run& run) override;

 private:
  void write_checkpoint(const Run& run, std::size_t version) const;
  void write_manifest(const Run& run) const;

  std::filesystem::path dir_;
};

void save_environment(const Environment& env, const std::filesystem::path& dir);
// Reads environment.json from `dir`, or returns nothing if absent.
std::unique_ptr<Environment> load_environment(const std::filesystem::path& dir);

// Rebuilds a run from its directory by re-executing its label log. Throws if
// the environment hash or any recorded pair disagrees with re-execution.
std::unique_ptr<Run> resume_run(const std::filesystem::path& dir);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace arbor
