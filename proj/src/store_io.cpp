#include "arbor/store_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace arbor {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "store format assumes little-endian");

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void save_store(const TrajectoryStore& store, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "arbor.store/1";
  manifest["n"] = store.size();
  manifest["T"] = store.horizon();
  manifest["D_s"] = store.state_dims();
  manifest["D_a"] = store.action_dims();
  manifest["dimension_names"] = store.dimension_names();
  json items = json::array();
  for (const auto& t : store.trajectories()) {
    items.push_back({{"id", t.id}, {"source", to_string(t.source)}, {"episode_index", t.episode_index}});
  }
  manifest["trajectories"] = std::move(items);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream out(dir / "data.bin", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / "data.bin").string());
  for (const auto& t : store.trajectories()) {
    for (const auto& step : t.steps) {
      out.write(reinterpret_cast<const char*>(step.data()),
                static_cast<std::streamsize>(step.size() * sizeof(double)));
    }
  }
}

TrajectoryStore load_store(const fs::path& dir) {
  const json manifest = json::parse(read_text(dir / "manifest.json"));
  if (manifest.value("format", "") != "arbor.store/1") {
    throw std::runtime_error("unsupported store format in " + dir.string());
  }
  const auto n = manifest.at("n").get<std::size_t>();
  const auto horizon = manifest.at("T").get<std::size_t>();
  TrajectoryStore store(horizon, manifest.at("D_s").get<std::size_t>(),
                        manifest.at("D_a").get<std::size_t>(),
                        manifest.at("dimension_names").get<std::vector<std::string>>());
  const std::size_t width = store.dims();
  const std::string raw = read_text(dir / "data.bin");
  if (raw.size() != n * horizon * width * sizeof(double)) {
    throw std::runtime_error("data.bin size does not match manifest in " + dir.string());
  }
  const auto& items = manifest.at("trajectories");
  if (items.size() != n) throw std::runtime_error("manifest trajectory count mismatch");
  const char* cursor = raw.data();
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory t;
    t.id = items[i].at("id").get<std::string>();
    t.source = source_from_string(items[i].at("source").get<std::string>());
    t.episode_index = items[i].at("episode_index").get<std::size_t>();
    t.steps.assign(horizon, StateAction(width));
    for (auto& step : t.steps) {
      std::memcpy(step.data(), cursor, width * sizeof(double));
      cursor += width * sizeof(double);
    }
    store.append(std::move(t));
  }
  return store;
}

std::string format_label_record(const LabelRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu %zu %zu %.17g %lld %s", r.k, r.i, r.j, r.y,
                static_cast<long long>(r.timestamp_ms), r.source.c_str());
  return buf;
}

LabelRecord parse_label_record(const std::string& line) {
  std::istringstream in(line);
  LabelRecord r;
  std::string y_text;
  long long ts = 0;
  if (!(in >> r.k >> r.i >> r.j >> y_text >> ts >> r.source)) {
    throw std::runtime_error("malformed label record: " + line);
  }
  r.y = std::strtod(y_text.c_str(), nullptr);
  r.timestamp_ms = ts;
  return r;
}

std::vector<LabelRecord> read_label_log(const fs::path& path) {
  std::vector<LabelRecord> records;
  if (!fs::exists(path)) return records;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    records.push_back(parse_label_record(line));
  }
  return records;
}

void append_label_record(const fs::path& path, const LabelRecord& record) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << format_label_record(record) << '\n';
  out.flush();
}

namespace {

const char* oracle_mode_name(OracleMode m) { return m == OracleMode::kHard ? "hard" : "thurstone"; }

OracleMode oracle_mode_from(const std::string& s) {
  if (s == "hard") return OracleMode::kHard;
  if (s == "thurstone") return OracleMode::kThurstone;
  throw std::invalid_argument("unknown oracle mode: " + s);
}

const char* threshold_mode_name(ThresholdMode m) {
  return m == ThresholdMode::kMidpoint ? "midpoint" : "observed";
}

ThresholdMode threshold_mode_from(const std::string& s) {
  if (s == "midpoint") return ThresholdMode::kMidpoint;
  if (s == "observed") return ThresholdMode::kObserved;
  throw std::invalid_argument("unknown threshold mode: " + s);
}

template <typename T>
void take(const json& doc, const char* key, T& field) {
  if (auto it = doc.find(key); it != doc.end()) field = it->get<T>();
}

void reject_unknown(const json& doc, std::initializer_list<const char*> known, const char* where) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    bool found = false;
    for (const char* k : known) found = found || it.key() == k;
    if (!found) throw std::invalid_argument(std::string("unknown ") + where + " key: " + it.key());
  }
}

}  // namespace

json config_to_json(const RunConfig& c) {
  json doc;
  doc["environment"] = c.environment;
  doc["epsilon"] = c.epsilon;
  doc["lambda"] = c.lambda;
  doc["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
  doc["m_max"] = c.m_max;
  doc["f_l"] = c.f_l;
  doc["f_u"] = c.f_u;
  doc["k_max"] = c.k_max;
  doc["n_max"] = c.n_max;
  doc["n_post_fix"] = c.n_post_fix;
  doc["agent_episodes"] = c.agent_episodes;
  doc["seed"] = c.seed;
  doc["variance_floor"] = c.variance_floor;
  doc["threshold_mode"] = threshold_mode_name(c.threshold_mode);
  doc["regrow_from_scratch"] = c.regrow_from_scratch;
  doc["oracle"] = {{"mode", oracle_mode_name(c.oracle.mode)},
                   {"scale", c.oracle.scale},
                   {"stochastic", c.oracle.stochastic}};
  doc["agent"] = {{"state_bins", c.agent.state_bins},
                  {"action_levels", c.agent.action_levels},
                  {"learning_rate", c.agent.learning_rate},
                  {"discount", c.agent.discount},
                  {"explore_start", c.agent.explore_start},
                  {"explore_end", c.agent.explore_end},
                  {"explore_decay_episodes", c.agent.explore_decay_episodes},
                  {"explore_persistence",
                   c.agent.explore_persistence ? json(*c.agent.explore_persistence) : json(nullptr)}};
  return doc;
}

RunConfig config_from_json(const json& doc, RunConfig c) {
  reject_unknown(doc,
                 {"environment", "epsilon", "lambda", "alpha", "m_max", "f_l", "f_u", "k_max",
                  "n_max", "n_post_fix", "agent_episodes", "seed", "variance_floor",
                  "threshold_mode", "regrow_from_scratch", "oracle", "agent"},
                 "config");
  take(doc, "environment", c.environment);
  take(doc, "epsilon", c.epsilon);
  take(doc, "lambda", c.lambda);
  if (auto it = doc.find("alpha"); it != doc.end()) {
    c.alpha = it->is_null() ? std::nullopt : std::optional<double>(it->get<double>());
  }
  take(doc, "m_max", c.m_max);
  take(doc, "f_l", c.f_l);
  take(doc, "f_u", c.f_u);
  take(doc, "k_max", c.k_max);
  take(doc, "n_max", c.n_max);
  take(doc, "n_post_fix", c.n_post_fix);
  take(doc, "agent_episodes", c.agent_episodes);
  take(doc, "seed", c.seed);
  take(doc, "variance_floor", c.variance_floor);
  take(doc, "regrow_from_scratch", c.regrow_from_scratch);
  if (auto it = doc.find("threshold_mode"); it != doc.end()) {
    c.threshold_mode = threshold_mode_from(it->get<std::string>());
  }
  if (auto it = doc.find("oracle"); it != doc.end()) {
    reject_unknown(*it, {"mode", "scale", "stochastic"}, "oracle");
    if (auto m = it->find("mode"); m != it->end()) c.oracle.mode = oracle_mode_from(m->get<std::string>());
    take(*it, "scale", c.oracle.scale);
    take(*it, "stochastic", c.oracle.stochastic);
  }
  if (auto it = doc.find("agent"); it != doc.end()) {
    reject_unknown(*it,
                   {"state_bins", "action_levels", "learning_rate", "discount", "explore_start",
                    "explore_end", "explore_decay_episodes", "explore_persistence"},
                   "agent");
    take(*it, "state_bins", c.agent.state_bins);
    take(*it, "action_levels", c.agent.action_levels);
    take(*it, "learning_rate", c.agent.learning_rate);
    take(*it, "discount", c.agent.discount);
    take(*it, "explore_start", c.agent.explore_start);
    take(*it, "explore_end", c.agent.explore_end);
    take(*it, "explore_decay_episodes", c.agent.explore_decay_episodes);
    if (auto p = it->find("explore_persistence"); p != it->end()) {
      c.agent.explore_persistence = p->is_null() ? std::nullopt : std::optional<double>(p->get<double>());
    }
  }
  return c;
}

}  // namespace arbor
