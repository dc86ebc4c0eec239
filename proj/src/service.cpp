#include "arbor/service.hpp"

#include <charconv>
#include <chrono>
#include <regex>
#include <stdexcept>

#include "httplib.h"

namespace arbor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Service::Reply error(int status, const std::string& message) { return {status, {{"error", message}}}; }

Service::Reply not_found(const std::string& what) { return error(404, what + " not found"); }

std::optional<std::size_t> parse_index(const std::string& text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

bool valid_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, pattern);
}

json trajectory_payload(const TrajectoryStore& store, std::size_t index) {
  const auto& t = store[index];
  return {{"index", index},
          {"id", t.id},
          {"source", to_string(t.source)},
          {"episode_index", t.episode_index},
          {"steps", t.steps}};
}

json environment_payload(const Environment& env) {
  const auto& spec = env.spec();
  json ranges = json::array();
  for (const auto& [lo, hi] : spec.ranges) ranges.push_back({lo, hi});
  json doc = environment_to_json(env);
  doc["state_dims"] = spec.state_dims;
  doc["action_dims"] = spec.action_dims;
  doc["horizon"] = spec.horizon;
  doc["dimension_names"] = spec.names;
  doc["ranges"] = std::move(ranges);
  return doc;
}

json summary(const std::string& id, const Run& run) {
  return {{"id", id},
          {"mode", to_string(run.mode())},
          {"status", run.finished() ? "complete" : "labelling"},
          {"labels_spent", run.labels_spent()},
          {"k_max", run.config().k_max},
          {"tree_version", run.version()},
          {"batch", run.batch()},
          {"batch_count", run.batch_count()}};
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Service::Service(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  for (const auto& item : fs::directory_iterator(root_)) {
    if (!item.is_directory() || !fs::exists(item.path() / "manifest.json")) continue;
    const std::string id = item.path().filename().string();
    auto run = resume_run(item.path());
    auto dir = std::make_unique<RunDirectory>(item.path(), false);
    register_run(id, std::move(run), std::move(dir));
  }
}

Service::~Service() = default;

std::string Service::register_run(std::string id, std::unique_ptr<Run> run, std::unique_ptr<RunDirectory> dir) {
  auto entry = std::make_shared<Entry>();
  entry->run = std::move(run);
  entry->directory = std::move(dir);
  entry->run->set_observer(entry->directory.get());
  entry->directory->write_all(*entry->run);
  std::lock_guard lock(runs_mutex_);
  if (id.empty()) {
    do {
      id = "run-" + std::to_string(next_id_++);
    } while (runs_.count(id) || fs::exists(root_ / id));
  }
  runs_[id] = std::move(entry);
  return id;
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
  std::lock_guard lock(runs_mutex_);
  auto it = runs_.find(id);
  return it == runs_.end() ? nullptr : it->second;
}

Service::Reply Service::list_runs() {
  std::map<std::string, std::shared_ptr<Entry>> snapshot;
  {
    std::lock_guard lock(runs_mutex_);
    snapshot = runs_;
  }
  json items = json::array();
  for (const auto& [id, entry] : snapshot) {
    std::lock_guard lock(entry->mutex);
    items.push_back(summary(id, *entry->run));
  }
  return {200, {{"runs", std::move(items)}}};
}

Service::Reply Service::create_run(const json& body) {
  if (!body.is_object()) return error(400, "request body must be a JSON object");
  std::string id = body.value("id", "");
  if (!id.empty() && !valid_id(id)) return error(400, "invalid run id");
  {
    std::lock_guard lock(runs_mutex_);
    if (!id.empty() && (runs_.count(id) || fs::exists(root_ / id))) return error(409, "run id already exists");
    if (id.empty()) {
      while (runs_.count("run-" + std::to_string(next_id_)) || fs::exists(root_ / ("run-" + std::to_string(next_id_)))) {
        ++next_id_;
      }
      id = "run-" + std::to_string(next_id_++);
    }
  }
  try {
    const RunConfig config = config_from_json(body.value("config", json::object()));
    const auto mode = run_mode_from_string(body.value("mode", "online"));
    std::unique_ptr<Run> run;
    if (mode == RunMode::kOffline) {
      if (!body.contains("store")) return error(400, "offline runs need a store path");
      const fs::path store_dir = body.at("store").get<std::string>();
      std::shared_ptr<const Environment> env = load_environment(store_dir);
      if (!env) env = make_environment(config.environment);
      if (env->spec().name != config.environment) {
        return error(400, "store environment " + env->spec().name + " does not match config " + config.environment);
      }
      run = std::make_unique<Run>(config, env, load_store(store_dir));
    } else {
      run = std::make_unique<Run>(config, std::shared_ptr<const Environment>(make_environment(config.environment)));
    }
    auto dir = std::make_unique<RunDirectory>(root_ / id, true);
    register_run(id, std::move(run), std::move(dir));
  } catch (const std::exception& e) {
    return error(400, e.what());
  }
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return {201, summary(id, *entry->run)};
}

Service::Reply Service::run_manifest(const std::string& id) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  std::lock_guard lock(entry->mutex);
  json doc = manifest_to_json(*entry->run);
  doc["id"] = id;
  return {200, std::move(doc)};
}

Service::Reply Service::next_pair(const std::string& id) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  if (entry->busy) return {200, {{"status", "paused"}}};
  std::lock_guard lock(entry->mutex);
  const Run& run = *entry->run;
  const auto q = run.next_query();
  if (!q) {
    return {200,
            {{"status", "exhausted"},
             {"labels_spent", run.labels_spent()},
             {"tree_version", run.version()},
             {"finished", run.finished()}}};
  }
  const std::size_t quota = run.schedule()[q->batch - 1];
  return {200,
          {{"status", "pending"},
           {"nonce", q->nonce},
           {"k", q->k},
           {"epsilon", run.config().epsilon},
           {"tree_version", run.version()},
           {"batch", {{"b", q->batch}, {"of", run.batch_count()}, {"k_b", quota},
                      {"spent", run.batch_spent()}, {"remaining", quota - run.batch_spent()}}},
           {"trajectory_i", trajectory_payload(run.pool(), q->i)},
           {"trajectory_j", trajectory_payload(run.pool(), q->j)},
           {"environment", environment_payload(run.environment())}}};
}

Service::Reply Service::submit_label(const std::string& id, const json& body) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  if (!body.is_object() || !body.contains("nonce") || !body.contains("y") || !body["nonce"].is_string() ||
      !body["y"].is_number()) {
    return error(400, "body must carry a string nonce and a numeric y");
  }
  const std::string nonce = body["nonce"].get<std::string>();
  const double y = body["y"].get<double>();
  std::lock_guard lock(entry->mutex);
  Run& run = *entry->run;
  const auto q = run.next_query();
  if (!q || q->nonce != nonce) return {409, {{"status", "rejected"}, {"reason", "stale nonce"}}};
  if (!(y >= 0.0 && y <= 1.0)) return {422, {{"status", "rejected"}, {"reason", "y outside [0, 1]"}}};
  entry->busy = true;
  try {
    run.submit(y, now_ms(), "human:" + nonce);
  } catch (const std::exception& e) {
    entry->busy = false;
    return error(500, e.what());
  }
  entry->busy = false;
  const auto& rec = run.labels().back();
  return {200,
          {{"status", "accepted"},
           {"k", rec.k},
           {"y", rec.y},
           {"labels_spent", run.labels_spent()},
           {"tree_version", run.version()},
           {"finished", run.finished()}}};
}

Service::Reply Service::tree(const std::string& id, std::optional<std::string> version) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  std::lock_guard lock(entry->mutex);
  const Run& run = *entry->run;
  std::size_t v = run.version();
  if (version) {
    const auto parsed = parse_index(*version);
    if (!parsed) return error(400, "version must be a non-negative integer");
    if (*parsed > run.version()) return not_found("tree version " + *version);
    v = *parsed;
  }
  return {200, tree_to_json(run.checkpoints()[v], run.environment().spec().names, v)};
}

Service::Reply Service::timeline(const std::string& id) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  std::lock_guard lock(entry->mutex);
  return {200, timeline_to_json(*entry->run)};
}

Service::Reply Service::traces(const std::string& id, std::optional<std::string> version) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  std::lock_guard lock(entry->mutex);
  std::optional<std::size_t> v;
  if (version) {
    v = parse_index(*version);
    if (!v) return error(400, "version must be a non-negative integer");
    if (*v > entry->run->version()) return not_found("tree version " + *version);
  }
  return {200, traces_to_json(*entry->run, v)};
}

Service::Reply Service::rectangles(const std::string& id, std::optional<std::string> d1,
                                   std::optional<std::string> d2, std::optional<std::string> version) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  const auto dx = d1 ? parse_index(*d1) : std::optional<std::size_t>(0);
  const auto dy = d2 ? parse_index(*d2) : std::optional<std::size_t>(1);
  if (!dx || !dy) return error(400, "d1 and d2 must be dimension indices");
  std::lock_guard lock(entry->mutex);
  const Run& run = *entry->run;
  std::size_t v = run.version();
  if (version) {
    const auto parsed = parse_index(*version);
    if (!parsed) return error(400, "version must be a non-negative integer");
    if (*parsed > run.version()) return not_found("tree version " + *version);
    v = *parsed;
  }
  if (*dx == *dy || *dx >= run.pool().dims() || *dy >= run.pool().dims()) {
    return error(400, "d1 and d2 must be two distinct dimensions below " + std::to_string(run.pool().dims()));
  }
  json doc = projection_to_json(rectangle_projection(run.checkpoints()[v], *dx, *dy, run.pool()),
                                run.environment().spec().names);
  doc["tree_version"] = v;
  return {200, std::move(doc)};
}

Service::Reply Service::report(const std::string& id, const std::string& episode) {
  auto entry = find(id);
  if (!entry) return not_found("run " + id);
  const auto e = parse_index(episode);
  if (!e) return error(400, "episode must be a non-negative integer");
  std::lock_guard lock(entry->mutex);
  if (*e >= entry->run->traces().size()) return not_found("episode " + episode);
  return {200, report_to_json(report_card(*entry->run, *e))};
}

void Service::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  auto param = [](const httplib::Request& req, const char* key) -> std::optional<std::string> {
    if (!req.has_param(key)) return std::nullopt;
    return req.get_param_value(key);
  };
  auto parse_body = [](const httplib::Request& req) {
    return json::parse(req.body, nullptr, false);
  };

  server.Get("/v1/runs", [=, this](const httplib::Request&, httplib::Response& res) { send(res, list_runs()); });
  server.Post("/v1/runs", [=, this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    send(res, body.is_discarded() ? error(400, "malformed JSON") : create_run(body));
  });
  server.Get(R"(/v1/runs/([A-Za-z0-9_-]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, run_manifest(req.matches[1]));
  });
  server.Get(R"(/v1/runs/([A-Za-z0-9_-]+)/pair)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, next_pair(req.matches[1]));
  });
  server.Post(R"(/v1/runs/([A-Za-z0-9_-]+)/label)", [=, this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    send(res, body.is_discarded() ? error(400, "malformed JSON") : submit_label(req.matches[1], body));
  });
  server.Get(R"(/v1/runs/([A-Za-z0-9_-]+)/tree)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, tree(req.matches[1], param(req, "version")));
  });
  server.Get(R"(/v1/runs/([A-Za-z0-9_-]+)/timeline)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, timeline(req.matches[1]));
  });
  server.Get(R"(/v1/runs/([A-Za-z0-9_-]+)/traces)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, traces(req.matches[1], param(req, "version")));
  });
  server.Get(R"(/v1/runs/([A-Za-z0-9_-]+)/rectangles)", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, rectangles(req.matches[1], param(req, "d1"), param(req, "d2"), param(req, "version")));
  });
  server.Get(R"(/v1/runs/([A-Za-z0-9_-]+)/report/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    send(res, report(req.matches[1], req.matches[2]));
  });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    }
    res.status = 500;
    res.set_content(json{{"error", message}}.dump(), "application/json");
  });
}

bool serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  return server.listen(host, port);
}

}  // namespace arbor
