#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "arbor/run.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace arbor {

// HTTP control plane over live runs. Every run lives in its own directory
// under `root`; directories found there at startup are resumed from their
// label logs.
//
// Handlers return a status code and a JSON body so they can be exercised
// without a socket. Label submissions for a run are serialized by that run's
// mutex; while one is being processed (including any model update it
// triggers) next_pair answers "paused".
class Service {
 public:
  struct Reply {
    int status = 200;
    nlohmann::json body;
  };

  explicit Service(std::filesystem::path root);
  ~Service();

  const std::filesystem::path& root() const { return root_; }

  Reply list_runs();
  // Body: {"mode": "online"|"offline", "config": {...}, "store": path (offline),
  // "id": optional}.
  Reply create_run(const nlohmann::json& body);
  Reply run_manifest(const std::string& id);
  Reply next_pair(const std::string& id);
  // Body: {"nonce": string, "y": number}.
  Reply submit_label(const std::string& id, const nlohmann::json& body);
  Reply tree(const std::string& id, std::optional<std::string> version);
  Reply timeline(const std::string& id);
  Reply traces(const std::string& id, std::optional<std::string> version);
  Reply rectangles(const std::string& id, std::optional<std::string> d1, std::optional<std::string> d2,
                   std::optional<std::string> version);
  Reply report(const std::string& id, const std::string& episode);

  // Registers every /v1/ route on `server`.
  void mount(httplib::Server& server);

 private:
  struct Entry {
    std::unique_ptr<Run> run;
    std::unique_ptr<RunDirectory> directory;
    std::mutex mutex;
    std::atomic<bool> busy{false};
  };

  std::shared_ptr<Entry> find(const std::string& id);
  std::string register_run(std::string id, std::unique_ptr<Run> run, std::unique_ptr<RunDirectory> dir);

  std::filesystem::path root_;
  std::mutex runs_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> runs_;
  std::size_t next_id_ = 1;
};

// Blocks serving `service` on host:port until the server is stopped.
bool serve(Service& service, const std::string& host, int port);

}  // namespace arbor
