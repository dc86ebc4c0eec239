#include <atomic>
#include <filesystem>
#include <thread>

#include "arbor/interpret.hpp"
#include "arbor/run.hpp"
#include "arbor/service.hpp"
#include "arbor/store_io.hpp"
#include "doctest.h"
#include "httplib.h"
#include "testkit.hpp"

using namespace arbor;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_root(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("arbor-service-" + name);
  fs::remove_all(dir);
  return dir;
}

const json& online_config() {
  static const json config = {{"n_max", 20}, {"f_l", 10}, {"k_max", 12}, {"n_post_fix", 5}};
  return config;
}

fs::path pilot_store_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "arbor-service-pilot";
    fs::remove_all(d);
    const auto pilot = testkit::foodlava_pilot(0, 40);
    save_store(pilot.store, d);
    save_environment(*make_environment("foodlava"), d);
    return d;
  }();
  return dir;
}

std::string create_online(Service& service, const std::string& id = "") {
  json body = {{"mode", "online"}, {"config", online_config()}};
  if (!id.empty()) body["id"] = id;
  const auto reply = service.create_run(body);
  REQUIRE(reply.status == 201);
  return reply.body.at("id");
}

// Answers pending pairs by preferring the first trajectory until the run
// stops asking.
void answer_all(Service& service, const std::string& id) {
  for (;;) {
    const auto pair = service.next_pair(id);
    if (pair.body.at("status") != "pending") return;
    const auto reply = service.submit_label(id, {{"nonce", pair.body.at("nonce")}, {"y", 0.8}});
    REQUIRE(reply.status == 200);
  }
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("pairs are idempotent until labelled") {
  Service service(fresh_root("pairs"));
  const auto id = create_online(service);
  const auto first = service.next_pair(id);
  const auto again = service.next_pair(id);
  REQUIRE(first.status == 200);
  CHECK(first.body.at("status") == "pending");
  CHECK(first.body.at("nonce") == again.body.at("nonce"));
  CHECK(first.body.at("k") == 0);
  CHECK(first.body.at("epsilon") == 0.1);
  CHECK(first.body.at("batch").at("b") == 1);
  CHECK(first.body.at("batch").at("of") == 2);
  CHECK(first.body.at("environment").at("name") == "foodlava");
  CHECK(first.body.at("environment").at("dimension_names").size() == 4);
  CHECK(first.body.at("trajectory_i").at("steps").size() == 200);
}

TEST_CASE("payload steps match the stored trajectories bit for bit") {
  Service service(fresh_root("payload"));
  const auto id = create_online(service, "exact");
  const auto pair = service.next_pair(id);
  const auto run = resume_run(service.root() / "exact");
  for (const char* side : {"trajectory_i", "trajectory_j"}) {
    const auto& t = pair.body.at(side);
    const auto& stored = run->pool()[t.at("index").get<std::size_t>()];
    CHECK(t.at("id") == stored.id);
    const auto round = json::parse(t.dump());
    CHECK(round.at("steps").get<std::vector<std::vector<double>>>() == stored.steps);
  }
}

TEST_CASE("label submission") {
  Service service(fresh_root("labels"));
  const auto id = create_online(service);
  const auto pair = service.next_pair(id);
  const std::string nonce = pair.body.at("nonce");

  CHECK(service.submit_label(id, {{"nonce", "0000000000000000"}, {"y", 0.5}}).status == 409);
  CHECK(service.submit_label(id, {{"nonce", nonce}, {"y", 1.5}}).status == 422);
  CHECK(service.submit_label(id, {{"nonce", nonce}, {"y", -0.1}}).status == 422);
  CHECK(service.submit_label(id, {{"nonce", nonce}}).status == 400);
  CHECK(service.submit_label(id, {{"y", 0.5}}).status == 400);
  CHECK(service.submit_label(id, json::array()).status == 400);

  const auto accepted = service.submit_label(id, {{"nonce", nonce}, {"y", 0.97}});
  REQUIRE(accepted.status == 200);
  CHECK(accepted.body.at("status") == "accepted");
  CHECK(accepted.body.at("y") == 0.9);
  CHECK(accepted.body.at("labels_spent") == 1);
  const auto replay = service.submit_label(id, {{"nonce", nonce}, {"y", 0.5}});
  CHECK(replay.status == 409);
  CHECK(replay.body.at("reason") == "stale nonce");

  const auto log = read_label_log(service.root() / id / "labels.log");
  REQUIRE(log.size() == 1);
  CHECK(log[0].y == 0.9);
  CHECK(log[0].source == "human:" + nonce);
  CHECK(service.next_pair(id).body.at("nonce") != nonce);
}

TEST_CASE("unknown runs and versions") {
  Service service(fresh_root("unknown"));
  CHECK(service.next_pair("nope").status == 404);
  CHECK(service.submit_label("nope", {{"nonce", "x"}, {"y", 0.5}}).status == 404);
  CHECK(service.tree("nope", std::nullopt).status == 404);
  CHECK(service.run_manifest("nope").status == 404);
  const auto id = create_online(service);
  CHECK(service.tree(id, std::string("7")).status == 404);
  CHECK(service.tree(id, std::string("latest")).status == 400);
  CHECK(service.tree(id, std::string("-1")).status == 400);
  CHECK(service.traces(id, std::string("3")).status == 404);
  CHECK(service.rectangles(id, std::string("0"), std::string("0"), std::nullopt).status == 400);
  CHECK(service.rectangles(id, std::string("0"), std::string("9"), std::nullopt).status == 400);
  CHECK(service.report(id, "0").status == 200);
  CHECK(service.report(id, "100000").status == 404);
  CHECK(service.report(id, "x").status == 400);
  CHECK(service.create_run({{"id", "bad id!"}}).status == 400);
  CHECK(service.create_run({{"id", id}}).status == 409);
  CHECK(service.create_run({{"config", {{"epsilon", 0.9}}}}).status == 400);
  CHECK(service.create_run({{"config", {{"bogus", 1}}}}).status == 400);
  CHECK(service.create_run({{"mode", "offline"}}).status == 400);
}

TEST_CASE("trees, timelines, rectangles and reports") {
  Service service(fresh_root("views"));
  const auto id = create_online(service);
  answer_all(service, id);
  const auto manifest = service.run_manifest(id);
  REQUIRE(manifest.status == 200);
  CHECK(manifest.body.at("status") == "complete");
  CHECK(manifest.body.at("labels_spent") == 12);

  const auto latest = service.tree(id, std::nullopt);
  REQUIRE(latest.status == 200);
  const std::size_t version = latest.body.at("version");
  CHECK(version == manifest.body.at("tree_version").get<std::size_t>());
  const auto run = resume_run(service.root() / id);
  CHECK(tree_from_json(latest.body) == run->tree());
  CHECK(tree_from_json(service.tree(id, std::string("0")).body) == run->checkpoints()[0]);

  const auto timeline = service.timeline(id);
  CHECK(timeline.status == 200);
  const auto traces = service.traces(id, std::nullopt);
  CHECK(traces.status == 200);
  const auto rects = service.rectangles(id, std::nullopt, std::nullopt, std::nullopt);
  REQUIRE(rects.status == 200);
  CHECK(rects.body.at("tree_version") == version);
  const auto report = service.report(id, "24");
  REQUIRE(report.status == 200);
  CHECK(report.body.at("episode") == 24);
  CHECK(report.body.at("learnt_return") == doctest::Approx(report_card(*run, 24).learnt_return));

  const auto done = service.next_pair(id);
  CHECK(done.body.at("status") == "exhausted");
  CHECK(done.body.at("finished") == true);
  CHECK(service.list_runs().body.at("runs").size() == 1);
}

TEST_CASE("offline runs load a stored pool") {
  Service service(fresh_root("offline"));
  const auto reply = service.create_run(
      {{"mode", "offline"}, {"store", pilot_store_dir().string()}, {"config", {{"k_max", 5}, {"agent_episodes", 3}}}});
  REQUIRE(reply.status == 201);
  const std::string id = reply.body.at("id");
  CHECK(reply.body.at("mode") == "offline");
  const auto pair = service.next_pair(id);
  CHECK(pair.body.at("trajectory_i").at("source") == "pilot");
  answer_all(service, id);
  CHECK(service.run_manifest(id).body.at("labels_spent") == 5);
  const auto wrong = service.create_run(
      {{"mode", "offline"}, {"store", pilot_store_dir().string()}, {"config", {{"environment", "pendulum"}}}});
  CHECK(wrong.status == 400);
}

TEST_CASE("concurrent submissions of one nonce accept exactly once") {
  Service service(fresh_root("race"));
  const auto id = create_online(service);
  const std::string nonce = service.next_pair(id).body.at("nonce");
  std::atomic<int> accepted{0}, rejected{0};
  std::vector<std::thread> workers;
  for (int t = 0; t < 8; ++t) {
    workers.emplace_back([&] {
      const auto reply = service.submit_label(id, {{"nonce", nonce}, {"y", 0.3}});
      if (reply.status == 200) ++accepted;
      if (reply.status == 409) ++rejected;
    });
  }
  for (auto& w : workers) w.join();
  CHECK(accepted == 1);
  CHECK(rejected == 7);
  CHECK(service.run_manifest(id).body.at("labels_spent") == 1);
}

TEST_CASE("a restarted service resumes its runs") {
  const auto root = fresh_root("restart");
  std::string id;
  json before;
  {
    Service service(root);
    id = create_online(service);
    for (int k = 0; k < 5; ++k) {
      const auto pair = service.next_pair(id);
      service.submit_label(id, {{"nonce", pair.body.at("nonce")}, {"y", 0.2}});
    }
    before = service.next_pair(id).body;
  }
  Service restarted(root);
  const auto after = restarted.next_pair(id);
  CHECK(after.body.at("nonce") == before.at("nonce"));
  CHECK(after.body.at("k") == 5);
  CHECK(restarted.run_manifest(id).body.at("labels_spent") == 5);
}

TEST_CASE("the routes answer over HTTP") {
  Service service(fresh_root("http"));
  httplib::Server server;
  service.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const auto created = client.Post("/v1/runs", json{{"mode", "online"}, {"config", online_config()}}.dump(),
                                   "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body).at("id");

  const auto pair = client.Get("/v1/runs/" + id + "/pair");
  REQUIRE(pair);
  CHECK(pair->status == 200);
  const auto nonce = json::parse(pair->body).at("nonce").get<std::string>();
  const auto label = client.Post("/v1/runs/" + id + "/label", json{{"nonce", nonce}, {"y", 0.6}}.dump(),
                                 "application/json");
  REQUIRE(label);
  CHECK(label->status == 200);
  const auto stale = client.Post("/v1/runs/" + id + "/label", json{{"nonce", nonce}, {"y", 0.6}}.dump(),
                                 "application/json");
  REQUIRE(stale);
  CHECK(stale->status == 409);
  const auto malformed = client.Post("/v1/runs/" + id + "/label", "{nope", "application/json");
  REQUIRE(malformed);
  CHECK(malformed->status == 400);

  CHECK(client.Get("/v1/runs/" + id + "/tree")->status == 200);
  CHECK(client.Get("/v1/runs/" + id + "/tree?version=99")->status == 404);
  CHECK(client.Get("/v1/runs/" + id + "/tree?version=abc")->status == 400);
  CHECK(client.Get("/v1/runs/" + id + "/timeline")->status == 200);
  CHECK(client.Get("/v1/runs/" + id + "/traces")->status == 200);
  CHECK(client.Get("/v1/runs/" + id + "/rectangles?d1=0&d2=1")->status == 200);
  CHECK(client.Get("/v1/runs/" + id + "/report/0")->status == 200);
  CHECK(client.Get("/v1/runs/missing/pair")->status == 404);
  const auto listed = client.Get("/v1/runs");
  REQUIRE(listed);
  CHECK(json::parse(listed->body).at("runs").size() == 1);

  server.stop();
  thread.join();
}

}  // TEST_SUITE
