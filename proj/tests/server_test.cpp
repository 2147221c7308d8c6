#include <filesystem>
#include <future>

#include <gtest/gtest.h>
#include <httplib.h>

#include "narrative/server.hpp"
#include "support/fixtures.hpp"

using namespace narrative;
using namespace narrative::tests;
using namespace std::chrono_literals;

namespace {

class ApiTest : public ::testing::Test {
 protected:
  void start(LlmGateway& gw, ServerConfig config = {}) {
    service_ = std::make_unique<ApiService>(gw, TemplateSet{}, config);
    server_ = std::make_unique<ApiServer>(*service_);
    int port = server_->bind("127.0.0.1", 0);
    server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
    client_->set_read_timeout(10s);
  }
  void TearDown() override {
    if (server_) server_->stop();
  }

  std::pair<int, json> call(const std::string& method, const std::string& path, const json& body = nullptr) {
    httplib::Result res;
    const std::string payload = body.is_null() ? "" : body.dump();
    if (method == "GET") res = client_->Get(path);
    else if (method == "POST") res = client_->Post(path, payload, "application/json");
    else if (method == "PUT") res = client_->Put(path, payload, "application/json");
    if (!res) return {0, nullptr};
    return {res->status, json::parse(res->body, nullptr, false)};
  }

  std::string create(bool validation_enabled = true) {
    auto [status, body] = call("POST", "/api/v1/sessions",
                               {{"criteria", dark_shadows_criteria()}, {"validation_enabled", validation_enabled}});
    EXPECT_EQ(status, 201) << body.dump();
    return body.value("session_id", "");
  }

  static json free_text(const std::string& text, std::optional<std::string> npc = {}) {
    return {{"input", PlayerInput::free_text(text, std::move(npc)).to_json()}};
  }

  std::unique_ptr<ApiService> service_;
  std::unique_ptr<ApiServer> server_;
  std::unique_ptr<httplib::Client> client_;
};

void expect_error(const std::pair<int, json>& r, int status, const std::string& code) {
  EXPECT_EQ(r.first, status);
  EXPECT_EQ(r.second.value("code", ""), code) << r.second.dump();
  EXPECT_TRUE(r.second.contains("message"));
}

}  // namespace

TEST_F(ApiTest, CreateSessionFromPreset) {
  auto gw = server_fixture();
  start(gw);
  auto [status, body] = call("POST", "/api/v1/sessions", {{"criteria", dark_shadows_criteria()}});
  ASSERT_EQ(status, 201);
  EXPECT_EQ(body["definition"]["npcs"].size(), 3u);
  EXPECT_EQ(body["definition"]["mechanics"].size(), 3u);
  EXPECT_EQ(body["session_id"].get<std::string>().size(), 16u);
  EXPECT_EQ(body["definition"]["beats"][0]["status"], "active");
}

TEST_F(ApiTest, CreateSessionErrors) {
  auto gw = server_fixture();
  start(gw);
  auto criteria = dark_shadows_criteria();
  criteria.erase("genre");
  expect_error(call("POST", "/api/v1/sessions", {{"criteria", criteria}}), 422, "invalid_criteria");
  expect_error(call("POST", "/api/v1/sessions", json::object()), 422, "invalid_criteria");
  auto res = client_->Post("/api/v1/sessions", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["code"], "invalid_json");
}

TEST_F(ApiTest, UpstreamFailureCreatesNothing) {
  ScriptedGateway broken({});
  start(broken);
  expect_error(call("POST", "/api/v1/sessions", {{"criteria", dark_shadows_criteria()}}), 502, "upstream_failure");
  EXPECT_EQ(service_->session_count(), 0u);
  expect_error(call("GET", "/api/v1/sessions/0123456789abcdef"), 404, "session_not_found");
}

TEST_F(ApiTest, CapacityLimit) {
  auto gw = server_fixture();
  ServerConfig cfg;
  cfg.max_sessions = 1;
  start(gw, cfg);
  create();
  expect_error(call("POST", "/api/v1/sessions", {{"criteria", dark_shadows_criteria()}}), 503, "capacity_reached");
}

TEST_F(ApiTest, TurnsAndState) {
  auto gw = server_fixture();
  start(gw);
  auto id = create();
  auto [status, turn] = call("POST", "/api/v1/sessions/" + id + "/turns", free_text("I look around the study."));
  ASSERT_EQ(status, 200) << turn.dump();
  EXPECT_FALSE(turn["text"].get<std::string>().empty());
  EXPECT_EQ(turn["speaker"], "narrator");
  EXPECT_EQ(turn["suggested_actions"].size(), 3u);

  auto [s2, state] = call("GET", "/api/v1/sessions/" + id);
  EXPECT_EQ(s2, 200);
  EXPECT_EQ(state["turn_index"], 1);
  auto [s3, transcript] = call("GET", "/api/v1/sessions/" + id + "/transcript");
  EXPECT_EQ(s3, 200);
  EXPECT_EQ(transcript["transcript"].size(), 2u);

  auto [s4, corrected] = call("POST", "/api/v1/sessions/" + id + "/turns",
                              free_text("Do you hear that dragon outside?"));
  EXPECT_EQ(s4, 200);
  EXPECT_TRUE(corrected["was_corrected"].get<bool>());
}

TEST_F(ApiTest, TurnErrors) {
  auto gw = server_fixture();
  start(gw);
  auto id = create();
  expect_error(call("POST", "/api/v1/sessions/nope/turns", free_text("x")), 404, "session_not_found");
  expect_error(call("POST", "/api/v1/sessions/" + id + "/turns", {{"input", {{"kind", "free_text"}}}}), 422,
               "invalid_input");
  expect_error(call("POST", "/api/v1/sessions/" + id + "/turns",
                    {{"input", PlayerInput::action("Fly Away").to_json()}}),
               422, "unknown_action");
  expect_error(call("POST", "/api/v1/sessions/" + id + "/turns", free_text("hi", "ghost")), 422, "unknown_npc");
}

TEST_F(ApiTest, TurnUpstreamFailureIs502) {
  auto inner = server_fixture();
  FnGateway gw([&inner](const std::string& p) -> std::string {
    if (contains(p, "as its narrator")) throw TransportError("down");
    return inner.complete({ChatMessage::user(p)});
  });
  start(gw);
  auto id = create();
  expect_error(call("POST", "/api/v1/sessions/" + id + "/turns", free_text("look")), 502, "upstream_failure");
  EXPECT_EQ(call("GET", "/api/v1/sessions/" + id).second["turn_index"], 0);
}

TEST_F(ApiTest, ConcurrentTurnsGiveOne200AndOne409) {
  auto inner = server_fixture();
  SlowGateway gw(inner, "as its narrator", 500ms);
  start(gw);
  auto id = create(false);
  auto port = client_->port();
  auto post = [&](const std::string& text) {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(10s);
    auto res = c.Post("/api/v1/sessions/" + id + "/turns", free_text(text).dump(), "application/json");
    return res ? res->status : 0;
  };
  auto a = std::async(std::launch::async, post, "first");
  std::this_thread::sleep_for(100ms);
  auto b = std::async(std::launch::async, post, "second");
  std::vector<int> statuses{a.get(), b.get()};
  std::sort(statuses.begin(), statuses.end());
  EXPECT_EQ(statuses, (std::vector<int>{200, 409}));
}

TEST_F(ApiTest, ValidationToggleAndDesignerNotes) {
  auto gw = server_fixture();
  start(gw);
  auto id = create();
  auto [s1, v] = call("PUT", "/api/v1/sessions/" + id + "/validation", {{"enabled", false}});
  EXPECT_EQ(s1, 200);
  EXPECT_FALSE(v["validation"]["enabled"].get<bool>());
  expect_error(call("PUT", "/api/v1/sessions/" + id + "/validation", {{"enabled", "no"}}), 422, "invalid_input");
  auto [s2, off_turn] = call("POST", "/api/v1/sessions/" + id + "/turns", free_text("Do you hear that dragon?"));
  EXPECT_EQ(s2, 200);
  EXPECT_FALSE(off_turn["was_corrected"].get<bool>());

  call("PUT", "/api/v1/sessions/" + id + "/validation", {{"enabled", true}});
  auto [s3, ok] = call("POST", "/api/v1/sessions/" + id + "/designer-notes", {{"text", "The fog thickens."}});
  EXPECT_EQ(s3, 200);
  EXPECT_TRUE(ok["accepted"].get<bool>());
  auto bad = call("POST", "/api/v1/sessions/" + id + "/designer-notes", {{"text", "Add a dragon."}});
  expect_error(bad, 422, "rule_violation");
  EXPECT_TRUE(bad.second.contains("verdict"));
}

TEST_F(ApiTest, SnapshotsAndRestart) {
  auto dir = std::filesystem::temp_directory_path() / "narrative_api_snapshots";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto gw = server_fixture();
  start(gw);
  auto id = create();
  expect_error(call("POST", "/api/v1/sessions/" + id + "/snapshot"), 409, "snapshot_unavailable");
  server_->stop();

  ServerConfig cfg;
  cfg.snapshot_dir = dir;
  start(gw, cfg);
  id = create();
  call("POST", "/api/v1/sessions/" + id + "/turns", free_text("look"));
  auto [status, body] = call("POST", "/api/v1/sessions/" + id + "/snapshot");
  EXPECT_EQ(status, 200);
  EXPECT_TRUE(std::filesystem::exists(body["path"].get<std::string>()));
  auto state = call("GET", "/api/v1/sessions/" + id).second;

  ApiService restarted(gw, TemplateSet{}, cfg);
  EXPECT_EQ(restarted.load_all(), 1u);
  EXPECT_EQ(restarted.get_session(id).body, state);
  std::filesystem::remove_all(dir);
}

TEST_F(ApiTest, HealthCorsAndUnknownRoutes) {
  auto gw = server_fixture();
  start(gw);
  auto res = client_->Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  auto opt = client_->Options("/api/v1/sessions");
  ASSERT_TRUE(opt);
  EXPECT_EQ(opt->status, 204);
  expect_error(call("GET", "/api/v2/whatever"), 404, "not_found");
}

TEST(ServerConfigTest, FromJsonAndValidate) {
  auto cfg = ServerConfig::from_json({{"port", 9000},
                                      {"max_sessions", 3},
                                      {"llm", {{"model", "m"}}},
                                      {"memory", {{"short_term_capacity", 4}}},
                                      {"validation", {{"enabled", false}}}});
  EXPECT_EQ(cfg.port, 9000);
  EXPECT_EQ(cfg.llm.model, "m");
  EXPECT_EQ(cfg.memory.short_term_capacity, 4u);
  EXPECT_FALSE(cfg.validation.enabled);
  cfg.snapshot_dir = "/definitely/missing";
  EXPECT_THROW(cfg.validate(), InvalidInput);
}
