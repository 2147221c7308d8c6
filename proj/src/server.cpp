#include "narrative/server.hpp"

#include <fstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace narrative {

std::string_view to_string(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::invalid_json: return "invalid_json";
    case ApiErrorCode::invalid_criteria: return "invalid_criteria";
    case ApiErrorCode::invalid_input: return "invalid_input";
    case ApiErrorCode::unknown_action: return "unknown_action";
    case ApiErrorCode::unknown_npc: return "unknown_npc";
    case ApiErrorCode::rule_violation: return "rule_violation";
    case ApiErrorCode::session_not_found: return "session_not_found";
    case ApiErrorCode::not_found: return "not_found";
    case ApiErrorCode::turn_in_flight: return "turn_in_flight";
    case ApiErrorCode::snapshot_unavailable: return "snapshot_unavailable";
    case ApiErrorCode::upstream_failure: return "upstream_failure";
    case ApiErrorCode::capacity_reached: return "capacity_reached";
    case ApiErrorCode::internal_error: return "internal_error";
  }
  return "internal_error";
}

void ServerConfig::validate() const {
  if (port < 0 || port > 65535) throw InvalidInput("port must lie in [0, 65535]");
  if (templates_dir && !std::filesystem::is_directory(*templates_dir)) {
    throw InvalidInput("templates dir does not exist: " + templates_dir->string());
  }
  if (snapshot_dir && !std::filesystem::is_directory(*snapshot_dir)) {
    throw InvalidInput("snapshot dir does not exist: " + snapshot_dir->string());
  }
  if (max_sessions == 0) throw InvalidInput("max_sessions must be positive");
  llm.validate();
  memory.validate();
  validation.validate();
}

ServerConfig ServerConfig::from_json(const json& j, ServerConfig c) {
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  if (j.contains("templates_dir")) c.templates_dir = j["templates_dir"].get<std::string>();
  if (j.contains("snapshot_dir")) c.snapshot_dir = j["snapshot_dir"].get<std::string>();
  if (j.contains("llm")) c.llm = EndpointConfig::from_json(j["llm"], c.llm);
  if (j.contains("memory")) c.memory = MemoryConfig::from_json(j["memory"], c.memory);
  if (j.contains("validation")) c.validation = ValidationConfig::from_json(j["validation"], c.validation);
  c.max_sessions = j.value("max_sessions", c.max_sessions);
  c.cors_origin = j.value("cors_origin", c.cors_origin);
  return c;
}

namespace {

std::optional<json> parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

ApiResponse bad_json() {
  return ApiResponse::error(400, ApiErrorCode::invalid_json, "request body must be a JSON object");
}

ApiResponse no_session(const std::string& id) {
  return ApiResponse::error(404, ApiErrorCode::session_not_found, "no session '" + id + "'");
}

}  // namespace

ApiService::ApiService(LlmGateway& gateway, TemplateSet templates, ServerConfig config,
                       std::shared_ptr<const Embedder> embedder)
    : gateway_(gateway),
      templates_(std::move(templates)),
      config_(std::move(config)),
      embedder_(embedder ? std::move(embedder) : std::make_shared<HashEmbedder>(config_.memory.embedding_dim)),
      engine_(gateway_, templates_, config_.memory, embedder_) {
  config_.validate();
}

std::shared_ptr<Session> ApiService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t ApiService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

ApiResponse ApiService::create_session(const std::string& body) {
  auto j = parse_body(body);
  if (!j) return bad_json();
  DesignerCriteria criteria;
  try {
    if (!j->contains("criteria")) throw InvalidInput("body.criteria is required");
    criteria = DesignerCriteria::from_json((*j)["criteria"]);
  } catch (const Error& e) {
    return ApiResponse::error(422, ApiErrorCode::invalid_criteria, e.what());
  }
  ValidationConfig validation = config_.validation;
  if (j->contains("validation_enabled")) {
    if (!(*j)["validation_enabled"].is_boolean()) {
      return ApiResponse::error(422, ApiErrorCode::invalid_input, "validation_enabled must be a boolean");
    }
    validation.enabled = (*j)["validation_enabled"].get<bool>();
  }
  for (const auto& m : criteria.mechanics) {
    if (!templates_.contains(m.template_id)) {
      return ApiResponse::error(422, ApiErrorCode::invalid_criteria,
                                "mechanic '" + m.label + "' uses unknown template '" + m.template_id + "'");
    }
  }

  {
    std::lock_guard lock(mutex_);
    if (sessions_.size() + pending_creations_ >= config_.max_sessions) {
      return ApiResponse::error(503, ApiErrorCode::capacity_reached, "session capacity reached");
    }
    ++pending_creations_;
  }
  struct Release {
    ApiService& s;
    ~Release() {
      std::lock_guard lock(s.mutex_);
      --s.pending_creations_;
    }
  } release{*this};

  const std::string id = new_session_id();
  auto memory = engine_.new_memory();
  GameDefinition definition;
  try {
    InitContext ctx{gateway_, *memory, MemoryScope::session(id), templates_};
    definition = run_initialization(criteria, ctx);
  } catch (const StageFailed& e) {
    return ApiResponse::error(502, ApiErrorCode::upstream_failure, e.what());
  } catch (const InvariantViolation& e) {
    return ApiResponse::error(502, ApiErrorCode::upstream_failure, e.what());
  } catch (const GatewayError& e) {
    return ApiResponse::error(502, ApiErrorCode::upstream_failure, e.what());
  }
  auto session = engine_.create_session(std::move(definition), validation, std::move(memory), id);
  {
    std::lock_guard lock(mutex_);
    sessions_.emplace(id, session);
  }
  spdlog::info("session {} created", id);
  return {201, {{"session_id", id}, {"definition", to_json(session->definition())}}};
}

ApiResponse ApiService::get_session(const std::string& id) const {
  auto s = find(id);
  if (!s) return no_session(id);
  return {200, s->state_json()};
}

ApiResponse ApiService::post_turn(const std::string& id, const std::string& body) {
  auto s = find(id);
  if (!s) return no_session(id);
  auto j = parse_body(body);
  if (!j) return bad_json();
  PlayerInput input;
  try {
    if (!j->contains("input")) throw InvalidInput("body.input is required");
    input = PlayerInput::from_json((*j)["input"]);
  } catch (const Error& e) {
    return ApiResponse::error(422, ApiErrorCode::invalid_input, e.what());
  }
  try {
    return {200, engine_.take_turn(*s, input).to_json()};
  } catch (const TurnInFlight& e) {
    return ApiResponse::error(409, ApiErrorCode::turn_in_flight, e.what());
  } catch (const UnknownAction& e) {
    return ApiResponse::error(422, ApiErrorCode::unknown_action, e.what());
  } catch (const UnknownNpc& e) {
    return ApiResponse::error(422, ApiErrorCode::unknown_npc, e.what());
  } catch (const InvalidInput& e) {
    return ApiResponse::error(422, ApiErrorCode::invalid_input, e.what());
  } catch (const TurnFailed& e) {
    return ApiResponse::error(502, ApiErrorCode::upstream_failure, e.what());
  }
}

ApiResponse ApiService::get_transcript(const std::string& id) const {
  auto s = find(id);
  if (!s) return no_session(id);
  json entries = json::array();
  for (const auto& e : s->transcript()) entries.push_back(to_json(e));
  return {200, {{"session_id", id}, {"transcript", std::move(entries)}}};
}

ApiResponse ApiService::put_validation(const std::string& id, const std::string& body) {
  auto s = find(id);
  if (!s) return no_session(id);
  auto j = parse_body(body);
  if (!j) return bad_json();
  if (!j->contains("enabled") || !(*j)["enabled"].is_boolean()) {
    return ApiResponse::error(422, ApiErrorCode::invalid_input, "body.enabled must be a boolean");
  }
  s->set_validation_enabled((*j)["enabled"].get<bool>());
  return {200, {{"session_id", id}, {"validation", s->validation().to_json()}}};
}

ApiResponse ApiService::post_designer_note(const std::string& id, const std::string& body) {
  auto s = find(id);
  if (!s) return no_session(id);
  auto j = parse_body(body);
  if (!j) return bad_json();
  if (!j->contains("text") || !(*j)["text"].is_string() || (*j)["text"].get<std::string>().empty()) {
    return ApiResponse::error(422, ApiErrorCode::invalid_input, "body.text must be a non-empty string");
  }
  try {
    auto outcome = engine_.submit_designer_note(*s, (*j)["text"].get<std::string>());
    if (auto* c = std::get_if<GuardCorrected>(&outcome)) {
      auto resp = ApiResponse::error(422, ApiErrorCode::rule_violation, c->text);
      resp.body["verdict"] = c->verdict.to_json();
      return resp;
    }
    return {200, {{"session_id", id}, {"accepted", true}, {"designer_notes", s->designer_notes()}}};
  } catch (const TurnInFlight& e) {
    return ApiResponse::error(409, ApiErrorCode::turn_in_flight, e.what());
  }
}

std::filesystem::path ApiService::write_snapshot(const Session& session) const {
  auto path = *config_.snapshot_dir / (session.id() + ".json");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    out << session.snapshot().dump(2);
    if (!out) throw Error("cannot write snapshot " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  return path;
}

ApiResponse ApiService::post_snapshot(const std::string& id) {
  auto s = find(id);
  if (!s) return no_session(id);
  if (!config_.snapshot_dir) {
    return ApiResponse::error(409, ApiErrorCode::snapshot_unavailable, "no snapshot_dir configured");
  }
  return {200, {{"session_id", id}, {"path", write_snapshot(*s).string()}}};
}

ApiResponse ApiService::healthz() const {
  return {200, {{"status", "ok"}, {"sessions", session_count()}}};
}

std::size_t ApiService::save_all() const {
  if (!config_.snapshot_dir) return 0;
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [_, s] : sessions_) all.push_back(s);
  }
  for (const auto& s : all) write_snapshot(*s);
  return all.size();
}

std::size_t ApiService::load_all() {
  if (!config_.snapshot_dir) return 0;
  std::size_t loaded = 0;
  for (const auto& entry : std::filesystem::directory_iterator(*config_.snapshot_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    try {
      std::ifstream in(entry.path());
      auto session = Session::restore(json::parse(in), embedder_);
      std::lock_guard lock(mutex_);
      sessions_.insert_or_assign(session->id(), std::move(session));
      ++loaded;
    } catch (const std::exception& e) {
      spdlog::warn("skipping snapshot {}: {}", entry.path().string(), e.what());
    }
  }
  return loaded;
}

ApiServer::ApiServer(ApiService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::install_routes() {
  auto& srv = *server_;
  const std::string origin = service_.config().cors_origin;

  auto reply = [](httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
  };

  srv.set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unexpected error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("unhandled error: {}", what);
    reply(res, ApiResponse::error(500, ApiErrorCode::internal_error, what));
  });
  srv.set_error_handler([reply](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      reply(res, ApiResponse::error(404, ApiErrorCode::not_found, "no route for " + req.method + " " + req.path));
    }
  });

  srv.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.healthz());
  });
  srv.Post("/api/v1/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.create_session(req.body));
  });
  srv.Get(R"(/api/v1/sessions/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.get_session(req.matches[1]));
  });
  srv.Post(R"(/api/v1/sessions/([^/]+)/turns)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.post_turn(req.matches[1], req.body));
  });
  srv.Get(R"(/api/v1/sessions/([^/]+)/transcript)",
          [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, service_.get_transcript(req.matches[1]));
          });
  srv.Put(R"(/api/v1/sessions/([^/]+)/validation)",
          [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, service_.put_validation(req.matches[1], req.body));
          });
  srv.Post(R"(/api/v1/sessions/([^/]+)/designer-notes)",
           [this, reply](const httplib::Request& req, httplib::Response& res) {
             reply(res, service_.post_designer_note(req.matches[1], req.body));
           });
  srv.Post(R"(/api/v1/sessions/([^/]+)/snapshot)",
           [this, reply](const httplib::Request& req, httplib::Response& res) {
             reply(res, service_.post_snapshot(req.matches[1]));
           });
}

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else if (server_->bind_to_port(host, port)) {
    port_ = port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port_;
}

void ApiServer::listen() { server_->listen_after_bind(); }

void ApiServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ApiServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace narrative
