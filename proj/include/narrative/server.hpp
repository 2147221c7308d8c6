#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "narrative/init.hpp"
#include "narrative/llm.hpp"
#include "narrative/memory.hpp"
#include "narrative/session.hpp"

namespace httplib {
class Server;
}

namespace narrative {

// Machine-readable error codes carried in every error body.
enum class ApiErrorCode {
  invalid_json,
  invalid_criteria,
  invalid_input,
  unknown_action,
  unknown_npc,
  rule_violation,
  session_not_found,
  not_found,
  turn_in_flight,
  snapshot_unavailable,
  upstream_failure,
  capacity_reached,
  internal_error,
};

std::string_view to_string(ApiErrorCode code);

struct ApiError {
  int status;
  ApiErrorCode code;
  std::string message;

  json body() const { return {{"code", to_string(code)}, {"message", message}}; }
};

struct ApiResponse {
  int status = 200;
  json body;

  static ApiResponse error(int status, ApiErrorCode code, std::string message) {
    return {status, ApiError{status, code, std::move(message)}.body()};
  }
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8787;
  std::optional<std::filesystem::path> templates_dir;
  EndpointConfig llm;
  MemoryConfig memory;
  std::optional<std::filesystem::path> snapshot_dir;
  std::size_t max_sessions = 64;
  std::string cors_origin = "*";
  ValidationConfig validation;

  // Checks port range and that configured directories exist.
  void validate() const;
  static ServerConfig from_json(const json& j) { return from_json(j, ServerConfig{}); }
  static ServerConfig from_json(const json& j, ServerConfig base);
};

// Lifecycle and turn handling independent of the HTTP transport.
class ApiService {
 public:
  ApiService(LlmGateway& gateway, TemplateSet templates, ServerConfig config,
             std::shared_ptr<const Embedder> embedder = nullptr);

  ApiResponse create_session(const std::string& body);
  ApiResponse get_session(const std::string& id) const;
  ApiResponse post_turn(const std::string& id, const std::string& body);
  ApiResponse get_transcript(const std::string& id) const;
  ApiResponse put_validation(const std::string& id, const std::string& body);
  ApiResponse post_designer_note(const std::string& id, const std::string& body);
  ApiResponse post_snapshot(const std::string& id);
  ApiResponse healthz() const;

  std::shared_ptr<Session> find(const std::string& id) const;
  std::size_t session_count() const;

  // Writes every session to snapshot_dir. Returns the number written.
  std::size_t save_all() const;
  // Loads every *.json session snapshot in snapshot_dir.
  std::size_t load_all();

  const ServerConfig& config() const { return config_; }
  const SessionEngine& engine() const { return engine_; }

 private:
  std::filesystem::path write_snapshot(const Session& session) const;

  LlmGateway& gateway_;
  TemplateSet templates_;
  ServerConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  SessionEngine engine_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t pending_creations_ = 0;
};

// HTTP binding for ApiService (cpp-httplib).
class ApiServer {
 public:
  explicit ApiServer(ApiService& service);
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Port 0 binds any free port. Returns the bound port.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void start();   // listen on a background thread
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  ApiService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace narrative
