#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "narrative/error.hpp"

namespace narrative {

using json = nlohmann::json;

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  static ChatMessage system(std::string content) { return {Role::system, std::move(content)}; }
  static ChatMessage user(std::string content) { return {Role::user, std::move(content)}; }
  static ChatMessage assistant(std::string content) {
    return {Role::assistant, std::move(content)};
  }
};

void validate_messages(const std::vector<ChatMessage>& messages);

// All message contents joined by newlines; what scripted rules match against.
std::string concatenated_prompt(const std::vector<ChatMessage>& messages);

inline constexpr double kPlayTemperature = 0.7;
inline constexpr double kJudgeTemperature = 0.0;

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8080";
  std::optional<std::string> api_key;
  std::string model = "gpt-4";
  double temperature = kPlayTemperature;
  int max_tokens = 1024;
  int timeout_ms = 120000;
  int max_retries = 2;
  int backoff_base_ms = 250;

  void validate() const;
  static EndpointConfig from_json(const json& j) { return from_json(j, EndpointConfig{}); }
  static EndpointConfig from_json(const json& j, EndpointConfig base);
  json to_json() const;  // api_key omitted
  // LLM_BASE_URL, LLM_API_KEY and LLM_MODEL win over file values.
  void apply_env_overrides();
};

// Per-call sampling override; the endpoint default applies when unset.
struct Sampling {
  std::optional<double> temperature;

  static Sampling play() { return {kPlayTemperature}; }
  static Sampling judge() { return {kJudgeTemperature}; }
};

// The pluggable model interface. Implementations must be safe to call from
// several threads at once.
class LlmGateway {
 public:
  virtual ~LlmGateway() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages,
                               const Sampling& sampling = {}) = 0;
};

// Splits "https://host:port/prefix/" into ("https://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

// Request body for POST {base_url}/v1/chat/completions.
json chat_request_body(const std::vector<ChatMessage>& messages, const EndpointConfig& config,
                       const Sampling& sampling = {});

// First choice's message content. Throws MalformedResponse.
std::string parse_chat_response(std::string_view body);

// Delay before retry number `attempt` (1-based): base * 2^(attempt-1), +/-20% jitter.
std::chrono::milliseconds backoff_delay(int base_ms, int attempt, double unit_jitter);

class HttpGateway final : public LlmGateway {
 public:
  explicit HttpGateway(EndpointConfig config);
  ~HttpGateway() override;

  std::string complete(const std::vector<ChatMessage>& messages,
                       const Sampling& sampling = {}) override;

  const EndpointConfig& config() const { return config_; }

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::mutex rng_mutex_;
  std::uint64_t rng_state_;
};

struct ScriptedRule {
  enum class Match { substring, regex };

  Match match = Match::substring;
  std::string pattern;
  std::string response;
  int priority = 0;

  bool matches(const std::string& prompt) const;

  static ScriptedRule substring(std::string pattern, std::string response, int priority = 0);
  static ScriptedRule regex(std::string pattern, std::string response, int priority = 0);
};

// Pure function of (messages, rules, default): lowest priority value first,
// ties by list order. Throws NoScriptedMatch.
std::string scripted_complete(const std::vector<ChatMessage>& messages,
                              const std::vector<ScriptedRule>& rules,
                              const std::optional<std::string>& fallback);

// Deterministic gateway for tests and offline runs. Records every prompt it
// receives.
class ScriptedGateway final : public LlmGateway {
 public:
  ScriptedGateway(std::vector<ScriptedRule> rules, std::optional<std::string> fallback = {});
  ScriptedGateway(ScriptedGateway&& other) noexcept;

  // Fixture file: {"rules": [{"contains"|"regex": ..., "response": ..., "priority": n}],
  //                "default": "..."}
  static ScriptedGateway from_json(const json& fixtures);
  static ScriptedGateway load(const std::string& path);

  std::string complete(const std::vector<ChatMessage>& messages,
                       const Sampling& sampling = {}) override;

  std::vector<std::string> prompts() const;
  std::size_t call_count() const;
  void clear_log();

 private:
  std::vector<ScriptedRule> rules_;
  std::optional<std::string> fallback_;
  mutable std::mutex log_mutex_;
  std::vector<std::string> log_;
};

// Wraps another gateway and keeps every prompt that passed through it.
class RecordingGateway final : public LlmGateway {
 public:
  explicit RecordingGateway(LlmGateway& inner) : inner_(inner) {}

  std::string complete(const std::vector<ChatMessage>& messages,
                       const Sampling& sampling = {}) override;

  std::vector<std::string> prompts() const;
  std::size_t call_count() const;

 private:
  LlmGateway& inner_;
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
};

}  // namespace narrative
