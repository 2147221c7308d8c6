#include "narrative/llm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace narrative {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw InvalidInput("unknown chat role '" + std::string(s) + "'");
}

void validate_messages(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw InvalidInput("chat completion needs at least one message");
  for (const auto& m : messages) {
    if (m.role != Role::assistant && m.content.empty()) {
      throw InvalidInput(std::string(to_string(m.role)) + " message content must be non-empty");
    }
  }
}

std::string concatenated_prompt(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i) out.push_back('\n');
    out += messages[i].content;
  }
  return out;
}

void EndpointConfig::validate() const {
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw InvalidInput("base_url must start with http:// or https://");
  }
  if (model.empty()) throw InvalidInput("model must be set");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw InvalidInput("temperature must lie in [0, 2]");
  }
  if (max_tokens <= 0) throw InvalidInput("max_tokens must be positive");
  if (timeout_ms <= 0) throw InvalidInput("timeout_ms must be positive");
  if (max_retries < 0) throw InvalidInput("max_retries must be non-negative");
  if (backoff_base_ms < 0) throw InvalidInput("backoff_base_ms must be non-negative");
}

EndpointConfig EndpointConfig::from_json(const json& j, EndpointConfig c) {
  c.base_url = j.value("base_url", c.base_url);
  if (j.contains("api_key") && j["api_key"].is_string()) c.api_key = j["api_key"].get<std::string>();
  c.model = j.value("model", c.model);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
  c.validate();
  return c;
}

json EndpointConfig::to_json() const {
  return {{"base_url", base_url},     {"model", model},
          {"temperature", temperature}, {"max_tokens", max_tokens},
          {"timeout_ms", timeout_ms},   {"max_retries", max_retries},
          {"backoff_base_ms", backoff_base_ms}};
}

void EndpointConfig::apply_env_overrides() {
  if (const char* v = std::getenv("LLM_BASE_URL"); v && *v) base_url = v;
  if (const char* v = std::getenv("LLM_API_KEY"); v && *v) api_key = std::string(v);
  if (const char* v = std::getenv("LLM_MODEL"); v && *v) model = v;
}

json chat_request_body(const std::vector<ChatMessage>& messages, const EndpointConfig& config,
                       const Sampling& sampling) {
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return {{"model", config.model},
          {"messages", std::move(msgs)},
          {"temperature", sampling.temperature.value_or(config.temperature)},
          {"max_tokens", config.max_tokens}};
}

std::string parse_chat_response(std::string_view body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw MalformedResponse("completion response is not JSON");
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw MalformedResponse("choice content is not a string");
    return content.get<std::string>();
  } catch (const json::exception&) {
    throw MalformedResponse("completion response has no choices[0].message.content");
  }
}

std::chrono::milliseconds backoff_delay(int base_ms, int attempt, double unit_jitter) {
  double nominal = base_ms * std::pow(2.0, attempt - 1);
  double factor = 1.0 + 0.2 * std::clamp(unit_jitter, -1.0, 1.0);
  return std::chrono::milliseconds(static_cast<long long>(std::llround(nominal * factor)));
}

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, kUrl)) {
    throw InvalidInput("cannot parse base_url '" + base_url + "'");
  }
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {m[1].str(), prefix};
}

HttpGateway::HttpGateway(EndpointConfig config)
    : config_(std::move(config)), rng_state_(std::random_device{}()) {
  config_.validate();
  std::tie(scheme_host_port_, path_prefix_) = split_base_url(config_.base_url);
}

HttpGateway::~HttpGateway() = default;

std::string HttpGateway::complete(const std::vector<ChatMessage>& messages,
                                  const Sampling& sampling) {
  validate_messages(messages);
  const std::string body = chat_request_body(messages, config_, sampling).dump();
  const std::string path = path_prefix_ + "/v1/chat/completions";

  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (config_.api_key) headers.emplace("Authorization", "Bearer " + *config_.api_key);

  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    bool retryable = false;
    std::string failure;
    if (!res) {
      retryable = true;
      failure = "transport error: " + httplib::to_string(res.error());
      if (attempt >= config_.max_retries) throw TransportError(failure);
    } else if (res->status >= 200 && res->status < 300) {
      return parse_chat_response(res->body);
    } else if (res->status >= 500) {
      retryable = true;
      failure = "HTTP " + std::to_string(res->status);
      if (attempt >= config_.max_retries) throw UpstreamStatus(res->status);
    } else {
      throw UpstreamStatus(res->status);
    }

    if (retryable) {
      double jitter;
      {
        std::lock_guard lock(rng_mutex_);
        rng_state_ = rng_state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        jitter = static_cast<double>(rng_state_ >> 11) / static_cast<double>(1ULL << 53) * 2.0 - 1.0;
      }
      auto delay = backoff_delay(config_.backoff_base_ms, attempt + 1, jitter);
      spdlog::warn("llm request failed ({}), retry {}/{} in {} ms", failure, attempt + 1,
                   config_.max_retries, delay.count());
      std::this_thread::sleep_for(delay);
    }
  }
}

bool ScriptedRule::matches(const std::string& prompt) const {
  if (match == Match::substring) return prompt.find(pattern) != std::string::npos;
  return std::regex_search(prompt, std::regex(pattern));
}

ScriptedRule ScriptedRule::substring(std::string pattern, std::string response, int priority) {
  return {Match::substring, std::move(pattern), std::move(response), priority};
}

ScriptedRule ScriptedRule::regex(std::string pattern, std::string response, int priority) {
  std::regex check(pattern);  // throws std::regex_error early on a bad pattern
  (void)check;
  return {Match::regex, std::move(pattern), std::move(response), priority};
}

std::string scripted_complete(const std::vector<ChatMessage>& messages,
                              const std::vector<ScriptedRule>& rules,
                              const std::optional<std::string>& fallback) {
  const std::string prompt = concatenated_prompt(messages);
  std::vector<const ScriptedRule*> ordered;
  ordered.reserve(rules.size());
  for (const auto& r : rules) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const ScriptedRule* a, const ScriptedRule* b) { return a->priority < b->priority; });
  for (const auto* r : ordered) {
    if (r->matches(prompt)) return r->response;
  }
  if (fallback) return *fallback;
  throw NoScriptedMatch();
}

ScriptedGateway::ScriptedGateway(std::vector<ScriptedRule> rules, std::optional<std::string> fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {
  std::stable_sort(rules_.begin(), rules_.end(),
                   [](const ScriptedRule& a, const ScriptedRule& b) { return a.priority < b.priority; });
}

ScriptedGateway::ScriptedGateway(ScriptedGateway&& other) noexcept
    : rules_(std::move(other.rules_)), fallback_(std::move(other.fallback_)) {
  std::lock_guard lock(other.log_mutex_);
  log_ = std::move(other.log_);
}

ScriptedGateway ScriptedGateway::from_json(const json& fixtures) {
  std::vector<ScriptedRule> rules;
  for (const auto& r : fixtures.value("rules", json::array())) {
    int priority = r.value("priority", 0);
    std::string response = r.at("response").is_string() ? r.at("response").get<std::string>()
                                                        : r.at("response").dump();
    if (r.contains("regex")) {
      rules.push_back(ScriptedRule::regex(r["regex"].get<std::string>(), std::move(response), priority));
    } else {
      rules.push_back(
          ScriptedRule::substring(r.at("contains").get<std::string>(), std::move(response), priority));
    }
  }
  std::optional<std::string> fallback;
  if (fixtures.contains("default") && fixtures["default"].is_string()) {
    fallback = fixtures["default"].get<std::string>();
  }
  return ScriptedGateway(std::move(rules), std::move(fallback));
}

ScriptedGateway ScriptedGateway::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scripted fixtures '" + path + "'");
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("bad scripted fixtures '" + path + "': " + e.what());
  }
}

std::string ScriptedGateway::complete(const std::vector<ChatMessage>& messages, const Sampling&) {
  {
    std::lock_guard lock(log_mutex_);
    log_.push_back(concatenated_prompt(messages));
  }
  return scripted_complete(messages, rules_, fallback_);
}

std::vector<std::string> ScriptedGateway::prompts() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

std::size_t ScriptedGateway::call_count() const {
  std::lock_guard lock(log_mutex_);
  return log_.size();
}

void ScriptedGateway::clear_log() {
  std::lock_guard lock(log_mutex_);
  log_.clear();
}

std::string RecordingGateway::complete(const std::vector<ChatMessage>& messages,
                                       const Sampling& sampling) {
  {
    std::lock_guard lock(mutex_);
    prompts_.push_back(concatenated_prompt(messages));
  }
  return inner_.complete(messages, sampling);
}

std::vector<std::string> RecordingGateway::prompts() const {
  std::lock_guard lock(mutex_);
  return prompts_;
}

std::size_t RecordingGateway::call_count() const {
  std::lock_guard lock(mutex_);
  return prompts_.size();
}

}  // namespace narrative
