#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "narrative/definition.hpp"
#include "narrative/llm.hpp"

namespace narrative::tests {

inline std::string data_path(const std::string& rel) { return std::string(NARRATIVE_DATA_DIR) + "/" + rel; }

inline json read_json(const std::string& rel) {
  std::ifstream in(data_path(rel));
  return json::parse(in);
}

inline GameDefinition dark_shadows() {
  return definition_from_json(read_json("presets/dark_shadows_definition.json"));
}

inline json dark_shadows_criteria() { return read_json("presets/dark_shadows.json"); }

inline ScriptedGateway server_fixture() { return ScriptedGateway::load(data_path("fixtures/scripted_llm.json")); }

// Gateway backed by a callable; records prompts.
class FnGateway final : public LlmGateway {
 public:
  using Fn = std::function<std::string(const std::string& prompt)>;
  explicit FnGateway(Fn fn) : fn_(std::move(fn)) {}

  std::string complete(const std::vector<ChatMessage>& messages, const Sampling& sampling = {}) override {
    auto prompt = concatenated_prompt(messages);
    {
      std::lock_guard lock(mutex_);
      prompts_.push_back(prompt);
      temperatures_.push_back(sampling.temperature);
    }
    return fn_(prompt);
  }

  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }
  std::vector<std::optional<double>> temperatures() const {
    std::lock_guard lock(mutex_);
    return temperatures_;
  }

 private:
  Fn fn_;
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
  std::vector<std::optional<double>> temperatures_;
};

// Delays every call matching `needle` before delegating.
class SlowGateway final : public LlmGateway {
 public:
  SlowGateway(LlmGateway& inner, std::string needle, std::chrono::milliseconds delay)
      : inner_(inner), needle_(std::move(needle)), delay_(delay) {}

  std::string complete(const std::vector<ChatMessage>& messages, const Sampling& sampling = {}) override {
    if (concatenated_prompt(messages).find(needle_) != std::string::npos) std::this_thread::sleep_for(delay_);
    return inner_.complete(messages, sampling);
  }

 private:
  LlmGateway& inner_;
  std::string needle_;
  std::chrono::milliseconds delay_;
};

inline bool contains(std::string_view hay, std::string_view needle) {
  return hay.find(needle) != std::string_view::npos;
}

}  // namespace narrative::tests
