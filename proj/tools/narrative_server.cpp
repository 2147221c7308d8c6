// HTTP server for the narrative engine.
#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "narrative/server.hpp"

namespace {
narrative::ApiServer* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Narrative engine server"};
  std::string config_path, bind, templates_dir, scripted_llm, snapshot_dir;
  app.add_option("--config", config_path, "Server config JSON")->check(CLI::ExistingFile);
  app.add_option("--bind", bind, "host:port to listen on (overrides config)");
  app.add_option("--templates-dir", templates_dir, "Prompt template overrides")->check(CLI::ExistingDirectory);
  app.add_option("--scripted-llm", scripted_llm, "Serve from a scripted fixture instead of a live model")
      ->check(CLI::ExistingFile);
  app.add_option("--snapshot-dir", snapshot_dir, "Directory for session snapshots")->check(CLI::ExistingDirectory);
  CLI11_PARSE(app, argc, argv);

  try {
    narrative::ServerConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      config = narrative::ServerConfig::from_json(narrative::json::parse(in));
    }
    config.llm.apply_env_overrides();
    if (!bind.empty()) {
      auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw narrative::InvalidInput("--bind expects host:port");
      config.host = bind.substr(0, colon);
      config.port = std::stoi(bind.substr(colon + 1));
    }
    if (!templates_dir.empty()) config.templates_dir = templates_dir;
    if (!snapshot_dir.empty()) config.snapshot_dir = snapshot_dir;
    config.validate();

    auto templates = config.templates_dir ? narrative::TemplateSet::load_directory(*config.templates_dir)
                                          : narrative::TemplateSet{};
    std::unique_ptr<narrative::LlmGateway> gateway;
    if (!scripted_llm.empty()) {
      gateway = std::make_unique<narrative::ScriptedGateway>(narrative::ScriptedGateway::load(scripted_llm));
      spdlog::info("scripted LLM mode: {}", scripted_llm);
    } else {
      gateway = std::make_unique<narrative::HttpGateway>(config.llm);
      spdlog::info("LLM endpoint {} model {}", config.llm.base_url, config.llm.model);
    }

    narrative::ApiService service(*gateway, std::move(templates), config);
    if (auto n = service.load_all()) spdlog::info("restored {} sessions", n);
    narrative::ApiServer server(service);
    int port = server.bind(config.host, config.port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    spdlog::info("listening on {}:{}", config.host, port);
    server.listen();
    g_server = nullptr;
    if (auto n = service.save_all()) spdlog::info("saved {} sessions", n);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
