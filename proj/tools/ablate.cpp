// Validation on/off ablation over a probe corpus.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "narrative/ablation.hpp"
#include "narrative/init.hpp"

namespace fs = std::filesystem;
using namespace narrative;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InvalidInput("cannot open " + p.string());
  return json::parse(in);
}

// A path, or a preset name looked up as <presets-dir>/<name>_definition.json.
fs::path resolve_definition(const std::string& arg, const fs::path& presets_dir) {
  if (fs::is_regular_file(arg)) return arg;
  auto preset = presets_dir / (arg + "_definition.json");
  if (fs::is_regular_file(preset)) return preset;
  throw InvalidInput("no definition file or preset named '" + arg + "'");
}

std::unique_ptr<LlmGateway> make_gateway(const std::string& scripted, const std::string& config_path) {
  if (!scripted.empty()) return std::make_unique<ScriptedGateway>(ScriptedGateway::load(scripted));
  EndpointConfig cfg;
  if (!config_path.empty()) {
    auto j = read_json(config_path);
    cfg = EndpointConfig::from_json(j.contains("llm") ? j["llm"] : j);
  }
  cfg.apply_env_overrides();
  return std::make_unique<HttpGateway>(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Validation ablation harness"};
  app.require_subcommand(1);
  std::string scripted, llm_config, templates_dir;
  app.add_option("--scripted-llm", scripted, "Scripted fixture instead of a live model")->check(CLI::ExistingFile);
  app.add_option("--llm-config", llm_config, "Endpoint config JSON")->check(CLI::ExistingFile);
  app.add_option("--templates-dir", templates_dir, "Prompt template overrides")->check(CLI::ExistingDirectory);

  auto* run = app.add_subcommand("run", "Replay the corpus with validation on and off");
  std::string corpus, definition, judge = "scripted", out, responses, verdicts, presets_dir = "data/presets";
  int parallel = 1;
  run->add_option("--corpus", corpus, "JSON-lines probe corpus")->required()->check(CLI::ExistingFile);
  run->add_option("--definition", definition, "Game definition file or preset name")->required();
  run->add_option("--judge", judge, "scripted | llm | human")
      ->check(CLI::IsMember({"scripted", "llm", "human"}));
  run->add_option("--out", out, "Report markdown path")->required();
  run->add_option("--responses", responses, "Write responses CSV here");
  run->add_option("--verdicts", verdicts, "Read human verdicts CSV")->check(CLI::ExistingFile);
  run->add_option("--parallel", parallel, "Concurrent trials")->check(CLI::PositiveNumber);
  run->add_option("--presets-dir", presets_dir, "Where preset definitions live");

  auto* define = app.add_subcommand("define", "Run initialization and write the resulting game definition");
  std::string criteria_path, define_out;
  define->add_option("--criteria", criteria_path, "Designer criteria JSON")->required()->check(CLI::ExistingFile);
  define->add_option("--out", define_out, "Definition output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    auto templates = templates_dir.empty() ? TemplateSet{} : TemplateSet::load_directory(templates_dir);
    auto gateway = make_gateway(scripted, llm_config);

    if (*define) {
      auto criteria = DesignerCriteria::from_json(read_json(criteria_path));
      MemoryStore memory(MemoryConfig{}, std::make_shared<HashEmbedder>(MemoryConfig{}.embedding_dim));
      InitContext ctx{*gateway, memory, MemoryScope::session("define"), templates};
      auto def = run_initialization(criteria, ctx);
      std::ofstream(define_out) << to_json(def).dump(2) << "\n";
      std::cout << "wrote " << define_out << "\n";
      return 0;
    }

    AblationOptions options;
    options.judge = judge_kind_from_string(judge);
    options.parallel = parallel;
    if (!responses.empty()) options.responses_csv = responses;
    if (!verdicts.empty()) options.verdicts_csv = verdicts;
    if (options.judge == JudgeKind::human && !options.responses_csv && !options.verdicts_csv) {
      throw InvalidInput("--judge human needs --responses (export) or --verdicts (import)");
    }

    auto items = load_corpus(corpus);
    auto def = definition_from_json(read_json(resolve_definition(definition, presets_dir)));
    auto result = run_ablation(items, def, *gateway, templates, options);
    auto table = render_report(result.report);
    std::ofstream(out) << table;
    std::cout << table;
    if (!result.trials.empty()) {
      std::cout << "validation prompts in the off arm: " << result.off_arm_validation_prompts << "\n";
    }
    if (options.judge == JudgeKind::human && !options.verdicts_csv) {
      std::cout << "responses written to " << responses << "; fill the aligned column and rerun with --verdicts\n";
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
