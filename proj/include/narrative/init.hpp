#pragma once

#include <array>
#include <string>
#include <variant>
#include <vector>

#include "narrative/definition.hpp"
#include "narrative/llm.hpp"
#include "narrative/memory.hpp"
#include "narrative/prompt.hpp"

namespace narrative {

enum class Stage { rules, setting, player, npcs, beats };

inline constexpr std::array<Stage, 5> kStageOrder = {Stage::rules, Stage::setting, Stage::player,
                                                     Stage::npcs, Stage::beats};

std::string_view to_string(Stage stage);
const std::string& stage_template_id(Stage stage);
const OutputSchema& stage_schema(Stage stage);

using StageProduct = std::variant<GamePlayRules, NarrativeSetting, PlayerPersona,
                                  std::vector<NpcProfile>, std::vector<NarrativeBeat>>;

json to_json(const StageProduct& product);

// Everything a stage needs besides its inputs. The scope is the session's
// persistent memory.
struct InitContext {
  LlmGateway& gateway;
  MemoryStore& memory;
  MemoryScope scope;
  const TemplateSet& templates;
};

struct StageResult {
  StageProduct product;
  MemoryRecord record;
  int gateway_calls = 0;
};

inline constexpr int kStageExtractionRetries = 2;

// One init prompt: render, complete, extract, validate, remember. Extraction
// failures are re-prompted (with the error appended) up to two times.
// Throws StageFailed or InvariantViolation.
StageResult run_stage(Stage stage, const DesignerCriteria& criteria, std::string_view prior_context,
                      const InitContext& ctx);

// rules -> setting -> player -> npcs -> beats, each stage seeing a summary of
// the products before it. Never returns a partial definition.
GameDefinition run_initialization(const DesignerCriteria& criteria, const InitContext& ctx);

}  // namespace narrative
