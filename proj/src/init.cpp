#include "narrative/init.hpp"

#include <spdlog/spdlog.h>

namespace narrative {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::rules: return "rules";
    case Stage::setting: return "setting";
    case Stage::player: return "player";
    case Stage::npcs: return "npcs";
    case Stage::beats: return "beats";
  }
  return "?";
}

const std::string& stage_template_id(Stage stage) {
  static const std::array<std::string, 5> kIds = {template_id::rules, template_id::setting,
                                                  template_id::player, template_id::npcs,
                                                  template_id::beats};
  return kIds[static_cast<std::size_t>(stage)];
}

const OutputSchema& stage_schema(Stage stage) {
  static const std::array<OutputSchema, 5> kSchemas = {
      OutputSchema{{"rules", ValueKind::array}},
      OutputSchema{{"location", ValueKind::string},
                   {"time_period", ValueKind::string},
                   {"setting_description", ValueKind::string}},
      OutputSchema{{"name", ValueKind::string}, {"role", ValueKind::string}},
      OutputSchema{{"npcs", ValueKind::array}},
      OutputSchema{{"beats", ValueKind::array}},
  };
  return kSchemas[static_cast<std::size_t>(stage)];
}

json to_json(const StageProduct& product) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GamePlayRules>) {
          return {{"rules", to_json(p)}};
        } else if constexpr (std::is_same_v<T, std::vector<NpcProfile>>) {
          json list = json::array();
          for (const auto& n : p) list.push_back(to_json(n));
          return {{"npcs", std::move(list)}};
        } else if constexpr (std::is_same_v<T, std::vector<NarrativeBeat>>) {
          json list = json::array();
          for (const auto& b : p) list.push_back(to_json(b));
          return {{"beats", std::move(list)}};
        } else {
          return to_json(p);
        }
      },
      product);
}

namespace {

StageProduct parse_product(Stage stage, const json& reply, const DesignerCriteria& criteria) {
  switch (stage) {
    case Stage::rules: return rules_from_reply(reply);
    case Stage::setting: return setting_from_reply(reply);
    case Stage::player: return player_from_reply(reply);
    case Stage::npcs: {
      auto npcs = npcs_from_reply(reply);
      if (static_cast<int>(npcs.size()) != criteria.npc_count) {
        throw InvariantViolation("expected " + std::to_string(criteria.npc_count) + " NPCs, got " +
                                 std::to_string(npcs.size()));
      }
      return npcs;
    }
    case Stage::beats: return beats_from_reply(reply);
  }
  throw InvariantViolation("unknown stage");
}

std::string stage_label(Stage stage) {
  switch (stage) {
    case Stage::rules: return "Game play rules";
    case Stage::setting: return "Narrative setting";
    case Stage::player: return "Player persona";
    case Stage::npcs: return "NPCs";
    case Stage::beats: return "Narrative beats";
  }
  return "?";
}

}  // namespace

StageResult run_stage(Stage stage, const DesignerCriteria& criteria, std::string_view prior_context,
                      const InitContext& ctx) {
  criteria.validate();
  const auto prompt = render(ctx.templates.get(stage_template_id(stage)), criteria.to_json(), prior_context);
  const auto& schema = stage_schema(stage);

  std::string text = prompt.text;
  std::string last_error;
  int calls = 0;
  for (int attempt = 0; attempt <= kStageExtractionRetries; ++attempt) {
    std::string reply;
    try {
      ++calls;
      reply = ctx.gateway.complete({ChatMessage::user(text)}, Sampling::play());
    } catch (const GatewayError& e) {
      throw StageFailed(std::string(to_string(stage)), e.what());
    }
    json extracted;
    try {
      extracted = extract_structured(reply, schema);
    } catch (const NoJsonFound& e) {
      last_error = e.what();
    } catch (const SchemaMismatch& e) {
      last_error = e.what();
    }
    if (!last_error.empty()) {
      spdlog::info("init stage {} attempt {}: {}", to_string(stage), attempt + 1, last_error);
      text = prompt.text + "\n\nYour previous reply could not be used: " + last_error +
             ". Reply again using exactly the requested JSON format.";
      if (attempt < kStageExtractionRetries) last_error.clear();
      continue;
    }
    StageProduct product = parse_product(stage, extracted, criteria);
    auto record = ctx.memory.record(ctx.scope, RecordKind::generated_asset,
                                    stage_label(stage) + ": " + to_json(product).dump(), 0);
    return {std::move(product), std::move(record), calls};
  }
  throw StageFailed(std::string(to_string(stage)), last_error);
}

GameDefinition run_initialization(const DesignerCriteria& criteria, const InitContext& ctx) {
  criteria.validate();
  GameDefinition def;
  def.mechanics = criteria.mechanics;
  std::vector<MemoryRecord> products;
  for (Stage stage : kStageOrder) {
    std::string context;
    if (!products.empty()) {
      context = summarize(products, ctx.memory.config().summary_max_chars, ctx.gateway, ctx.templates);
    }
    auto result = run_stage(stage, criteria, context, ctx);
    products.push_back(result.record);
    std::visit(
        [&def](auto&& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, GamePlayRules>) def.rules = std::move(p);
          else if constexpr (std::is_same_v<T, NarrativeSetting>) def.setting = std::move(p);
          else if constexpr (std::is_same_v<T, PlayerPersona>) def.player = std::move(p);
          else if constexpr (std::is_same_v<T, std::vector<NpcProfile>>) def.npcs = std::move(p);
          else def.beats = std::move(p);
        },
        std::move(result.product));
  }
  def.validate();
  return def;
}

}  // namespace narrative
