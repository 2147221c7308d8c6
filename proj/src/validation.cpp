#include "narrative/validation.hpp"

#include <spdlog/spdlog.h>

namespace narrative {

ValidationVerdict ValidationVerdict::pass(std::string rationale) {
  ValidationVerdict v;
  v.rationale_ = std::move(rationale);
  return v;
}

ValidationVerdict ValidationVerdict::violation(std::vector<std::string> violated_rule_ids, std::string rationale,
                                               std::string corrective_logic) {
  if (violated_rule_ids.empty()) throw InvariantViolation("a violation verdict names at least one rule");
  if (corrective_logic.empty()) throw InvariantViolation("a violation verdict carries corrective logic");
  ValidationVerdict v;
  v.violated_rule_ids_ = std::move(violated_rule_ids);
  v.rationale_ = std::move(rationale);
  v.corrective_logic_ = std::move(corrective_logic);
  return v;
}

json ValidationVerdict::to_json() const {
  json j = {{"compliant", compliant()}, {"violated_rule_ids", violated_rule_ids_}, {"rationale", rationale_}};
  j["corrective_logic"] = corrective_logic_ ? json(*corrective_logic_) : json(nullptr);
  return j;
}

ValidationVerdict ValidationVerdict::from_json(const json& j) {
  auto ids = j.value("violated_rule_ids", std::vector<std::string>{});
  auto rationale = j.value("rationale", std::string{});
  if (ids.empty()) return pass(std::move(rationale));
  return violation(std::move(ids), std::move(rationale), j.at("corrective_logic").get<std::string>());
}

void ValidationConfig::validate() const {
  if (judge_retries < 0) throw InvalidInput("judge_retries must be non-negative");
}

json ValidationConfig::to_json() const {
  return {{"enabled", enabled},
          {"judge_retries", judge_retries},
          {"on_judge_failure", on_judge_failure == JudgeFailurePolicy::fail_open ? "fail_open" : "fail_corrective"}};
}

ValidationConfig ValidationConfig::from_json(const json& j, ValidationConfig c) {
  c.enabled = j.value("enabled", c.enabled);
  c.judge_retries = j.value("judge_retries", c.judge_retries);
  if (j.contains("on_judge_failure")) {
    auto p = j["on_judge_failure"].get<std::string>();
    if (p == "fail_open") c.on_judge_failure = JudgeFailurePolicy::fail_open;
    else if (p == "fail_corrective") c.on_judge_failure = JudgeFailurePolicy::fail_corrective;
    else throw InvalidInput("on_judge_failure must be fail_open or fail_corrective");
  }
  c.validate();
  return c;
}

std::string describe_big5(const Big5Profile& b) {
  return "Openness: " + std::to_string(b.openness) + "%\n" +
         "Conscientiousness: " + std::to_string(b.conscientiousness) + "%\n" +
         "Extroversion: " + std::to_string(b.extroversion) + "%\n" +
         "Agreeableness: " + std::to_string(b.agreeableness) + "%\n" +
         "Neuroticism: " + std::to_string(b.neuroticism) + "%";
}

namespace {

struct JudgeReply {
  bool compliant;
  std::vector<std::string> ids;
  std::string rationale;
};

// Throws Error when the reply cannot be used.
JudgeReply parse_judge_reply(std::string_view raw) {
  auto obj = extract_structured(raw, {{"compliant", ValueKind::boolean}});
  JudgeReply r{obj["compliant"].get<bool>(), {}, obj.value("rationale", std::string{})};
  if (obj.contains("violated_rule_ids")) {
    const auto& ids = obj["violated_rule_ids"];
    if (!ids.is_array()) throw Error("violated_rule_ids is not an array");
    for (const auto& id : ids) r.ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
  }
  if (r.compliant != r.ids.empty()) {
    throw Error("judge reply is inconsistent: compliant flag disagrees with violated_rule_ids");
  }
  return r;
}

std::string parse_logic_reply(std::string_view raw) {
  try {
    auto obj = extract_structured(raw, {{"corrective_logic", ValueKind::string}});
    auto logic = obj["corrective_logic"].get<std::string>();
    if (!logic.empty()) return logic;
  } catch (const NoJsonFound&) {
    std::string text(raw);
    auto b = text.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) return text.substr(b, text.find_last_not_of(" \t\r\n") - b + 1);
  }
  throw Error("corrective logic reply is empty");
}

json rules_json(const GamePlayRules& rules) {
  json list = json::array();
  for (const auto& r : rules.rules) list.push_back(to_json(r));
  return list;
}

}  // namespace

ValidationVerdict judge_input(std::string_view input, const GamePlayRules& rules, std::string_view context,
                              LlmGateway& gateway, const TemplateSet& templates, int judge_retries) {
  if (rules.empty()) throw InvalidInput("judge_input needs at least one game play rule");
  const json criteria = {{"game_play_rules", rules_json(rules)}, {"text_input", std::string(input)}};
  const auto judge_prompt = render(templates.get(template_id::judge), criteria, context);

  std::optional<JudgeReply> reply;
  std::string last_error;
  for (int attempt = 0; attempt <= judge_retries && !reply; ++attempt) {
    try {
      reply = parse_judge_reply(gateway.complete({ChatMessage::user(judge_prompt.text)}, Sampling::judge()));
    } catch (const Error& e) {
      last_error = e.what();
      spdlog::info("validation judge attempt {} unusable: {}", attempt + 1, last_error);
    }
  }
  if (!reply) throw JudgeUnavailable("validation judge unavailable: " + last_error);
  if (reply->compliant) return ValidationVerdict::pass(reply->rationale);

  json violated = json::array();
  for (const auto& r : rules.rules) {
    if (std::find(reply->ids.begin(), reply->ids.end(), r.id) != reply->ids.end()) violated.push_back(to_json(r));
  }
  const json logic_criteria = {{"violated_rules", violated.empty() ? rules_json(rules) : violated},
                               {"text_input", std::string(input)},
                               {"rationale", reply->rationale}};
  const auto logic_prompt = render(templates.get(template_id::corrective_logic), logic_criteria, context);
  for (int attempt = 0; attempt <= judge_retries; ++attempt) {
    try {
      auto logic = parse_logic_reply(gateway.complete({ChatMessage::user(logic_prompt.text)}, Sampling::judge()));
      return ValidationVerdict::violation(reply->ids, reply->rationale, std::move(logic));
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw JudgeUnavailable("corrective logic unavailable: " + last_error);
}

RenderedPrompt correction_prompt(const ValidationVerdict& verdict, const NpcProfile* speaker,
                                 std::string_view context, const TemplateSet& templates) {
  if (verdict.compliant()) throw InvalidInput("corrective_response needs a non-compliant verdict");
  json criteria = {{"corrective_logic", *verdict.corrective_logic()},
                   {"violated_rule_ids", verdict.violated_rule_ids()}};
  if (speaker) {
    criteria["speaker"] = {
        {"name", speaker->name},
        {"role", to_string(speaker->role)},
        {"background", speaker->background},
        {"personality", json::array({"Openness: " + std::to_string(speaker->big5.openness) + "%",
                                     "Conscientiousness: " + std::to_string(speaker->big5.conscientiousness) + "%",
                                     "Extroversion: " + std::to_string(speaker->big5.extroversion) + "%",
                                     "Agreeableness: " + std::to_string(speaker->big5.agreeableness) + "%",
                                     "Neuroticism: " + std::to_string(speaker->big5.neuroticism) + "%"})},
        {"voice", "Answer as " + speaker->name + ", expressing these personality traits."}};
  } else {
    criteria["speaker"] = "the narrator";
  }
  return render(templates.get(template_id::correction), criteria, context);
}

std::string corrective_response(const ValidationVerdict& verdict, const NpcProfile* speaker,
                                std::string_view context, LlmGateway& gateway, const TemplateSet& templates) {
  auto prompt = correction_prompt(verdict, speaker, context, templates);
  return free_text_reply(gateway.complete({ChatMessage::user(prompt.text)}, Sampling::play()));
}

GuardOutcome guard(std::string_view input, const GamePlayRules& rules, std::string_view context,
                   const ValidationConfig& config, const NpcProfile* speaker, LlmGateway& gateway,
                   const TemplateSet& templates) {
  if (!config.enabled) return GuardPass{};
  std::optional<ValidationVerdict> verdict;
  try {
    verdict = judge_input(input, rules, context, gateway, templates, config.judge_retries);
  } catch (const JudgeUnavailable& e) {
    spdlog::warn("{}; applying {}", e.what(),
                 config.on_judge_failure == JudgeFailurePolicy::fail_open ? "fail_open" : "fail_corrective");
    if (config.on_judge_failure == JudgeFailurePolicy::fail_open) return GuardPass{};
    return GuardCorrected{std::string(kFallbackCorrection),
                          ValidationVerdict::violation({"judge_unavailable"}, e.what(),
                                                       std::string(kFallbackCorrection))};
  }
  if (verdict->compliant()) return GuardPass{};
  std::string text;
  try {
    text = corrective_response(*verdict, speaker, context, gateway, templates);
  } catch (const GatewayError& e) {
    spdlog::warn("correction generation failed ({}), using the fallback line", e.what());
    text = std::string(kFallbackCorrection);
  }
  if (text.empty()) text = std::string(kFallbackCorrection);
  return GuardCorrected{std::move(text), std::move(*verdict)};
}

}  // namespace narrative
