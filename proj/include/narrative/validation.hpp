#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "narrative/definition.hpp"
#include "narrative/llm.hpp"
#include "narrative/prompt.hpp"

namespace narrative {

// compliant <=> violated_rule_ids empty <=> corrective_logic absent
class ValidationVerdict {
 public:
  static ValidationVerdict pass(std::string rationale);
  static ValidationVerdict violation(std::vector<std::string> violated_rule_ids, std::string rationale,
                                     std::string corrective_logic);

  bool compliant() const { return violated_rule_ids_.empty(); }
  const std::vector<std::string>& violated_rule_ids() const { return violated_rule_ids_; }
  const std::string& rationale() const { return rationale_; }
  const std::optional<std::string>& corrective_logic() const { return corrective_logic_; }

  json to_json() const;
  static ValidationVerdict from_json(const json& j);

 private:
  ValidationVerdict() = default;
  std::vector<std::string> violated_rule_ids_;
  std::string rationale_;
  std::optional<std::string> corrective_logic_;
};

enum class JudgeFailurePolicy { fail_open, fail_corrective };

struct ValidationConfig {
  bool enabled = true;
  int judge_retries = 2;
  JudgeFailurePolicy on_judge_failure = JudgeFailurePolicy::fail_open;

  void validate() const;
  json to_json() const;
  static ValidationConfig from_json(const json& j) { return from_json(j, ValidationConfig{}); }
  static ValidationConfig from_json(const json& j, ValidationConfig base);
};

// Self-reflection: ask whether the input breaks a rule, then (on violation)
// ask for corrective logic. Throws JudgeUnavailable once judge_retries extra
// attempts are used up on either step.
ValidationVerdict judge_input(std::string_view input, const GamePlayRules& rules, std::string_view context,
                              LlmGateway& gateway, const TemplateSet& templates, int judge_retries = 2);

// The in-character reply the player sees for a rejected input. Narrator
// framing when no speaker is given.
std::string corrective_response(const ValidationVerdict& verdict, const NpcProfile* speaker,
                                 std::string_view context, LlmGateway& gateway, const TemplateSet& templates);

// The rendered correction prompt, exposed so callers can inspect it.
RenderedPrompt correction_prompt(const ValidationVerdict& verdict, const NpcProfile* speaker,
                                 std::string_view context, const TemplateSet& templates);

// "Openness: 70%" ... one line per trait.
std::string describe_big5(const Big5Profile& big5);

inline constexpr std::string_view kFallbackCorrection =
    "Let's keep our attention on the story at hand. What would you like to do next?";

struct GuardPass {};
struct GuardCorrected {
  std::string text;
  ValidationVerdict verdict;
};
using GuardOutcome = std::variant<GuardPass, GuardCorrected>;

inline bool corrected(const GuardOutcome& o) { return std::holds_alternative<GuardCorrected>(o); }

GuardOutcome guard(std::string_view input, const GamePlayRules& rules, std::string_view context,
                   const ValidationConfig& config, const NpcProfile* speaker, LlmGateway& gateway,
                   const TemplateSet& templates);

}  // namespace narrative
