#include <gtest/gtest.h>

#include "narrative/validation.hpp"
#include "support/fixtures.hpp"

using namespace narrative;
using namespace narrative::tests;

namespace {

const std::string kCompliant = R"({"compliant": true, "violated_rule_ids": [], "rationale": "fine"})";
const std::string kViolation = R"({"compliant": false, "violated_rule_ids": ["R2"], "rationale": "dragons"})";
const std::string kLogic = R"({"corrective_logic": "Remind the player there are no dragons in this era."})";
const std::string kCorrection = R"({"response": "Detective, dragons are not among them in this era."})";

ScriptedGateway chain(const std::string& judge_reply) {
  return ScriptedGateway({ScriptedRule::substring("Generate corrective logic", kLogic, 0),
                          ScriptedRule::substring("corrective response", kCorrection, 0),
                          ScriptedRule::substring("breaks a game play rule", judge_reply, 1)});
}

GamePlayRules rules() { return dark_shadows().rules; }

}  // namespace

TEST(Verdict, Invariants) {
  EXPECT_TRUE(ValidationVerdict::pass("ok").compliant());
  EXPECT_FALSE(ValidationVerdict::pass("ok").corrective_logic());
  EXPECT_THROW(ValidationVerdict::violation({}, "r", "logic"), InvariantViolation);
  EXPECT_THROW(ValidationVerdict::violation({"R1"}, "r", ""), InvariantViolation);
  auto v = ValidationVerdict::violation({"R1"}, "r", "logic");
  auto back = ValidationVerdict::from_json(v.to_json());
  EXPECT_EQ(back.to_json(), v.to_json());
}

TEST(JudgeInput, CompliantPassThrough) {
  auto gw = chain(kCompliant);
  auto v = judge_input("I search the study.", rules(), "", gw, TemplateSet{});
  EXPECT_TRUE(v.compliant());
  EXPECT_FALSE(v.corrective_logic());
  EXPECT_EQ(gw.call_count(), 1u);
}

TEST(JudgeInput, DragonIsFlaggedWithCorrectiveLogic) {
  auto gw = chain(kViolation);
  auto v = judge_input("Do you hear that dragon outside?", rules(), "", gw, TemplateSet{});
  EXPECT_FALSE(v.compliant());
  EXPECT_EQ(v.violated_rule_ids(), std::vector<std::string>{"R2"});
  ASSERT_TRUE(v.corrective_logic());
  EXPECT_FALSE(v.corrective_logic()->empty());
  auto prompts = gw.prompts();
  ASSERT_EQ(prompts.size(), 2u);
  EXPECT_TRUE(contains(prompts[0], "Do you hear that dragon outside?"));
  EXPECT_TRUE(contains(prompts[1], "no magic, no fantasy creatures"));  // R2 passed to step 2
}

TEST(JudgeInput, UnusableRepliesExhaustRetries) {
  ScriptedGateway gw({}, std::string("I think it is fine"));
  EXPECT_THROW(judge_input("x", rules(), "", gw, TemplateSet{}, 2), JudgeUnavailable);
  EXPECT_EQ(gw.call_count(), 3u);
}

TEST(JudgeInput, InconsistentReplyCountsAsUnusable) {
  int calls = 0;
  FnGateway gw([&calls](const std::string&) {
    return ++calls == 1 ? std::string(R"({"compliant": false, "violated_rule_ids": []})") : kCompliant;
  });
  EXPECT_TRUE(judge_input("x", rules(), "", gw, TemplateSet{}, 2).compliant());
  EXPECT_EQ(calls, 2);
}

TEST(JudgeInput, UsesJudgeTemperature) {
  FnGateway gw([](const std::string&) { return kCompliant; });
  judge_input("x", rules(), "", gw, TemplateSet{});
  EXPECT_EQ(gw.temperatures().at(0), kJudgeTemperature);
}

TEST(Correction, PassthroughAndPromptContents) {
  auto gw = chain(kViolation);
  auto v = ValidationVerdict::violation({"R2"}, "dragons", "Remind the player there are no dragons.");
  EXPECT_EQ(corrective_response(v, nullptr, "", gw, TemplateSet{}),
            "Detective, dragons are not among them in this era.");

  auto def = dark_shadows();
  const auto* thomas = def.find_npc("thomas-oreilly");
  auto npc_prompt = correction_prompt(v, thomas, "", TemplateSet{});
  for (const char* s : {"70%", "80%", "20%", "60%", "40%", "Openness", "Neuroticism",
                        "Remind the player there are no dragons."}) {
    EXPECT_TRUE(contains(npc_prompt.text, s)) << s;
  }
  auto narrator_prompt = correction_prompt(v, nullptr, "", TemplateSet{});
  EXPECT_TRUE(contains(narrator_prompt.text, "the narrator"));
  EXPECT_FALSE(contains(narrator_prompt.text, "Openness"));
  EXPECT_THROW(correction_prompt(ValidationVerdict::pass(""), nullptr, "", TemplateSet{}), InvalidInput);
}

TEST(Guard, DisabledMakesNoCalls) {
  auto gw = chain(kViolation);
  ValidationConfig off;
  off.enabled = false;
  EXPECT_FALSE(corrected(guard("dragon!", rules(), "", off, nullptr, gw, TemplateSet{})));
  EXPECT_EQ(gw.call_count(), 0u);
}

TEST(Guard, CompliantPassesAfterOneCall) {
  auto gw = chain(kCompliant);
  EXPECT_FALSE(corrected(guard("search", rules(), "", ValidationConfig{}, nullptr, gw, TemplateSet{})));
  EXPECT_EQ(gw.call_count(), 1u);
}

TEST(Guard, ViolationIsCorrected) {
  auto gw = chain(kViolation);
  auto outcome = guard("dragon!", rules(), "", ValidationConfig{}, nullptr, gw, TemplateSet{});
  ASSERT_TRUE(corrected(outcome));
  const auto& c = std::get<GuardCorrected>(outcome);
  EXPECT_EQ(c.text, "Detective, dragons are not among them in this era.");
  EXPECT_FALSE(c.verdict.compliant());
  EXPECT_EQ(gw.call_count(), 3u);
}

TEST(Guard, JudgeFailurePolicies) {
  ScriptedGateway broken({});
  ValidationConfig open;
  EXPECT_FALSE(corrected(guard("x", rules(), "", open, nullptr, broken, TemplateSet{})));
  ValidationConfig strict;
  strict.on_judge_failure = JudgeFailurePolicy::fail_corrective;
  auto outcome = guard("x", rules(), "", strict, nullptr, broken, TemplateSet{});
  ASSERT_TRUE(corrected(outcome));
  EXPECT_EQ(std::get<GuardCorrected>(outcome).text, kFallbackCorrection);
}

TEST(Guard, CorrectionGenerationFailureFallsBack) {
  ScriptedGateway gw({ScriptedRule::substring("Generate corrective logic", kLogic, 0),
                      ScriptedRule::substring("breaks a game play rule", kViolation, 1)});
  auto outcome = guard("dragon", rules(), "", ValidationConfig{}, nullptr, gw, TemplateSet{});
  ASSERT_TRUE(corrected(outcome));
  EXPECT_EQ(std::get<GuardCorrected>(outcome).text, kFallbackCorrection);
}

TEST(Config, JsonAndValidation) {
  auto c = ValidationConfig::from_json({{"enabled", false}, {"on_judge_failure", "fail_corrective"}});
  EXPECT_FALSE(c.enabled);
  EXPECT_EQ(c.on_judge_failure, JudgeFailurePolicy::fail_corrective);
  EXPECT_THROW(ValidationConfig::from_json({{"on_judge_failure", "maybe"}}), InvalidInput);
  EXPECT_THROW(ValidationConfig::from_json({{"judge_retries", -1}}), InvalidInput);
  EXPECT_EQ(describe_big5({70, 80, 20, 60, 40}),
            "Openness: 70%\nConscientiousness: 80%\nExtroversion: 20%\nAgreeableness: 60%\nNeuroticism: 40%");
}
