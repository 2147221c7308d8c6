#include <gtest/gtest.h>

#include "narrative/definition.hpp"
#include "support/fixtures.hpp"

using namespace narrative;

TEST(Criteria, RequiredFields) {
  auto c = tests::dark_shadows_criteria();
  auto parsed = DesignerCriteria::from_json(c);
  EXPECT_EQ(parsed.npc_count, 3);
  ASSERT_EQ(parsed.mechanics.size(), 3u);
  EXPECT_EQ(parsed.mechanics[1].label, "Search Crime Scene");
  EXPECT_EQ(DesignerCriteria::from_json(parsed.to_json()).to_json(), parsed.to_json());

  auto no_genre = c;
  no_genre.erase("genre");
  EXPECT_THROW(DesignerCriteria::from_json(no_genre), InvalidInput);
  auto bad_count = c;
  bad_count["npc_count"] = 2.5;
  EXPECT_THROW(DesignerCriteria::from_json(bad_count), InvalidInput);
  bad_count["npc_count"] = 0;
  EXPECT_THROW(DesignerCriteria::from_json(bad_count), InvalidInput);
  auto dup = c;
  dup["mechanics"].push_back(dup["mechanics"][0]);
  EXPECT_THROW(DesignerCriteria::from_json(dup), InvalidInput);
}

TEST(Mechanic, DefaultsIdAndTemplate) {
  auto m = mechanic_from_json({{"label", "Call Informant"}});
  EXPECT_EQ(m.id, "call-informant");
  EXPECT_EQ(m.template_id, "narrator_turn");
}

TEST(Big5, AcceptsButlerProfile) {
  auto b = big5_from_json(
      {{"openness", 70}, {"conscientiousness", 80}, {"extroversion", 20}, {"agreeableness", 60}, {"neuroticism", 40}});
  EXPECT_EQ(b, (Big5Profile{70, 80, 20, 60, 40}));
}

TEST(Big5, PercentStringsAndSpellingVariant) {
  auto b = big5_from_json({{"openness", "70%"},
                           {"conscientiousness", 80},
                           {"extraversion", 20},
                           {"agreeableness", 60},
                           {"neuroticism", "40"}});
  EXPECT_EQ(b, (Big5Profile{70, 80, 20, 60, 40}));
}

TEST(Big5, RejectsOutOfRangeAndNonIntegers) {
  json ok = {{"openness", 70}, {"conscientiousness", 80}, {"extroversion", 20}, {"agreeableness", 60},
             {"neuroticism", 40}};
  auto bad = ok;
  bad["neuroticism"] = 140;
  EXPECT_THROW(big5_from_json(bad), InvariantViolation);
  bad["neuroticism"] = -1;
  EXPECT_THROW(big5_from_json(bad), InvariantViolation);
  bad["neuroticism"] = 40.5;
  EXPECT_THROW(big5_from_json(bad), InvariantViolation);
  bad.erase("neuroticism");
  EXPECT_THROW(big5_from_json(bad), InvariantViolation);
}

TEST(Slug, Names) {
  EXPECT_EQ(slugify("Thomas O'Reilly"), "thomas-oreilly");
  EXPECT_EQ(slugify("  Dr. Harold  Finch "), "dr-harold-finch");
}

TEST(StageReplies, DefaultsAndErrors) {
  auto rules = rules_from_reply({{"rules", {"No magic.", {{"id", "X"}, {"text", "Stay in 1920s."}}}}});
  ASSERT_EQ(rules.size(), 2u);
  EXPECT_EQ(rules.rules[0].id, "R1");
  EXPECT_EQ(rules.rules[1].id, "X");
  EXPECT_THROW(rules_from_reply({{"rules", json::array()}}), InvariantViolation);
  EXPECT_THROW(rules_from_reply({{"rules", {{{"id", "A"}, {"text", "a"}}, {{"id", "A"}, {"text", "b"}}}}}),
               InvariantViolation);

  auto beats = beats_from_reply({{"beats", {"Find the body", {{"description", "Name the killer"}}}}});
  ASSERT_EQ(beats.size(), 2u);
  EXPECT_EQ(beats[1].id, "beat-2");
  EXPECT_EQ(beats[1].ordinal, 2);
  EXPECT_EQ(beats[0].completion_criteria, "Find the body");

  auto npcs = npcs_from_reply({{"npcs",
                                {{{"name", "Thomas O'Reilly"},
                                  {"role", "suspect"},
                                  {"big5", {{"openness", 70}, {"conscientiousness", 80}, {"extroversion", 20},
                                            {"agreeableness", 60}, {"neuroticism", 40}}}}}}});
  EXPECT_EQ(npcs[0].id, "thomas-oreilly");
  EXPECT_EQ(npcs[0].role, NpcRole::suspect);

  EXPECT_THROW(setting_from_reply({{"location", "NYC"}}), InvariantViolation);
  EXPECT_THROW(player_from_reply({{"name", "Sam"}}), InvariantViolation);
}

TEST(Definition, PresetRoundTripsAndValidates) {
  auto def = tests::dark_shadows();
  EXPECT_NO_THROW(def.validate());
  EXPECT_EQ(definition_from_json(to_json(def)), def);
  const auto* thomas = def.find_npc("thomas-oreilly");
  ASSERT_NE(thomas, nullptr);
  EXPECT_EQ(thomas->occupation, "Butler");
  EXPECT_EQ(thomas->big5, (Big5Profile{70, 80, 20, 60, 40}));
  EXPECT_NE(def.find_mechanic("Interrogate Suspect"), nullptr);
  EXPECT_NE(def.find_mechanic("call-informant"), nullptr);
  EXPECT_EQ(def.find_mechanic("Fly Away"), nullptr);
}

TEST(Definition, InvariantViolations) {
  auto def = tests::dark_shadows();
  auto d = def;
  d.beats[1].ordinal = 1;
  EXPECT_THROW(d.validate(), InvariantViolation);
  d = def;
  d.beats[0].status = d.beats[1].status = BeatStatus::active;
  EXPECT_THROW(d.validate(), InvariantViolation);
  d = def;
  d.npcs[1].name = d.npcs[0].name;
  EXPECT_THROW(d.validate(), InvariantViolation);
  d = def;
  d.rules.rules.clear();
  EXPECT_THROW(d.validate(), InvariantViolation);
  EXPECT_THROW(definition_from_json({{"rules", 1}}), Error);
}
