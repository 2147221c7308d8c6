#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "narrative/prompt.hpp"
#include "support/fixtures.hpp"

using namespace narrative;
using narrative::tests::contains;

namespace {

const OutputSchema kSettingSchema{{"location", ValueKind::string},
                                  {"time_period", ValueKind::string},
                                  {"setting_description", ValueKind::string}};

std::vector<SegmentKind> kinds(const RenderedPrompt& p) {
  std::vector<SegmentKind> out;
  for (const auto& s : p.segments) out.push_back(s.kind);
  return out;
}

}  // namespace

TEST(Render, SettingTemplateWithDarkShadowsCriteria) {
  TemplateSet templates;
  auto p = render(templates.get(template_id::setting), tests::dark_shadows_criteria(), "");
  EXPECT_EQ(p.text.rfind("Generate the location, time period, and setting description", 0), 0u);
  auto one_shot = p.segment_text(p.segments.back());
  EXPECT_EQ(p.segments.back().kind, SegmentKind::one_shot);
  for (const char* key : {"location", "time_period", "setting_description"}) {
    EXPECT_TRUE(contains(one_shot, key)) << key;
  }
  EXPECT_EQ(p.text.substr(p.text.size() - one_shot.size()), one_shot);
}

TEST(Render, EmptyCriteriaAndContextGiveThreeSegments) {
  TemplateSet templates;
  auto p = render(templates.get(template_id::rules), json::object(), "");
  ASSERT_EQ(kinds(p), (std::vector{SegmentKind::instruction, SegmentKind::criteria, SegmentKind::one_shot}));
  EXPECT_EQ(p.segment_text(p.segments[1]), "{}");
  EXPECT_EQ(p.find(SegmentKind::context), nullptr);
}

TEST(Render, ContextBecomesThirdSegmentVerbatim) {
  TemplateSet templates;
  auto p = render(templates.get(template_id::player), {{"a", 1}}, "prior summary X");
  ASSERT_EQ(p.segments.size(), 4u);
  EXPECT_EQ(p.segments[2].kind, SegmentKind::context);
  EXPECT_TRUE(contains(p.segment_text(p.segments[2]), "prior summary X"));
  EXPECT_TRUE(contains(p.segment_text(p.segments[2]), "Consider this additional context:"));
}

TEST(Render, SegmentsTileTheTextInOrder) {
  PromptTemplate t{"t", "Do the thing.", "Context:", R"({"k":"v"})"};
  auto p = render(t, {{"z", 1}, {"a", "b"}}, "ctx");
  std::size_t pos = 0;
  for (const auto& s : p.segments) {
    EXPECT_EQ(s.span.offset, pos);
    pos = s.span.offset + s.span.length + 1;  // one newline between segments
  }
  EXPECT_EQ(pos - 1, p.text.size());
  // Sorted keys make rendering independent of insertion order.
  EXPECT_EQ(p.text, render(t, {{"a", "b"}, {"z", 1}}, "ctx").text);
  EXPECT_TRUE(contains(p.segment_text(p.segments[3]), std::string(kReplyFormatLead)));
}

TEST(Render, CriteriaMustBeAnObject) {
  TemplateSet templates;
  EXPECT_THROW(render(templates.get(template_id::rules), json::array(), ""), Error);
}

TEST(Template, ValidateRejectsBadTemplates) {
  EXPECT_THROW((PromptTemplate{"x", "", "c", "{}"}.validate()), InvalidTemplate);
  EXPECT_THROW((PromptTemplate{"x", "i", "c", "not json"}.validate()), InvalidTemplate);
  EXPECT_THROW((PromptTemplate{"x", "i", "c", "[1,2]"}.validate()), InvalidTemplate);
  EXPECT_NO_THROW((PromptTemplate{"x", "i", "c", R"({"a":1})"}.validate()));
}

TEST(Template, FromJsonAcceptsObjectOneShot) {
  auto t = PromptTemplate::from_json({{"id", "x"}, {"instruction", "i"}, {"one_shot_example", {{"a", 1}}}});
  EXPECT_EQ(json::parse(t.one_shot_example), json({{"a", 1}}));
  EXPECT_EQ(t.context_preamble, "Consider this additional context:");
}

TEST(Extract, IdentityCase) {
  auto obj = extract_structured(R"({"location":"NYC","time_period":"1920s","setting_description":"..."})",
                                kSettingSchema);
  EXPECT_EQ(obj["location"], "NYC");
}

TEST(Extract, FencedJsonInsideProse) {
  std::string raw =
      "Sure! ```json\n{\"location\":\"NYC\",\"time_period\":\"1920s\",\"setting_description\":\"x\"}\n``` Enjoy.";
  // Oracle: strip everything outside the fence, then a plain parse.
  auto b = raw.find("```json\n") + 8;
  auto e = raw.find("\n```", b);
  EXPECT_EQ(extract_structured(raw, kSettingSchema), json::parse(raw.substr(b, e - b)));
}

TEST(Extract, NoJson) { EXPECT_THROW(extract_structured("no json here", kSettingSchema), NoJsonFound); }

TEST(Extract, SchemaMismatchNamesProblems) {
  try {
    extract_structured(R"({"location": 3})", kSettingSchema);
    FAIL();
  } catch (const SchemaMismatch& e) {
    EXPECT_FALSE(e.problems().empty());
  }
}

TEST(Extract, FirstMatchingObjectWins) {
  std::string raw = R"(draft {"other": 1} final {"location":"A","time_period":"B","setting_description":"C"})";
  EXPECT_EQ(extract_structured(raw, kSettingSchema)["location"], "A");
}

TEST(Extract, BracesInsideStringsAreIgnored) {
  std::string raw = R"(x {"summary": "a } tricky { string \" with quote"} y)";
  auto obj = extract_structured(raw, {{"summary", ValueKind::string}});
  EXPECT_EQ(obj["summary"], "a } tricky { string \" with quote");
}

TEST(Extract, NestedObjectsOfAParsedCandidateAreSkipped) {
  std::string raw = R"(pre {"a": {"b": 1}} mid {"b": 2})";
  auto objs = balanced_objects(raw);
  ASSERT_EQ(objs.size(), 3u);
  EXPECT_EQ(objs[0], R"({"a": {"b": 1}})");
  EXPECT_EQ(objs[1], R"({"b": 1})");
  // {"b": 1} sits inside the first parsed object, so the later one wins.
  EXPECT_EQ(extract_structured(raw, {{"b", ValueKind::number}})["b"], 2);
}

TEST(Extract, RecoversObjectInsideUnbalancedProse) {
  EXPECT_EQ(extract_structured(R"(oops { not json {"b": 3} )", {{"b", ValueKind::number}})["b"], 3);
}

TEST(Extract, RoundTripsRandomObjects) {
  std::mt19937 rng(7);
  const OutputSchema schema{{"s", ValueKind::string}, {"n", ValueKind::number}, {"b", ValueKind::boolean}};
  const std::string alphabet = "ab{}[]\"\\:, \n";
  for (int i = 0; i < 200; ++i) {
    std::string s;
    for (int k = 0; k < 12; ++k) s += alphabet[rng() % alphabet.size()];
    json obj = {{"s", s}, {"n", static_cast<int>(rng() % 1000)}, {"b", rng() % 2 == 0}, {"extra", {{"x", s}}}};
    std::string raw = "Here you go: " + obj.dump() + " -- done {";
    EXPECT_EQ(extract_structured(raw, schema), obj);
  }
}

TEST(FreeText, ResponseKeyOrRawText) {
  EXPECT_EQ(free_text_reply(R"(ok {"response": "Hello"} )"), "Hello");
  EXPECT_EQ(free_text_reply("Just prose. 1. Go"), "Just prose. 1. Go");
  EXPECT_EQ(free_text_reply(R"({"other": 1})"), R"({"other": 1})");
}

TEST(TemplateSetTest, BundledDirectoryMatchesDefaults) {
  auto loaded = TemplateSet::load_directory(tests::data_path("templates"));
  TemplateSet defaults;
  EXPECT_EQ(loaded.ids(), defaults.ids());
  for (const auto& id : defaults.ids()) {
    EXPECT_EQ(loaded.get(id).to_json(), defaults.get(id).to_json()) << id;
  }
}

TEST(TemplateSetTest, DirectoryOverridesById) {
  auto dir = std::filesystem::temp_directory_path() / "narrative_tmpl_override";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "judge.json") << json({{"id", "validation_judge"},
                                              {"instruction", "Custom judge breaks a game play rule"},
                                              {"one_shot_example", R"({"compliant":true})"}})
                                           .dump();
  auto set = TemplateSet::load_directory(dir);
  EXPECT_EQ(set.get(template_id::judge).instruction, "Custom judge breaks a game play rule");
  EXPECT_TRUE(set.contains(template_id::rules));
  std::filesystem::remove_all(dir);
}

TEST(TemplateSetTest, UnknownIdThrows) {
  TemplateSet set;
  EXPECT_THROW(set.get("nope"), InvalidTemplate);
  EXPECT_THROW(TemplateSet::load_directory("/nonexistent/dir"), Error);
}
