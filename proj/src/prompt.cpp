#include "narrative/prompt.hpp"

#include <fstream>
#include <sstream>

namespace narrative {

SchemaMismatch::SchemaMismatch(std::vector<std::string> problems)
    : Error([&] {
        std::string msg = "reply JSON does not match the expected format:";
        for (const auto& p : problems) msg += " " + p + ";";
        return msg;
      }()),
      problems_(std::move(problems)) {}

void PromptTemplate::validate() const {
  if (instruction.empty()) throw InvalidTemplate("template '" + id + "' has an empty instruction");
  json parsed = json::parse(one_shot_example, nullptr, /*allow_exceptions=*/false);
  if (!parsed.is_object()) {
    throw InvalidTemplate("template '" + id + "' one-shot example is not a JSON object");
  }
}

PromptTemplate PromptTemplate::from_json(const json& j) {
  PromptTemplate t;
  t.id = j.at("id").get<std::string>();
  t.instruction = j.value("instruction", "");
  t.context_preamble = j.value("context_preamble", t.context_preamble);
  const auto& shot = j.at("one_shot_example");
  // Accept either a literal string or an inline JSON object.
  t.one_shot_example = shot.is_string() ? shot.get<std::string>() : shot.dump();
  t.validate();
  return t;
}

json PromptTemplate::to_json() const {
  return {{"id", id},
          {"instruction", instruction},
          {"context_preamble", context_preamble},
          {"one_shot_example", one_shot_example}};
}

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::instruction: return "instruction";
    case SegmentKind::criteria: return "criteria";
    case SegmentKind::context: return "context";
    case SegmentKind::one_shot: return "one_shot";
  }
  return "?";
}

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::string: return "string";
    case ValueKind::number: return "number";
    case ValueKind::boolean: return "boolean";
    case ValueKind::array: return "array";
    case ValueKind::object: return "object";
  }
  return "?";
}

const Segment* RenderedPrompt::find(SegmentKind kind) const {
  for (const auto& s : segments) {
    if (s.kind == kind) return &s;
  }
  return nullptr;
}

OutputSchema::OutputSchema(std::initializer_list<std::pair<std::string, ValueKind>> keys)
    : required_keys(keys) {}

namespace {

bool kind_matches(const json& v, ValueKind kind) {
  switch (kind) {
    case ValueKind::string: return v.is_string();
    case ValueKind::number: return v.is_number();
    case ValueKind::boolean: return v.is_boolean();
    case ValueKind::array: return v.is_array();
    case ValueKind::object: return v.is_object();
  }
  return false;
}

}  // namespace

bool OutputSchema::accepts(const json& object, std::vector<std::string>* problems) const {
  if (!object.is_object()) {
    if (problems) problems->push_back("reply is not a JSON object");
    return false;
  }
  bool ok = true;
  for (const auto& [key, kind] : required_keys) {
    auto it = object.find(key);
    if (it == object.end()) {
      ok = false;
      if (problems) problems->push_back("missing key \"" + key + "\"");
    } else if (!kind_matches(*it, kind)) {
      ok = false;
      if (problems) {
        problems->push_back("key \"" + key + "\" must be a " + std::string(to_string(kind)));
      }
    }
  }
  return ok;
}

RenderedPrompt render(const PromptTemplate& tmpl, const json& criteria, std::string_view context) {
  tmpl.validate();
  if (!criteria.is_object()) throw InvalidInput("prompt criteria must be a JSON object");

  RenderedPrompt out;
  auto append = [&out](SegmentKind kind, std::string_view piece) {
    out.segments.push_back({kind, {out.text.size(), piece.size()}});
    out.text.append(piece);
    out.text.push_back('\n');
  };

  append(SegmentKind::instruction, tmpl.instruction);
  // nlohmann::json keeps object keys in std::map order, so dump() is sorted.
  append(SegmentKind::criteria, criteria.empty() ? std::string("{}") : criteria.dump(2));
  if (!context.empty()) {
    std::string block = tmpl.context_preamble;
    block.push_back(' ');
    block.append(context);
    append(SegmentKind::context, block);
  }
  std::string shot(kReplyFormatLead);
  shot.push_back(' ');
  shot.append(tmpl.one_shot_example);
  append(SegmentKind::one_shot, shot);
  out.text.pop_back();
  return out;
}

std::vector<std::string_view> balanced_objects(std::string_view raw) {
  std::vector<std::string_view> found;
  std::size_t start = 0;
  while ((start = raw.find('{', start)) != std::string_view::npos) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    std::size_t end = std::string_view::npos;
    for (std::size_t i = start; i < raw.size(); ++i) {
      char c = raw[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          end = i;
          break;
        }
      }
    }
    if (end == std::string_view::npos) {
      ++start;
      continue;
    }
    found.push_back(raw.substr(start, end - start + 1));
    ++start;
  }
  return found;
}

json extract_structured(std::string_view raw, const OutputSchema& schema) {
  std::optional<std::vector<std::string>> first_problems;
  std::size_t consumed_until = 0;
  const char* base = raw.data();
  for (auto candidate : balanced_objects(raw)) {
    auto offset = static_cast<std::size_t>(candidate.data() - base);
    // Once a candidate parses, objects nested inside it are not considered.
    if (offset < consumed_until) continue;
    json parsed = json::parse(candidate, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded() || !parsed.is_object()) continue;
    consumed_until = offset + candidate.size();
    std::vector<std::string> problems;
    if (schema.accepts(parsed, &problems)) return parsed;
    if (!first_problems) first_problems = std::move(problems);
  }
  if (first_problems) throw SchemaMismatch(*first_problems);
  throw NoJsonFound();
}

std::string free_text_reply(std::string_view raw) {
  try {
    auto obj = extract_structured(raw, {{"response", ValueKind::string}});
    auto text = obj["response"].get<std::string>();
    if (!text.empty()) return text;
  } catch (const Error&) {
  }
  return std::string(raw);
}

namespace {

PromptTemplate make(std::string id, std::string instruction, std::string one_shot) {
  PromptTemplate t;
  t.id = std::move(id);
  t.instruction = std::move(instruction);
  t.one_shot_example = std::move(one_shot);
  return t;
}

}  // namespace

const std::vector<PromptTemplate>& TemplateSet::defaults() {
  static const std::vector<PromptTemplate> kDefaults = {
      make(template_id::rules,
           "Generate the game play rules for a turn-based role playing adventure using these "
           "high-level criteria. Write between 5 and 15 short, enforceable rules covering the "
           "time period, the region, the genre, what the player can and cannot do, and how the "
           "NPCs behave.",
           R"({ "rules": [ { "id": "R1", "text": "..." } ] })"),
      make(template_id::setting,
           "Generate the location, time period, and setting description for a role playing "
           "adventure using this context:",
           R"({ "location": "...", "time_period": "...", "setting_description": "..." })"),
      make(template_id::player,
           "Generate the player persona for a role playing adventure using this context. "
           "Describe the attributes and persona of the player character.",
           R"({ "name": "...", "role": "...", "background": "...", "attributes": [ "..." ] })"),
      make(template_id::npcs,
           "Generate the NPCs for a role playing adventure using this context. Generate exactly "
           "npc_count NPCs. For each NPC give a name, background, Big 5 Personality by percentage "
           "(0 to 100 for openness, conscientiousness, extroversion, agreeableness and "
           "neuroticism), and role (protagonist, antagonist, suspect, ally or other).",
           R"({ "npcs": [ { "id": "...", "name": "...", "background": "...", "occupation": "...", )"
           R"("reason_for_suspicion": "...", "role": "suspect", "big5": { "openness": 50, )"
           R"("conscientiousness": 50, "extroversion": 50, "agreeableness": 50, )"
           R"("neuroticism": 50 } } ] })"),
      make(template_id::beats,
           "Generate the narrative beats for a role playing adventure using this context. "
           "Narrative beats are the key moments that indicate story progression. List them in "
           "the order they should happen, each with the criteria that mark it complete.",
           R"({ "beats": [ { "description": "...", "completion_criteria": "..." } ] })"),
      make(template_id::summarize,
           "Summarize the following game memories into a concise, factual context for the "
           "storyteller. Keep names, places, evidence and decisions.",
           R"({ "summary": "..." })"),
      make(template_id::judge,
           "Evaluate whether the text input breaks a game play rule. Compare the text input "
           "against every game play rule and the narrative context.",
           R"({ "compliant": true, "violated_rule_ids": [], "rationale": "..." })"),
      make(template_id::corrective_logic,
           "The text input was judged to violate the game play rules listed here. Generate "
           "corrective logic: short guidance describing how a response should steer the player "
           "back inside the rules and the narrative.",
           R"({ "corrective_logic": "..." })"),
      make(template_id::correction,
           "Write an in-character, corrective response to the player. Follow the corrective "
           "logic, stay inside the setting, remind the player of the game's context, and end "
           "with the available actions as a numbered list.",
           R"({ "response": "..." })"),
      make(template_id::narrator_turn,
           "Continue the turn-based role playing narrative as its narrator. Respond to the "
           "player's input in the game's setting and tone, then offer the next possible player "
           "actions as a numbered list.",
           R"({ "response": "..." })"),
      make(template_id::npc_turn,
           "Respond in character to the player's input. Stay consistent with your personality, "
           "background and memories, then offer the player's next possible actions as a "
           "numbered list.",
           R"({ "response": "..." })"),
      make(template_id::beat_check,
           "Decide whether the active narrative beat has been completed by the recent exchange. "
           "Answer yes or no.",
           R"({ "completed": false })"),
      make(template_id::ablation_judge,
           "Judge the narrative alignment of a game response. Does this response stay within "
           "these rules and setting, and, when an NPC speaks, within that NPC's personality?",
           R"({ "aligned": true, "notes": "..." })"),
      make("interrogate_suspect",
           "The player chose the action Interrogate Suspect. Generate the interrogation scene: "
           "describe the suspect's demeanor and offer lines of questioning the player can pursue "
           "as a numbered list.",
           R"({ "response": "..." })"),
      make("search_crime_scene",
           "The player chose the action Search Crime Scene. Generate evidence, a description of "
           "the environment, and possible player actions as a numbered list.",
           R"({ "response": "..." })"),
      make("call_informant",
           "The player chose the action Call Informant. Generate the informant's call: what the "
           "informant has heard on the street, and possible player actions as a numbered list.",
           R"({ "response": "..." })"),
  };
  return kDefaults;
}

TemplateSet::TemplateSet() {
  for (const auto& t : defaults()) templates_.emplace(t.id, t);
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& dir) {
  TemplateSet set;
  if (!std::filesystem::is_directory(dir)) {
    throw Error("templates directory does not exist: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw InvalidTemplate(entry.path().string() + ": " + e.what());
    }
    set.put(PromptTemplate::from_json(doc));
  }
  return set;
}

const PromptTemplate& TemplateSet::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw InvalidTemplate("unknown template '" + id + "'");
  return it->second;
}

void TemplateSet::put(PromptTemplate tmpl) {
  tmpl.validate();
  auto id = tmpl.id;
  templates_.insert_or_assign(std::move(id), std::move(tmpl));
}

std::vector<std::string> TemplateSet::ids() const {
  std::vector<std::string> out;
  out.reserve(templates_.size());
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

}  // namespace narrative
