#include "narrative/definition.hpp"

#include <cctype>
#include <cmath>
#include <set>

namespace narrative {

namespace {

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return "";
  const auto& v = j[key];
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto s = string_field(j, key);
  if (s.empty()) return std::nullopt;
  return s;
}

int percentage(const json& j, const char* key) {
  const json* v = nullptr;
  if (j.contains(key)) v = &j[key];
  // Models spell the trait both ways.
  if (!v && std::string_view(key) == "extroversion" && j.contains("extraversion")) v = &j["extraversion"];
  if (!v) throw InvariantViolation(std::string("Big 5 profile is missing ") + key);

  double value;
  if (v->is_number()) {
    value = v->get<double>();
  } else if (v->is_string()) {
    std::string s = v->get<std::string>();
    while (!s.empty() && (s.back() == '%' || std::isspace(static_cast<unsigned char>(s.back())))) s.pop_back();
    try {
      std::size_t used = 0;
      value = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw InvariantViolation(std::string("Big 5 ") + key + " is not a percentage: " + v->dump());
    }
  } else {
    throw InvariantViolation(std::string("Big 5 ") + key + " is not a percentage: " + v->dump());
  }
  if (value != std::floor(value)) {
    throw InvariantViolation(std::string("Big 5 ") + key + " must be a whole percentage");
  }
  if (value < 0 || value > 100) {
    throw InvariantViolation(std::string("Big 5 ") + key + " = " + std::to_string(static_cast<long long>(value)) +
                             " is outside [0, 100]");
  }
  return static_cast<int>(value);
}

}  // namespace

std::string slugify(std::string_view name) {
  std::string out;
  bool dash = false;
  for (unsigned char c : name) {
    if (std::isalnum(c)) {
      if (dash && !out.empty()) out.push_back('-');
      dash = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      continue;
    } else {
      dash = true;
    }
  }
  return out;
}

void DesignerCriteria::validate() const {
  if (genre.empty()) throw InvalidInput("criteria.genre is required");
  if (npc_count < 1) throw InvalidInput("criteria.npc_count must be at least 1");
  std::set<std::string> labels, ids;
  for (const auto& m : mechanics) {
    if (m.label.empty()) throw InvalidInput("criteria.mechanics entries need a label");
    if (!labels.insert(m.label).second) throw InvalidInput("duplicate mechanic label '" + m.label + "'");
    if (!ids.insert(m.id).second) throw InvalidInput("duplicate mechanic id '" + m.id + "'");
  }
}

DesignerMechanic mechanic_from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("mechanic must be an object");
  DesignerMechanic m;
  m.label = string_field(j, "label");
  m.id = string_field(j, "id");
  if (m.id.empty()) m.id = slugify(m.label);
  m.template_id = string_field(j, "template_id");
  if (m.template_id.empty()) m.template_id = "narrator_turn";
  return m;
}

DesignerCriteria DesignerCriteria::from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("criteria must be a JSON object");
  DesignerCriteria c;
  if (!j.contains("genre") || !j["genre"].is_string()) throw InvalidInput("criteria.genre is required");
  c.genre = j["genre"].get<std::string>();
  c.location_hint = string_field(j, "location_hint");
  c.time_period_hint = string_field(j, "time_period_hint");
  c.tone = string_field(j, "tone");
  c.player_role_hint = string_field(j, "player_role_hint");
  c.notes = string_field(j, "notes");
  if (!j.contains("npc_count") || !j["npc_count"].is_number_integer()) {
    throw InvalidInput("criteria.npc_count must be an integer");
  }
  c.npc_count = j["npc_count"].get<int>();
  if (j.contains("mechanics")) {
    if (!j["mechanics"].is_array()) throw InvalidInput("criteria.mechanics must be an array");
    for (const auto& m : j["mechanics"]) c.mechanics.push_back(mechanic_from_json(m));
  }
  c.validate();
  return c;
}

json DesignerCriteria::to_json() const {
  json mech = json::array();
  for (const auto& m : mechanics) mech.push_back(narrative::to_json(m));
  return {{"genre", genre},
          {"location_hint", location_hint},
          {"time_period_hint", time_period_hint},
          {"tone", tone},
          {"player_role_hint", player_role_hint},
          {"npc_count", npc_count},
          {"mechanics", std::move(mech)},
          {"notes", notes}};
}

void Big5Profile::validate() const {
  for (int v : {openness, conscientiousness, extroversion, agreeableness, neuroticism}) {
    if (v < 0 || v > 100) throw InvariantViolation("Big 5 percentage " + std::to_string(v) + " is outside [0, 100]");
  }
}

std::string_view to_string(NpcRole role) {
  switch (role) {
    case NpcRole::protagonist: return "protagonist";
    case NpcRole::antagonist: return "antagonist";
    case NpcRole::suspect: return "suspect";
    case NpcRole::ally: return "ally";
    case NpcRole::other: return "other";
  }
  return "other";
}

NpcRole npc_role_from_string(std::string_view s) {
  std::string lower;
  for (unsigned char c : s) lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "protagonist") return NpcRole::protagonist;
  if (lower == "antagonist") return NpcRole::antagonist;
  if (lower == "suspect") return NpcRole::suspect;
  if (lower == "ally") return NpcRole::ally;
  return NpcRole::other;
}

std::string_view to_string(BeatStatus status) {
  switch (status) {
    case BeatStatus::pending: return "pending";
    case BeatStatus::active: return "active";
    case BeatStatus::complete: return "complete";
  }
  return "pending";
}

BeatStatus beat_status_from_string(std::string_view s) {
  if (s == "pending") return BeatStatus::pending;
  if (s == "active") return BeatStatus::active;
  if (s == "complete") return BeatStatus::complete;
  throw InvalidInput("unknown beat status '" + std::string(s) + "'");
}

void GameDefinition::validate() const {
  if (rules.empty()) throw InvariantViolation("game definition has no game play rules");
  std::set<std::string> seen;
  for (const auto& r : rules.rules) {
    if (r.text.empty()) throw InvariantViolation("rule '" + r.id + "' has empty text");
    if (!seen.insert(r.id).second) throw InvariantViolation("duplicate rule id '" + r.id + "'");
  }
  if (setting.location.empty() || setting.time_period.empty() || setting.setting_description.empty()) {
    throw InvariantViolation("setting needs a location, time period and description");
  }
  if (player.role.empty()) throw InvariantViolation("player persona needs a role");
  std::set<std::string> names, npc_ids;
  for (const auto& n : npcs) {
    if (n.name.empty()) throw InvariantViolation("NPC without a name");
    if (!names.insert(n.name).second) throw InvariantViolation("duplicate NPC name '" + n.name + "'");
    if (!npc_ids.insert(n.id).second) throw InvariantViolation("duplicate NPC id '" + n.id + "'");
    n.big5.validate();
  }
  if (beats.empty()) throw InvariantViolation("game definition has no narrative beats");
  int active = 0;
  for (std::size_t i = 0; i < beats.size(); ++i) {
    if (i > 0 && beats[i].ordinal <= beats[i - 1].ordinal) {
      throw InvariantViolation("beat ordinals must be strictly increasing");
    }
    if (beats[i].status == BeatStatus::active) ++active;
  }
  if (active > 1) throw InvariantViolation("more than one narrative beat is active");
  std::set<std::string> labels;
  for (const auto& m : mechanics) {
    if (!labels.insert(m.label).second) throw InvariantViolation("duplicate mechanic label '" + m.label + "'");
  }
}

const NpcProfile* GameDefinition::find_npc(std::string_view id) const {
  for (const auto& n : npcs) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const DesignerMechanic* GameDefinition::find_mechanic(std::string_view id_or_label) const {
  for (const auto& m : mechanics) {
    if (m.id == id_or_label || m.label == id_or_label) return &m;
  }
  return nullptr;
}

json to_json(const DesignerMechanic& m) {
  return {{"id", m.id}, {"label", m.label}, {"template_id", m.template_id}};
}

json to_json(const Rule& r) { return {{"id", r.id}, {"text", r.text}}; }

json to_json(const GamePlayRules& r) {
  json out = json::array();
  for (const auto& rule : r.rules) out.push_back(to_json(rule));
  return out;
}

json to_json(const NarrativeSetting& s) {
  return {{"location", s.location}, {"time_period", s.time_period}, {"setting_description", s.setting_description}};
}

json to_json(const PlayerPersona& p) {
  return {{"name", p.name}, {"role", p.role}, {"background", p.background}, {"attributes", p.attributes}};
}

json to_json(const Big5Profile& b) {
  return {{"openness", b.openness},
          {"conscientiousness", b.conscientiousness},
          {"extroversion", b.extroversion},
          {"agreeableness", b.agreeableness},
          {"neuroticism", b.neuroticism}};
}

json to_json(const NpcProfile& n) {
  json j = {{"id", n.id},
            {"name", n.name},
            {"background", n.background},
            {"big5", to_json(n.big5)},
            {"role", to_string(n.role)},
            {"occupation", n.occupation ? json(*n.occupation) : json(nullptr)},
            {"reason_for_suspicion", n.reason_for_suspicion ? json(*n.reason_for_suspicion) : json(nullptr)}};
  return j;
}

json to_json(const NarrativeBeat& b) {
  return {{"id", b.id},
          {"ordinal", b.ordinal},
          {"description", b.description},
          {"completion_criteria", b.completion_criteria},
          {"status", to_string(b.status)}};
}

json to_json(const GameDefinition& d) {
  json npcs = json::array();
  for (const auto& n : d.npcs) npcs.push_back(to_json(n));
  json beats = json::array();
  for (const auto& b : d.beats) beats.push_back(to_json(b));
  json mech = json::array();
  for (const auto& m : d.mechanics) mech.push_back(to_json(m));
  return {{"rules", to_json(d.rules)},
          {"setting", to_json(d.setting)},
          {"player", to_json(d.player)},
          {"npcs", std::move(npcs)},
          {"beats", std::move(beats)},
          {"mechanics", std::move(mech)}};
}

Big5Profile big5_from_json(const json& j) {
  if (!j.is_object()) throw InvariantViolation("Big 5 profile must be an object");
  Big5Profile b;
  b.openness = percentage(j, "openness");
  b.conscientiousness = percentage(j, "conscientiousness");
  b.extroversion = percentage(j, "extroversion");
  b.agreeableness = percentage(j, "agreeableness");
  b.neuroticism = percentage(j, "neuroticism");
  return b;
}

GamePlayRules rules_from_reply(const json& reply) {
  const auto& list = reply.at("rules");
  GamePlayRules out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < list.size(); ++i) {
    Rule r;
    if (list[i].is_string()) {
      r.text = list[i].get<std::string>();
    } else if (list[i].is_object()) {
      r.id = string_field(list[i], "id");
      r.text = string_field(list[i], "text");
    } else {
      throw InvariantViolation("rule entries must be strings or {id, text} objects");
    }
    if (r.id.empty()) r.id = "R" + std::to_string(i + 1);
    if (r.text.empty()) throw InvariantViolation("rule '" + r.id + "' has empty text");
    if (!ids.insert(r.id).second) throw InvariantViolation("duplicate rule id '" + r.id + "'");
    out.rules.push_back(std::move(r));
  }
  if (out.empty()) throw InvariantViolation("no game play rules were generated");
  return out;
}

NarrativeSetting setting_from_reply(const json& reply) {
  NarrativeSetting s{string_field(reply, "location"), string_field(reply, "time_period"),
                     string_field(reply, "setting_description")};
  if (s.location.empty() || s.time_period.empty() || s.setting_description.empty()) {
    throw InvariantViolation("setting fields must be non-empty");
  }
  return s;
}

PlayerPersona player_from_reply(const json& reply) {
  PlayerPersona p;
  p.name = string_field(reply, "name");
  p.role = string_field(reply, "role");
  p.background = string_field(reply, "background");
  if (reply.contains("attributes") && reply["attributes"].is_array()) {
    for (const auto& a : reply["attributes"]) p.attributes.push_back(a.is_string() ? a.get<std::string>() : a.dump());
  }
  if (p.role.empty()) throw InvariantViolation("player persona needs a role");
  return p;
}

std::vector<NpcProfile> npcs_from_reply(const json& reply) {
  std::vector<NpcProfile> out;
  std::set<std::string> names, ids;
  for (const auto& j : reply.at("npcs")) {
    if (!j.is_object()) throw InvariantViolation("NPC entries must be objects");
    NpcProfile n;
    n.name = string_field(j, "name");
    if (n.name.empty()) throw InvariantViolation("NPC without a name");
    n.id = string_field(j, "id");
    if (n.id.empty() || n.id == "...") n.id = slugify(n.name);
    n.background = string_field(j, "background");
    n.big5 = big5_from_json(j.contains("big5") ? j["big5"] : j);
    n.role = npc_role_from_string(string_field(j, "role"));
    n.occupation = optional_string(j, "occupation");
    n.reason_for_suspicion = optional_string(j, "reason_for_suspicion");
    if (!names.insert(n.name).second) throw InvariantViolation("duplicate NPC name '" + n.name + "'");
    if (!ids.insert(n.id).second) throw InvariantViolation("duplicate NPC id '" + n.id + "'");
    out.push_back(std::move(n));
  }
  return out;
}

std::vector<NarrativeBeat> beats_from_reply(const json& reply) {
  std::vector<NarrativeBeat> out;
  const auto& list = reply.at("beats");
  for (std::size_t i = 0; i < list.size(); ++i) {
    NarrativeBeat b;
    b.ordinal = static_cast<int>(i + 1);
    if (list[i].is_string()) {
      b.description = list[i].get<std::string>();
    } else {
      b.description = string_field(list[i], "description");
      b.completion_criteria = string_field(list[i], "completion_criteria");
      b.id = string_field(list[i], "id");
    }
    if (b.description.empty()) throw InvariantViolation("narrative beat without a description");
    if (b.completion_criteria.empty()) b.completion_criteria = b.description;
    if (b.id.empty()) b.id = "beat-" + std::to_string(b.ordinal);
    out.push_back(std::move(b));
  }
  if (out.empty()) throw InvariantViolation("no narrative beats were generated");
  return out;
}

GameDefinition definition_from_json(const json& j) {
  try {
    GameDefinition d;
    for (const auto& r : j.at("rules")) d.rules.rules.push_back({r.at("id"), r.at("text")});
    d.setting = setting_from_reply(j.at("setting"));
    d.player = player_from_reply(j.at("player"));
    d.npcs = npcs_from_reply(j);
    for (const auto& b : j.at("beats")) {
      NarrativeBeat beat;
      beat.id = b.at("id").get<std::string>();
      beat.ordinal = b.at("ordinal").get<int>();
      beat.description = b.at("description").get<std::string>();
      beat.completion_criteria = b.value("completion_criteria", beat.description);
      beat.status = beat_status_from_string(b.value("status", "pending"));
      d.beats.push_back(std::move(beat));
    }
    for (const auto& m : j.value("mechanics", json::array())) d.mechanics.push_back(mechanic_from_json(m));
    d.validate();
    return d;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed game definition: ") + e.what());
  }
}

}  // namespace narrative
