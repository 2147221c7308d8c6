#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "narrative/error.hpp"

namespace narrative {

using json = nlohmann::json;

// A designer-authored player action such as "Interrogate Suspect".
struct DesignerMechanic {
  std::string id;
  std::string label;
  std::string template_id;

  friend bool operator==(const DesignerMechanic&, const DesignerMechanic&) = default;
};

struct DesignerCriteria {
  std::string genre;
  std::string location_hint;
  std::string time_period_hint;
  std::string tone;
  std::string player_role_hint;
  int npc_count = 1;
  std::vector<DesignerMechanic> mechanics;
  std::string notes;

  // Throws InvalidInput naming the offending field.
  void validate() const;
  static DesignerCriteria from_json(const json& j);
  json to_json() const;
};

struct Rule {
  std::string id;
  std::string text;

  friend bool operator==(const Rule&, const Rule&) = default;
};

struct GamePlayRules {
  std::vector<Rule> rules;

  bool empty() const { return rules.empty(); }
  std::size_t size() const { return rules.size(); }
  friend bool operator==(const GamePlayRules&, const GamePlayRules&) = default;
};

struct NarrativeSetting {
  std::string location;
  std::string time_period;
  std::string setting_description;

  friend bool operator==(const NarrativeSetting&, const NarrativeSetting&) = default;
};

struct PlayerPersona {
  std::string name;
  std::string role;
  std::string background;
  std::vector<std::string> attributes;

  friend bool operator==(const PlayerPersona&, const PlayerPersona&) = default;
};

// Percentages in [0, 100].
struct Big5Profile {
  int openness = 50;
  int conscientiousness = 50;
  int extroversion = 50;
  int agreeableness = 50;
  int neuroticism = 50;

  void validate() const;
  friend bool operator==(const Big5Profile&, const Big5Profile&) = default;
};

enum class NpcRole { protagonist, antagonist, suspect, ally, other };

std::string_view to_string(NpcRole role);
NpcRole npc_role_from_string(std::string_view s);  // unknown values map to other

struct NpcProfile {
  std::string id;
  std::string name;
  std::string background;
  Big5Profile big5;
  NpcRole role = NpcRole::other;
  std::optional<std::string> occupation;
  std::optional<std::string> reason_for_suspicion;

  friend bool operator==(const NpcProfile&, const NpcProfile&) = default;
};

enum class BeatStatus { pending, active, complete };

std::string_view to_string(BeatStatus status);
BeatStatus beat_status_from_string(std::string_view s);

struct NarrativeBeat {
  std::string id;
  int ordinal = 0;
  std::string description;
  std::string completion_criteria;
  BeatStatus status = BeatStatus::pending;

  friend bool operator==(const NarrativeBeat&, const NarrativeBeat&) = default;
};

struct GameDefinition {
  GamePlayRules rules;
  NarrativeSetting setting;
  PlayerPersona player;
  std::vector<NpcProfile> npcs;
  std::vector<NarrativeBeat> beats;
  std::vector<DesignerMechanic> mechanics;

  // Structural invariants; npc_count is checked by the caller that knows it.
  void validate() const;
  const NpcProfile* find_npc(std::string_view id) const;
  const DesignerMechanic* find_mechanic(std::string_view id_or_label) const;

  friend bool operator==(const GameDefinition&, const GameDefinition&) = default;
};

// JSON forms, snake_case field names matching the struct members.
json to_json(const DesignerMechanic& m);
json to_json(const Rule& r);
json to_json(const GamePlayRules& r);
json to_json(const NarrativeSetting& s);
json to_json(const PlayerPersona& p);
json to_json(const Big5Profile& b);
json to_json(const NpcProfile& n);
json to_json(const NarrativeBeat& b);
json to_json(const GameDefinition& d);

DesignerMechanic mechanic_from_json(const json& j);
GameDefinition definition_from_json(const json& j);

// Stage-output parsers. They accept the one-shot reply shapes and throw
// InvariantViolation for out-of-range or inconsistent content.
GamePlayRules rules_from_reply(const json& reply);
NarrativeSetting setting_from_reply(const json& reply);
PlayerPersona player_from_reply(const json& reply);
std::vector<NpcProfile> npcs_from_reply(const json& reply);
std::vector<NarrativeBeat> beats_from_reply(const json& reply);
Big5Profile big5_from_json(const json& j);

// "Thomas O'Reilly" -> "thomas-oreilly"
std::string slugify(std::string_view name);

}  // namespace narrative
