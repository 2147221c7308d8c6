#include "narrative/session.hpp"

#include <cctype>
#include <random>

#include <spdlog/spdlog.h>

namespace narrative {

PlayerInput PlayerInput::free_text(std::string text, std::optional<std::string> npc) {
  PlayerInput in;
  in.kind = Kind::free_text;
  in.text = std::move(text);
  in.target_npc = std::move(npc);
  return in;
}

PlayerInput PlayerInput::action(std::string action_id, std::optional<std::string> npc) {
  PlayerInput in;
  in.kind = Kind::action;
  in.action_id = std::move(action_id);
  in.target_npc = std::move(npc);
  return in;
}

PlayerInput PlayerInput::suggested(int index, std::optional<std::string> npc) {
  PlayerInput in;
  in.kind = Kind::suggested;
  in.suggestion_index = index;
  in.target_npc = std::move(npc);
  return in;
}

void PlayerInput::validate() const {
  int payloads = int(text.has_value()) + int(action_id.has_value()) + int(suggestion_index.has_value());
  if (payloads != 1) throw InvalidInput("player input must carry exactly one of text, action_id, suggestion_index");
  switch (kind) {
    case Kind::free_text:
      if (!text || text->empty()) throw InvalidInput("free_text input needs non-empty text");
      break;
    case Kind::action:
      if (!action_id || action_id->empty()) throw InvalidInput("action input needs an action_id");
      break;
    case Kind::suggested:
      if (!suggestion_index) throw InvalidInput("suggested input needs a suggestion_index");
      break;
  }
}

PlayerInput PlayerInput::from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("input must be a JSON object");
  PlayerInput in;
  auto kind = j.value("kind", std::string{});
  if (kind == "free_text") in.kind = Kind::free_text;
  else if (kind == "action") in.kind = Kind::action;
  else if (kind == "suggested") in.kind = Kind::suggested;
  else throw InvalidInput("input.kind must be free_text, action or suggested");
  try {
    if (j.contains("text") && !j["text"].is_null()) in.text = j["text"].get<std::string>();
    if (j.contains("action_id") && !j["action_id"].is_null()) in.action_id = j["action_id"].get<std::string>();
    if (j.contains("suggestion_index") && !j["suggestion_index"].is_null()) {
      in.suggestion_index = j["suggestion_index"].get<int>();
    }
    if (j.contains("target_npc") && !j["target_npc"].is_null()) in.target_npc = j["target_npc"].get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed input: ") + e.what());
  }
  in.validate();
  return in;
}

json PlayerInput::to_json() const {
  static const char* kNames[] = {"free_text", "action", "suggested"};
  json j = {{"kind", kNames[static_cast<int>(kind)]}};
  if (text) j["text"] = *text;
  if (action_id) j["action_id"] = *action_id;
  if (suggestion_index) j["suggestion_index"] = *suggestion_index;
  if (target_npc) j["target_npc"] = *target_npc;
  return j;
}

json to_json(const TranscriptEntry& e) {
  return {{"turn_index", e.turn_index}, {"speaker", e.speaker}, {"text", e.text}, {"was_corrected", e.was_corrected}};
}

json to_json(const BeatTransition& t) {
  return {{"beat_id", t.beat_id}, {"old_status", to_string(t.from)}, {"new_status", to_string(t.to)}};
}

json TurnResponse::to_json() const {
  json transitions = json::array();
  for (const auto& t : beat_transitions) transitions.push_back(narrative::to_json(t));
  return {{"text", text},
          {"speaker", speaker()},
          {"suggested_actions", suggested_actions},
          {"was_corrected", was_corrected},
          {"beat_transitions", std::move(transitions)},
          {"narrative_complete", narrative_complete}};
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Position of the marker "<n>." or "<n>)" at or after `from`, at line start or
// after whitespace and followed by whitespace. Returns {start, end-of-marker}.
std::optional<std::pair<std::size_t, std::size_t>> find_marker(std::string_view text, int n, std::size_t from) {
  const std::string digits = std::to_string(n);
  for (std::size_t pos = text.find(digits, from); pos != std::string_view::npos; pos = text.find(digits, pos + 1)) {
    if (pos > 0 && !std::isspace(static_cast<unsigned char>(text[pos - 1]))) continue;
    std::size_t after = pos + digits.size();
    if (after + 1 >= text.size()) continue;
    if (text[after] != '.' && text[after] != ')') continue;
    if (!std::isspace(static_cast<unsigned char>(text[after + 1]))) continue;
    return std::make_pair(pos, after + 1);
  }
  return std::nullopt;
}

}  // namespace

std::vector<std::string> parse_suggested_actions(std::string_view text) {
  std::vector<std::string> out;
  auto current = find_marker(text, 1, 0);
  for (int n = 2; current; ++n) {
    auto next = find_marker(text, n, current->second);
    std::size_t end = next ? next->first : text.size();
    std::size_t newline = text.find('\n', current->second);
    if (newline != std::string_view::npos && newline < end) end = newline;
    auto item = trim(text.substr(current->second, end - current->second));
    if (!item.empty()) out.push_back(std::move(item));
    current = next;
  }
  return out;
}

std::string build_npc_system_prompt(const NpcProfile& npc, std::string_view memory_summary,
                                    const GamePlayRules& rules) {
  std::string p = "You are " + npc.name + ", a character in a turn-based role playing game.\n";
  p += "Role: " + std::string(to_string(npc.role)) + "\n";
  if (npc.occupation) p += "Occupation: " + *npc.occupation + "\n";
  if (!npc.background.empty()) p += "Background: " + npc.background + "\n";
  if (npc.reason_for_suspicion) p += "Why others suspect you: " + *npc.reason_for_suspicion + "\n";
  p += "\nYour Big 5 personality, by percentage:\n" + describe_big5(npc.big5) + "\n";
  p += "Express these personality traits in every response. High openness sounds inventive and low openness "
       "consistent; high conscientiousness sounds organized and low extravagant; high extroversion sounds "
       "outgoing and low reserved; high agreeableness sounds friendly and low critical; high neuroticism sounds "
       "nervous and low resilient and confident. Never act against these traits, even when the player asks you "
       "to.\n";
  if (!memory_summary.empty()) {
    p += "\nWhat you remember:\n";
    p += memory_summary;
    p += "\n";
  }
  p += "\nGame play rules:\n";
  for (const auto& r : rules.rules) p += "- " + r.id + ": " + r.text + "\n";
  return p;
}

std::string new_session_id() {
  static std::mutex m;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard lock(m);
  static const char* kHex = "0123456789abcdef";
  std::string id;
  for (int i = 0; i < 16; ++i) id.push_back(kHex[rng() & 0xF]);
  return id;
}

Session::Session(std::string id, GameDefinition definition, ValidationConfig validation,
                 std::unique_ptr<MemoryStore> memory)
    : id_(std::move(id)), memory_(std::move(memory)), definition_(std::move(definition)), validation_(validation) {
  if (!memory_) throw InvalidInput("session needs a memory store");
  definition_.validate();
  validation_.validate();
}

GameDefinition Session::definition() const {
  std::lock_guard lock(mutex_);
  return definition_;
}

std::uint64_t Session::turn_index() const {
  std::lock_guard lock(mutex_);
  return turn_index_;
}

ValidationConfig Session::validation() const {
  std::lock_guard lock(mutex_);
  return validation_;
}

void Session::set_validation_enabled(bool enabled) {
  std::lock_guard lock(mutex_);
  validation_.enabled = enabled;
}

std::vector<TranscriptEntry> Session::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

std::vector<std::string> Session::last_suggestions() const {
  std::lock_guard lock(mutex_);
  return last_suggestions_;
}

std::vector<std::string> Session::designer_notes() const {
  std::lock_guard lock(mutex_);
  return designer_notes_;
}

void Session::add_designer_note(std::string note) {
  std::lock_guard lock(mutex_);
  designer_notes_.push_back(std::move(note));
}

std::optional<NarrativeBeat> Session::active_beat() const {
  std::lock_guard lock(mutex_);
  for (const auto& b : definition_.beats) {
    if (b.status == BeatStatus::active) return b;
  }
  return std::nullopt;
}

bool Session::narrative_complete() const {
  std::lock_guard lock(mutex_);
  for (const auto& b : definition_.beats) {
    if (b.status != BeatStatus::complete) return false;
  }
  return true;
}

std::vector<BeatTransition> Session::apply_beat_completion_locked() {
  std::vector<BeatTransition> out;
  auto& beats = definition_.beats;
  for (std::size_t i = 0; i < beats.size(); ++i) {
    if (beats[i].status != BeatStatus::active) continue;
    beats[i].status = BeatStatus::complete;
    out.push_back({beats[i].id, BeatStatus::active, BeatStatus::complete});
    for (std::size_t j = i + 1; j < beats.size(); ++j) {
      if (beats[j].status == BeatStatus::pending) {
        beats[j].status = BeatStatus::active;
        out.push_back({beats[j].id, BeatStatus::pending, BeatStatus::active});
        break;
      }
    }
    break;
  }
  return out;
}

json Session::state_json() const {
  std::lock_guard lock(mutex_);
  json transcript = json::array();
  for (const auto& e : transcript_) transcript.push_back(to_json(e));
  json active = nullptr;
  bool complete = true;
  for (const auto& b : definition_.beats) {
    if (b.status == BeatStatus::active) active = to_json(b);
    if (b.status != BeatStatus::complete) complete = false;
  }
  return {{"session_id", id_},
          {"definition", to_json(definition_)},
          {"turn_index", turn_index_},
          {"validation", validation_.to_json()},
          {"active_beat", active},
          {"narrative_complete", complete},
          {"last_suggestions", last_suggestions_},
          {"designer_notes", designer_notes_},
          {"transcript", std::move(transcript)}};
}

json Session::snapshot() const {
  json j = state_json();
  j["memory"] = memory_->snapshot();
  return j;
}

std::shared_ptr<Session> Session::restore(const json& snapshot, std::shared_ptr<const Embedder> embedder) {
  try {
    auto memory = MemoryStore::restore(snapshot.at("memory"), std::move(embedder));
    auto session = std::make_shared<Session>(snapshot.at("session_id").get<std::string>(),
                                             definition_from_json(snapshot.at("definition")),
                                             ValidationConfig::from_json(snapshot.at("validation")), std::move(memory));
    session->turn_index_ = snapshot.at("turn_index").get<std::uint64_t>();
    session->last_suggestions_ = snapshot.value("last_suggestions", std::vector<std::string>{});
    session->designer_notes_ = snapshot.value("designer_notes", std::vector<std::string>{});
    for (const auto& e : snapshot.at("transcript")) {
      session->transcript_.push_back({e.at("turn_index").get<std::uint64_t>(), e.at("speaker").get<std::string>(),
                                      e.at("text").get<std::string>(), e.at("was_corrected").get<bool>()});
    }
    return session;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed session snapshot: ") + e.what());
  }
}

Session::TurnClaim::TurnClaim(Session& s) : session_(s) {
  bool expected = false;
  if (!session_.turn_in_flight_.compare_exchange_strong(expected, true)) throw TurnInFlight();
}

Session::TurnClaim::~TurnClaim() { session_.turn_in_flight_.store(false); }

SessionEngine::SessionEngine(LlmGateway& gateway, const TemplateSet& templates, MemoryConfig memory_config,
                             std::shared_ptr<const Embedder> embedder)
    : gateway_(gateway), templates_(templates), memory_config_(memory_config), embedder_(std::move(embedder)) {
  memory_config_.validate();
}

std::unique_ptr<MemoryStore> SessionEngine::new_memory() const {
  return std::make_unique<MemoryStore>(memory_config_, embedder_);
}

std::shared_ptr<Session> SessionEngine::create_session(GameDefinition definition, ValidationConfig validation,
                                                       std::unique_ptr<MemoryStore> memory,
                                                       std::optional<std::string> id) const {
  for (const auto& m : definition.mechanics) {
    if (!templates_.contains(m.template_id)) {
      throw InvalidInput("mechanic '" + m.label + "' uses unknown template '" + m.template_id + "'");
    }
  }
  for (std::size_t i = 0; i < definition.beats.size(); ++i) {
    definition.beats[i].status = i == 0 ? BeatStatus::active : BeatStatus::pending;
  }
  if (!memory) memory = new_memory();
  auto session = std::make_shared<Session>(id.value_or(new_session_id()), std::move(definition), validation,
                                           std::move(memory));
  session->memory().ensure_scope(session->session_scope());
  for (const auto& npc : session->definition_.npcs) session->memory().ensure_scope(session->npc_scope(npc.id));
  return session;
}

namespace {

std::string narrator_system_prompt(const GameDefinition& def, const std::vector<std::string>& designer_notes) {
  std::string p = "You are the narrator of a turn-based role playing game.\n";
  p += "Location: " + def.setting.location + "\nTime period: " + def.setting.time_period + "\n";
  p += "Setting: " + def.setting.setting_description + "\n";
  p += "The player is " + (def.player.name.empty() ? std::string("the protagonist") : def.player.name) + ", " +
       def.player.role + ".\n";
  if (!def.npcs.empty()) {
    p += "Characters:";
    for (const auto& n : def.npcs) p += " " + n.name + " (" + std::string(to_string(n.role)) + ");";
    p += "\n";
  }
  for (const auto& note : designer_notes) p += "Designer note: " + note + "\n";
  p += "\nGame play rules:\n";
  for (const auto& r : def.rules.rules) p += "- " + r.id + ": " + r.text + "\n";
  return p;
}

}  // namespace

bool SessionEngine::judge_beat(const NarrativeBeat& beat, std::string_view recent_exchange,
                               std::string_view context) const {
  const json criteria = {{"active_beat", beat.description},
                         {"completion_criteria", beat.completion_criteria},
                         {"recent_exchange", std::string(recent_exchange)}};
  try {
    auto prompt = render(templates_.get(template_id::beat_check), criteria, context);
    auto reply = gateway_.complete({ChatMessage::user(prompt.text)}, Sampling::judge());
    try {
      return extract_structured(reply, {{"completed", ValueKind::boolean}})["completed"].get<bool>();
    } catch (const NoJsonFound&) {
    }
    std::string word;
    for (char c : reply) {
      if (std::isalpha(static_cast<unsigned char>(c))) word.push_back(static_cast<char>(std::tolower(c)));
      else if (!word.empty()) break;
    }
    if (word == "yes") return true;
    if (word == "no") return false;
    spdlog::info("beat judge gave an unusable reply: {}", reply.substr(0, 80));
  } catch (const Error& e) {
    spdlog::warn("beat judge failed: {}", e.what());
  }
  return false;
}

std::vector<BeatTransition> SessionEngine::check_beat_progress(Session& session, std::string_view recent_exchange,
                                                               std::string_view context) const {
  auto beat = session.active_beat();
  if (!beat) return {};
  if (!judge_beat(*beat, recent_exchange, context)) return {};
  std::lock_guard lock(session.mutex_);
  return session.apply_beat_completion_locked();
}

TurnResponse SessionEngine::take_turn(Session& session, const PlayerInput& input) const {
  Session::TurnClaim claim(session);
  input.validate();

  GameDefinition def;
  ValidationConfig validation;
  std::uint64_t turn;
  std::vector<std::string> suggestions;
  std::vector<std::string> notes;
  {
    std::lock_guard lock(session.mutex_);
    def = session.definition_;
    validation = session.validation_;
    turn = session.turn_index_;
    suggestions = session.last_suggestions_;
    notes = session.designer_notes_;
  }

  // (1) resolve the input text
  const NpcProfile* npc = nullptr;
  if (input.target_npc) {
    npc = def.find_npc(*input.target_npc);
    if (!npc) throw UnknownNpc("unknown NPC '" + *input.target_npc + "'");
  }
  std::string player_text;
  std::string template_name = npc ? template_id::npc_turn : template_id::narrator_turn;
  RecordKind input_kind = RecordKind::conversation;
  switch (input.kind) {
    case PlayerInput::Kind::free_text:
      player_text = *input.text;
      break;
    case PlayerInput::Kind::action: {
      const auto* mechanic = def.find_mechanic(*input.action_id);
      if (!mechanic) throw UnknownAction("unknown action '" + *input.action_id + "'");
      player_text = mechanic->label;
      if (npc) player_text += ": " + npc->name;
      template_name = mechanic->template_id;
      input_kind = RecordKind::action;
      break;
    }
    case PlayerInput::Kind::suggested: {
      int idx = *input.suggestion_index;
      if (idx < 1 || idx > static_cast<int>(suggestions.size())) {
        throw UnknownAction("no suggested action #" + std::to_string(idx));
      }
      player_text = suggestions[static_cast<std::size_t>(idx - 1)];
      input_kind = RecordKind::action;
      break;
    }
  }

  // (2) guard
  auto& memory = session.memory();
  const auto session_scope = session.session_scope();
  const std::string context = memory.context_pack(session_scope, player_text, gateway_, templates_);
  auto outcome = guard(player_text, def.rules, context, validation, npc, gateway_, templates_);

  TurnResponse response;
  response.speaker_npc = npc ? std::optional<std::string>(npc->id) : std::nullopt;
  if (auto* c = std::get_if<GuardCorrected>(&outcome)) {
    // (3) corrected turns are still played and remembered
    response.text = c->text;
    response.was_corrected = true;
  } else {
    // (4) generation
    json criteria = {{"player_input", player_text}};
    if (auto active = std::find_if(def.beats.begin(), def.beats.end(),
                                   [](const NarrativeBeat& b) { return b.status == BeatStatus::active; });
        active != def.beats.end()) {
      criteria["active_beat"] = active->description;
    }
    if (!def.mechanics.empty()) {
      json labels = json::array();
      for (const auto& m : def.mechanics) labels.push_back(m.label);
      criteria["available_actions"] = std::move(labels);
    }
    std::vector<ChatMessage> messages;
    if (npc) {
      criteria["speaker"] = npc->name;
      const auto npc_summary = memory.context_pack(session.npc_scope(npc->id), player_text, gateway_, templates_);
      messages.push_back(ChatMessage::system(build_npc_system_prompt(*npc, npc_summary, def.rules)));
    } else {
      messages.push_back(ChatMessage::system(narrator_system_prompt(def, notes)));
    }
    messages.push_back(ChatMessage::user(render(templates_.get(template_name), criteria, context).text));
    try {
      response.text = free_text_reply(gateway_.complete(messages, Sampling::play()));
    } catch (const GatewayError& e) {
      throw TurnFailed(std::string("generation failed: ") + e.what());
    }
    if (response.text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw TurnFailed("generation returned an empty response");
    }
  }
  response.suggested_actions = parse_suggested_actions(response.text);

  // (5) remember
  const std::string speaker_name = npc ? npc->name : "Narrator";
  const std::string player_line = "Player: " + player_text;
  const std::string reply_line = speaker_name + ": " + response.text;
  const RecordKind reply_kind = npc ? RecordKind::conversation : RecordKind::event;
  memory.record(session_scope, input_kind, player_line, turn);
  memory.record(session_scope, reply_kind, reply_line, turn);
  if (npc) {
    memory.record(session.npc_scope(npc->id), input_kind, player_line, turn);
    memory.record(session.npc_scope(npc->id), reply_kind, reply_line, turn);
  }

  // (6) beat progress, judged outside the lock
  bool advance = false;
  if (auto beat = session.active_beat()) advance = judge_beat(*beat, player_line + "\n" + reply_line, context);

  // (7) commit
  std::lock_guard lock(session.mutex_);
  if (advance) response.beat_transitions = session.apply_beat_completion_locked();
  session.transcript_.push_back({turn, "player", player_text, response.was_corrected});
  session.transcript_.push_back({turn, response.speaker(), response.text, response.was_corrected});
  session.last_suggestions_ = response.suggested_actions;
  session.turn_index_ = turn + 1;
  response.narrative_complete =
      std::all_of(session.definition_.beats.begin(), session.definition_.beats.end(),
                  [](const NarrativeBeat& b) { return b.status == BeatStatus::complete; });
  return response;
}

GuardOutcome SessionEngine::submit_designer_note(Session& session, const std::string& note) const {
  if (note.empty()) throw InvalidInput("designer note must be non-empty");
  Session::TurnClaim claim(session);
  auto def = session.definition();
  const auto context = session.memory().context_pack(session.session_scope(), note, gateway_, templates_);
  auto outcome = guard(note, def.rules, context, session.validation(), nullptr, gateway_, templates_);
  if (!corrected(outcome)) session.add_designer_note(note);
  return outcome;
}

}  // namespace narrative
