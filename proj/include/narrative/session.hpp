#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "narrative/definition.hpp"
#include "narrative/llm.hpp"
#include "narrative/memory.hpp"
#include "narrative/prompt.hpp"
#include "narrative/validation.hpp"

namespace narrative {

struct PlayerInput {
  enum class Kind { free_text, action, suggested };

  Kind kind = Kind::free_text;
  std::optional<std::string> text;             // free_text
  std::optional<std::string> action_id;        // action: mechanic id or label
  std::optional<int> suggestion_index;         // suggested: 1-based
  std::optional<std::string> target_npc;

  static PlayerInput free_text(std::string text, std::optional<std::string> npc = {});
  static PlayerInput action(std::string action_id, std::optional<std::string> npc = {});
  static PlayerInput suggested(int index, std::optional<std::string> npc = {});

  // Exactly one payload, matching the kind. Throws InvalidInput.
  void validate() const;
  static PlayerInput from_json(const json& j);
  json to_json() const;
};

struct TranscriptEntry {
  std::uint64_t turn_index = 0;
  std::string speaker;  // "player", "narrator" or "npc:<id>"
  std::string text;
  bool was_corrected = false;

  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

struct BeatTransition {
  std::string beat_id;
  BeatStatus from;
  BeatStatus to;

  friend bool operator==(const BeatTransition&, const BeatTransition&) = default;
};

struct TurnResponse {
  std::string text;
  std::optional<std::string> speaker_npc;  // narrator when empty
  std::vector<std::string> suggested_actions;
  bool was_corrected = false;
  std::vector<BeatTransition> beat_transitions;
  bool narrative_complete = false;

  std::string speaker() const { return speaker_npc ? "npc:" + *speaker_npc : "narrator"; }
  json to_json() const;
};

json to_json(const TranscriptEntry& e);
json to_json(const BeatTransition& t);

// Numbered options ("1. ...", "2) ...") in order, on separate lines or inline.
std::vector<std::string> parse_suggested_actions(std::string_view text);

std::string build_npc_system_prompt(const NpcProfile& npc, std::string_view memory_summary,
                                    const GamePlayRules& rules);

std::string new_session_id();

// Server-authoritative state of one game. Readers get copies under a lock;
// only the engine's single in-flight turn writes.
class Session {
 public:
  Session(std::string id, GameDefinition definition, ValidationConfig validation,
          std::unique_ptr<MemoryStore> memory);

  const std::string& id() const { return id_; }
  MemoryStore& memory() const { return *memory_; }
  MemoryScope session_scope() const { return MemoryScope::session(id_); }
  MemoryScope npc_scope(const std::string& npc_id) const { return MemoryScope::npc(id_, npc_id); }

  GameDefinition definition() const;
  std::uint64_t turn_index() const;
  ValidationConfig validation() const;
  void set_validation_enabled(bool enabled);
  std::vector<TranscriptEntry> transcript() const;
  std::vector<std::string> last_suggestions() const;
  std::vector<std::string> designer_notes() const;
  void add_designer_note(std::string note);
  std::optional<NarrativeBeat> active_beat() const;
  bool narrative_complete() const;

  // definition + state, without memory
  json state_json() const;
  // state + memory records; restore() reproduces the session exactly
  json snapshot() const;
  static std::shared_ptr<Session> restore(const json& snapshot, std::shared_ptr<const Embedder> embedder);

 private:
  friend class SessionEngine;

  // RAII claim on the single in-flight turn slot.
  class TurnClaim {
   public:
    explicit TurnClaim(Session& s);
    ~TurnClaim();
    TurnClaim(const TurnClaim&) = delete;
    TurnClaim& operator=(const TurnClaim&) = delete;

   private:
    Session& session_;
  };

  std::vector<BeatTransition> apply_beat_completion_locked();

  const std::string id_;
  std::unique_ptr<MemoryStore> memory_;
  mutable std::mutex mutex_;
  GameDefinition definition_;
  ValidationConfig validation_;
  std::uint64_t turn_index_ = 0;
  std::vector<TranscriptEntry> transcript_;
  std::vector<std::string> last_suggestions_;
  std::vector<std::string> designer_notes_;
  std::atomic<bool> turn_in_flight_{false};
};

// Drives sessions: creation, turns, and beat progression.
class SessionEngine {
 public:
  SessionEngine(LlmGateway& gateway, const TemplateSet& templates, MemoryConfig memory_config,
                std::shared_ptr<const Embedder> embedder);

  std::unique_ptr<MemoryStore> new_memory() const;

  // First beat active, memory scopes for the session and every NPC.
  // `memory` is the store initialization wrote to, if any.
  std::shared_ptr<Session> create_session(GameDefinition definition, ValidationConfig validation,
                                          std::unique_ptr<MemoryStore> memory = nullptr,
                                          std::optional<std::string> id = {}) const;

  // Throws TurnInFlight, UnknownAction, UnknownNpc, InvalidInput, TurnFailed.
  // A throwing turn leaves the session untouched.
  TurnResponse take_turn(Session& session, const PlayerInput& input) const;

  // Asks the yes/no judge about the active beat and applies the result.
  std::vector<BeatTransition> check_beat_progress(Session& session, std::string_view recent_exchange,
                                                  std::string_view context = {}) const;

  // Routes a designer edit through the validation guard; appends it when it passes.
  GuardOutcome submit_designer_note(Session& session, const std::string& note) const;

  LlmGateway& gateway() const { return gateway_; }
  const TemplateSet& templates() const { return templates_; }

 private:
  bool judge_beat(const NarrativeBeat& beat, std::string_view recent_exchange, std::string_view context) const;

  LlmGateway& gateway_;
  const TemplateSet& templates_;
  MemoryConfig memory_config_;
  std::shared_ptr<const Embedder> embedder_;
};

}  // namespace narrative
