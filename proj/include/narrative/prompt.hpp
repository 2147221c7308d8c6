#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "narrative/error.hpp"

namespace narrative {

using json = nlohmann::json;

// A fixed four-slot prompt: instruction, designer criteria (JSON), optional
// context, and a one-shot reply skeleton.
struct PromptTemplate {
  std::string id;
  std::string instruction;
  std::string context_preamble = "Consider this additional context:";
  std::string one_shot_example;

  // Throws InvalidTemplate on an empty instruction or a one-shot example that
  // is not a JSON object.
  void validate() const;

  static PromptTemplate from_json(const json& j);
  json to_json() const;
};

enum class SegmentKind { instruction, criteria, context, one_shot };

std::string_view to_string(SegmentKind kind);

struct Span {
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct Segment {
  SegmentKind kind;
  Span span;
};

struct RenderedPrompt {
  std::string text;
  std::vector<Segment> segments;

  std::string_view segment_text(const Segment& s) const {
    return std::string_view(text).substr(s.span.offset, s.span.length);
  }
  const Segment* find(SegmentKind kind) const;
};

enum class ValueKind { string, number, boolean, array, object };

std::string_view to_string(ValueKind kind);

struct OutputSchema {
  std::vector<std::pair<std::string, ValueKind>> required_keys;

  OutputSchema() = default;
  OutputSchema(std::initializer_list<std::pair<std::string, ValueKind>> keys);

  bool accepts(const json& object, std::vector<std::string>* problems = nullptr) const;
};

inline constexpr std::string_view kReplyFormatLead = "Reply in this format:";

// Criteria are serialized pretty-printed with sorted keys so identical inputs
// always render byte-identical prompts.
RenderedPrompt render(const PromptTemplate& tmpl, const json& criteria, std::string_view context);

// Returns the first balanced JSON object in `raw` that satisfies `schema`.
// Throws NoJsonFound when no object parses, SchemaMismatch when objects parse
// but none carries the required keys (problems describe the first one).
json extract_structured(std::string_view raw, const OutputSchema& schema);

// Free-form replies: the "response" string when the reply carries a JSON
// object with one, otherwise the reply unchanged.
std::string free_text_reply(std::string_view raw);

// Balanced-brace candidates starting at every '{' in order of appearance, as
// raw substrings. Nested objects appear as candidates of their own.
std::vector<std::string_view> balanced_objects(std::string_view raw);

// Named template collection. Built-in defaults are always present; files in a
// templates directory override them by id.
class TemplateSet {
 public:
  TemplateSet();  // defaults

  static TemplateSet load_directory(const std::filesystem::path& dir);
  static const std::vector<PromptTemplate>& defaults();

  const PromptTemplate& get(const std::string& id) const;
  bool contains(const std::string& id) const { return templates_.count(id) != 0; }
  void put(PromptTemplate tmpl);
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

// Template ids the engine relies on.
namespace template_id {
inline constexpr const char* rules = "generate_rules";
inline constexpr const char* setting = "generate_setting";
inline constexpr const char* player = "generate_player";
inline constexpr const char* npcs = "generate_npcs";
inline constexpr const char* beats = "generate_beats";
inline constexpr const char* summarize = "summarize_memories";
inline constexpr const char* judge = "validation_judge";
inline constexpr const char* corrective_logic = "corrective_logic";
inline constexpr const char* correction = "corrective_response";
inline constexpr const char* narrator_turn = "narrator_turn";
inline constexpr const char* npc_turn = "npc_turn";
inline constexpr const char* beat_check = "beat_check";
inline constexpr const char* ablation_judge = "ablation_judge";
}  // namespace template_id

}  // namespace narrative
