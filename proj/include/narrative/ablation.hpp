#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "narrative/definition.hpp"
#include "narrative/llm.hpp"
#include "narrative/memory.hpp"
#include "narrative/prompt.hpp"
#include "narrative/validation.hpp"

namespace narrative {

enum class ProbeCategory { off_topic, out_of_character, cheating };
enum class ArmConfig { validation_on, validation_off };

inline constexpr std::array<ProbeCategory, 3> kProbeCategories = {
    ProbeCategory::off_topic, ProbeCategory::out_of_character, ProbeCategory::cheating};

std::string_view to_string(ProbeCategory c);
ProbeCategory probe_category_from_string(std::string_view s);
std::string_view to_string(ArmConfig c);
ArmConfig arm_from_string(std::string_view s);
// Display label, e.g. "Out of Character".
std::string_view category_label(ProbeCategory c);
const std::vector<std::string>& legal_subcategories(ProbeCategory c);

struct AblationItem {
  std::string id;
  ProbeCategory category = ProbeCategory::off_topic;
  std::string subcategory;
  std::string text;
  std::optional<std::string> target_npc;

  // Subcategory legal for the category; out_of_character needs a target NPC.
  void validate() const;
  static AblationItem from_json(const json& j);
  json to_json() const;
};

// One item per non-blank line. Throws InvalidInput naming the line.
std::vector<AblationItem> parse_corpus(std::istream& in);
std::vector<AblationItem> load_corpus(const std::filesystem::path& path);

struct JudgeVerdict {
  std::string item_id;
  ArmConfig config = ArmConfig::validation_on;
  bool aligned = false;
  std::string response_text;
  std::string notes;

  json to_json() const;
};

struct ArmCounts {
  std::map<ProbeCategory, int> aligned;
  std::map<ProbeCategory, int> total;

  int aligned_total() const;
  int grand_total() const;
};

struct AblationReport {
  ArmCounts on;
  ArmCounts off;

  const ArmCounts& arm(ArmConfig c) const { return c == ArmConfig::validation_on ? on : off; }
  ArmCounts& arm(ArmConfig c) { return c == ArmConfig::validation_on ? on : off; }

  // Zero counts with denominators taken from the corpus.
  static AblationReport for_corpus(const std::vector<AblationItem>& corpus);
  // Aggregates one verdict per (item, config). Throws InvariantViolation on
  // duplicates or unknown item ids.
  static AblationReport aggregate(const std::vector<AblationItem>& corpus,
                                  const std::vector<JudgeVerdict>& verdicts);
  json to_json() const;
};

std::string render_report(const AblationReport& report);

// Response produced by one trial, before judging.
struct TrialResult {
  std::string item_id;
  ArmConfig config = ArmConfig::validation_on;
  std::string response_text;
  bool was_corrected = false;
  std::optional<std::string> error;  // gateway or turn failure
  std::size_t validation_prompts = 0;
  std::string session_id;
};

// Marker-based CI judge: aligned iff the response contains the correction
// marker or lacks the out-of-scope marker.
inline constexpr std::string_view kCorrectionMarker = "[[CORRECTION]]";
inline constexpr std::string_view kOutOfScopeMarker = "[[OUT_OF_SCOPE]]";
bool scripted_marker_aligned(std::string_view response);

// Asks the ablation-judge template at temperature 0.
JudgeVerdict llm_judge(const AblationItem& item, const TrialResult& trial, const GameDefinition& definition,
                       LlmGateway& gateway, const TemplateSet& templates);

// Human round trip: responses out, verdicts back in.
void write_responses_csv(std::ostream& out, const std::vector<AblationItem>& corpus,
                         const std::vector<TrialResult>& trials);
// Columns item_id,config,aligned[,notes]; aligned is true/false/1/0/yes/no.
std::vector<JudgeVerdict> read_verdicts_csv(std::istream& in);

enum class JudgeKind { scripted, llm, human };
JudgeKind judge_kind_from_string(std::string_view s);

struct AblationOptions {
  JudgeKind judge = JudgeKind::scripted;
  int parallel = 1;
  MemoryConfig memory;
  ValidationConfig validation;  // `enabled` is overridden per arm
  std::optional<std::filesystem::path> responses_csv;  // human: written
  std::optional<std::filesystem::path> verdicts_csv;   // human: read back
};

struct AblationRun {
  AblationReport report;
  std::vector<TrialResult> trials;
  std::vector<JudgeVerdict> verdicts;
  std::size_t off_arm_validation_prompts = 0;
};

// Runs one fresh session per (item, arm). Trials may run in parallel; the
// result is ordered by corpus position then arm.
std::vector<TrialResult> run_trials(const std::vector<AblationItem>& corpus, const GameDefinition& definition,
                                    LlmGateway& gateway, const TemplateSet& templates, const AblationOptions& options);

// Human judge without verdicts_csv writes the responses and returns a report
// with zero aligned counts.
AblationRun run_ablation(const std::vector<AblationItem>& corpus, const GameDefinition& definition,
                         LlmGateway& gateway, const TemplateSet& templates, const AblationOptions& options,
                         LlmGateway* judge_gateway = nullptr);

// Whether a prompt belongs to the validation layer (judge, corrective logic,
// correction).
bool is_validation_prompt(std::string_view prompt, const TemplateSet& templates);

}  // namespace narrative
