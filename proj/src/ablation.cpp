#include "narrative/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "narrative/session.hpp"

namespace narrative {

std::string_view to_string(ProbeCategory c) {
  switch (c) {
    case ProbeCategory::off_topic: return "off_topic";
    case ProbeCategory::out_of_character: return "out_of_character";
    case ProbeCategory::cheating: return "cheating";
  }
  return "off_topic";
}

ProbeCategory probe_category_from_string(std::string_view s) {
  for (auto c : kProbeCategories) {
    if (to_string(c) == s) return c;
  }
  throw InvalidInput("unknown probe category '" + std::string(s) + "'");
}

std::string_view to_string(ArmConfig c) {
  return c == ArmConfig::validation_on ? "validation_on" : "validation_off";
}

ArmConfig arm_from_string(std::string_view s) {
  if (s == "validation_on" || s == "on") return ArmConfig::validation_on;
  if (s == "validation_off" || s == "off") return ArmConfig::validation_off;
  throw InvalidInput("unknown config '" + std::string(s) + "'");
}

std::string_view category_label(ProbeCategory c) {
  switch (c) {
    case ProbeCategory::off_topic: return "Off Topic";
    case ProbeCategory::out_of_character: return "Out of Character";
    case ProbeCategory::cheating: return "Cheating";
  }
  return "";
}

const std::vector<std::string>& legal_subcategories(ProbeCategory c) {
  static const std::vector<std::string> off_topic{"temporal", "regional", "generic"};
  static const std::vector<std::string> character{"openness", "conscientiousness", "extroversion", "agreeableness",
                                                  "neuroticism"};
  static const std::vector<std::string> cheating{"future_sight", "world_hacking", "npc_hacking"};
  switch (c) {
    case ProbeCategory::off_topic: return off_topic;
    case ProbeCategory::out_of_character: return character;
    case ProbeCategory::cheating: return cheating;
  }
  return off_topic;
}

void AblationItem::validate() const {
  if (id.empty()) throw InvalidInput("ablation item needs an id");
  if (text.empty()) throw InvalidInput("ablation item '" + id + "' has empty text");
  const auto& legal = legal_subcategories(category);
  if (std::find(legal.begin(), legal.end(), subcategory) == legal.end()) {
    throw InvalidInput("item '" + id + "': subcategory '" + subcategory + "' is not legal for " +
                       std::string(to_string(category)));
  }
  if (category == ProbeCategory::out_of_character && !target_npc) {
    throw InvalidInput("item '" + id + "': out_of_character items need target_npc");
  }
}

AblationItem AblationItem::from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("ablation item must be an object");
  AblationItem item;
  try {
    item.id = j.at("id").get<std::string>();
    item.category = probe_category_from_string(j.at("category").get<std::string>());
    item.subcategory = j.at("subcategory").get<std::string>();
    item.text = j.at("text").get<std::string>();
    if (j.contains("target_npc") && !j["target_npc"].is_null()) item.target_npc = j["target_npc"].get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("ablation item: ") + e.what());
  }
  item.validate();
  return item;
}

json AblationItem::to_json() const {
  json j = {{"id", id}, {"category", to_string(category)}, {"subcategory", subcategory}, {"text", text}};
  if (target_npc) j["target_npc"] = *target_npc;
  return j;
}

std::vector<AblationItem> parse_corpus(std::istream& in) {
  std::vector<AblationItem> items;
  std::set<std::string> ids;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      items.push_back(AblationItem::from_json(j));
    } catch (const std::exception& e) {
      throw InvalidInput("corpus line " + std::to_string(n) + ": " + e.what());
    }
    if (!ids.insert(items.back().id).second) {
      throw InvalidInput("corpus line " + std::to_string(n) + ": duplicate id '" + items.back().id + "'");
    }
  }
  return items;
}

std::vector<AblationItem> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open corpus " + path.string());
  return parse_corpus(in);
}

json JudgeVerdict::to_json() const {
  return {{"item_id", item_id}, {"config", to_string(config)}, {"aligned", aligned},
          {"response_text", response_text}, {"notes", notes}};
}

int ArmCounts::aligned_total() const {
  int s = 0;
  for (const auto& [_, n] : aligned) s += n;
  return s;
}

int ArmCounts::grand_total() const {
  int s = 0;
  for (const auto& [_, n] : total) s += n;
  return s;
}

AblationReport AblationReport::for_corpus(const std::vector<AblationItem>& corpus) {
  AblationReport r;
  for (auto c : kProbeCategories) {
    r.on.aligned[c] = r.off.aligned[c] = 0;
    r.on.total[c] = r.off.total[c] = 0;
  }
  for (const auto& item : corpus) {
    ++r.on.total[item.category];
    ++r.off.total[item.category];
  }
  return r;
}

AblationReport AblationReport::aggregate(const std::vector<AblationItem>& corpus,
                                         const std::vector<JudgeVerdict>& verdicts) {
  auto r = for_corpus(corpus);
  std::map<std::string, ProbeCategory> category;
  for (const auto& item : corpus) category[item.id] = item.category;
  std::set<std::pair<std::string, ArmConfig>> seen;
  for (const auto& v : verdicts) {
    auto it = category.find(v.item_id);
    if (it == category.end()) throw InvariantViolation("verdict for unknown item '" + v.item_id + "'");
    if (!seen.emplace(v.item_id, v.config).second) {
      throw InvariantViolation("duplicate verdict for '" + v.item_id + "' / " + std::string(to_string(v.config)));
    }
    if (v.aligned) ++r.arm(v.config).aligned[it->second];
  }
  return r;
}

json AblationReport::to_json() const {
  json j;
  for (auto cfg : {ArmConfig::validation_on, ArmConfig::validation_off}) {
    const auto& a = arm(cfg);
    json arm_json;
    for (auto c : kProbeCategories) {
      arm_json[std::string(to_string(c))] = {{"aligned", a.aligned.at(c)}, {"total", a.total.at(c)}};
    }
    arm_json["total"] = {{"aligned", a.aligned_total()}, {"total", a.grand_total()}};
    j[std::string(to_string(cfg))] = std::move(arm_json);
  }
  return j;
}

std::string render_report(const AblationReport& report) {
  auto cell = [](const ArmCounts& a, std::optional<ProbeCategory> c) {
    auto get = [](const std::map<ProbeCategory, int>& m, ProbeCategory k) {
      auto it = m.find(k);
      return it == m.end() ? 0 : it->second;
    };
    if (!c) return std::to_string(a.aligned_total()) + "/" + std::to_string(a.grand_total());
    return std::to_string(get(a.aligned, *c)) + "/" + std::to_string(get(a.total, *c));
  };
  std::string out = "| Category | On | Off |\n|---|---|---|\n";
  for (auto c : kProbeCategories) {
    out += "| " + std::string(category_label(c)) + " | " + cell(report.on, c) + " | " + cell(report.off, c) + " |\n";
  }
  out += "| Total Correct | " + cell(report.on, std::nullopt) + " | " + cell(report.off, std::nullopt) + " |\n";
  return out;
}

bool scripted_marker_aligned(std::string_view response) {
  return response.find(kCorrectionMarker) != std::string_view::npos ||
         response.find(kOutOfScopeMarker) == std::string_view::npos;
}

JudgeVerdict llm_judge(const AblationItem& item, const TrialResult& trial, const GameDefinition& definition,
                       LlmGateway& gateway, const TemplateSet& templates) {
  JudgeVerdict v{item.id, trial.config, false, trial.response_text, {}};
  if (trial.error) {
    v.notes = "turn failed: " + *trial.error;
    return v;
  }
  json criteria = {{"game_play_rules", to_json(definition.rules)},
                   {"setting", to_json(definition.setting)},
                   {"player_input", item.text},
                   {"response", trial.response_text}};
  if (item.target_npc) {
    if (const auto* npc = definition.find_npc(*item.target_npc)) criteria["npc"] = to_json(*npc);
  }
  auto prompt = render(templates.get(template_id::ablation_judge), criteria, {});
  try {
    auto obj = extract_structured(gateway.complete({ChatMessage::user(prompt.text)}, Sampling::judge()),
                                  {{"aligned", ValueKind::boolean}});
    v.aligned = obj["aligned"].get<bool>();
    v.notes = obj.value("notes", std::string{});
  } catch (const Error& e) {
    v.notes = std::string("judge failed: ") + e.what();
  }
  return v;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

// RFC 4180 records; quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  char ch;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      end_row();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (quoted) throw InvalidInput("verdict CSV has an unterminated quoted field");
  if (any) end_row();
  return rows;
}

bool parse_bool_cell(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "y") return true;
  if (s == "false" || s == "0" || s == "no" || s == "n") return false;
  throw InvalidInput("aligned must be true/false, got '" + s + "'");
}

}  // namespace

void write_responses_csv(std::ostream& out, const std::vector<AblationItem>& corpus,
                         const std::vector<TrialResult>& trials) {
  std::map<std::string, const AblationItem*> by_id;
  for (const auto& item : corpus) by_id[item.id] = &item;
  out << "item_id,config,category,subcategory,target_npc,text,response,aligned,notes\n";
  for (const auto& t : trials) {
    const auto* item = by_id.at(t.item_id);
    out << csv_field(t.item_id) << ',' << to_string(t.config) << ',' << to_string(item->category) << ','
        << csv_field(item->subcategory) << ',' << csv_field(item->target_npc.value_or("")) << ','
        << csv_field(item->text) << ',' << csv_field(t.error ? "[error] " + *t.error : t.response_text) << ",,\n";
  }
}

std::vector<JudgeVerdict> read_verdicts_csv(std::istream& in) {
  auto rows = parse_csv(in);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  auto col = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  auto id_col = col("item_id"), cfg_col = col("config"), aligned_col = col("aligned");
  auto notes_col = col("notes"), response_col = col("response");
  if (!id_col || !cfg_col || !aligned_col) throw InvalidInput("verdict CSV needs item_id, config and aligned columns");
  std::vector<JudgeVerdict> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto at = [&](std::optional<std::size_t> c) { return c && *c < row.size() ? row[*c] : std::string{}; };
    try {
      out.push_back({at(id_col), arm_from_string(at(cfg_col)), parse_bool_cell(at(aligned_col)), at(response_col),
                     at(notes_col)});
    } catch (const InvalidInput& e) {
      throw InvalidInput("verdict CSV row " + std::to_string(r + 1) + ": " + e.what());
    }
  }
  return out;
}

JudgeKind judge_kind_from_string(std::string_view s) {
  if (s == "scripted") return JudgeKind::scripted;
  if (s == "llm") return JudgeKind::llm;
  if (s == "human") return JudgeKind::human;
  throw InvalidInput("judge must be scripted, llm or human");
}

bool is_validation_prompt(std::string_view prompt, const TemplateSet& templates) {
  for (const char* id : {template_id::judge, template_id::corrective_logic, template_id::correction}) {
    if (prompt.find(templates.get(id).instruction) != std::string_view::npos) return true;
  }
  return false;
}

std::vector<TrialResult> run_trials(const std::vector<AblationItem>& corpus, const GameDefinition& definition,
                                    LlmGateway& gateway, const TemplateSet& templates,
                                    const AblationOptions& options) {
  definition.validate();
  for (const auto& item : corpus) item.validate();
  if (options.parallel < 1) throw InvalidInput("parallel must be at least 1");

  const auto embedder = std::make_shared<HashEmbedder>(options.memory.embedding_dim);
  std::vector<TrialResult> results(corpus.size() * 2);

  auto run_one = [&](std::size_t slot) {
    const auto& item = corpus[slot / 2];
    const auto config = slot % 2 == 0 ? ArmConfig::validation_on : ArmConfig::validation_off;
    auto& out = results[slot];
    out.item_id = item.id;
    out.config = config;

    RecordingGateway recorder(gateway);
    SessionEngine engine(recorder, templates, options.memory, embedder);
    auto validation = options.validation;
    validation.enabled = config == ArmConfig::validation_on;
    try {
      auto session = engine.create_session(definition, validation);
      out.session_id = session->id();
      auto response = engine.take_turn(*session, PlayerInput::free_text(item.text, item.target_npc));
      out.response_text = response.text;
      out.was_corrected = response.was_corrected;
    } catch (const Error& e) {
      out.error = e.what();
      spdlog::warn("item {} ({}) failed: {}", item.id, to_string(config), e.what());
    }
    for (const auto& p : recorder.prompts()) out.validation_prompts += is_validation_prompt(p, templates) ? 1 : 0;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t slot; (slot = next.fetch_add(1)) < results.size();) run_one(slot);
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(options.parallel), results.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  return results;
}

AblationRun run_ablation(const std::vector<AblationItem>& corpus, const GameDefinition& definition,
                         LlmGateway& gateway, const TemplateSet& templates, const AblationOptions& options,
                         LlmGateway* judge_gateway) {
  AblationRun run;
  if (options.judge == JudgeKind::human && options.verdicts_csv) {
    // Verdicts were produced offline for an earlier run; no replay needed.
    std::ifstream in(*options.verdicts_csv);
    if (!in) throw InvalidInput("cannot open verdicts " + options.verdicts_csv->string());
    run.verdicts = read_verdicts_csv(in);
    run.report = AblationReport::aggregate(corpus, run.verdicts);
    return run;
  }

  run.trials = run_trials(corpus, definition, gateway, templates, options);
  for (const auto& t : run.trials) {
    if (t.config == ArmConfig::validation_off) run.off_arm_validation_prompts += t.validation_prompts;
  }

  if (options.judge == JudgeKind::human) {
    if (!options.responses_csv) throw InvalidInput("the human judge needs a responses CSV path");
    std::ofstream out(*options.responses_csv);
    if (!out) throw InvalidInput("cannot write " + options.responses_csv->string());
    write_responses_csv(out, corpus, run.trials);
    run.report = AblationReport::for_corpus(corpus);
    return run;
  }

  for (std::size_t i = 0; i < run.trials.size(); ++i) {
    const auto& t = run.trials[i];
    const auto& item = corpus[i / 2];
    if (options.judge == JudgeKind::scripted) {
      JudgeVerdict v{t.item_id, t.config, false, t.response_text, {}};
      if (t.error) {
        v.notes = "turn failed: " + *t.error;
      } else {
        v.aligned = scripted_marker_aligned(t.response_text);
        v.notes = t.was_corrected ? "corrected" : "";
      }
      run.verdicts.push_back(std::move(v));
    } else {
      run.verdicts.push_back(
          llm_judge(item, t, definition, judge_gateway ? *judge_gateway : gateway, templates));
    }
  }
  if (options.responses_csv) {
    std::ofstream out(*options.responses_csv);
    write_responses_csv(out, corpus, run.trials);
  }
  run.report = AblationReport::aggregate(corpus, run.verdicts);
  return run;
}

}  // namespace narrative
