#include "narrative/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>
#include <numeric>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace narrative {

std::string MemoryScope::key() const {
  if (kind == Kind::npc) return "npc:" + session_id + ":" + npc_id.value_or("");
  return "session:" + session_id;
}

std::string_view to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::conversation: return "conversation";
    case RecordKind::action: return "action";
    case RecordKind::event: return "event";
    case RecordKind::generated_asset: return "generated_asset";
  }
  return "event";
}

RecordKind record_kind_from_string(std::string_view s) {
  if (s == "conversation") return RecordKind::conversation;
  if (s == "action") return RecordKind::action;
  if (s == "event") return RecordKind::event;
  if (s == "generated_asset") return RecordKind::generated_asset;
  throw InvalidInput("unknown memory record kind '" + std::string(s) + "'");
}

void MemoryConfig::validate() const {
  if (short_term_capacity == 0 || recall_top_k == 0 || summary_max_chars == 0 || embedding_dim == 0) {
    throw InvalidInput("memory configuration values must all be positive");
  }
}

MemoryConfig MemoryConfig::from_json(const json& j, MemoryConfig c) {
  auto read = [&j](const char* key, std::size_t& field) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
      throw InvalidInput(std::string("memory.") + key + " must be a positive integer");
    }
    field = v.get<std::size_t>();
  };
  read("short_term_capacity", c.short_term_capacity);
  read("recall_top_k", c.recall_top_k);
  read("summary_max_chars", c.summary_max_chars);
  read("embedding_dim", c.embedding_dim);
  c.validate();
  return c;
}

json MemoryConfig::to_json() const {
  return {{"short_term_capacity", short_term_capacity},
          {"recall_top_k", recall_top_k},
          {"summary_max_chars", summary_max_chars},
          {"embedding_dim", embedding_dim}};
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw InvalidInput("embedding dimension must be positive");
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<double> HashEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    v[fnv1a(token) % dim_] += 1.0;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm == 0.0) {
    // Punctuation-only text still gets a direction of its own.
    if (text.empty()) return v;
    v[fnv1a(text) % dim_] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

HttpEmbedder::HttpEmbedder(EndpointConfig endpoint, std::string model, std::size_t dim)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), dim_(dim) {
  endpoint_.validate();
}

std::vector<double> HttpEmbedder::embed(std::string_view text) const {
  auto [host, prefix] = split_base_url(endpoint_.base_url);
  httplib::Client client(host);
  client.set_read_timeout(std::chrono::milliseconds(endpoint_.timeout_ms));
  httplib::Headers headers;
  if (endpoint_.api_key) headers.emplace("Authorization", "Bearer " + *endpoint_.api_key);
  json body = {{"model", model_}, {"input", std::string(text)}};
  auto res = client.Post(prefix + "/v1/embeddings", headers, body.dump(), "application/json");
  if (!res) throw TransportError("embedding request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) throw UpstreamStatus(res->status);
  json doc = json::parse(res->body, nullptr, false);
  try {
    auto v = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
    if (v.size() != dim_) {
      throw MalformedResponse("embedding has dimension " + std::to_string(v.size()) +
                              ", expected " + std::to_string(dim_));
    }
    return v;
  } catch (const json::exception&) {
    throw MalformedResponse("embedding response has no data[0].embedding");
  }
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidInput("cosine similarity of vectors with different sizes");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::string truncate_chars(std::string_view text, std::size_t max_chars) {
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (count == max_chars) return std::string(text.substr(0, i));
    auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = lead < 0x80 ? 1 : (lead >> 5) == 0x6 ? 2 : (lead >> 4) == 0xE ? 3 : (lead >> 3) == 0x1E ? 4 : 1;
    i = std::min(text.size(), i + len);
    ++count;
  }
  return std::string(text);
}

namespace {

std::string newest_first_concatenation(const std::vector<MemoryRecord>& records) {
  std::string out;
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (!out.empty()) out.push_back('\n');
    out += it->text;
  }
  return out;
}

}  // namespace

std::string summarize(const std::vector<MemoryRecord>& records, std::size_t max_chars,
                      LlmGateway& gateway, const TemplateSet& templates) {
  if (records.empty()) throw InvalidInput("summarize needs at least one record");
  json memories = json::array();
  for (const auto& r : records) memories.push_back(r.text);
  try {
    auto prompt = render(templates.get(template_id::summarize), {{"memories", memories}}, "");
    std::string reply = gateway.complete({ChatMessage::user(prompt.text)}, Sampling::judge());
    std::string summary = reply;
    try {
      summary = extract_structured(reply, {{"summary", ValueKind::string}})["summary"].get<std::string>();
    } catch (const Error&) {
      // prose reply, used as is
    }
    if (!summary.empty()) return truncate_chars(summary, max_chars);
    spdlog::warn("summarizer returned an empty reply, using concatenation");
  } catch (const Error& e) {
    spdlog::warn("summarizer failed ({}), using concatenation", e.what());
  }
  return truncate_chars(newest_first_concatenation(records), max_chars);
}

MemoryStore::MemoryStore(MemoryConfig config, std::shared_ptr<const Embedder> embedder)
    : config_(config), embedder_(std::move(embedder)) {
  config_.validate();
  if (!embedder_) throw InvalidInput("memory store needs an embedder");
  if (embedder_->dimension() != config_.embedding_dim) {
    throw InvalidInput("embedder dimension does not match memory.embedding_dim");
  }
}

MemoryStore::ScopeState* MemoryStore::find(const MemoryScope& scope) const {
  std::shared_lock lock(map_mutex_);
  auto it = scopes_.find(scope);
  return it == scopes_.end() ? nullptr : it->second.get();
}

MemoryStore::ScopeState& MemoryStore::get_or_create(const MemoryScope& scope) {
  if (auto* s = find(scope)) return *s;
  std::unique_lock lock(map_mutex_);
  auto& slot = scopes_[scope];
  if (!slot) slot = std::make_unique<ScopeState>();
  return *slot;
}

void MemoryStore::ensure_scope(const MemoryScope& scope) {
  if ((scope.kind == MemoryScope::Kind::npc) != scope.npc_id.has_value()) {
    throw InvalidInput("npc_id must be present exactly for npc scopes");
  }
  get_or_create(scope);
}

std::vector<MemoryScope> MemoryStore::scopes() const {
  std::shared_lock lock(map_mutex_);
  std::vector<MemoryScope> out;
  for (const auto& [scope, _] : scopes_) out.push_back(scope);
  return out;
}

MemoryRecord MemoryStore::record(const MemoryScope& scope, RecordKind kind, std::string text,
                                 std::uint64_t turn_index) {
  if (text.empty()) throw InvalidInput("memory text must be non-empty");
  ensure_scope(scope);
  auto& state = get_or_create(scope);
  std::unique_lock lock(state.mutex);
  if (!state.short_term.empty() || !state.long_term.empty()) {
    if (turn_index < state.last_turn) {
      throw InvalidInput("turn_index must not decrease within a memory scope");
    }
  }
  MemoryRecord rec{next_id_.fetch_add(1), scope, kind, std::move(text), turn_index, std::nullopt};
  state.last_turn = turn_index;
  state.short_term.push_back(rec);
  while (state.short_term.size() > config_.short_term_capacity) {
    MemoryRecord evicted = std::move(state.short_term.front());
    state.short_term.pop_front();
    evicted.embedding = embedder_->embed(evicted.text);
    state.long_term.push_back(std::move(evicted));
  }
  return rec;
}

std::vector<MemoryRecord> MemoryStore::recall_short(const MemoryScope& scope,
                                                    std::optional<std::size_t> limit) const {
  const auto* state = find(scope);
  if (!state) return {};
  std::shared_lock lock(state->mutex);
  std::size_t n = std::min(limit.value_or(state->short_term.size()), state->short_term.size());
  return {state->short_term.rbegin(), state->short_term.rbegin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<ScoredRecord> MemoryStore::recall_long(const MemoryScope& scope, std::string_view query,
                                                   std::size_t k) const {
  if (k == 0) throw InvalidInput("recall_long needs k >= 1");
  const auto* state = find(scope);
  if (!state) return {};
  const auto q = embedder_->embed(query);
  std::shared_lock lock(state->mutex);
  std::vector<ScoredRecord> scored;
  scored.reserve(state->long_term.size());
  for (const auto& r : state->long_term) scored.push_back({r, cosine_similarity(q, *r.embedding)});
  std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const ScoredRecord& a, const ScoredRecord& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.record.id < b.record.id;
                    });
  scored.resize(n);
  return scored;
}

std::vector<MemoryRecord> MemoryStore::long_term(const MemoryScope& scope) const {
  const auto* state = find(scope);
  if (!state) return {};
  std::shared_lock lock(state->mutex);
  return state->long_term;
}

std::vector<MemoryRecord> MemoryStore::all_records(const MemoryScope& scope) const {
  const auto* state = find(scope);
  if (!state) return {};
  std::shared_lock lock(state->mutex);
  std::vector<MemoryRecord> out(state->long_term.begin(), state->long_term.end());
  out.insert(out.end(), state->short_term.begin(), state->short_term.end());
  return out;
}

std::size_t MemoryStore::total_records() const {
  std::shared_lock lock(map_mutex_);
  std::size_t n = 0;
  for (const auto& [_, state] : scopes_) {
    std::shared_lock inner(state->mutex);
    n += state->short_term.size() + state->long_term.size();
  }
  return n;
}

std::string MemoryStore::context_pack(const MemoryScope& scope, std::string_view query,
                                      LlmGateway& gateway, const TemplateSet& templates) const {
  std::vector<MemoryRecord> picked = recall_short(scope);
  for (auto& hit : recall_long(scope, query, config_.recall_top_k)) {
    picked.push_back(std::move(hit.record));
  }
  if (picked.empty()) return "";
  // Ids grow with insertion, so sorting by id restores chronological order.
  std::sort(picked.begin(), picked.end(),
            [](const MemoryRecord& a, const MemoryRecord& b) { return a.id < b.id; });
  return summarize(picked, config_.summary_max_chars, gateway, templates);
}

json to_json(const MemoryScope& scope) {
  json j = {{"kind", scope.kind == MemoryScope::Kind::npc ? "npc" : "session_persistent"},
            {"session_id", scope.session_id}};
  if (scope.npc_id) j["npc_id"] = *scope.npc_id;
  return j;
}

MemoryScope scope_from_json(const json& j) {
  auto kind = j.at("kind").get<std::string>();
  if (kind == "npc") return MemoryScope::npc(j.at("session_id"), j.at("npc_id"));
  if (kind == "session_persistent") return MemoryScope::session(j.at("session_id"));
  throw InvalidInput("unknown memory scope kind '" + kind + "'");
}

json to_json(const MemoryRecord& r) {
  json j = {{"id", r.id},
            {"scope", to_json(r.scope)},
            {"kind", to_string(r.kind)},
            {"text", r.text},
            {"turn_index", r.turn_index}};
  if (r.embedding) j["embedding"] = *r.embedding;
  return j;
}

MemoryRecord record_from_json(const json& j) {
  MemoryRecord r;
  r.id = j.at("id").get<std::uint64_t>();
  r.scope = scope_from_json(j.at("scope"));
  r.kind = record_kind_from_string(j.at("kind").get<std::string>());
  r.text = j.at("text").get<std::string>();
  r.turn_index = j.at("turn_index").get<std::uint64_t>();
  if (j.contains("embedding")) r.embedding = j["embedding"].get<std::vector<double>>();
  return r;
}

json MemoryStore::snapshot() const {
  std::shared_lock lock(map_mutex_);
  json scopes = json::array();
  for (const auto& [scope, state] : scopes_) {
    std::shared_lock inner(state->mutex);
    json st = json::array();
    for (const auto& r : state->short_term) st.push_back(to_json(r));
    json lt = json::array();
    for (const auto& r : state->long_term) lt.push_back(to_json(r));
    scopes.push_back({{"scope", to_json(scope)},
                      {"short_term", std::move(st)},
                      {"long_term", std::move(lt)},
                      {"last_turn", state->last_turn}});
  }
  return {{"config", config_.to_json()}, {"next_id", next_id_.load()}, {"scopes", std::move(scopes)}};
}

std::unique_ptr<MemoryStore> MemoryStore::restore(const json& snapshot,
                                                  std::shared_ptr<const Embedder> embedder) {
  auto store = std::make_unique<MemoryStore>(MemoryConfig::from_json(snapshot.at("config")),
                                             std::move(embedder));
  store->next_id_ = snapshot.at("next_id").get<std::uint64_t>();
  for (const auto& s : snapshot.at("scopes")) {
    auto& state = store->get_or_create(scope_from_json(s.at("scope")));
    for (const auto& r : s.at("short_term")) state.short_term.push_back(record_from_json(r));
    for (const auto& r : s.at("long_term")) state.long_term.push_back(record_from_json(r));
    state.last_turn = s.value("last_turn", std::uint64_t{0});
  }
  return store;
}

}  // namespace narrative
