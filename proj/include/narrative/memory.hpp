#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "narrative/llm.hpp"
#include "narrative/prompt.hpp"

namespace narrative {

using json = nlohmann::json;

struct MemoryScope {
  enum class Kind { session_persistent, npc };

  Kind kind = Kind::session_persistent;
  std::string session_id;
  std::optional<std::string> npc_id;  // set iff kind == npc

  static MemoryScope session(std::string session_id) {
    return {Kind::session_persistent, std::move(session_id), std::nullopt};
  }
  static MemoryScope npc(std::string session_id, std::string npc_id) {
    return {Kind::npc, std::move(session_id), std::move(npc_id)};
  }

  std::string key() const;  // "session:<sid>" or "npc:<sid>:<npc>"

  friend bool operator==(const MemoryScope&, const MemoryScope&) = default;
  friend auto operator<=>(const MemoryScope&, const MemoryScope&) = default;
};

enum class RecordKind { conversation, action, event, generated_asset };

std::string_view to_string(RecordKind kind);
RecordKind record_kind_from_string(std::string_view s);

struct MemoryRecord {
  std::uint64_t id = 0;
  MemoryScope scope;
  RecordKind kind = RecordKind::conversation;
  std::string text;
  std::uint64_t turn_index = 0;
  std::optional<std::vector<double>> embedding;  // present iff in the long-term store

  friend bool operator==(const MemoryRecord&, const MemoryRecord&) = default;
};

struct MemoryConfig {
  std::size_t short_term_capacity = 20;
  std::size_t recall_top_k = 5;
  std::size_t summary_max_chars = 1200;
  std::size_t embedding_dim = 256;

  void validate() const;
  static MemoryConfig from_json(const json& j) { return from_json(j, MemoryConfig{}); }
  static MemoryConfig from_json(const json& j, MemoryConfig base);
  json to_json() const;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  // Deterministic per input; non-zero for non-empty text.
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

// Lower-cased alphanumeric tokens hashed (FNV-1a) into a fixed number of
// buckets, then L2-normalized.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256);
  std::size_t dimension() const override { return dim_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

// Calls an OpenAI-compatible POST {base_url}/v1/embeddings endpoint.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(EndpointConfig endpoint, std::string model, std::size_t dim);
  std::size_t dimension() const override { return dim_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  EndpointConfig endpoint_;
  std::string model_;
  std::size_t dim_;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Keep at most `max_chars` UTF-8 code points.
std::string truncate_chars(std::string_view text, std::size_t max_chars);

struct ScoredRecord {
  MemoryRecord record;
  double similarity = 0.0;
};

// Summarizes `records` (oldest first) through the gateway. On gateway failure
// falls back to newest-first concatenation. Result is at most max_chars.
std::string summarize(const std::vector<MemoryRecord>& records, std::size_t max_chars,
                      LlmGateway& gateway, const TemplateSet& templates);

// Per-session two-tier memory: a bounded short-term queue per scope whose
// overflow is embedded into that scope's exact-search long-term store.
//
// Reads take shared locks; writes to one scope are serialized, writes to
// different scopes may run in parallel.
class MemoryStore {
 public:
  MemoryStore(MemoryConfig config, std::shared_ptr<const Embedder> embedder);

  MemoryStore(const MemoryStore&) = delete;
  MemoryStore& operator=(const MemoryStore&) = delete;

  const MemoryConfig& config() const { return config_; }
  const Embedder& embedder() const { return *embedder_; }

  // Creates the scope if needed so that it appears in scopes().
  void ensure_scope(const MemoryScope& scope);
  std::vector<MemoryScope> scopes() const;

  MemoryRecord record(const MemoryScope& scope, RecordKind kind, std::string text,
                      std::uint64_t turn_index);

  // Newest first.
  std::vector<MemoryRecord> recall_short(const MemoryScope& scope,
                                         std::optional<std::size_t> limit = {}) const;

  // Top-k by cosine similarity, descending; ties keep insertion order.
  std::vector<ScoredRecord> recall_long(const MemoryScope& scope, std::string_view query,
                                        std::size_t k) const;

  std::vector<MemoryRecord> long_term(const MemoryScope& scope) const;
  std::vector<MemoryRecord> all_records(const MemoryScope& scope) const;  // insertion order
  std::size_t total_records() const;

  // Short-term records plus the top recall_top_k long-term hits for `query`,
  // summarized; "" when both tiers are empty.
  std::string context_pack(const MemoryScope& scope, std::string_view query, LlmGateway& gateway,
                           const TemplateSet& templates) const;

  json snapshot() const;
  static std::unique_ptr<MemoryStore> restore(const json& snapshot,
                                              std::shared_ptr<const Embedder> embedder);

 private:
  struct ScopeState {
    mutable std::shared_mutex mutex;
    std::deque<MemoryRecord> short_term;
    std::vector<MemoryRecord> long_term;
    std::uint64_t last_turn = 0;
  };

  ScopeState* find(const MemoryScope& scope) const;
  ScopeState& get_or_create(const MemoryScope& scope);

  MemoryConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  mutable std::shared_mutex map_mutex_;
  std::map<MemoryScope, std::unique_ptr<ScopeState>> scopes_;
  std::atomic<std::uint64_t> next_id_{1};
};

json to_json(const MemoryScope& scope);
MemoryScope scope_from_json(const json& j);
json to_json(const MemoryRecord& record);
MemoryRecord record_from_json(const json& j);

}  // namespace narrative
