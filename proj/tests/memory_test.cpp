#include <random>

#include <gtest/gtest.h>

#include "narrative/memory.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace narrative;
using namespace narrative::tests;

namespace {

MemoryStore make_store(std::size_t capacity, std::shared_ptr<const Embedder> embedder = nullptr) {
  MemoryConfig cfg;
  cfg.short_term_capacity = capacity;
  if (!embedder) embedder = std::make_shared<HashEmbedder>(cfg.embedding_dim);
  cfg.embedding_dim = embedder->dimension();
  return MemoryStore(cfg, embedder);
}

std::vector<std::string> texts(const std::vector<MemoryRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.text);
  return out;
}

const auto kScope = MemoryScope::session("s1");

}  // namespace

TEST(Record, OverflowMovesOldestToLongTerm) {
  auto store = make_store(3);
  for (const char* t : {"a", "b", "c", "d"}) store.record(kScope, RecordKind::conversation, t, 0);
  EXPECT_EQ(texts(store.recall_short(kScope)), (std::vector<std::string>{"d", "c", "b"}));
  auto lt = store.long_term(kScope);
  ASSERT_EQ(lt.size(), 1u);
  EXPECT_EQ(lt[0].text, "a");
  ASSERT_TRUE(lt[0].embedding);
  EXPECT_EQ(lt[0].embedding->size(), 256u);
}

TEST(Record, UnderCapacityStaysShortTerm) {
  auto store = make_store(3);
  store.record(kScope, RecordKind::event, "only", 0);
  EXPECT_EQ(texts(store.recall_short(kScope)), std::vector<std::string>{"only"});
  EXPECT_TRUE(store.long_term(kScope).empty());
}

TEST(Record, ScopesAreIsolated) {
  auto store = make_store(2);
  auto a = MemoryScope::npc("s1", "A"), b = MemoryScope::npc("s1", "B");
  store.record(b, RecordKind::conversation, "b1", 0);
  for (int i = 0; i < 5; ++i) store.record(a, RecordKind::conversation, "a" + std::to_string(i), 0);
  EXPECT_EQ(texts(store.all_records(b)), std::vector<std::string>{"b1"});
  EXPECT_EQ(store.total_records(), 6u);
}

TEST(Record, RejectsEmptyTextAndDecreasingTurn) {
  auto store = make_store(3);
  EXPECT_THROW(store.record(kScope, RecordKind::event, "", 0), InvalidInput);
  store.record(kScope, RecordKind::event, "x", 4);
  EXPECT_THROW(store.record(kScope, RecordKind::event, "y", 3), InvalidInput);
  EXPECT_NO_THROW(store.record(kScope, RecordKind::event, "z", 4));
}

TEST(RecallShort, OrderLimitAndUnknownScope) {
  auto store = make_store(3);
  for (const char* t : {"a", "b", "c"}) store.record(kScope, RecordKind::conversation, t, 0);
  EXPECT_EQ(texts(store.recall_short(kScope)), (std::vector<std::string>{"c", "b", "a"}));
  EXPECT_EQ(texts(store.recall_short(kScope, 1)), std::vector<std::string>{"c"});
  EXPECT_TRUE(store.recall_short(MemoryScope::session("other")).empty());
}

TEST(RecallLong, IdenticalTextRanksFirstWithUnitSimilarity) {
  auto store = make_store(1);
  store.record(kScope, RecordKind::conversation, "the butler found the body", 0);
  store.record(kScope, RecordKind::conversation, "jazz in the speakeasy", 0);
  store.record(kScope, RecordKind::conversation, "flush", 0);
  auto hits = store.recall_long(kScope, "the butler found the body", 5);
  ASSERT_EQ(hits.size(), 2u);  // k larger than store: whole store
  EXPECT_EQ(hits[0].record.text, "the butler found the body");
  EXPECT_NEAR(hits[0].similarity, 1.0, 1e-9);
  EXPECT_GE(hits[0].similarity, hits[1].similarity);
  EXPECT_THROW(store.recall_long(kScope, "q", 0), InvalidInput);
}

TEST(RecallLong, MatchesBruteForceOracle) {
  std::mt19937 rng(11);
  for (auto embedder : {std::shared_ptr<const Embedder>(std::make_shared<HashEmbedder>(256)),
                        std::shared_ptr<const Embedder>(std::make_shared<LetterEmbedder>())}) {
    auto store = make_store(5, embedder);
    for (int i = 0; i < 55; ++i) store.record(kScope, RecordKind::conversation, random_words(rng, 1, 6), 0);
    for (int q = 0; q < 20; ++q) {
      auto query = random_words(rng, 1, 4);
      std::size_t k = 1 + rng() % 60;
      auto got = store.recall_long(kScope, query, k);
      auto want = oracle_recall(store.long_term(kScope), *embedder, query, k);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].record.id, want[i].id) << "rank " << i;
        EXPECT_EQ(got[i].similarity, want[i].similarity);
      }
    }
  }
}

TEST(Cosine, Basics) {
  EXPECT_DOUBLE_EQ(cosine_similarity({1, 0}, {1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity({1, 0}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity({0, 0}, {0, 1}), 0.0);
  EXPECT_THROW(cosine_similarity({1}, {1, 2}), InvalidInput);
}

TEST(HashEmbedderTest, DeterministicNormalizedNonZero) {
  HashEmbedder e(64);
  auto a = e.embed("The Butler, the STUDY!");
  EXPECT_EQ(a, e.embed("the butler the study"));
  double n = 0;
  for (double x : a) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-12);
  auto p = e.embed("?!");
  EXPECT_NE(std::count(p.begin(), p.end(), 0.0), 64);
}

TEST(Truncate, CountsCodePoints) {
  EXPECT_EQ(truncate_chars("héllo", 2), "hé");
  EXPECT_EQ(truncate_chars("abc", 10), "abc");
  EXPECT_EQ(truncate_chars("abc", 0), "");
}

TEST(Summarize, PassthroughAndFallback) {
  TemplateSet templates;
  std::vector<MemoryRecord> recs{{1, kScope, RecordKind::event, "old", 0, {}},
                                 {2, kScope, RecordKind::event, "new", 0, {}}};
  ScriptedGateway ok({}, std::string("S"));
  EXPECT_EQ(summarize(recs, 100, ok, templates), "S");
  ScriptedGateway json_reply({}, std::string(R"({"summary": "T"})"));
  EXPECT_EQ(summarize(recs, 100, json_reply, templates), "T");
  ScriptedGateway broken({});
  EXPECT_EQ(summarize(recs, 3, broken, templates), "new");
  EXPECT_EQ(summarize(recs, 100, broken, templates), "new\nold");
  ScriptedGateway longer({}, std::string(50, 'x'));
  EXPECT_EQ(summarize(recs, 7, longer, templates).size(), 7u);
}

TEST(ContextPack, EmptyAndShortTermOnly) {
  TemplateSet templates;
  auto store = make_store(10);
  FnGateway echo([](const std::string&) { return std::string("unused"); });
  EXPECT_EQ(store.context_pack(kScope, "q", echo, templates), "");
  EXPECT_TRUE(echo.prompts().empty());

  store.record(kScope, RecordKind::conversation, "first clue", 0);
  store.record(kScope, RecordKind::conversation, "second clue", 1);
  // The summarizer echoes the memories list it was given.
  FnGateway echo_list([](const std::string& prompt) {
    auto b = prompt.find("\"memories\"");
    auto e = prompt.find(']', b);
    return json({{"summary", prompt.substr(b, e - b + 1)}}).dump();
  });
  auto pack = store.context_pack(kScope, "q", echo_list, templates);
  EXPECT_TRUE(contains(pack, "first clue"));
  EXPECT_TRUE(contains(pack, "second clue"));
  EXPECT_LE(pack.size(), store.config().summary_max_chars);
}

TEST(Snapshot, RestoreReproducesStore) {
  auto embedder = std::make_shared<HashEmbedder>(256);
  auto store = make_store(2, embedder);
  auto npc = MemoryScope::npc("s1", "thomas");
  store.ensure_scope(MemoryScope::session("empty"));
  for (int i = 0; i < 5; ++i) store.record(i % 2 ? kScope : npc, RecordKind::action, "r" + std::to_string(i), i);
  auto snap = store.snapshot();
  auto copy = MemoryStore::restore(snap, embedder);
  EXPECT_EQ(copy->snapshot(), snap);
  EXPECT_EQ(copy->scopes(), store.scopes());
  auto next = copy->record(kScope, RecordKind::event, "later", 9);
  EXPECT_EQ(next.id, 6u);
}

TEST(Config, ValidationAndJson) {
  MemoryConfig c;
  c.short_term_capacity = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  auto parsed = MemoryConfig::from_json({{"short_term_capacity", 7}});
  EXPECT_EQ(parsed.short_term_capacity, 7u);
  EXPECT_EQ(MemoryConfig::from_json(parsed.to_json()).to_json(), parsed.to_json());
  EXPECT_THROW(MemoryStore(MemoryConfig{}, std::make_shared<HashEmbedder>(8)), InvalidInput);
}
