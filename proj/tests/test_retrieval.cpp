#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include <doctest.h>

#include "ragfc/backends.hpp"
#include "ragfc/errors.hpp"
#include "ragfc/retrieval.hpp"
#include "ragfc/text.hpp"
#include "support/test_util.hpp"

using namespace ragfc;
using namespace ragfc::testsupport;

namespace {

// Reference scorer: plain loops over every document, no index structure.
struct OracleHit {
  std::string id;
  double score;
};

std::vector<OracleHit> oracle_top_k(std::vector<OracleHit> scored, int k) {
  std::sort(scored.begin(), scored.end(), [](const OracleHit& a, const OracleHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

std::vector<OracleHit> oracle_bm25(const std::vector<Passage>& docs, const std::string& query,
                                   int k, const Bm25Params& params) {
  const auto query_tokens = tokenize_alnum(query);

  std::vector<std::unordered_map<std::string, double>> tf(docs.size());
  std::vector<double> lengths(docs.size(), 0.0);
  long long total = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto tokens = tokenize_alnum(indexed_text(docs[i]));
    for (const auto& t : tokens) tf[i][t] += 1.0;
    lengths[i] = static_cast<double>(tokens.size());
    total += static_cast<long long>(tokens.size());
  }
  const auto n = static_cast<double>(docs.size());
  const double avgdl = total / n;

  std::vector<OracleHit> scored;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double score = 0.0;
    for (const auto& token : query_tokens) {
      long df = 0;
      for (std::size_t j = 0; j < docs.size(); ++j) df += tf[j].count(token) != 0 ? 1 : 0;
      if (df == 0) continue;
      auto it = tf[i].find(token);
      if (it == tf[i].end()) continue;
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double t = it->second;
      score += idf * (t * (params.k1 + 1.0)) /
               (t + params.k1 * (1.0 - params.b + params.b * lengths[i] / avgdl));
    }
    scored.push_back({docs[i].id, score});
  }
  return oracle_top_k(std::move(scored), k);
}

std::vector<OracleHit> oracle_dense(const std::vector<Passage>& docs, const std::string& query,
                                    int k, std::size_t dim, bool cosine) {
  const auto q = hashed_bow_embed(query, dim);
  double q_norm = 0.0;
  for (double x : q) q_norm += x * x;
  q_norm = std::sqrt(q_norm);

  std::vector<OracleHit> scored;
  for (const Passage& p : docs) {
    const auto v = hashed_bow_embed(indexed_text(p), dim);
    double raw = 0.0;
    for (std::size_t i = 0; i < dim; ++i) raw += v[i] * q[i];
    double score = raw;
    if (cosine) {
      double v_norm = 0.0;
      for (std::size_t i = 0; i < dim; ++i) v_norm += v[i] * v[i];
      v_norm = std::sqrt(v_norm);
      const double denom = v_norm * q_norm;
      score = denom == 0.0 ? 0.0 : raw / denom;
    }
    scored.push_back({p.id, score});
  }
  return oracle_top_k(std::move(scored), k);
}

void check_hits_match(const std::vector<RankedHit>& hits, const std::vector<OracleHit>& expected,
                      double tolerance = 0.0) {
  REQUIRE(hits.size() == expected.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    CHECK(hits[i].passage_id == expected[i].id);
    CHECK(hits[i].rank == static_cast<int>(i + 1));
    if (tolerance == 0.0) {
      CHECK(hits[i].score == expected[i].score);
    } else {
      CHECK(hits[i].score == doctest::Approx(expected[i].score).epsilon(tolerance));
    }
  }
}

std::vector<Passage> random_corpus(std::mt19937& rng, int n) {
  auto vocab = small_vocab();
  std::vector<Passage> docs;
  for (int i = 0; i < n; ++i) {
    Passage p = clean_passage("d" + std::to_string(100 + i),
                              random_words(rng, 3 + static_cast<int>(rng() % 10), vocab));
    if (rng() % 3 == 0) p.title = random_words(rng, 2, vocab);
    docs.push_back(std::move(p));
  }
  return docs;
}

std::string random_query(std::mt19937& rng) {
  auto vocab = small_vocab();
  vocab.push_back("unseenword");
  return random_words(rng, 1 + static_cast<int>(rng() % 4), vocab);
}

std::shared_ptr<ModelGateway> scripted_gateway() {
  return std::make_shared<ModelGateway>(std::make_shared<ScriptedBackend>());
}

IndexSpec dense_spec(Similarity sim, std::size_t block_rows = 4096) {
  IndexSpec spec;
  spec.kind = IndexKind::DenseEmbedding;
  spec.similarity = sim;
  spec.embedding_model_id = "emb";
  spec.block_rows = block_rows;
  return spec;
}

}  // namespace

TEST_CASE("bm25 retrieval matches a brute-force reference") {
  std::mt19937 rng(321);
  for (int trial = 0; trial < 8; ++trial) {
    auto docs = random_corpus(rng, 40 + static_cast<int>(rng() % 30));
    KnowledgeBase kb(docs, "rand");
    auto index = RetrievalIndex::build(kb, IndexSpec{});
    CHECK(index.size() == docs.size());
    for (int q = 0; q < 12; ++q) {
      std::string query = random_query(rng);
      int k = 1 + static_cast<int>(rng() % 12);
      check_hits_match(index.retrieve(query, k), oracle_bm25(docs, query, k, Bm25Params{}));
    }
  }
}

TEST_CASE("bm25 honors custom parameters") {
  std::mt19937 rng(77);
  auto docs = random_corpus(rng, 30);
  KnowledgeBase kb(docs, "rand");
  IndexSpec spec;
  spec.bm25 = Bm25Params{0.9, 0.3};
  auto index = RetrievalIndex::build(kb, spec);
  for (int q = 0; q < 10; ++q) {
    std::string query = random_query(rng);
    check_hits_match(index.retrieve(query, 7), oracle_bm25(docs, query, 7, spec.bm25));
  }
}

TEST_CASE("dense retrieval matches a brute-force reference") {
  std::mt19937 rng(654);
  auto gateway = scripted_gateway();
  for (Similarity sim : {Similarity::Dot, Similarity::Cosine}) {
    auto docs = random_corpus(rng, 50);
    KnowledgeBase kb(docs, "rand");
    auto index = RetrievalIndex::build(kb, dense_spec(sim), gateway.get());
    for (int q = 0; q < 12; ++q) {
      std::string query = random_query(rng);
      int k = 1 + static_cast<int>(rng() % 10);
      check_hits_match(index.retrieve(query, k),
                       oracle_dense(docs, query, k, 256, sim == Similarity::Cosine));
    }
  }
}

TEST_CASE("dense block size does not change results") {
  std::mt19937 rng(11);
  auto docs = random_corpus(rng, 37);
  KnowledgeBase kb(docs, "rand");
  auto gateway = scripted_gateway();
  auto big = RetrievalIndex::build(kb, dense_spec(Similarity::Dot, 4096), gateway.get());
  auto tiny = RetrievalIndex::build(kb, dense_spec(Similarity::Dot, 5), gateway.get());
  for (int q = 0; q < 8; ++q) {
    std::string query = random_query(rng);
    auto a = big.retrieve(query, 9);
    auto b = tiny.retrieve(query, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].passage_id == b[i].passage_id);
      CHECK(a[i].score == b[i].score);
    }
  }
}

TEST_CASE("score ties break toward the ascending passage id") {
  std::vector<Passage> docs = {clean_passage("zz", "same words here"),
                               clean_passage("aa", "same words here"),
                               clean_passage("mm", "same words here")};
  KnowledgeBase kb(docs, "ties");
  auto index = RetrievalIndex::build(kb, IndexSpec{});
  auto hits = index.retrieve("same words", 3);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].passage_id == "aa");
  CHECK(hits[1].passage_id == "mm");
  CHECK(hits[2].passage_id == "zz");
  CHECK(hits[0].score == hits[2].score);

  auto gateway = scripted_gateway();
  auto dense = RetrievalIndex::build(kb, dense_spec(Similarity::Cosine), gateway.get());
  auto dense_hits = dense.retrieve("same words", 3);
  CHECK(dense_hits[0].passage_id == "aa");
  CHECK(dense_hits[2].passage_id == "zz");
}

TEST_CASE("k beyond the corpus size ranks everything") {
  std::mt19937 rng(5);
  auto docs = random_corpus(rng, 6);
  KnowledgeBase kb(docs, "small");
  auto index = RetrievalIndex::build(kb, IndexSpec{});
  auto hits = index.retrieve("alpha bravo", 50);
  CHECK(hits.size() == 6);
  CHECK_THROWS_AS(index.retrieve("alpha", 0), ContractError);
  CHECK_THROWS_AS(index.retrieve("alpha", -2), ContractError);
}

TEST_CASE("retrieval over an empty index returns nothing") {
  KnowledgeBase kb;
  auto index = RetrievalIndex::build(kb, IndexSpec{});
  CHECK(index.retrieve("anything", 5).empty());

  auto gateway = scripted_gateway();
  auto dense = RetrievalIndex::build(kb, dense_spec(Similarity::Dot), gateway.get());
  CHECK(dense.retrieve("anything", 5).empty());
}

TEST_CASE("incremental adds equal a full rebuild") {
  std::mt19937 rng(999);
  auto docs = random_corpus(rng, 48);
  std::vector<Passage> first(docs.begin(), docs.begin() + 20);
  std::vector<Passage> rest(docs.begin() + 20, docs.end());

  SUBCASE("bm25") {
    KnowledgeBase partial(first, "part");
    auto grown = RetrievalIndex::build(partial, IndexSpec{});
    grown.add_passages(rest);
    KnowledgeBase full(docs, "full");
    auto rebuilt = RetrievalIndex::build(full, IndexSpec{});
    CHECK(grown.size() == rebuilt.size());
    for (int q = 0; q < 10; ++q) {
      std::string query = random_query(rng);
      auto a = grown.retrieve(query, 8);
      auto b = rebuilt.retrieve(query, 8);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].passage_id == b[i].passage_id);
        CHECK(a[i].score == b[i].score);
      }
    }
  }

  SUBCASE("dense") {
    auto gateway = scripted_gateway();
    KnowledgeBase partial(first, "part");
    auto grown = RetrievalIndex::build(partial, dense_spec(Similarity::Cosine), gateway.get());
    grown.add_passages(rest);
    KnowledgeBase full(docs, "full");
    auto rebuilt = RetrievalIndex::build(full, dense_spec(Similarity::Cosine), gateway.get());
    for (int q = 0; q < 10; ++q) {
      std::string query = random_query(rng);
      auto a = grown.retrieve(query, 8);
      auto b = rebuilt.retrieve(query, 8);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].passage_id == b[i].passage_id);
        CHECK(a[i].score == b[i].score);
      }
    }
  }

  SUBCASE("duplicate ids are rejected") {
    KnowledgeBase partial(first, "part");
    auto index = RetrievalIndex::build(partial, IndexSpec{});
    CHECK_THROWS_AS(index.add_passages(std::vector<Passage>{first[0]}), IntegrityError);
  }
}

TEST_CASE("overlay retrieval equals a rebuild that includes the overlay") {
  std::mt19937 rng(4242);
  auto docs = random_corpus(rng, 35);
  std::vector<Passage> overlay;
  for (int i = 0; i < 4; ++i) {
    overlay.push_back(make_injected_passage("inj-" + std::to_string(i),
                                            random_words(rng, 8, small_vocab()), "c1", "admit", i));
  }
  KnowledgeBase kb(docs, "base");
  KnowledgeBase with = inject(kb, overlay);

  SUBCASE("bm25") {
    auto index = RetrievalIndex::build(kb, IndexSpec{});
    auto rebuilt = RetrievalIndex::build(with, IndexSpec{});
    for (int q = 0; q < 12; ++q) {
      std::string query = random_query(rng);
      auto a = index.retrieve_with_overlay(query, 10, overlay);
      auto b = rebuilt.retrieve(query, 10);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].passage_id == b[i].passage_id);
        CHECK(a[i].score == b[i].score);
      }
    }
    // The overlay is ephemeral.
    CHECK(index.size() == docs.size());
  }

  SUBCASE("dense") {
    auto gateway = scripted_gateway();
    auto index = RetrievalIndex::build(kb, dense_spec(Similarity::Cosine), gateway.get());
    auto rebuilt = RetrievalIndex::build(with, dense_spec(Similarity::Cosine), gateway.get());
    for (int q = 0; q < 12; ++q) {
      std::string query = random_query(rng);
      auto a = index.retrieve_with_overlay(query, 10, overlay);
      auto b = rebuilt.retrieve(query, 10);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].passage_id == b[i].passage_id);
        CHECK(a[i].score == b[i].score);
      }
    }
  }

  SUBCASE("overlay ids must not collide with indexed ids") {
    auto index = RetrievalIndex::build(kb, IndexSpec{});
    std::vector<Passage> bad = {make_injected_passage(docs[0].id, "x", "c1", "admit", 0)};
    CHECK_THROWS_AS(index.retrieve_with_overlay("alpha", 5, bad), IntegrityError);
  }
}

TEST_CASE("indexes round-trip through disk") {
  TempDir dir;
  std::mt19937 rng(2024);
  auto docs = random_corpus(rng, 30);
  KnowledgeBase kb(docs, "disk");

  SUBCASE("bm25") {
    auto index = RetrievalIndex::build(kb, IndexSpec{});
    auto path = dir.file("bm25.index");
    index.save(path);
    auto loaded = RetrievalIndex::load(path);
    CHECK(loaded.size() == index.size());
    CHECK(loaded.spec().kind == IndexKind::SparseBm25);
    for (int q = 0; q < 10; ++q) {
      std::string query = random_query(rng);
      auto a = index.retrieve(query, 9);
      auto b = loaded.retrieve(query, 9);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].passage_id == b[i].passage_id);
        CHECK(a[i].score == b[i].score);
      }
    }
  }

  SUBCASE("dense in-memory and disk-backed") {
    auto gateway = scripted_gateway();
    auto index = RetrievalIndex::build(kb, dense_spec(Similarity::Cosine, 7), gateway.get());
    auto path = dir.file("dense.index");
    index.save(path);
    CHECK(std::filesystem::exists(dir.file("dense.index.vec")));

    auto loaded = RetrievalIndex::load(path, gateway.get());
    auto streaming = RetrievalIndex::load(path, gateway.get(), true);
    for (int q = 0; q < 10; ++q) {
      std::string query = random_query(rng);
      auto a = index.retrieve(query, 9);
      auto b = loaded.retrieve(query, 9);
      auto c = streaming.retrieve(query, 9);
      REQUIRE(a.size() == b.size());
      REQUIRE(a.size() == c.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].passage_id == b[i].passage_id);
        CHECK(a[i].score == b[i].score);
        CHECK(a[i].passage_id == c[i].passage_id);
        CHECK(a[i].score == c[i].score);
      }
    }
    // Disk-backed indexes cannot grow in place.
    CHECK_THROWS_AS(streaming.add_passages(std::vector<Passage>{clean_passage("new", "x")}),
                    ContractError);
  }

  SUBCASE("load failures") {
    CHECK_THROWS_AS(RetrievalIndex::load(dir.file("absent.index")), ConfigError);
    auto bad = dir.file("bad.index");
    write_file(bad, "not json\n");
    CHECK_THROWS_AS(RetrievalIndex::load(bad), ParseError);
    auto old = dir.file("old.index");
    write_file(old, "{\"version\": 99}\n");
    CHECK_THROWS_AS(RetrievalIndex::load(old), ConfigError);
  }
}

TEST_CASE("query embeddings are computed once per text") {
  std::mt19937 rng(31);
  auto docs = random_corpus(rng, 10);
  KnowledgeBase kb(docs, "cache");
  auto gateway = scripted_gateway();
  auto index = RetrievalIndex::build(kb, dense_spec(Similarity::Dot), gateway.get());
  const long after_build = gateway->usage_totals().embed_calls;

  index.retrieve("alpha bravo", 3);
  CHECK(gateway->usage_totals().embed_calls == after_build + 1);
  index.retrieve("alpha bravo", 5);
  CHECK(gateway->usage_totals().embed_calls == after_build + 1);
  index.retrieve("charlie", 3);
  CHECK(gateway->usage_totals().embed_calls == after_build + 2);

  std::vector<Passage> overlay = {make_injected_passage("inj-0", "delta echo", "c1", "admit", 0)};
  index.retrieve_with_overlay("alpha bravo", 3, overlay);
  CHECK(gateway->usage_totals().embed_calls == after_build + 3);
  index.retrieve_with_overlay("alpha bravo", 3, overlay);
  CHECK(gateway->usage_totals().embed_calls == after_build + 3);
}

TEST_CASE("cosine similarity of a passage with itself is 1") {
  std::vector<Passage> docs = {clean_passage("d1", "alpha bravo charlie"),
                               clean_passage("d2", "delta echo foxtrot golf")};
  KnowledgeBase kb(docs, "self");
  auto gateway = scripted_gateway();
  auto index = RetrievalIndex::build(kb, dense_spec(Similarity::Cosine), gateway.get());
  auto hits = index.retrieve("alpha bravo charlie", 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].passage_id == "d1");
  CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("dense configuration errors") {
  KnowledgeBase kb(std::vector<Passage>{clean_passage("d1", "x")}, "cfg");
  CHECK_THROWS_AS(RetrievalIndex::build(kb, dense_spec(Similarity::Dot), nullptr), ContractError);
  auto gateway = scripted_gateway();
  IndexSpec spec = dense_spec(Similarity::Dot);
  spec.embedding_model_id = "";
  CHECK_THROWS_AS(RetrievalIndex::build(kb, spec, gateway.get()), ConfigError);
}

TEST_CASE("recall_at_k counts retrieved injections") {
  std::vector<RankedHit> hits = {{"a", 3.0, 1}, {"inj-1", 2.0, 2}, {"b", 1.0, 3}};
  CHECK(recall_at_k(hits, {"inj-1"}) == 1.0);
  CHECK(recall_at_k(hits, {"inj-1", "inj-2"}) == 0.5);
  CHECK(recall_at_k(hits, {"inj-9"}) == 0.0);
  CHECK_THROWS_AS(recall_at_k(hits, {}), DomainError);
  CHECK(recall_at_k({}, {"inj-1"}) == 0.0);
}

TEST_CASE("documents index their title ahead of the body") {
  Passage untitled = clean_passage("d1", "body text");
  CHECK(indexed_text(untitled) == "body text");
  Passage titled = clean_passage("d2", "body text", "Some Title");
  CHECK(indexed_text(titled) == "Some Title body text");

  // A query hitting only the title still finds the passage.
  KnowledgeBase kb(std::vector<Passage>{titled, untitled}, "titles");
  auto index = RetrievalIndex::build(kb, IndexSpec{});
  auto hits = index.retrieve("Some Title", 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].passage_id == "d2");
  CHECK(hits[0].score > 0.0);
}
