#include <random>

#include <doctest.h>

#include "ragfc/corpus.hpp"
#include "ragfc/errors.hpp"
#include "ragfc/text.hpp"
#include "support/test_util.hpp"

using namespace ragfc;
using namespace ragfc::testsupport;

namespace {

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

TEST_CASE("split_words handles runs of mixed whitespace") {
  CHECK(split_words("a  b\tc") == std::vector<std::string>{"a", "b", "c"});
  CHECK(split_words("  leading and trailing \n") ==
        std::vector<std::string>{"leading", "and", "trailing"});
  CHECK(split_words("").empty());
  CHECK(split_words(" \t\n ").empty());
  CHECK(split_words("single") == std::vector<std::string>{"single"});
}

TEST_CASE("count_words matches split_words size") {
  CHECK(count_words("") == 0);
  CHECK(count_words("one two  three") == 3);
  std::mt19937 rng(42);
  auto vocab = small_vocab();
  for (int i = 0; i < 50; ++i) {
    std::string text = random_words(rng, static_cast<int>(rng() % 30), vocab);
    CHECK(count_words(text) == split_words(text).size());
  }
}

TEST_CASE("truncate_words keeps leading words joined by single spaces") {
  CHECK(truncate_words("a b c d", 2) == "a b");
  CHECK(truncate_words("a  b\tc", 10) == "a b c");
  CHECK(truncate_words("a b c", 3) == "a b c");
  CHECK(truncate_words("a b c", 0) == "");
  CHECK(truncate_words("", 5) == "");
}

TEST_CASE("tokenize_alnum lowercases and splits on non-alphanumerics") {
  CHECK(tokenize_alnum("Hello, WORLD-42") == std::vector<std::string>{"hello", "world", "42"});
  CHECK(tokenize_alnum("...") == std::vector<std::string>{});
  CHECK(tokenize_alnum("a1b2") == std::vector<std::string>{"a1b2"});
  CHECK(tokenize_alnum("Don't stop") == std::vector<std::string>{"don", "t", "stop"});
}

TEST_CASE("contains_ci ignores ASCII case") {
  CHECK(contains_ci("The CDC and WHO", "cdc"));
  CHECK(contains_ci("abcDEF", "CDef"));
  CHECK_FALSE(contains_ci("abc", "abd"));
  CHECK_FALSE(contains_ci("", "x"));
}

TEST_CASE("to_lower and trim basics") {
  CHECK(to_lower("MiXeD 42!") == "mixed 42!");
  CHECK(trim("  padded\t\n") == "padded");
  CHECK(trim("") == "");
  CHECK(trim(" \n ") == "");
  CHECK(trim("inner  space") == "inner  space");
}

TEST_CASE("split_into_passages chunks greedily") {
  std::mt19937 rng(7);
  auto vocab = small_vocab();

  SUBCASE("120 words at 50 per chunk give sizes 50/50/20") {
    std::string doc = random_words(rng, 120, vocab);
    auto chunks = split_into_passages(doc, 50);
    REQUIRE(chunks.size() == 3);
    CHECK(count_words(chunks[0]) == 50);
    CHECK(count_words(chunks[1]) == 50);
    CHECK(count_words(chunks[2]) == 20);
  }

  SUBCASE("document at exactly the limit survives unchanged") {
    std::string doc = random_words(rng, 50, vocab);
    auto chunks = split_into_passages(doc, 50);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0] == doc);
  }

  SUBCASE("empty and whitespace-only documents give no chunks") {
    CHECK(split_into_passages("", 10).empty());
    CHECK(split_into_passages("  \t ", 10).empty());
  }

  SUBCASE("non-positive limit is rejected") {
    CHECK_THROWS_AS(split_into_passages("a b", 0), ContractError);
    CHECK_THROWS_AS(split_into_passages("a b", -3), ContractError);
  }

  SUBCASE("chunking preserves the word sequence exactly") {
    for (int trial = 0; trial < 60; ++trial) {
      int n = static_cast<int>(rng() % 80);
      int max_words = 1 + static_cast<int>(rng() % 12);
      std::string doc = random_words(rng, n, vocab);
      auto chunks = split_into_passages(doc, max_words);
      std::vector<std::string> rejoined;
      for (const auto& chunk : chunks) {
        CHECK_FALSE(chunk.empty());
        auto words = split_words(chunk);
        CHECK(words.size() <= static_cast<std::size_t>(max_words));
        rejoined.insert(rejoined.end(), words.begin(), words.end());
      }
      CHECK(join_words(rejoined) == join_words(split_words(doc)));
    }
  }
}

TEST_CASE("load_corpus reads jsonl with id aliases") {
  TempDir dir;
  auto path = dir.file("corpus.jsonl");
  write_file(path,
             "{\"_id\": \"d1\", \"title\": \"First\", \"text\": \"alpha bravo\"}\n"
             "\n"
             "{\"id\": \"d2\", \"text\": \"charlie delta\"}\n"
             "{\"_id\": \"d3\", \"title\": \"\", \"text\": \"echo\"}\n");
  auto kb = load_corpus(path, CorpusFormat::Jsonl);
  REQUIRE(kb.clean_count() == 3);
  CHECK(kb.injected_count() == 0);
  CHECK(kb.source_name() == "corpus");
  CHECK(kb.clean_passages()[0].id == "d1");
  CHECK(kb.clean_passages()[0].title == "First");
  CHECK(kb.clean_passages()[0].text == "alpha bravo");
  CHECK(kb.clean_passages()[1].id == "d2");
  CHECK(kb.clean_passages()[1].title == "");
  CHECK(kb.clean_passages()[2].provenance == Provenance::Clean);
  CHECK(kb.has_id("d2"));
  CHECK_FALSE(kb.has_id("d9"));
  REQUIRE(kb.find("d3") != nullptr);
  CHECK(kb.find("d3")->text == "echo");
}

TEST_CASE("load_corpus reads tsv rows") {
  TempDir dir;
  auto path = dir.file("corpus.tsv");
  write_file(path, "d1\tTitle One\talpha bravo charlie\nd2\t\tdelta\techo still text\n");
  auto kb = load_corpus(path, CorpusFormat::Tsv);
  REQUIRE(kb.clean_count() == 2);
  CHECK(kb.clean_passages()[0].id == "d1");
  CHECK(kb.clean_passages()[0].title == "Title One");
  CHECK(kb.clean_passages()[0].text == "alpha bravo charlie");
  CHECK(kb.clean_passages()[1].title == "");
  CHECK(kb.clean_passages()[1].text == "delta\techo still text");
}

TEST_CASE("load_corpus reports malformed input with its location") {
  TempDir dir;

  SUBCASE("bad json line") {
    auto path = dir.file("bad.jsonl");
    write_file(path, "{\"_id\": \"d1\", \"text\": \"ok\"}\nnot json at all\n");
    try {
      load_corpus(path, CorpusFormat::Jsonl);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line_number() == 2);
      CHECK(e.source() == path.string());
    }
  }

  SUBCASE("missing text field") {
    auto path = dir.file("missing.jsonl");
    write_file(path, "{\"_id\": \"d1\"}\n");
    CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Jsonl), ParseError);
  }

  SUBCASE("non-string id") {
    auto path = dir.file("numid.jsonl");
    write_file(path, "{\"_id\": 7, \"text\": \"ok\"}\n");
    CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Jsonl), ParseError);
  }

  SUBCASE("empty id") {
    auto path = dir.file("emptyid.jsonl");
    write_file(path, "{\"_id\": \"\", \"text\": \"ok\"}\n");
    CHECK_THROWS_AS(load_corpus(path, CorpusFormat::Jsonl), ParseError);
  }

  SUBCASE("tsv row with one column") {
    auto path = dir.file("short.tsv");
    write_file(path, "d1\tonly title\n");
    try {
      load_corpus(path, CorpusFormat::Tsv);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line_number() == 1);
    }
  }

  SUBCASE("duplicate passage id") {
    auto path = dir.file("dup.jsonl");
    write_file(path,
               "{\"_id\": \"d1\", \"text\": \"a\"}\n"
               "{\"_id\": \"d1\", \"text\": \"b\"}\n");
    try {
      load_corpus(path, CorpusFormat::Jsonl);
      FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
      CHECK(e.offending_id() == "d1");
    }
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_corpus(dir.file("nope.jsonl"), CorpusFormat::Jsonl), ConfigError);
  }
}

TEST_CASE("load_claims reads aliases and labels") {
  TempDir dir;
  auto path = dir.file("claims.jsonl");
  write_file(path,
             "{\"_id\": \"c1\", \"claim\": \"alpha happened\", \"label\": \"SUPPORTED\"}\n"
             "{\"id\": \"c2\", \"text\": \"bravo happened\", \"label\": \"refutes\"}\n"
             "{\"_id\": \"c3\", \"claim\": \"charlie happened\", \"label\": \"NOT ENOUGH INFO\"}\n"
             "{\"_id\": \"c4\", \"claim\": \"delta happened\"}\n");
  auto claims = load_claims(path);
  REQUIRE(claims.size() == 4);
  CHECK(claims[0].id == "c1");
  CHECK(claims[0].text == "alpha happened");
  CHECK(claims[0].gold_label == ClaimLabel::Supported);
  CHECK(claims[1].id == "c2");
  CHECK(claims[1].text == "bravo happened");
  CHECK(claims[1].gold_label == ClaimLabel::Refuted);
  CHECK(claims[2].gold_label == ClaimLabel::Nei);
  CHECK(claims[3].gold_label == ClaimLabel::Unknown);
}

TEST_CASE("load_claims rejects duplicate ids") {
  TempDir dir;
  auto path = dir.file("claims.jsonl");
  write_file(path,
             "{\"_id\": \"c1\", \"claim\": \"x\"}\n"
             "{\"_id\": \"c1\", \"claim\": \"y\"}\n");
  try {
    load_claims(path);
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(e.offending_id() == "c1");
  }
}

TEST_CASE("parse_claim_label accepts case and verb variants") {
  CHECK(parse_claim_label("SUPPORTS") == ClaimLabel::Supported);
  CHECK(parse_claim_label("support") == ClaimLabel::Supported);
  CHECK(parse_claim_label("Refuted") == ClaimLabel::Refuted);
  CHECK(parse_claim_label("refute") == ClaimLabel::Refuted);
  CHECK(parse_claim_label("nei") == ClaimLabel::Nei);
  CHECK(parse_claim_label(" not enough information ") == ClaimLabel::Nei);
  CHECK(parse_claim_label("") == ClaimLabel::Unknown);
  CHECK(parse_claim_label("maybe") == ClaimLabel::Unknown);
  CHECK(to_string(ClaimLabel::Supported) == "SUPPORTED");
  CHECK(to_string(ClaimLabel::Unknown) == "UNKNOWN");
}

TEST_CASE("inject appends a sidecar and validates provenance") {
  KnowledgeBase kb(clean_passages({{"d1", "alpha"}, {"d2", "bravo"}}), "tiny");

  SUBCASE("no passages keeps counts") {
    auto out = inject(kb, {});
    CHECK(out.clean_count() == 2);
    CHECK(out.injected_count() == 0);
  }

  SUBCASE("injected passages are appended and findable") {
    std::vector<Passage> adds;
    for (int i = 0; i < 5; ++i) {
      adds.push_back(make_injected_passage("inj-" + std::to_string(i), "poison " + std::to_string(i),
                                           "c1", "admit", i));
    }
    auto out = inject(kb, adds);
    CHECK(out.clean_count() == 2);
    CHECK(out.injected_count() == 5);
    CHECK(out.total_count() == 7);
    REQUIRE(out.find("inj-3") != nullptr);
    CHECK(out.find("inj-3")->injected());
    CHECK(out.find("inj-3")->target_claim_id == "c1");
    CHECK(out.find("inj-3")->attack_name == "admit");
    CHECK(out.find("inj-3")->shot_index == 3);
    // The source kb is untouched.
    CHECK(kb.injected_count() == 0);
    // Chaining adds to the existing sidecar.
    auto more = inject(out, {make_injected_passage("inj-9", "more", "c2", "admit", 0)});
    CHECK(more.injected_count() == 6);
  }

  SUBCASE("clean provenance is rejected") {
    CHECK_THROWS_AS(inject(kb, {clean_passage("x1", "text")}), ContractError);
  }

  SUBCASE("missing attribution is rejected") {
    Passage p = make_injected_passage("x1", "text", "", "admit", 0);
    CHECK_THROWS_AS(inject(kb, {p}), ContractError);
    Passage q = make_injected_passage("x2", "text", "c1", "", 0);
    CHECK_THROWS_AS(inject(kb, {q}), ContractError);
  }

  SUBCASE("id collisions are rejected") {
    try {
      inject(kb, {make_injected_passage("d1", "text", "c1", "admit", 0)});
      FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
      CHECK(e.offending_id() == "d1");
    }
    auto out = inject(kb, {make_injected_passage("inj-1", "text", "c1", "admit", 0)});
    CHECK_THROWS_AS(inject(out, {make_injected_passage("inj-1", "text", "c1", "admit", 1)}),
                    IntegrityError);
  }
}

TEST_CASE("remove_injected restores the clean corpus bit-exactly") {
  std::vector<Passage> clean;
  clean.push_back(clean_passage("d1", "alpha bravo", "Title"));
  clean.push_back(clean_passage("d2", "charlie"));
  KnowledgeBase kb(clean, "restore");
  auto poisoned = inject(kb, {make_injected_passage("inj-1", "poison", "c1", "admit", 0),
                              make_injected_passage("inj-2", "poison", "c1", "admit", 1)});
  auto restored = remove_injected(poisoned);
  CHECK(restored.injected_count() == 0);
  REQUIRE(restored.clean_count() == kb.clean_count());
  for (std::size_t i = 0; i < kb.clean_count(); ++i) {
    const Passage& a = kb.clean_passages()[i];
    const Passage& b = restored.clean_passages()[i];
    CHECK(a.id == b.id);
    CHECK(a.title == b.title);
    CHECK(a.text == b.text);
    CHECK(a.provenance == b.provenance);
    CHECK(a.target_claim_id == b.target_claim_id);
    CHECK(a.attack_name == b.attack_name);
    CHECK(a.shot_index == b.shot_index);
  }
  // The clean storage is shared, not copied.
  CHECK(&restored.clean_passages() == &kb.clean_passages());
  CHECK(restored.source_name() == "restore");
}

TEST_CASE("poisoning_rate is shots over clean corpus size") {
  std::vector<Passage> clean;
  for (int i = 0; i < 5183; ++i) {
    clean.push_back(clean_passage("d" + std::to_string(i), "text"));
  }
  KnowledgeBase kb(std::move(clean), "sized");

  CHECK(poisoning_rate(kb, 1) == doctest::Approx(1.0 / 5183.0).epsilon(1e-12));
  CHECK(poisoning_rate(kb, 5) == doctest::Approx(5.0 / 5183.0).epsilon(1e-12));
  CHECK(poisoning_rate(kb, 0) == 0.0);
  CHECK_THROWS_AS(poisoning_rate(kb, -1), ContractError);

  // Monotone in shots.
  double prev = 0.0;
  for (int shots = 1; shots <= 5; ++shots) {
    double rate = poisoning_rate(kb, shots);
    CHECK(rate > prev);
    prev = rate;
  }

  // Injections do not change the denominator.
  auto poisoned = inject(kb, {make_injected_passage("inj-1", "p", "c1", "admit", 0)});
  CHECK(poisoning_rate(poisoned, 1) == poisoning_rate(kb, 1));

  KnowledgeBase empty;
  CHECK_THROWS_AS(poisoning_rate(empty, 1), DomainError);
  CHECK(poisoning_rate(empty, 0) == 0.0);
}
