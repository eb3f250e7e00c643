#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace ragfc {

enum class Provenance { Clean, Injected };

enum class ClaimLabel { Supported, Refuted, Nei, Unknown };

struct Passage {
  std::string id;
  std::string title;
  std::string text;
  Provenance provenance = Provenance::Clean;
  // Attribution, meaningful only when provenance == Injected.
  std::string target_claim_id;
  std::string attack_name;
  int shot_index = -1;

  bool injected() const { return provenance == Provenance::Injected; }
};

Passage make_injected_passage(std::string id, std::string text, std::string target_claim_id,
                              std::string attack_name, int shot_index, std::string title = "");

struct Claim {
  std::string id;
  std::string text;
  ClaimLabel gold_label = ClaimLabel::Unknown;
};

// A knowledge base keeps injected passages in a sidecar next to the clean
// corpus so many experiments can share one clean collection. Values are
// immutable after construction; inject() returns a new value that shares the
// clean storage.
class KnowledgeBase {
 public:
  KnowledgeBase() : clean_(std::make_shared<std::vector<Passage>>()) {}
  KnowledgeBase(std::vector<Passage> clean, std::string source_name);

  const std::vector<Passage>& clean_passages() const { return *clean_; }
  const std::vector<Passage>& injected_passages() const { return injected_; }
  const std::string& source_name() const { return source_name_; }

  std::size_t clean_count() const { return clean_->size(); }
  std::size_t injected_count() const { return injected_.size(); }
  std::size_t total_count() const { return clean_->size() + injected_.size(); }

  bool has_id(const std::string& id) const;
  const Passage* find(const std::string& id) const;

 private:
  friend KnowledgeBase inject(const KnowledgeBase&, const std::vector<Passage>&);
  friend KnowledgeBase remove_injected(const KnowledgeBase&);

  std::shared_ptr<const std::vector<Passage>> clean_;
  std::vector<Passage> injected_;
  std::string source_name_;
};

enum class CorpusFormat { Jsonl, Tsv };

// Loads a line-delimited corpus. Jsonl records carry fields "_id" (or "id"),
// "title", "text"; Tsv rows are id<TAB>title<TAB>text. Every record gets
// Clean provenance.
KnowledgeBase load_corpus(const std::filesystem::path& path, CorpusFormat format);

// Claims file: JSONL with fields "_id"/"id", "claim"/"text", optional
// "label" (SUPPORTED/SUPPORTS, REFUTED/REFUTES, NOT ENOUGH INFO, case-insensitive).
std::vector<Claim> load_claims(const std::filesystem::path& path);

ClaimLabel parse_claim_label(const std::string& raw);
std::string to_string(ClaimLabel label);

// Appends injected passages. Each must carry Injected provenance and a fresh
// id; the clean collection is shared, not copied.
KnowledgeBase inject(const KnowledgeBase& kb, const std::vector<Passage>& passages);

// Drops the injected sidecar, restoring the clean corpus bit-exactly.
KnowledgeBase remove_injected(const KnowledgeBase& kb);

// Fraction of the clean corpus a `shots`-passage injection represents.
double poisoning_rate(const KnowledgeBase& kb, int shots);

// Greedy left-to-right segmentation into chunks of at most max_words words,
// where a word is a maximal run of non-whitespace. Chunks are joined with
// single spaces, so the word sequence is preserved exactly.
std::vector<std::string> split_into_passages(const std::string& document, int max_words);

}  // namespace ragfc
