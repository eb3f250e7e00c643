#include "ragfc/corpus.hpp"

#include <fstream>
#include <unordered_set>
#include <utility>

#include <nlohmann/json.hpp>

#include "ragfc/errors.hpp"
#include "ragfc/text.hpp"

namespace ragfc {

namespace {

using nlohmann::json;

std::string require_string(const json& record, const char* primary, const char* fallback,
                           const std::string& source, long line_number) {
  for (const char* key : {primary, fallback}) {
    if (key == nullptr) continue;
    auto it = record.find(key);
    if (it != record.end()) {
      if (!it->is_string()) {
        throw ParseError(std::string("field '") + key + "' is not a string", source, line_number);
      }
      return it->get<std::string>();
    }
  }
  throw ParseError(std::string("missing field '") + primary + "'", source, line_number);
}

std::string optional_string(const json& record, const char* key) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) return "";
  return it->get<std::string>();
}

}  // namespace

Passage make_injected_passage(std::string id, std::string text, std::string target_claim_id,
                              std::string attack_name, int shot_index, std::string title) {
  Passage p;
  p.id = std::move(id);
  p.title = std::move(title);
  p.text = std::move(text);
  p.provenance = Provenance::Injected;
  p.target_claim_id = std::move(target_claim_id);
  p.attack_name = std::move(attack_name);
  p.shot_index = shot_index;
  return p;
}

KnowledgeBase::KnowledgeBase(std::vector<Passage> clean, std::string source_name)
    : clean_(std::make_shared<std::vector<Passage>>(std::move(clean))),
      source_name_(std::move(source_name)) {
  std::unordered_set<std::string> seen;
  seen.reserve(clean_->size());
  for (const Passage& p : *clean_) {
    if (!seen.insert(p.id).second) {
      throw IntegrityError("duplicate passage id in corpus", p.id);
    }
  }
}

bool KnowledgeBase::has_id(const std::string& id) const { return find(id) != nullptr; }

const Passage* KnowledgeBase::find(const std::string& id) const {
  for (const Passage& p : *clean_) {
    if (p.id == id) return &p;
  }
  for (const Passage& p : injected_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

KnowledgeBase load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file: " + path.string());

  std::vector<Passage> passages;
  std::string line;
  long line_number = 0;
  const std::string source = path.string();
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    Passage p;
    if (format == CorpusFormat::Jsonl) {
      json record = json::parse(line, nullptr, false);
      if (record.is_discarded() || !record.is_object()) {
        throw ParseError("malformed JSON record", source, line_number);
      }
      p.id = require_string(record, "_id", "id", source, line_number);
      p.title = optional_string(record, "title");
      p.text = require_string(record, "text", nullptr, source, line_number);
    } else {
      auto first = line.find('\t');
      auto second = first == std::string::npos ? std::string::npos : line.find('\t', first + 1);
      if (first == std::string::npos || second == std::string::npos) {
        throw ParseError("expected id<TAB>title<TAB>text", source, line_number);
      }
      p.id = line.substr(0, first);
      p.title = line.substr(first + 1, second - first - 1);
      p.text = line.substr(second + 1);
    }
    if (p.id.empty()) throw ParseError("empty passage id", source, line_number);
    passages.push_back(std::move(p));
  }
  return KnowledgeBase(std::move(passages), path.stem().string());
}

std::vector<Claim> load_claims(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open claims file: " + path.string());

  std::vector<Claim> claims;
  std::unordered_set<std::string> seen;
  std::string line;
  long line_number = 0;
  const std::string source = path.string();
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      throw ParseError("malformed JSON record", source, line_number);
    }
    Claim c;
    c.id = require_string(record, "_id", "id", source, line_number);
    c.text = require_string(record, "claim", "text", source, line_number);
    c.gold_label = parse_claim_label(optional_string(record, "label"));
    if (!seen.insert(c.id).second) throw IntegrityError("duplicate claim id", c.id);
    claims.push_back(std::move(c));
  }
  return claims;
}

ClaimLabel parse_claim_label(const std::string& raw) {
  const std::string lower = to_lower(trim(raw));
  if (lower == "supported" || lower == "supports" || lower == "support") return ClaimLabel::Supported;
  if (lower == "refuted" || lower == "refutes" || lower == "refute") return ClaimLabel::Refuted;
  if (lower == "not enough info" || lower == "not enough information" || lower == "nei") {
    return ClaimLabel::Nei;
  }
  return ClaimLabel::Unknown;
}

std::string to_string(ClaimLabel label) {
  switch (label) {
    case ClaimLabel::Supported: return "SUPPORTED";
    case ClaimLabel::Refuted: return "REFUTED";
    case ClaimLabel::Nei: return "NOT ENOUGH INFO";
    case ClaimLabel::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

KnowledgeBase inject(const KnowledgeBase& kb, const std::vector<Passage>& passages) {
  KnowledgeBase out;
  out.clean_ = kb.clean_;
  out.injected_ = kb.injected_;
  out.source_name_ = kb.source_name_;

  std::unordered_set<std::string> ids;
  ids.reserve(kb.clean_->size() + kb.injected_.size() + passages.size());
  for (const Passage& p : *kb.clean_) ids.insert(p.id);
  for (const Passage& p : kb.injected_) ids.insert(p.id);

  for (const Passage& p : passages) {
    if (p.provenance != Provenance::Injected) {
      throw ContractError("inject() requires Injected provenance (passage " + p.id + ")");
    }
    if (p.target_claim_id.empty() || p.attack_name.empty()) {
      throw ContractError("injected passage must carry target_claim_id and attack_name (passage " +
                          p.id + ")");
    }
    if (!ids.insert(p.id).second) {
      throw IntegrityError("injected passage id collides with existing id", p.id);
    }
    out.injected_.push_back(p);
  }
  return out;
}

KnowledgeBase remove_injected(const KnowledgeBase& kb) {
  KnowledgeBase out;
  out.clean_ = kb.clean_;
  out.source_name_ = kb.source_name_;
  return out;
}

double poisoning_rate(const KnowledgeBase& kb, int shots) {
  if (shots < 0) throw ContractError("poisoning_rate: shots must be non-negative");
  if (shots == 0) return 0.0;
  if (kb.clean_count() == 0) throw DomainError("poisoning_rate: empty corpus");
  return static_cast<double>(shots) / static_cast<double>(kb.clean_count());
}

std::vector<std::string> split_into_passages(const std::string& document, int max_words) {
  if (max_words < 1) throw ContractError("split_into_passages: max_words must be >= 1");
  std::vector<std::string> words = split_words(document);
  std::vector<std::string> chunks;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t end = std::min(words.size(), i + static_cast<std::size_t>(max_words));
    std::string chunk;
    for (std::size_t j = i; j < end; ++j) {
      if (j > i) chunk += ' ';
      chunk += words[j];
    }
    chunks.push_back(std::move(chunk));
    i = end;
  }
  return chunks;
}

}  // namespace ragfc
