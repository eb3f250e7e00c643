#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragfc/corpus.hpp"
#include "ragfc/gateway.hpp"
#include "ragfc/verdict.hpp"

namespace ragfc {

struct SearchResult {
  std::string url;
  std::string title;
  std::string text;
};

// Web-search dependency of the search-based proxy pipeline. Live and fixture
// adapters share this interface.
class SearchProvider {
 public:
  virtual ~SearchProvider() = default;
  virtual std::vector<SearchResult> search(const std::string& query) = 0;
};

class FixtureSearchProvider : public SearchProvider {
 public:
  void add(const std::string& query, std::vector<SearchResult> results);
  std::vector<SearchResult> search(const std::string& query) override;

 private:
  std::map<std::string, std::vector<SearchResult>> results_;
};

enum class ProxyConstruction { SearchBased, LLMBased };

// The opposing evidence the attacker optimizes against, standing in for the
// victim's clean retrieval.
struct ProxyContext {
  std::vector<Passage> passages;
  ProxyConstruction construction = ProxyConstruction::LLMBased;
  // Search queries used to collect the passages; reused as the retrieval
  // prefix. Empty for LLM-based construction until prefixing needs them.
  std::vector<std::string> queries;
};

struct AttackConfig {
  int max_iterations = 50;     // optimization budget per shot
  int reset_interval = 3;      // clear conversation memory every this many turns
  int proxy_passage_count = 3; // opposing passages collected per claim
  int word_budget = 50;        // adversarial passage length cap, in words
  std::string attacker_model = "scripted-attacker";
  std::string proxy_verifier_model = "scripted-verifier";
  bool prefix_augment = false;
  double attacker_temperature = 1.0;
  ProxyConstruction proxy_mode = ProxyConstruction::LLMBased;
  std::vector<std::string> refusal_patterns = {"I cannot", "I must decline", "I can't help"};
  // Search-based collection re-queries at most this many rounds before
  // giving up with an insufficient-evidence error.
  int max_search_rounds = 3;

  void validate() const;
};

struct AttackIteration {
  std::string candidate_text;
  VerdictLabel proxy_verdict = VerdictLabel::Nei;
  bool was_reset_point = false;
  // Set when the generator's output stayed unparseable after one repair
  // attempt; such turns consume budget but are never verified.
  bool skipped = false;
};

struct AttackTrace {
  std::string claim_id;
  VerdictLabel target_verdict = VerdictLabel::Refuted;
  std::vector<AttackIteration> iterations;
  bool success = false;
  int success_iteration = 0;  // 1-based; 0 when the attack failed
  UsageRecord usage;          // all generator + proxy-verifier calls
  std::string attacker_model;
};

struct QueryGenResult {
  std::vector<std::string> queries;
  // True when the model output yielded no usable query and the claim text
  // itself was substituted.
  bool used_fallback = false;
};

// Extracts compact search queries from the claim. Keeps only queries of 3 to
// 10 words from the comma-separated model output.
QueryGenResult gen_queries(ModelGateway& gateway, const Claim& claim, const AttackConfig& cfg);

// Search, segment into word-budget chunks, and keep chunks whose single-
// passage probe verdict differs from the target, until proxy_passage_count
// qualify.
ProxyContext collect_proxy_search(ModelGateway& gateway, const Claim& claim, VerdictLabel target,
                                  const AttackConfig& cfg, SearchProvider& search);

// Asks the generator model for proxy_passage_count passages of the given
// stance (the stance opposing the attack target), each capped at the word
// budget.
ProxyContext collect_proxy_llm(ModelGateway& gateway, const Claim& claim, VerdictLabel stance,
                               const AttackConfig& cfg);

struct GenerationResult {
  Passage passage;  // final candidate, emitted even when success is false
  AttackTrace trace;
};

// Multi-turn optimization loop: propose a candidate, check it against the
// proxy context with the proxy verifier, feed the verdict back, and clear
// conversation memory every reset_interval turns. Returns at the first
// accepted candidate or after max_iterations.
GenerationResult generate_adversarial(ModelGateway& gateway, const Claim& claim,
                                      const ProxyContext& proxy, VerdictLabel target,
                                      const AttackConfig& cfg);

// join(queries, ", ") + " " + passage_text; identity when queries is empty.
std::string augment_prefix(const std::vector<std::string>& queries,
                           const std::string& passage_text);

struct ShotStatus {
  int shot_index = 0;
  bool ok = false;
  bool refused = false;
  std::string error;
};

struct AdmitResult {
  std::vector<Passage> passages;
  std::vector<AttackTrace> traces;
  std::vector<ShotStatus> shot_status;
  QueryGenResult prefix_queries;
};

// Full per-claim attack: collect the proxy context once, then run `shots`
// independent optimization loops. Passages are prefix-augmented when
// configured and tagged with the claim id, attack name "ADMIT" and shot
// index. A failing shot is reported in shot_status without discarding the
// other shots.
AdmitResult run_admit(ModelGateway& gateway, const Claim& claim, VerdictLabel target, int shots,
                      const AttackConfig& cfg, SearchProvider* search = nullptr);

// Case-insensitive refusal-pattern match; returns the pattern that fired.
std::optional<std::string> match_refusal(const std::string& text,
                                         const std::vector<std::string>& patterns);

// Shared with the single-turn baseline: the opening generator message for a
// claim, proxy block and target.
std::string render_attacker_opening(const Claim& claim, const std::string& proxy_block,
                                    VerdictLabel target, int word_budget,
                                    const std::string& current_verification);

// Rendered numbered list of proxy passage texts.
std::string render_proxy_block(const std::vector<Passage>& passages);

struct AttackerReply {
  bool ok = false;
  std::string passage;
  std::string analysis;
  std::string strategy;
};

// Lenient extraction of the generator's JSON reply: code fences stripped,
// outermost braces located, "passage" required.
AttackerReply parse_attacker_reply(const std::string& raw);

std::string injected_passage_id(const std::string& attack_name, const std::string& claim_id,
                                int shot_index);

}  // namespace ragfc
