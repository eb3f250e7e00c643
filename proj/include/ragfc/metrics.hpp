#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ragfc/attack.hpp"
#include "ragfc/gateway.hpp"
#include "ragfc/retrieval.hpp"
#include "ragfc/verdict.hpp"

namespace ragfc {

struct ClaimResult {
  std::string claim_id;
  VerdictLabel clean_verdict = VerdictLabel::Nei;
  VerdictLabel target_verdict = VerdictLabel::Nei;
  VerdictLabel attacked_verdict = VerdictLabel::Nei;
  long retrieved_injected = 0;  // own injected passages inside the top-k
  long injected_total = 0;      // own injected passages in the corpus
  std::string justification;
  bool parse_failed = false;
};

struct ExperimentSummary {
  double asr_strict = 0.0;
  double asr_inclusive = 0.0;
  long nei_count = 0;
  double mean_recall = 0.0;   // macro: mean of per-claim recall
  double micro_recall = 0.0;  // pooled: total retrieved / total injected
  double djr = 0.0;
  double cross_contamination = 0.0;
  double rejection_rate = 0.0;
  UsageRecord usage_totals;
};

// Fraction of claims whose post-attack verdict equals the target. Strict
// counts only clean label flips; the inclusive variant also counts NEI
// outcomes (and unparseable verdicts, which degrade to NEI).
double asr(const std::vector<ClaimResult>& results, bool include_nei);

// Results whose post-attack verdict is NEI or unparseable.
long nei_outcomes(const std::vector<ClaimResult>& results);

using JustificationJudge = std::function<bool(const ClaimResult&)>;

// Deterministic default judge: passes when the justification is non-empty,
// free of hedge markers, and does not argue for the opposite label.
bool heuristic_judge(const ClaimResult& result);

// Deceptive-justification rate over strict successes: the fraction whose
// explanation reads as support for the flipped verdict.
double djr(const std::vector<ClaimResult>& successes,
           const JustificationJudge& judge = heuristic_judge);

// Fraction of claims whose top-k contains an injected passage owned by a
// different claim. `ownership` maps every injected passage id to the claim
// it was crafted for.
double cross_contamination(const std::map<std::string, std::vector<RankedHit>>& per_claim_hits,
                           const std::map<std::string, std::string>& ownership);

// Refused generations / attempted generations.
double rejection_rate(const std::vector<ShotStatus>& attempts);

// Mean over claims of retrieved_injected / injected_total.
double macro_recall(const std::vector<ClaimResult>& results);

// Pooled: sum(retrieved_injected) / sum(injected_total).
double micro_recall(const std::vector<ClaimResult>& results);

struct CostBucket {
  int success_iteration = 0;  // 1-based; 0 collects failed traces
  long count = 0;
  double mean_input_tokens = 0.0;
  double mean_output_tokens = 0.0;
  double mean_cost = 0.0;
  double total_cost = 0.0;
};

struct CostTable {
  std::vector<CostBucket> buckets;  // ordered by success_iteration
  long trace_count = 0;
  double total_cost = 0.0;
  double mean_cost = 0.0;  // per trace
};

// Aggregates trace spend into per-iteration buckets. A trace's recorded
// cost estimate wins; otherwise the cost is recomputed from the price table,
// and a model missing from that table is a configuration error.
CostTable cost_summary(const std::vector<AttackTrace>& traces,
                       const std::map<std::string, ModelPrice>& prices);

}  // namespace ragfc
