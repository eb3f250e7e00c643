#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragfc/corpus.hpp"
#include "ragfc/gateway.hpp"
#include "ragfc/verdict.hpp"
#include "ragfc/verifier.hpp"

namespace ragfc {

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

struct DetectionReport {
  std::map<std::string, double> per_passage_scores;
  std::set<std::string> flagged;
  std::vector<RocPoint> roc_points;  // sorted by threshold ascending
  double auc = 0.0;
  double operating_threshold = 0.0;
};

// Pluggable passage scorer so an external classifier can drive the same ROC
// machinery; higher score means more suspicious.
using Detector = std::function<double(const Passage&)>;

// Sweeps thresholds over detector scores and grades against passage
// provenance (injected = positive class). A passage is flagged when its
// score >= threshold. Empty sweep derives thresholds from the observed
// scores. The operating threshold picking the flagged set is the median of
// the sweep. Throws a domain error unless both classes are present.
DetectionReport detect(const std::vector<Passage>& passages, const Detector& detector,
                       std::vector<double> sweep = {});

// Perplexity of text under the scoring model: exp(-mean logprob).
double ppl(ModelGateway& gateway, const std::string& model_id, const std::string& text);

// Naturalness screen: perplexity as the detector score.
DetectionReport ppl_detect(ModelGateway& gateway, const std::string& model_id,
                           const std::vector<Passage>& passages, std::vector<double> sweep = {});

struct RougeScore {
  double f1 = 0.0;
  // Either side had fewer than n tokens; the score is pinned to 0.
  bool degenerate = false;
};

// Clipped n-gram overlap F1 over lowercase alphanumeric tokens.
RougeScore rouge_n_f1(const std::string& a, const std::string& b, int n);

struct RougeConsistency {
  std::vector<std::vector<double>> matrix;  // symmetric pairwise scores
  // Mean off-diagonal score per provenance pair class; absent when the
  // class has no pairs.
  std::optional<double> clean_clean;
  std::optional<double> clean_adversarial;
  std::optional<double> adversarial_adversarial;
};

RougeConsistency rouge_consistency_matrix(const std::vector<Passage>& passages, int n = 1);

enum class ConsolidationStrategy { PassageVote, GroupVote, ConfidenceSelect };

std::string to_string(ConsolidationStrategy strategy);

struct UnitVerdict {
  std::vector<std::string> unit;  // passage ids making up the voting unit
  VerdictLabel label = VerdictLabel::Nei;
  std::optional<double> confidence;
  // Verifier error or unparseable judgment; the unit is excluded from the
  // final rule.
  bool excluded = false;
};

struct ConsolidationResult {
  VerdictLabel final_verdict = VerdictLabel::Nei;
  std::vector<UnitVerdict> per_unit_verdicts;
  ConsolidationStrategy strategy = ConsolidationStrategy::PassageVote;
  // divide_vote_group had fewer passages than clusters and fell back to
  // per-passage voting.
  bool fell_back = false;
  UsageRecord usage;
};

// Verifies each passage in isolation and majority-votes; tie -> NEI.
ConsolidationResult divide_vote_passage(ModelGateway& gateway, const Claim& claim,
                                        const std::vector<Passage>& passages,
                                        const VerifierConfig& verifier);

// Deterministic Lloyd k-means on 1 vector per row: farthest-point seeding
// (first center = row 0, ties to the lowest index), assignment ties to the
// lowest center index, at most 100 refinement rounds. Returns cluster index
// per row.
std::vector<int> kmeans_assign(const std::vector<std::vector<double>>& rows, int cluster_count);

// Clusters passage embeddings into cluster_count groups, verifies each group
// as one context, and majority-votes over group labels; tie -> NEI.
ConsolidationResult divide_vote_group(ModelGateway& gateway, const Claim& claim,
                                      const std::vector<Passage>& passages,
                                      const std::string& embed_model_id,
                                      const VerifierConfig& verifier, int cluster_count = 3);

struct ConsolidateSelectConfig {
  std::string generator_model_id = "scripted-verifier";
  std::string judge_model_id = "scripted-verifier";
  std::string embed_model_id;
  int cluster_count = 3;
  int word_budget = 50;
  double temperature = 0.0;
};

// Adds a model-written passage tagged [INT] to the [EXT] retrieved set,
// clusters, elicits an answer + confidence per group, and keeps the answer
// of the most confident group; confidence tie -> NEI.
ConsolidationResult consolidate_select(ModelGateway& gateway, const Claim& claim,
                                       const std::vector<Passage>& passages,
                                       const ConsolidateSelectConfig& cfg);

// Line-delimited serialization used by the experiment harness.
nlohmann::json to_json(const DetectionReport& report, const std::string& claim_id,
                       const std::string& defense_name);
nlohmann::json to_json(const ConsolidationResult& result, const std::string& claim_id,
                       const std::string& defense_name);

}  // namespace ragfc
