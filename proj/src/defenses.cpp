#include "ragfc/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_map>

#include "ragfc/errors.hpp"
#include "ragfc/prompts.hpp"
#include "ragfc/text.hpp"

namespace ragfc {

namespace {

double roc_auc(const std::vector<RocPoint>& points) {
  // With the >= flagging rule both rates fall monotonically in the
  // threshold, so sorting by fpr recovers the curve; (0,0) and (1,1) close
  // it off at the extremes.
  std::vector<std::pair<double, double>> curve;  // (fpr, tpr)
  curve.emplace_back(0.0, 0.0);
  curve.emplace_back(1.0, 1.0);
  for (const auto& p : points) curve.emplace_back(p.fpr, p.tpr);
  std::sort(curve.begin(), curve.end());
  curve.erase(std::unique(curve.begin(), curve.end()), curve.end());
  double auc = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double base = curve[i].first - curve[i - 1].first;
    auc += base * (curve[i].second + curve[i - 1].second) / 2.0;
  }
  return auc;
}

VerdictLabel majority_label(const std::vector<UnitVerdict>& units) {
  int counts[3] = {0, 0, 0};
  for (const auto& unit : units) {
    if (!unit.excluded) counts[static_cast<int>(unit.label)]++;
  }
  const int best = *std::max_element(counts, counts + 3);
  if (best == 0) return VerdictLabel::Nei;
  int winners = 0;
  VerdictLabel winner = VerdictLabel::Nei;
  for (int i = 0; i < 3; ++i) {
    if (counts[i] == best) {
      ++winners;
      winner = static_cast<VerdictLabel>(i);
    }
  }
  return winners == 1 ? winner : VerdictLabel::Nei;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

DetectionReport detect(const std::vector<Passage>& passages, const Detector& detector,
                       std::vector<double> sweep) {
  long positives = 0;
  long negatives = 0;
  for (const auto& p : passages) (p.injected() ? positives : negatives)++;
  if (positives == 0 || negatives == 0) {
    throw DomainError("detect: need both injected and clean passages to grade a detector");
  }

  DetectionReport report;
  std::vector<std::pair<const Passage*, double>> scored;
  scored.reserve(passages.size());
  for (const auto& p : passages) {
    const double score = detector(p);
    report.per_passage_scores[p.id] = score;
    scored.emplace_back(&p, score);
  }

  if (sweep.empty()) {
    for (const auto& [_, score] : scored) sweep.push_back(score);
  }
  std::sort(sweep.begin(), sweep.end());
  sweep.erase(std::unique(sweep.begin(), sweep.end()), sweep.end());

  for (const double threshold : sweep) {
    long tp = 0;
    long fp = 0;
    for (const auto& [p, score] : scored) {
      if (score < threshold) continue;
      (p->injected() ? tp : fp)++;
    }
    report.roc_points.push_back({threshold, static_cast<double>(tp) / positives,
                                 static_cast<double>(fp) / negatives});
  }
  report.auc = roc_auc(report.roc_points);

  report.operating_threshold = sweep[sweep.size() / 2];
  for (const auto& [p, score] : scored) {
    if (score >= report.operating_threshold) report.flagged.insert(p->id);
  }
  return report;
}

double ppl(ModelGateway& gateway, const std::string& model_id, const std::string& text) {
  if (trim(text).empty()) throw ContractError("ppl: text must be non-empty");
  const TokenLikelihoods scored = gateway.score_tokens(model_id, text);
  if (scored.logprobs.empty()) throw DomainError("ppl: scorer returned no tokens");
  double sum = 0.0;
  for (const double lp : scored.logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(scored.logprobs.size()));
}

DetectionReport ppl_detect(ModelGateway& gateway, const std::string& model_id,
                           const std::vector<Passage>& passages, std::vector<double> sweep) {
  Detector detector = [&gateway, &model_id](const Passage& p) {
    return ppl(gateway, model_id, p.text);
  };
  return detect(passages, detector, std::move(sweep));
}

RougeScore rouge_n_f1(const std::string& a, const std::string& b, int n) {
  if (n < 1) throw ContractError("rouge_n_f1: n must be >= 1");
  const std::vector<std::string> ta = tokenize_alnum(a);
  const std::vector<std::string> tb = tokenize_alnum(b);
  if (ta.size() < static_cast<std::size_t>(n) || tb.size() < static_cast<std::size_t>(n)) {
    return {0.0, true};
  }

  auto ngram_counts = [n](const std::vector<std::string>& tokens) {
    std::unordered_map<std::string, int> counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string gram = tokens[i];
      for (int j = 1; j < n; ++j) {
        gram += '\x1f';
        gram += tokens[i + j];
      }
      counts[gram]++;
    }
    return counts;
  };

  const auto ca = ngram_counts(ta);
  const auto cb = ngram_counts(tb);
  long overlap = 0;
  for (const auto& [gram, count] : ca) {
    auto it = cb.find(gram);
    if (it != cb.end()) overlap += std::min(count, it->second);
  }
  const double total_a = static_cast<double>(ta.size() - n + 1);
  const double total_b = static_cast<double>(tb.size() - n + 1);
  const double precision = overlap / total_a;
  const double recall = overlap / total_b;
  if (precision + recall == 0.0) return {0.0, false};
  return {2.0 * precision * recall / (precision + recall), false};
}

RougeConsistency rouge_consistency_matrix(const std::vector<Passage>& passages, int n) {
  if (passages.size() < 2) {
    throw DomainError("rouge_consistency_matrix: need at least 2 passages");
  }
  const std::size_t count = passages.size();
  RougeConsistency out;
  out.matrix.assign(count, std::vector<double>(count, 0.0));

  double sums[3] = {0.0, 0.0, 0.0};  // clean-clean, clean-adv, adv-adv
  long pair_counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i; j < count; ++j) {
      const double score = rouge_n_f1(passages[i].text, passages[j].text, n).f1;
      out.matrix[i][j] = score;
      out.matrix[j][i] = score;
      if (i == j) continue;
      const int cls = (passages[i].injected() ? 1 : 0) + (passages[j].injected() ? 1 : 0);
      sums[cls] += score;
      pair_counts[cls]++;
    }
  }
  if (pair_counts[0] > 0) out.clean_clean = sums[0] / pair_counts[0];
  if (pair_counts[1] > 0) out.clean_adversarial = sums[1] / pair_counts[1];
  if (pair_counts[2] > 0) out.adversarial_adversarial = sums[2] / pair_counts[2];
  return out;
}

std::string to_string(ConsolidationStrategy strategy) {
  switch (strategy) {
    case ConsolidationStrategy::PassageVote: return "passage_vote";
    case ConsolidationStrategy::GroupVote: return "group_vote";
    case ConsolidationStrategy::ConfidenceSelect: return "confidence_select";
  }
  throw ContractError("unknown consolidation strategy");
}

ConsolidationResult divide_vote_passage(ModelGateway& gateway, const Claim& claim,
                                        const std::vector<Passage>& passages,
                                        const VerifierConfig& verifier) {
  if (passages.empty()) throw ContractError("divide_vote_passage: need at least 1 passage");
  ConsolidationResult result;
  result.strategy = ConsolidationStrategy::PassageVote;
  for (const auto& passage : passages) {
    UnitVerdict unit;
    unit.unit = {passage.id};
    try {
      VerifiedCall checked = verify_call(gateway, claim, std::span(&passage, 1), verifier);
      result.usage += checked.usage;
      unit.label = checked.verdict.label;
    } catch (const Error&) {
      unit.excluded = true;
    }
    result.per_unit_verdicts.push_back(std::move(unit));
  }
  result.final_verdict = majority_label(result.per_unit_verdicts);
  return result;
}

std::vector<int> kmeans_assign(const std::vector<std::vector<double>>& rows, int cluster_count) {
  if (rows.empty()) throw ContractError("kmeans_assign: no rows");
  if (cluster_count < 1 || static_cast<std::size_t>(cluster_count) > rows.size()) {
    throw ContractError("kmeans_assign: cluster_count out of range");
  }
  const std::size_t dim = rows[0].size();
  for (const auto& row : rows) {
    if (row.size() != dim) throw ContractError("kmeans_assign: inconsistent dimensions");
  }

  // Farthest-point seeding, first center at row 0; every tie breaks to the
  // lowest row index so runs are reproducible.
  std::vector<std::vector<double>> centers = {rows[0]};
  std::vector<bool> used(rows.size(), false);
  used[0] = true;
  while (centers.size() < static_cast<std::size_t>(cluster_count)) {
    double best_dist = -1.0;
    std::size_t best_row = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (used[i]) continue;
      double nearest = sq_dist(rows[i], centers[0]);
      for (std::size_t c = 1; c < centers.size(); ++c) {
        nearest = std::min(nearest, sq_dist(rows[i], centers[c]));
      }
      if (nearest > best_dist) {
        best_dist = nearest;
        best_row = i;
      }
    }
    used[best_row] = true;
    centers.push_back(rows[best_row]);
  }

  std::vector<int> assignment(rows.size(), 0);
  for (int round = 0; round < 100; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      int best = 0;
      double best_dist = sq_dist(rows[i], centers[0]);
      for (int c = 1; c < cluster_count; ++c) {
        const double d = sq_dist(rows[i], centers[c]);
        if (d < best_dist) {
          best_dist = d;
          best = c;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed && round > 0) break;

    for (int c = 0; c < cluster_count; ++c) {
      std::vector<double> mean(dim, 0.0);
      long members = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (assignment[i] != c) continue;
        ++members;
        for (std::size_t d = 0; d < dim; ++d) mean[d] += rows[i][d];
      }
      if (members == 0) continue;  // empty cluster keeps its center
      for (std::size_t d = 0; d < dim; ++d) mean[d] /= static_cast<double>(members);
      centers[c] = std::move(mean);
    }
  }
  return assignment;
}

ConsolidationResult divide_vote_group(ModelGateway& gateway, const Claim& claim,
                                      const std::vector<Passage>& passages,
                                      const std::string& embed_model_id,
                                      const VerifierConfig& verifier, int cluster_count) {
  if (cluster_count < 1) throw ContractError("divide_vote_group: cluster_count must be >= 1");
  if (passages.size() < static_cast<std::size_t>(cluster_count)) {
    ConsolidationResult result = divide_vote_passage(gateway, claim, passages, verifier);
    result.strategy = ConsolidationStrategy::GroupVote;
    result.fell_back = true;
    return result;
  }

  EmbedRequest req;
  req.model_id = embed_model_id;
  for (const auto& p : passages) req.texts.push_back(p.text);
  const std::vector<std::vector<double>> rows = gateway.embed(req);
  const std::vector<int> assignment = kmeans_assign(rows, cluster_count);

  ConsolidationResult result;
  result.strategy = ConsolidationStrategy::GroupVote;
  for (int c = 0; c < cluster_count; ++c) {
    std::vector<Passage> group;
    UnitVerdict unit;
    for (std::size_t i = 0; i < passages.size(); ++i) {
      if (assignment[i] != c) continue;
      group.push_back(passages[i]);
      unit.unit.push_back(passages[i].id);
    }
    if (group.empty()) continue;
    try {
      VerifiedCall checked = verify_call(gateway, claim, group, verifier);
      result.usage += checked.usage;
      unit.label = checked.verdict.label;
    } catch (const Error&) {
      unit.excluded = true;
    }
    result.per_unit_verdicts.push_back(std::move(unit));
  }
  result.final_verdict = majority_label(result.per_unit_verdicts);
  return result;
}

namespace {

struct Judgment {
  bool ok = false;
  VerdictLabel label = VerdictLabel::Nei;
  double confidence = 0.0;
};

Judgment parse_judgment(const std::string& raw) {
  Judgment out;
  const std::size_t open = raw.find('{');
  const std::size_t close = raw.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close <= open) return out;
  nlohmann::json parsed = nlohmann::json::parse(raw.substr(open, close - open + 1), nullptr,
                                                /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object()) return out;
  if (!parsed.contains("answer") || !parsed["answer"].is_string()) return out;
  if (!parsed.contains("confidence") || !parsed["confidence"].is_number()) return out;
  const ParsedVerdict verdict = parse_verdict(parsed["answer"].get<std::string>());
  if (!verdict.ok) return out;
  const double confidence = parsed["confidence"].get<double>();
  if (!(confidence >= 0.0 && confidence <= 1.0)) return out;
  out.ok = true;
  out.label = verdict.label;
  out.confidence = confidence;
  return out;
}

}  // namespace

ConsolidationResult consolidate_select(ModelGateway& gateway, const Claim& claim,
                                       const std::vector<Passage>& passages,
                                       const ConsolidateSelectConfig& cfg) {
  if (cfg.cluster_count < 1) throw ContractError("consolidate_select: cluster_count must be >= 1");

  ConsolidationResult result;
  result.strategy = ConsolidationStrategy::ConfidenceSelect;

  ChatRequest gen;
  gen.model_id = cfg.generator_model_id;
  gen.temperature = cfg.temperature;
  gen.max_output_words = cfg.word_budget;
  gen.messages.push_back(user_message(
      prompts::render(prompts::kInternalPassageTemplate,
                      {{"claim", claim.text}, {"V", std::to_string(cfg.word_budget)}})));
  ChatResult generated = gateway.chat(gen);
  result.usage += generated.usage;

  struct Tagged {
    std::string id;
    std::string tag;
    std::string text;
  };
  std::vector<Tagged> tagged;
  tagged.push_back({"internal-" + claim.id, "[INT]",
                    truncate_words(generated.text, cfg.word_budget)});
  for (const auto& p : passages) tagged.push_back({p.id, "[EXT]", p.text});

  int cluster_count = cfg.cluster_count;
  if (tagged.size() < static_cast<std::size_t>(cluster_count)) {
    cluster_count = static_cast<int>(tagged.size());
    result.fell_back = true;
  }

  EmbedRequest req;
  req.model_id = cfg.embed_model_id;
  for (const auto& t : tagged) req.texts.push_back(t.text);
  const std::vector<int> assignment = kmeans_assign(gateway.embed(req), cluster_count);

  for (int c = 0; c < cluster_count; ++c) {
    UnitVerdict unit;
    std::string context;
    int line = 0;
    for (std::size_t i = 0; i < tagged.size(); ++i) {
      if (assignment[i] != c) continue;
      unit.unit.push_back(tagged[i].id);
      if (!context.empty()) context += "\n";
      context += "[" + std::to_string(++line) + "] " + tagged[i].tag + " " + tagged[i].text;
    }
    if (unit.unit.empty()) continue;

    ChatRequest judge;
    judge.model_id = cfg.judge_model_id;
    judge.temperature = cfg.temperature;
    judge.max_output_words = cfg.word_budget;
    judge.messages.push_back(user_message(prompts::render(
        prompts::kGroupJudgmentTemplate, {{"claim", claim.text}, {"context", context}})));
    ChatResult reply = gateway.chat(judge);
    result.usage += reply.usage;

    const Judgment judgment = parse_judgment(reply.text);
    if (judgment.ok) {
      unit.label = judgment.label;
      unit.confidence = judgment.confidence;
    } else {
      unit.excluded = true;
    }
    result.per_unit_verdicts.push_back(std::move(unit));
  }

  double best = -1.0;
  int winners = 0;
  VerdictLabel winner = VerdictLabel::Nei;
  for (const auto& unit : result.per_unit_verdicts) {
    if (unit.excluded) continue;
    const double confidence = unit.confidence.value_or(0.0);
    if (confidence > best) {
      best = confidence;
      winners = 1;
      winner = unit.label;
    } else if (confidence == best) {
      ++winners;
    }
  }
  result.final_verdict = (winners == 1) ? winner : VerdictLabel::Nei;
  return result;
}

nlohmann::json to_json(const DetectionReport& report, const std::string& claim_id,
                       const std::string& defense_name) {
  nlohmann::json roc = nlohmann::json::array();
  for (const auto& p : report.roc_points) {
    roc.push_back({{"threshold", p.threshold}, {"tpr", p.tpr}, {"fpr", p.fpr}});
  }
  return {{"claim_id", claim_id},
          {"defense", defense_name},
          {"scores", report.per_passage_scores},
          {"flagged", report.flagged},
          {"operating_threshold", report.operating_threshold},
          {"auc", report.auc},
          {"roc", std::move(roc)}};
}

nlohmann::json to_json(const ConsolidationResult& result, const std::string& claim_id,
                       const std::string& defense_name) {
  nlohmann::json units = nlohmann::json::array();
  for (const auto& unit : result.per_unit_verdicts) {
    nlohmann::json entry = {{"unit", unit.unit},
                            {"label", to_string(unit.label)},
                            {"excluded", unit.excluded}};
    if (unit.confidence) entry["confidence"] = *unit.confidence;
    units.push_back(std::move(entry));
  }
  return {{"claim_id", claim_id},
          {"defense", defense_name},
          {"strategy", to_string(result.strategy)},
          {"final_verdict", to_string(result.final_verdict)},
          {"fell_back", result.fell_back},
          {"units", std::move(units)}};
}

}  // namespace ragfc
