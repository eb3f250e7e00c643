#include "ragfc/attack.hpp"

#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ragfc/prompts.hpp"
#include "ragfc/text.hpp"
#include "ragfc/verifier.hpp"

namespace ragfc {

namespace {

using nlohmann::json;

VerifierConfig proxy_verifier_config(const AttackConfig& cfg) {
  VerifierConfig vc;
  vc.model_id = cfg.proxy_verifier_model;
  vc.temperature = 0.0;
  vc.max_explanation_words = cfg.word_budget;
  return vc;
}

Passage proxy_passage(const Claim& claim, std::size_t n, std::string title, std::string text) {
  Passage p;
  p.id = "proxy-" + claim.id + "-" + std::to_string(n);
  p.title = std::move(title);
  p.text = std::move(text);
  return p;
}

void check_refusal(const std::string& text, const AttackConfig& cfg, const char* stage) {
  if (auto pattern = match_refusal(text, cfg.refusal_patterns)) {
    throw RefusalError(std::string("model refused during ") + stage + ": " + text.substr(0, 120),
                       *pattern);
  }
}

}  // namespace

void FixtureSearchProvider::add(const std::string& query, std::vector<SearchResult> results) {
  results_[query] = std::move(results);
}

std::vector<SearchResult> FixtureSearchProvider::search(const std::string& query) {
  auto it = results_.find(query);
  return it == results_.end() ? std::vector<SearchResult>{} : it->second;
}

void AttackConfig::validate() const {
  if (reset_interval < 1 || reset_interval > max_iterations) {
    throw ConfigError("attack config requires 1 <= reset_interval <= max_iterations");
  }
  if (proxy_passage_count < 1) throw ConfigError("attack config requires proxy_passage_count >= 1");
  if (word_budget < 1) throw ConfigError("attack config requires word_budget >= 1");
}

std::optional<std::string> match_refusal(const std::string& text,
                                         const std::vector<std::string>& patterns) {
  for (const std::string& pattern : patterns) {
    if (!pattern.empty() && contains_ci(text, pattern)) return pattern;
  }
  return std::nullopt;
}

QueryGenResult gen_queries(ModelGateway& gateway, const Claim& claim, const AttackConfig& cfg) {
  ChatRequest req;
  req.model_id = cfg.attacker_model;
  req.temperature = 0.0;
  req.messages.push_back(
      user_message(prompts::render(prompts::kQueryGenerationTemplate, {{"claim", claim.text}})));
  const ChatResult result = gateway.chat(req);

  std::string output = trim(result.text);
  // Models often echo the template's lead-in.
  const std::string lead = "output:";
  if (to_lower(output).rfind(lead, 0) == 0) output = trim(output.substr(lead.size()));

  QueryGenResult out;
  std::size_t start = 0;
  while (start <= output.size()) {
    std::size_t comma = output.find(',', start);
    const std::string piece =
        trim(comma == std::string::npos ? output.substr(start)
                                        : output.substr(start, comma - start));
    const std::size_t words = count_words(piece);
    if (words >= 3 && words <= 10) out.queries.push_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.queries.empty()) {
    out.queries.push_back(claim.text);
    out.used_fallback = true;
  }
  return out;
}

ProxyContext collect_proxy_search(ModelGateway& gateway, const Claim& claim, VerdictLabel target,
                                  const AttackConfig& cfg, SearchProvider& search) {
  cfg.validate();
  const VerifierConfig probe_cfg = proxy_verifier_config(cfg);
  const QueryGenResult queries = gen_queries(gateway, claim, cfg);

  ProxyContext proxy;
  proxy.construction = ProxyConstruction::SearchBased;
  proxy.queries = queries.queries;

  std::unordered_set<std::string> seen_chunks;
  for (int round = 0; round < cfg.max_search_rounds; ++round) {
    bool any_new = false;
    for (const std::string& query : proxy.queries) {
      for (const SearchResult& doc : search.search(query)) {
        for (std::string& chunk : split_into_passages(doc.text, cfg.word_budget)) {
          if (!seen_chunks.insert(chunk).second) continue;
          any_new = true;
          const Passage candidate =
              proxy_passage(claim, proxy.passages.size() + 1, doc.title, std::move(chunk));
          const Verdict probe =
              verify(gateway, claim, std::span<const Passage>(&candidate, 1), probe_cfg);
          if (probe.label != target) {
            proxy.passages.push_back(candidate);
            if (static_cast<int>(proxy.passages.size()) == cfg.proxy_passage_count) return proxy;
          }
        }
      }
    }
    if (!any_new) break;
  }
  throw InsufficientEvidenceError("could not collect enough opposing proxy passages for claim " +
                                      claim.id,
                                  cfg.proxy_passage_count,
                                  static_cast<int>(proxy.passages.size()));
}

ProxyContext collect_proxy_llm(ModelGateway& gateway, const Claim& claim, VerdictLabel stance,
                               const AttackConfig& cfg) {
  cfg.validate();
  ProxyContext proxy;
  proxy.construction = ProxyConstruction::LLMBased;

  const std::string prompt = prompts::render(
      prompts::kStancePassageTemplate,
      {{"V", std::to_string(cfg.word_budget)}, {"stance", to_string(stance)}, {"claim", claim.text}});
  for (int i = 0; i < cfg.proxy_passage_count; ++i) {
    ChatRequest req;
    req.model_id = cfg.attacker_model;
    req.temperature = cfg.attacker_temperature;
    req.max_output_words = cfg.word_budget;
    req.messages.push_back(user_message(prompt));
    const ChatResult result = gateway.chat(req);
    check_refusal(result.text, cfg, "proxy passage generation");
    proxy.passages.push_back(
        proxy_passage(claim, i + 1, "", truncate_words(result.text, cfg.word_budget)));
  }
  return proxy;
}

std::string render_proxy_block(const std::vector<Passage>& passages) {
  std::string block;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (i) block += '\n';
    block += "[" + std::to_string(i + 1) + "] " + passages[i].text;
  }
  return block;
}

std::string render_attacker_opening(const Claim& claim, const std::string& proxy_block,
                                    VerdictLabel target, int word_budget,
                                    const std::string& current_verification) {
  return prompts::render(prompts::kAttackerUserTemplate,
                         {{"V", std::to_string(word_budget)},
                          {"current_verification", current_verification},
                          {"proxy_passages", proxy_block},
                          {"target", to_string(target)},
                          {"claim", claim.text}});
}

AttackerReply parse_attacker_reply(const std::string& raw) {
  std::string body = trim(raw);
  if (body.rfind("```", 0) == 0) {
    const std::size_t first_newline = body.find('\n');
    const std::size_t closing = body.rfind("```");
    if (first_newline != std::string::npos && closing != std::string::npos &&
        closing > first_newline) {
      body = body.substr(first_newline + 1, closing - first_newline - 1);
    }
  }
  const std::size_t open = body.find('{');
  const std::size_t close = body.rfind('}');
  AttackerReply reply;
  if (open == std::string::npos || close == std::string::npos || close <= open) return reply;

  const json parsed = json::parse(body.substr(open, close - open + 1), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return reply;
  if (!parsed.contains("passage") || !parsed["passage"].is_string()) return reply;
  reply.passage = trim(parsed["passage"].get<std::string>());
  if (reply.passage.empty()) return reply;
  reply.ok = true;
  if (parsed.contains("analysis") && parsed["analysis"].is_string()) {
    reply.analysis = parsed["analysis"].get<std::string>();
  }
  if (parsed.contains("strategy") && parsed["strategy"].is_string()) {
    reply.strategy = parsed["strategy"].get<std::string>();
  }
  return reply;
}

GenerationResult generate_adversarial(ModelGateway& gateway, const Claim& claim,
                                      const ProxyContext& proxy, VerdictLabel target,
                                      const AttackConfig& cfg) {
  cfg.validate();
  if (proxy.passages.empty()) throw ContractError("generate_adversarial: proxy context is empty");

  const VerifierConfig proxy_cfg = proxy_verifier_config(cfg);
  const std::string proxy_block = render_proxy_block(proxy.passages);
  const std::string opening =
      render_attacker_opening(claim, proxy_block, target, cfg.word_budget, "NONE");

  GenerationResult out;
  out.trace.claim_id = claim.id;
  out.trace.target_verdict = target;
  out.trace.attacker_model = cfg.attacker_model;

  std::vector<Message> history{system_message(prompts::kAttackerSystemPrompt),
                               user_message(opening)};
  std::string final_text;

  auto attacker_turn = [&]() {
    ChatRequest req;
    req.model_id = cfg.attacker_model;
    req.temperature = cfg.attacker_temperature;
    req.max_output_words = cfg.word_budget;
    req.messages = history;
    const ChatResult result = gateway.chat(req);
    out.trace.usage += result.usage;
    check_refusal(result.text, cfg, "adversarial generation");
    return result.text;
  };

  for (int t = 1; t <= cfg.max_iterations; ++t) {
    std::string raw = attacker_turn();
    AttackerReply reply = parse_attacker_reply(raw);
    if (!reply.ok) {
      history.push_back(assistant_message(raw));
      history.push_back(user_message(prompts::kAttackerRepairPrompt));
      raw = attacker_turn();
      reply = parse_attacker_reply(raw);
    }

    AttackIteration iteration;
    if (!reply.ok) {
      iteration.candidate_text = trim(raw);
      iteration.skipped = true;
      out.trace.iterations.push_back(iteration);
      final_text = iteration.candidate_text;
      history.push_back(assistant_message(raw));
      history.push_back(user_message(prompts::kAttackerRepairPrompt));
    } else {
      history.push_back(assistant_message(raw));
      iteration.candidate_text = truncate_words(reply.passage, cfg.word_budget);
      final_text = iteration.candidate_text;

      std::vector<Passage> context = proxy.passages;
      Passage candidate;
      candidate.id = "candidate-" + claim.id;
      candidate.text = iteration.candidate_text;
      context.push_back(candidate);  // candidate is placed last
      const VerifiedCall checked = verify_call(gateway, claim, context, proxy_cfg);
      out.trace.usage += checked.usage;
      iteration.proxy_verdict = checked.verdict.label;
      out.trace.iterations.push_back(iteration);

      if (checked.verdict.label == target) {
        out.trace.success = true;
        out.trace.success_iteration = t;
        break;
      }
      history.push_back(user_message(
          prompts::render(prompts::kAttackerFeedbackTemplate,
                          {{"verdict", to_string(checked.verdict.label)},
                           {"justification", checked.verdict.justification}})));
    }

    if (!out.trace.success && t % cfg.reset_interval == 0 && t < cfg.max_iterations) {
      out.trace.iterations.back().was_reset_point = true;
      history.assign({system_message(prompts::kAttackerSystemPrompt), user_message(opening)});
    }
  }

  out.passage.text = final_text;
  out.passage.provenance = Provenance::Injected;
  out.passage.target_claim_id = claim.id;
  out.passage.attack_name = "ADMIT";
  return out;
}

std::string augment_prefix(const std::vector<std::string>& queries,
                           const std::string& passage_text) {
  if (queries.empty()) return passage_text;
  std::string prefix;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (i) prefix += ", ";
    prefix += queries[i];
  }
  return prefix + " " + passage_text;
}

std::string injected_passage_id(const std::string& attack_name, const std::string& claim_id,
                                int shot_index) {
  return "inj-" + to_lower(attack_name) + "-" + claim_id + "-s" + std::to_string(shot_index);
}

AdmitResult run_admit(ModelGateway& gateway, const Claim& claim, VerdictLabel target, int shots,
                      const AttackConfig& cfg, SearchProvider* search) {
  cfg.validate();
  if (shots < 1) throw ContractError("run_admit: shots must be >= 1");

  AdmitResult result;

  ProxyContext proxy;
  if (cfg.proxy_mode == ProxyConstruction::SearchBased) {
    if (search == nullptr) {
      throw ConfigError("search-based proxy construction requires a search provider");
    }
    proxy = collect_proxy_search(gateway, claim, target, cfg, *search);
  } else {
    proxy = collect_proxy_llm(gateway, claim, flip(target), cfg);
    if (cfg.prefix_augment) {
      result.prefix_queries = gen_queries(gateway, claim, cfg);
      proxy.queries = result.prefix_queries.queries;
    }
  }
  if (cfg.proxy_mode == ProxyConstruction::SearchBased) {
    result.prefix_queries.queries = proxy.queries;
  }

  for (int shot = 1; shot <= shots; ++shot) {
    ShotStatus status;
    status.shot_index = shot;
    try {
      GenerationResult gen = generate_adversarial(gateway, claim, proxy, target, cfg);
      Passage passage = std::move(gen.passage);
      passage.id = injected_passage_id("ADMIT", claim.id, shot);
      passage.shot_index = shot;
      if (cfg.prefix_augment) {
        passage.text = augment_prefix(proxy.queries, passage.text);
      }
      status.ok = true;
      result.passages.push_back(std::move(passage));
      result.traces.push_back(std::move(gen.trace));
    } catch (const RefusalError& e) {
      status.refused = true;
      status.error = e.what();
    } catch (const ConfigError&) {
      throw;
    } catch (const ProviderError&) {
      throw;
    } catch (const Error& e) {
      status.error = e.what();
    }
    result.shot_status.push_back(std::move(status));
  }
  return result;
}

}  // namespace ragfc
