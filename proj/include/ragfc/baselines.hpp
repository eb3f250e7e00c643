#pragma once

#include <string>

#include "ragfc/attack.hpp"
#include "ragfc/corpus.hpp"
#include "ragfc/gateway.hpp"
#include "ragfc/verdict.hpp"

namespace ragfc {

enum class AttackKind { Admit, Pia, MisinfoQa, PoisonedRag, CorruptRag };

std::string attack_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

struct BaselineSpec {
  AttackKind kind = AttackKind::Pia;
  std::string template_version;
};

struct BaselineResult {
  Passage passage;
  // Inputs degenerate enough to warrant review (e.g. empty claim).
  bool degenerate = false;
  // PoisonedRAG: whether the standalone pre-injection check accepted the
  // final candidate, and how many generation attempts were spent.
  bool precheck_passed = true;
  int attempts = 0;
  // Single-turn generation produced no parseable passage and the raw reply
  // was used instead.
  bool generator_parse_failed = false;
  UsageRecord usage;
};

// Prompt-injection baseline: the claim followed by an instruction-override
// line naming the target label. Pure template, no model calls.
BaselineResult pia_passage(const Claim& claim, VerdictLabel target);

// Single-turn misinformation generation: the multi-turn generator prompt,
// issued once with no proxy evidence and no feedback loop.
BaselineResult misinfo_passage(ModelGateway& gateway, const Claim& claim, VerdictLabel target,
                               const AttackConfig& cfg);

// Claim-prefixed misinformation with a standalone pre-injection check: the
// candidate must already swing a single-passage verification to the target
// label, regenerating up to max_attempts times.
BaselineResult poisonedrag_passage(ModelGateway& gateway, const Claim& claim, VerdictLabel target,
                                   const AttackConfig& cfg, int max_attempts = 3);

// Outdated-corpus template attack. Pure template, no model calls.
BaselineResult corruptrag_passage(const Claim& claim, VerdictLabel target);

// Stamps identity fields onto a generated passage: id, shot index, claim
// attribution and attack name.
Passage finalize_injected(Passage passage, AttackKind kind, const std::string& claim_id,
                          int shot_index);

}  // namespace ragfc
