#pragma once

#include <span>
#include <string>

#include "ragfc/corpus.hpp"
#include "ragfc/gateway.hpp"
#include "ragfc/verdict.hpp"

namespace ragfc {

struct VerifierConfig {
  std::string model_id = "scripted-verifier";
  // Victim and proxy verification run greedily.
  double temperature = 0.0;
  // Retrieval depth used when building contexts for this verifier.
  int k = 5;
  // Explanation word budget substituted into the prompt.
  int max_explanation_words = 50;
};

// Builds the fact-checking request: passages rendered in rank order as
// numbered lines, claim last, word budget substituted.
ChatRequest render_verification_prompt(const Claim& claim, std::span<const Passage> context,
                                       const VerifierConfig& cfg);

// One fact-checking call. Unparseable output degrades to NEI with the
// parse_failed flag set; the raw text is always preserved.
Verdict verify(ModelGateway& gateway, const Claim& claim, std::span<const Passage> context,
               const VerifierConfig& cfg);

struct VerifiedCall {
  Verdict verdict;
  UsageRecord usage;
};

// Same as verify(), also surfacing the call's usage so attack loops can keep
// a per-trace cost ledger.
VerifiedCall verify_call(ModelGateway& gateway, const Claim& claim,
                         std::span<const Passage> context, const VerifierConfig& cfg);

}  // namespace ragfc
