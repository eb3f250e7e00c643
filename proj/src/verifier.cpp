#include "ragfc/verifier.hpp"

#include "ragfc/errors.hpp"
#include "ragfc/prompts.hpp"

namespace ragfc {

namespace {

std::string render_context(std::span<const Passage> context) {
  std::string out;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i) out += '\n';
    out += "[" + std::to_string(i + 1) + "] ";
    if (!context[i].title.empty()) {
      out += context[i].title;
      out += ". ";
    }
    out += context[i].text;
  }
  return out;
}

}  // namespace

ChatRequest render_verification_prompt(const Claim& claim, std::span<const Passage> context,
                                       const VerifierConfig& cfg) {
  if (context.empty()) throw ContractError("render_verification_prompt: context is empty");
  if (cfg.max_explanation_words < 1) {
    throw ContractError("render_verification_prompt: max_explanation_words must be >= 1");
  }

  const std::string prompt = prompts::render(
      prompts::kVerificationTemplate,
      {{"V", std::to_string(cfg.max_explanation_words)},
       {"context", render_context(context)},
       {"claim", claim.text}});

  ChatRequest req;
  req.model_id = cfg.model_id;
  req.temperature = cfg.temperature;
  req.max_output_words = cfg.max_explanation_words;
  req.messages.push_back(user_message(prompt));
  return req;
}

Verdict verify(ModelGateway& gateway, const Claim& claim, std::span<const Passage> context,
               const VerifierConfig& cfg) {
  return verify_call(gateway, claim, context, cfg).verdict;
}

VerifiedCall verify_call(ModelGateway& gateway, const Claim& claim,
                         std::span<const Passage> context, const VerifierConfig& cfg) {
  const ChatRequest req = render_verification_prompt(claim, context, cfg);
  const ChatResult result = gateway.chat(req);

  VerifiedCall out;
  out.usage = result.usage;
  out.verdict.raw = result.text;
  const ParsedVerdict parsed = parse_verdict(result.text);
  if (parsed.ok) {
    out.verdict.label = parsed.label;
    out.verdict.justification = parsed.justification;
  } else {
    out.verdict.label = VerdictLabel::Nei;
    out.verdict.parse_failed = true;
  }
  return out;
}

}  // namespace ragfc
