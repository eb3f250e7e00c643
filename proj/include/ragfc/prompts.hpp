#pragma once

#include <string>

namespace ragfc::prompts {

// Prompt wordings are versioned assets: experiment manifests pin kVersion so
// result files are traceable to the exact phrasing that produced them.
inline constexpr const char* kVersion = "v1";

// Fact-checking prompt. Placeholders: {V}, {context}, {claim}.
extern const char* kVerificationTemplate;

// Multi-turn adversarial generator, system part. No placeholders.
extern const char* kAttackerSystemPrompt;

// Multi-turn adversarial generator, opening user turn. Placeholders:
// {claim}, {current_verification}, {proxy_passages}, {target}, {V}.
extern const char* kAttackerUserTemplate;

// Follow-up turn after a failed candidate. Placeholders:
// {verdict}, {justification}.
extern const char* kAttackerFeedbackTemplate;

// Repair turn after unparseable generator output. No placeholders.
extern const char* kAttackerRepairPrompt;

// Search query extraction. Placeholder: {claim}.
extern const char* kQueryGenerationTemplate;

// Single-call stance passage writer. Placeholders: {claim}, {stance}, {V}.
extern const char* kStancePassageTemplate;

// Per-group answer + confidence elicitation used by the consolidation
// defense. Placeholders: {claim}, {context}.
extern const char* kGroupJudgmentTemplate;

// Asks the model for a context passage written from its own knowledge, used
// by the consolidation defense. Placeholders: {claim}, {V}.
extern const char* kInternalPassageTemplate;

// Prompt-injection baseline payload. Placeholder: {target}.
extern const char* kPromptInjectionTemplate;

std::string render(std::string tmpl, std::initializer_list<std::pair<const char*, std::string>> values);

}  // namespace ragfc::prompts
