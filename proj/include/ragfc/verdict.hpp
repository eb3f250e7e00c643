#pragma once

#include <string>

#include "ragfc/corpus.hpp"

namespace ragfc {

enum class VerdictLabel { Supported, Refuted, Nei };

struct Verdict {
  VerdictLabel label = VerdictLabel::Nei;
  std::string justification;
  std::string raw;
  bool parse_failed = false;
};

struct ParsedVerdict {
  VerdictLabel label = VerdictLabel::Nei;
  std::string justification;
  bool ok = false;
};

// Extracts a verdict from model output. The earliest case-insensitive,
// word-bounded occurrence of SUPPORTED/SUPPORTS, REFUTED/REFUTES,
// NOT ENOUGH INFO(RMATION) or NEI decides the label, provided it starts
// within the first 30 characters; the justification is what follows the
// label, with leading punctuation stripped. Total: never throws.
ParsedVerdict parse_verdict(const std::string& raw);

std::string to_string(VerdictLabel label);

// SUPPORTED <-> REFUTED. NEI has no opposite and is rejected.
VerdictLabel flip(VerdictLabel label);

// Narrows a claim label to a verdict label; Unknown is rejected.
VerdictLabel verdict_from_claim_label(ClaimLabel label);
ClaimLabel claim_label_from_verdict(VerdictLabel label);

}  // namespace ragfc
