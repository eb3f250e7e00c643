#include "ragfc/verdict.hpp"

#include <array>
#include <cctype>

#include "ragfc/errors.hpp"
#include "ragfc/text.hpp"

namespace ragfc {

namespace {

// Longer patterns first so NOT ENOUGH INFORMATION wins over its prefix at the
// same position.
struct LabelPattern {
  const char* text;
  VerdictLabel label;
};

constexpr std::array<LabelPattern, 7> kPatterns{{
    {"not enough information", VerdictLabel::Nei},
    {"not enough info", VerdictLabel::Nei},
    {"supported", VerdictLabel::Supported},
    {"supports", VerdictLabel::Supported},
    {"refuted", VerdictLabel::Refuted},
    {"refutes", VerdictLabel::Refuted},
    {"nei", VerdictLabel::Nei},
}};

// How deep into the text the label may start. Live verifiers sometimes lead
// with a few words of prose; anything later is treated as quoting, not
// labeling.
constexpr std::size_t kScanWindow = 30;

bool is_alnum(unsigned char c) { return std::isalnum(c) != 0; }

bool bounded_match(const std::string& lower, std::size_t pos, const char* pattern) {
  const std::size_t n = std::char_traits<char>::length(pattern);
  if (lower.compare(pos, n, pattern) != 0) return false;
  if (pos > 0 && is_alnum(static_cast<unsigned char>(lower[pos - 1]))) return false;
  if (pos + n < lower.size() && is_alnum(static_cast<unsigned char>(lower[pos + n]))) return false;
  return true;
}

}  // namespace

ParsedVerdict parse_verdict(const std::string& raw) {
  const std::string lower = to_lower(raw);
  const std::size_t limit = std::min(lower.size(), kScanWindow);

  for (std::size_t pos = 0; pos < limit; ++pos) {
    for (const LabelPattern& p : kPatterns) {
      if (!bounded_match(lower, pos, p.text)) continue;
      ParsedVerdict out;
      out.ok = true;
      out.label = p.label;
      std::size_t rest = pos + std::char_traits<char>::length(p.text);
      while (rest < raw.size() && !is_alnum(static_cast<unsigned char>(raw[rest]))) ++rest;
      out.justification = trim(raw.substr(rest));
      return out;
    }
  }
  return {};
}

std::string to_string(VerdictLabel label) {
  switch (label) {
    case VerdictLabel::Supported: return "SUPPORTED";
    case VerdictLabel::Refuted: return "REFUTED";
    case VerdictLabel::Nei: return "NOT ENOUGH INFO";
  }
  return "NOT ENOUGH INFO";
}

VerdictLabel flip(VerdictLabel label) {
  switch (label) {
    case VerdictLabel::Supported: return VerdictLabel::Refuted;
    case VerdictLabel::Refuted: return VerdictLabel::Supported;
    case VerdictLabel::Nei: break;
  }
  throw ContractError("flip: NEI has no opposite verdict");
}

VerdictLabel verdict_from_claim_label(ClaimLabel label) {
  switch (label) {
    case ClaimLabel::Supported: return VerdictLabel::Supported;
    case ClaimLabel::Refuted: return VerdictLabel::Refuted;
    case ClaimLabel::Nei: return VerdictLabel::Nei;
    case ClaimLabel::Unknown: break;
  }
  throw ContractError("verdict_from_claim_label: label is Unknown");
}

ClaimLabel claim_label_from_verdict(VerdictLabel label) {
  switch (label) {
    case VerdictLabel::Supported: return ClaimLabel::Supported;
    case VerdictLabel::Refuted: return ClaimLabel::Refuted;
    case VerdictLabel::Nei: return ClaimLabel::Nei;
  }
  return ClaimLabel::Nei;
}

}  // namespace ragfc
