#pragma once

#include <stdexcept>
#include <string>

namespace ragfc {

// Base class for all errors raised by this library. Subclasses map onto the
// CLI exit codes: ConfigError -> 2, ProviderError -> 3, QuotaError -> 4,
// everything else -> 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input record (bad JSON line, missing field). Carries the source
// location so the offending line can be found.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string source, long line_number)
      : Error(what + " (" + source + ":" + std::to_string(line_number) + ")"),
        source_(std::move(source)),
        line_number_(line_number) {}

  const std::string& source() const { return source_; }
  long line_number() const { return line_number_; }

 private:
  std::string source_;
  long line_number_;
};

// Data integrity violation: duplicate ids, id collisions between clean and
// injected passages, provenance mismatches.
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::string offending_id)
      : Error(what + " [id=" + offending_id + "]"), offending_id_(std::move(offending_id)) {}

  const std::string& offending_id() const { return offending_id_; }

 private:
  std::string offending_id_;
};

// Caller violated an operation precondition (k < 1, empty query, NEI where a
// binary label is required, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration (unknown attack name, shots > k,
// missing price entry, manifest mismatch on resume).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operation applied to data outside its domain (empty corpus, single-class
// detection input).
class DomainError : public Error {
 public:
  using Error::Error;
};

enum class ProviderErrorKind {
  Auth,
  RateLimited,
  Timeout,
  Transport,
  BadResponse,
  Capability,
  ReplayMiss,
};

// Failure talking to a model provider (live or replay). Carries the request
// digest so the failing call can be located in recordings.
class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& what, std::string digest)
      : Error(what + (digest.empty() ? "" : " [digest=" + digest + "]")),
        kind_(kind),
        digest_(std::move(digest)) {}

  ProviderErrorKind kind() const { return kind_; }
  const std::string& digest() const { return digest_; }

 private:
  ProviderErrorKind kind_;
  std::string digest_;
};

// The model refused to produce the requested content. Tracked separately so
// refusal rates can be reported instead of aborting a sweep.
class RefusalError : public Error {
 public:
  RefusalError(const std::string& what, std::string matched_pattern)
      : Error(what), matched_pattern_(std::move(matched_pattern)) {}

  const std::string& matched_pattern() const { return matched_pattern_; }

 private:
  std::string matched_pattern_;
};

// Claim sampling ran out of candidates before filling the per-label quotas.
class QuotaError : public Error {
 public:
  QuotaError(const std::string& what, int supported_found, int refuted_found)
      : Error(what + " (supported=" + std::to_string(supported_found) +
              ", refuted=" + std::to_string(refuted_found) + ")"),
        supported_found_(supported_found),
        refuted_found_(refuted_found) {}

  int supported_found() const { return supported_found_; }
  int refuted_found() const { return refuted_found_; }

 private:
  int supported_found_;
  int refuted_found_;
};

// Proxy evidence collection could not gather enough qualifying passages.
class InsufficientEvidenceError : public Error {
 public:
  InsufficientEvidenceError(const std::string& what, int wanted, int found)
      : Error(what + " (wanted=" + std::to_string(wanted) + ", found=" + std::to_string(found) + ")"),
        wanted_(wanted),
        found_(found) {}

  int wanted() const { return wanted_; }
  int found() const { return found_; }

 private:
  int wanted_;
  int found_;
};

}  // namespace ragfc
