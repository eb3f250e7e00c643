#pragma once

#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragfc/errors.hpp"

namespace ragfc {

enum class Role { System, User, Assistant };

struct Message {
  Role role = Role::User;
  std::string content;
};

Message system_message(std::string content);
Message user_message(std::string content);
Message assistant_message(std::string content);

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  std::optional<int> max_output_words;
};

struct EmbedRequest {
  std::string model_id;
  std::vector<std::string> texts;
};

enum class CallKind { Chat, Embed, Score };

struct UsageRecord {
  long input_tokens = 0;
  long output_tokens = 0;
  std::optional<double> cost_estimate;
  CallKind call_kind = CallKind::Chat;

  UsageRecord& operator+=(const UsageRecord& other);
};

struct ChatResult {
  std::string text;
  UsageRecord usage;
};

struct TokenLikelihoods {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
};

struct UsageTotals {
  long chat_calls = 0;
  long embed_calls = 0;
  long score_calls = 0;
  long input_tokens = 0;
  long output_tokens = 0;
  double cost_estimate = 0.0;
};

std::string to_string(Role role);
Role parse_role(const std::string& raw);

// SHA-256 of `data`, lowercase hex.
std::string sha256_hex(std::string_view data);

// Stable digest of a request: SHA-256 over a canonical JSON rendering of
// (model_id, messages, temperature, max_output_words). Any field change,
// including message order, changes the digest.
std::string request_digest(const ChatRequest& req);
std::string embed_digest(const EmbedRequest& req);
std::string score_digest(const std::string& model_id, const std::string& text);

// Provider implementation plugged into the gateway. Implementations must be
// safe to call from multiple threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual ChatResult chat(const ChatRequest& req) = 0;
  virtual std::vector<std::vector<double>> embed(const EmbedRequest& req) = 0;
  virtual TokenLikelihoods score_tokens(const std::string& model_id, const std::string& text) = 0;
};

struct ModelPrice {
  double input_per_million = 0.0;
  double output_per_million = 0.0;
};

struct RetryPolicy {
  int max_attempts = 5;
  int base_delay_ms = 250;
  double multiplier = 2.0;
};

struct GatewayConfig {
  int max_inflight = 8;
  RetryPolicy retry;
  // Per-model token prices, used to fill usage.cost_estimate when the
  // backend does not report a cost.
  std::map<std::string, ModelPrice> prices;
};

// Front door for all model traffic. Validates request invariants, enforces a
// bounded number of in-flight calls, retries transient failures with
// exponential backoff, and keeps an exact usage ledger.
class ModelGateway {
 public:
  ModelGateway(std::shared_ptr<Backend> backend, GatewayConfig config = {});

  ChatResult chat(const ChatRequest& req);
  std::vector<std::vector<double>> embed(const EmbedRequest& req);
  TokenLikelihoods score_tokens(const std::string& model_id, const std::string& text);

  UsageTotals usage_totals() const;
  const GatewayConfig& config() const { return config_; }
  Backend& backend() { return *backend_; }

 private:
  class InflightGuard;

  template <typename Fn>
  auto with_retries(const std::string& digest, Fn&& fn) -> decltype(fn());
  void record_usage(const UsageRecord& usage);
  std::optional<double> price_cost(const std::string& model_id, long input_tokens,
                                   long output_tokens) const;

  std::shared_ptr<Backend> backend_;
  GatewayConfig config_;

  mutable std::mutex usage_mutex_;
  UsageTotals totals_;

  std::mutex inflight_mutex_;
  std::condition_variable inflight_cv_;
  int inflight_ = 0;
};

// Deterministic word-count token estimate used by scripted backends.
long approx_token_count(std::string_view text);

}  // namespace ragfc
