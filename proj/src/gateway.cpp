#include "ragfc/gateway.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ragfc/text.hpp"

namespace ragfc {

namespace {

using nlohmann::json;

json canonical_messages(const std::vector<Message>& messages) {
  json arr = json::array();
  for (const Message& m : messages) {
    arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return arr;
}

bool retryable(const ProviderError& e) {
  return e.kind() == ProviderErrorKind::Transport || e.kind() == ProviderErrorKind::RateLimited;
}

}  // namespace

Message system_message(std::string content) { return {Role::System, std::move(content)}; }
Message user_message(std::string content) { return {Role::User, std::move(content)}; }
Message assistant_message(std::string content) { return {Role::Assistant, std::move(content)}; }

UsageRecord& UsageRecord::operator+=(const UsageRecord& other) {
  input_tokens += other.input_tokens;
  output_tokens += other.output_tokens;
  if (other.cost_estimate) {
    cost_estimate = cost_estimate.value_or(0.0) + *other.cost_estimate;
  }
  return *this;
}

std::string to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role parse_role(const std::string& raw) {
  if (raw == "system") return Role::System;
  if (raw == "assistant") return Role::Assistant;
  if (raw == "user") return Role::User;
  throw ContractError("unknown message role: " + raw);
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string request_digest(const ChatRequest& req) {
  json j{{"kind", "chat"},
         {"model", req.model_id},
         {"messages", canonical_messages(req.messages)},
         {"temperature", req.temperature}};
  if (req.max_output_words) {
    j["max_output_words"] = *req.max_output_words;
  } else {
    j["max_output_words"] = nullptr;
  }
  return sha256_hex(j.dump());
}

std::string embed_digest(const EmbedRequest& req) {
  json j{{"kind", "embed"}, {"model", req.model_id}, {"texts", req.texts}};
  return sha256_hex(j.dump());
}

std::string score_digest(const std::string& model_id, const std::string& text) {
  json j{{"kind", "score"}, {"model", model_id}, {"text", text}};
  return sha256_hex(j.dump());
}

long approx_token_count(std::string_view text) {
  return static_cast<long>(count_words(text));
}

class ModelGateway::InflightGuard {
 public:
  explicit InflightGuard(ModelGateway& gw) : gw_(gw) {
    std::unique_lock<std::mutex> lock(gw_.inflight_mutex_);
    gw_.inflight_cv_.wait(lock, [&] { return gw_.inflight_ < gw_.config_.max_inflight; });
    ++gw_.inflight_;
  }
  ~InflightGuard() {
    {
      std::lock_guard<std::mutex> lock(gw_.inflight_mutex_);
      --gw_.inflight_;
    }
    gw_.inflight_cv_.notify_one();
  }

 private:
  ModelGateway& gw_;
};

ModelGateway::ModelGateway(std::shared_ptr<Backend> backend, GatewayConfig config)
    : backend_(std::move(backend)), config_(std::move(config)) {
  if (!backend_) throw ContractError("gateway requires a backend");
  if (config_.max_inflight < 1) throw ConfigError("gateway max_inflight must be >= 1");
  if (config_.retry.max_attempts < 1) throw ConfigError("gateway retry max_attempts must be >= 1");
}

template <typename Fn>
auto ModelGateway::with_retries(const std::string& digest, Fn&& fn) -> decltype(fn()) {
  int attempt = 1;
  double delay_ms = static_cast<double>(config_.retry.base_delay_ms);
  for (;;) {
    try {
      return fn();
    } catch (const ProviderError& e) {
      if (!retryable(e) || attempt >= config_.retry.max_attempts) throw;
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<long>(std::llround(delay_ms))));
      delay_ms *= config_.retry.multiplier;
      ++attempt;
    }
  }
  (void)digest;
}

void ModelGateway::record_usage(const UsageRecord& usage) {
  std::lock_guard<std::mutex> lock(usage_mutex_);
  switch (usage.call_kind) {
    case CallKind::Chat: ++totals_.chat_calls; break;
    case CallKind::Embed: ++totals_.embed_calls; break;
    case CallKind::Score: ++totals_.score_calls; break;
  }
  totals_.input_tokens += usage.input_tokens;
  totals_.output_tokens += usage.output_tokens;
  totals_.cost_estimate += usage.cost_estimate.value_or(0.0);
}

std::optional<double> ModelGateway::price_cost(const std::string& model_id, long input_tokens,
                                               long output_tokens) const {
  auto it = config_.prices.find(model_id);
  if (it == config_.prices.end()) return std::nullopt;
  return (static_cast<double>(input_tokens) * it->second.input_per_million +
          static_cast<double>(output_tokens) * it->second.output_per_million) /
         1e6;
}

ChatResult ModelGateway::chat(const ChatRequest& req) {
  if (req.model_id.empty()) throw ContractError("chat: model_id must be set");
  if (!std::isfinite(req.temperature) || req.temperature < 0.0) {
    throw ContractError("chat: temperature must be finite and >= 0");
  }
  bool has_user = false;
  for (const Message& m : req.messages) has_user = has_user || m.role == Role::User;
  if (!has_user) throw ContractError("chat: at least one user message required");
  if (req.max_output_words && *req.max_output_words < 1) {
    throw ContractError("chat: max_output_words must be positive");
  }

  const std::string digest = request_digest(req);
  InflightGuard guard(*this);
  ChatResult result = with_retries(digest, [&] { return backend_->chat(req); });
  result.usage.call_kind = CallKind::Chat;
  if (!result.usage.cost_estimate) {
    result.usage.cost_estimate =
        price_cost(req.model_id, result.usage.input_tokens, result.usage.output_tokens);
  }
  record_usage(result.usage);
  return result;
}

std::vector<std::vector<double>> ModelGateway::embed(const EmbedRequest& req) {
  if (req.texts.empty()) throw ContractError("embed: input list must be non-empty");

  const std::string digest = embed_digest(req);
  InflightGuard guard(*this);
  auto vectors = with_retries(digest, [&] { return backend_->embed(req); });
  if (vectors.size() != req.texts.size()) {
    throw ProviderError(ProviderErrorKind::BadResponse,
                        "embedding count mismatch: got " + std::to_string(vectors.size()) +
                            " for " + std::to_string(req.texts.size()) + " inputs",
                        digest);
  }
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].size() != vectors[0].size()) {
      throw ProviderError(ProviderErrorKind::BadResponse,
                          "embedding dimension mismatch at batch index " + std::to_string(i),
                          digest);
    }
  }
  UsageRecord usage;
  usage.call_kind = CallKind::Embed;
  for (const std::string& t : req.texts) usage.input_tokens += approx_token_count(t);
  record_usage(usage);
  return vectors;
}

TokenLikelihoods ModelGateway::score_tokens(const std::string& model_id, const std::string& text) {
  if (text.empty()) throw ContractError("score_tokens: text must be non-empty");

  const std::string digest = score_digest(model_id, text);
  InflightGuard guard(*this);
  TokenLikelihoods scored = with_retries(digest, [&] { return backend_->score_tokens(model_id, text); });
  if (scored.tokens.size() != scored.logprobs.size()) {
    throw ProviderError(ProviderErrorKind::BadResponse, "token/logprob length mismatch", digest);
  }
  UsageRecord usage;
  usage.call_kind = CallKind::Score;
  usage.input_tokens = static_cast<long>(scored.tokens.size());
  record_usage(usage);
  return scored;
}

UsageTotals ModelGateway::usage_totals() const {
  std::lock_guard<std::mutex> lock(usage_mutex_);
  return totals_;
}

}  // namespace ragfc
