#include <cstdlib>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragfc/backends.hpp"
#include "ragfc/text.hpp"

namespace ragfc {

namespace {

using nlohmann::json;

struct SplitUrl {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // e.g. /v1
};

SplitUrl split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("base URL must include a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

ProviderErrorKind kind_for_status(int status) {
  if (status == 401 || status == 403) return ProviderErrorKind::Auth;
  if (status == 429) return ProviderErrorKind::RateLimited;
  if (status == 408) return ProviderErrorKind::Timeout;
  if (status >= 500) return ProviderErrorKind::Transport;
  return ProviderErrorKind::BadResponse;
}

ProviderErrorKind kind_for_transport(httplib::Error err) {
  switch (err) {
    case httplib::Error::ConnectionTimeout:
    case httplib::Error::Read:
    case httplib::Error::Write:
      return ProviderErrorKind::Timeout;
    default:
      return ProviderErrorKind::Transport;
  }
}

std::string env_or_empty(const std::string& name) {
  const char* value = std::getenv(name.c_str());
  return value == nullptr ? std::string() : std::string(value);
}

std::string upper_ascii(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

struct HttpBackend::Impl {
  SplitUrl url;
  httplib::Headers headers;

  explicit Impl(const HttpBackendConfig& cfg) : url(split_base_url(cfg.base_url)) {
    headers = {{"Authorization", "Bearer " + cfg.api_key}};
  }

  json post_json(const HttpBackendConfig& cfg, const std::string& path, const json& body,
                 const std::string& digest) {
    httplib::Client client(url.origin);
    client.set_connection_timeout(cfg.connect_timeout_s, 0);
    client.set_read_timeout(cfg.read_timeout_s, 0);
    client.set_follow_location(true);

    auto res = client.Post(url.path_prefix + path, headers, body.dump(), "application/json");
    if (!res) {
      throw ProviderError(kind_for_transport(res.error()),
                          "request to " + cfg.provider_name + path + " failed: " +
                              httplib::to_string(res.error()),
                          digest);
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError(kind_for_status(res->status),
                          cfg.provider_name + path + " returned HTTP " +
                              std::to_string(res->status) + ": " + res->body.substr(0, 400),
                          digest);
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
      throw ProviderError(ProviderErrorKind::BadResponse,
                          cfg.provider_name + path + " returned unparseable JSON", digest);
    }
    return parsed;
  }
};

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ConfigError("http backend: base URL not set");
  if (config_.api_key.empty()) throw ConfigError("http backend: API key not set");
  impl_ = std::make_unique<Impl>(config_);
}

HttpBackend::~HttpBackend() = default;

ChatResult HttpBackend::chat(const ChatRequest& req) {
  const std::string digest = request_digest(req);
  json messages = json::array();
  for (const Message& m : req.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json body{{"model", req.model_id}, {"messages", messages}, {"temperature", req.temperature}};
  if (req.max_output_words) {
    // The word budget lives in the prompt; max_tokens is only a guard rail.
    body["max_tokens"] = *req.max_output_words * config_.tokens_per_word;
  }

  json reply = impl_->post_json(config_, config_.chat_path, body, digest);
  if (!reply.contains("choices") || reply["choices"].empty()) {
    throw ProviderError(ProviderErrorKind::BadResponse, "chat response has no choices", digest);
  }
  ChatResult result;
  result.text = reply["choices"][0].value("message", json::object()).value("content", "");
  if (reply.contains("usage")) {
    result.usage.input_tokens = reply["usage"].value("prompt_tokens", 0L);
    result.usage.output_tokens = reply["usage"].value("completion_tokens", 0L);
  }
  return result;
}

std::vector<std::vector<double>> HttpBackend::embed(const EmbedRequest& req) {
  const std::string digest = embed_digest(req);
  json body{{"model", req.model_id}, {"input", req.texts}};
  json reply = impl_->post_json(config_, config_.embeddings_path, body, digest);
  if (!reply.contains("data")) {
    throw ProviderError(ProviderErrorKind::BadResponse, "embedding response has no data", digest);
  }
  std::vector<std::vector<double>> vectors(req.texts.size());
  for (const json& item : reply["data"]) {
    const std::size_t index = item.value("index", vectors.size());
    if (index >= vectors.size()) {
      throw ProviderError(ProviderErrorKind::BadResponse,
                          "embedding response index out of range at batch index " +
                              std::to_string(index),
                          digest);
    }
    vectors[index] = item.value("embedding", std::vector<double>{});
  }
  return vectors;
}

TokenLikelihoods HttpBackend::score_tokens(const std::string& model_id, const std::string& text) {
  const std::string digest = score_digest(model_id, text);
  json body{{"model", model_id}, {"prompt", text},    {"max_tokens", 0},
            {"echo", true},      {"logprobs", 0},     {"temperature", 0.0}};
  json reply;
  try {
    reply = impl_->post_json(config_, config_.completions_path, body, digest);
  } catch (const ProviderError& e) {
    if (e.kind() == ProviderErrorKind::BadResponse) {
      throw ProviderError(ProviderErrorKind::Capability,
                          config_.provider_name + " does not support echo logprob scoring", digest);
    }
    throw;
  }
  if (!reply.contains("choices") || reply["choices"].empty() ||
      !reply["choices"][0].contains("logprobs")) {
    throw ProviderError(ProviderErrorKind::Capability,
                        config_.provider_name + " returned no logprobs for echo scoring", digest);
  }
  const json& lp = reply["choices"][0]["logprobs"];
  TokenLikelihoods out;
  const auto& tokens = lp.value("tokens", json::array());
  const auto& scores = lp.value("token_logprobs", json::array());
  for (std::size_t i = 0; i < tokens.size() && i < scores.size(); ++i) {
    if (scores[i].is_null()) continue;  // leading token has no conditional score
    out.tokens.push_back(tokens[i].get<std::string>());
    out.logprobs.push_back(scores[i].get<double>());
  }
  return out;
}

std::shared_ptr<HttpBackend> make_http_backend_from_env(const std::string& provider_name) {
  const std::string tag = upper_ascii(provider_name);
  HttpBackendConfig cfg;
  cfg.provider_name = provider_name;
  cfg.base_url = env_or_empty("RAGFC_" + tag + "_BASE_URL");
  cfg.api_key = env_or_empty("RAGFC_" + tag + "_API_KEY");
  if (provider_name == "openai") {
    if (cfg.base_url.empty()) cfg.base_url = env_or_empty("OPENAI_BASE_URL");
    if (cfg.api_key.empty()) cfg.api_key = env_or_empty("OPENAI_API_KEY");
    if (cfg.base_url.empty()) cfg.base_url = "https://api.openai.com/v1";
  }
  if (cfg.base_url.empty()) {
    throw ConfigError("RAGFC_" + tag + "_BASE_URL is not set");
  }
  if (cfg.api_key.empty()) {
    throw ConfigError("RAGFC_" + tag + "_API_KEY is not set");
  }
  return std::make_shared<HttpBackend>(std::move(cfg));
}

}  // namespace ragfc
