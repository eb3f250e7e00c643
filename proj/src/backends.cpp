#include "ragfc/backends.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ragfc/text.hpp"

namespace ragfc {

namespace {

using nlohmann::json;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

long message_tokens(const std::vector<Message>& messages) {
  long total = 0;
  for (const Message& m : messages) total += approx_token_count(m.content);
  return total;
}

json usage_to_json(const UsageRecord& usage) {
  json j{{"input_tokens", usage.input_tokens}, {"output_tokens", usage.output_tokens}};
  if (usage.cost_estimate) j["cost_estimate"] = *usage.cost_estimate;
  return j;
}

UsageRecord usage_from_json(const json& j) {
  UsageRecord usage;
  usage.input_tokens = j.value("input_tokens", 0L);
  usage.output_tokens = j.value("output_tokens", 0L);
  if (j.contains("cost_estimate")) usage.cost_estimate = j["cost_estimate"].get<double>();
  return usage;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : std::string_view(data)) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::vector<double> hashed_bow_embed(const std::string& text, std::size_t dim) {
  std::vector<double> v(dim, 0.0);
  for (const std::string& token : tokenize_alnum(text)) {
    v[fnv1a64(token) % dim] = 1.0;
  }
  return v;
}

ScriptedBackend::ScriptedBackend() {
  set_embed_dim(256);
  set_uniform_scorer(100);
}

void ScriptedBackend::set_chat(ChatTextFn fn) {
  chat_fn_ = [fn = std::move(fn)](const ChatRequest& req) {
    ChatResult result;
    result.text = fn(req);
    result.usage.input_tokens = message_tokens(req.messages);
    result.usage.output_tokens = approx_token_count(result.text);
    return result;
  };
}

void ScriptedBackend::set_chat_result(ChatResultFn fn) { chat_fn_ = std::move(fn); }

void ScriptedBackend::set_embed(EmbedFn fn) { embed_fn_ = std::move(fn); }

void ScriptedBackend::set_embed_dim(std::size_t dim) {
  embed_fn_ = [dim](const std::string& text) { return hashed_bow_embed(text, dim); };
}

void ScriptedBackend::set_uniform_scorer(std::size_t vocab_size) {
  const double logprob = -std::log(static_cast<double>(vocab_size));
  score_fn_ = [logprob](const std::string& text) {
    TokenLikelihoods out;
    out.tokens = split_words(text);
    out.logprobs.assign(out.tokens.size(), logprob);
    return out;
  };
}

void ScriptedBackend::set_table_scorer(std::map<std::string, double> logprob_by_token,
                                       double default_logprob) {
  score_fn_ = [table = std::move(logprob_by_token), default_logprob](const std::string& text) {
    TokenLikelihoods out;
    out.tokens = split_words(text);
    out.logprobs.reserve(out.tokens.size());
    for (const std::string& tok : out.tokens) {
      auto it = table.find(tok);
      out.logprobs.push_back(it == table.end() ? default_logprob : it->second);
    }
    return out;
  };
}

void ScriptedBackend::set_score(ScoreFn fn) { score_fn_ = std::move(fn); }

ChatResult ScriptedBackend::chat(const ChatRequest& req) {
  if (!chat_fn_) {
    throw ProviderError(ProviderErrorKind::Capability, "scripted backend has no chat handler",
                        request_digest(req));
  }
  return chat_fn_(req);
}

std::vector<std::vector<double>> ScriptedBackend::embed(const EmbedRequest& req) {
  std::vector<std::vector<double>> out;
  out.reserve(req.texts.size());
  for (const std::string& text : req.texts) out.push_back(embed_fn_(text));
  return out;
}

TokenLikelihoods ScriptedBackend::score_tokens(const std::string& /*model_id*/,
                                               const std::string& text) {
  return score_fn_(text);
}

struct FixtureBackend::Record {
  std::string kind;
  std::string response_text;
  UsageRecord usage;
  std::vector<std::vector<double>> vectors;
  TokenLikelihoods likelihoods;
};

FixtureBackend::FixtureBackend(const std::filesystem::path& fixture_path) {
  std::ifstream in(fixture_path);
  if (!in) throw ConfigError("cannot open fixture file: " + fixture_path.string());
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError("malformed fixture record", fixture_path.string(), line_number);
    }
    Record rec;
    rec.kind = j.value("kind", "chat");
    const std::string digest = j.value("digest", "");
    if (digest.empty()) throw ParseError("fixture record missing digest", fixture_path.string(), line_number);
    if (j.contains("response_text")) rec.response_text = j["response_text"].get<std::string>();
    if (j.contains("usage")) rec.usage = usage_from_json(j["usage"]);
    if (j.contains("vectors")) rec.vectors = j["vectors"].get<std::vector<std::vector<double>>>();
    if (j.contains("tokens")) rec.likelihoods.tokens = j["tokens"].get<std::vector<std::string>>();
    if (j.contains("logprobs")) rec.likelihoods.logprobs = j["logprobs"].get<std::vector<double>>();
    records_[rec.kind + ":" + digest].push_back(std::move(rec));
    ++record_count_;
  }
}

FixtureBackend::~FixtureBackend() = default;

FixtureBackend::Record FixtureBackend::next(const std::string& kind, const std::string& digest) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = records_.find(kind + ":" + digest);
  if (it == records_.end() || it->second.empty()) {
    throw ProviderError(ProviderErrorKind::ReplayMiss,
                        "replay miss: no recorded " + kind + " response", digest);
  }
  Record rec = it->second.front();
  if (it->second.size() > 1) it->second.pop_front();
  return rec;
}

ChatResult FixtureBackend::chat(const ChatRequest& req) {
  const Record rec = next("chat", request_digest(req));
  ChatResult result;
  result.text = rec.response_text;
  result.usage = rec.usage;
  return result;
}

std::vector<std::vector<double>> FixtureBackend::embed(const EmbedRequest& req) {
  return next("embed", embed_digest(req)).vectors;
}

TokenLikelihoods FixtureBackend::score_tokens(const std::string& model_id,
                                              const std::string& text) {
  return next("score", score_digest(model_id, text)).likelihoods;
}

std::size_t FixtureBackend::record_count() const { return record_count_; }

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner,
                                   const std::filesystem::path& recording_path)
    : inner_(std::move(inner)), path_(recording_path) {
  if (!inner_) throw ContractError("recording backend requires an inner backend");
  std::ofstream touch(path_, std::ios::app);
  if (!touch) throw ConfigError("cannot open recording file for append: " + path_.string());
}

void RecordingBackend::append(const std::string& line) {
  std::lock_guard<std::mutex> lock(write_mutex_);
  std::ofstream out(path_, std::ios::app);
  out << line << '\n';
  out.flush();
}

ChatResult RecordingBackend::chat(const ChatRequest& req) {
  ChatResult result = inner_->chat(req);
  json j{{"kind", "chat"},
         {"digest", request_digest(req)},
         {"response_text", result.text},
         {"usage", usage_to_json(result.usage)}};
  append(j.dump());
  return result;
}

std::vector<std::vector<double>> RecordingBackend::embed(const EmbedRequest& req) {
  auto vectors = inner_->embed(req);
  json j{{"kind", "embed"}, {"digest", embed_digest(req)}, {"vectors", vectors}};
  append(j.dump());
  return vectors;
}

TokenLikelihoods RecordingBackend::score_tokens(const std::string& model_id,
                                                const std::string& text) {
  TokenLikelihoods scored = inner_->score_tokens(model_id, text);
  json j{{"kind", "score"},
         {"digest", score_digest(model_id, text)},
         {"tokens", scored.tokens},
         {"logprobs", scored.logprobs}};
  append(j.dump());
  return scored;
}

}  // namespace ragfc
