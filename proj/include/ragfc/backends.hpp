#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ragfc/gateway.hpp"

namespace ragfc {

// 64-bit FNV-1a. Used by the deterministic embedding fixture.
std::uint64_t fnv1a64(std::string_view data);

// Deterministic embedding fixture: presence-weighted hashed bag of words.
// Each distinct alphanumeric token lights up coordinate fnv1a64(token) % dim
// with weight 1. embed("a b") therefore has exactly the nonzero coordinates
// of hash("a") and hash("b").
std::vector<double> hashed_bow_embed(const std::string& text, std::size_t dim);

// Scripted deterministic backend for tests and desk-scale experiments.
// Handlers are installed once, then the backend is safe to share across
// threads. Usage for chat replies is estimated as whitespace word counts
// unless the handler supplies a full ChatResult.
class ScriptedBackend : public Backend {
 public:
  using ChatTextFn = std::function<std::string(const ChatRequest&)>;
  using ChatResultFn = std::function<ChatResult(const ChatRequest&)>;
  using EmbedFn = std::function<std::vector<double>(const std::string&)>;
  using ScoreFn = std::function<TokenLikelihoods(const std::string&)>;

  ScriptedBackend();

  std::string name() const override { return "scripted"; }

  // Reply text handler; usage is derived from word counts.
  void set_chat(ChatTextFn fn);
  // Full-result handler for tests that control usage records.
  void set_chat_result(ChatResultFn fn);
  void set_embed(EmbedFn fn);
  void set_embed_dim(std::size_t dim);
  // Uniform language model over a vocabulary of `vocab_size` tokens: every
  // whitespace token scores logprob -ln(vocab_size).
  void set_uniform_scorer(std::size_t vocab_size);
  // Table-driven scorer with a default for unknown tokens.
  void set_table_scorer(std::map<std::string, double> logprob_by_token, double default_logprob);
  void set_score(ScoreFn fn);

  ChatResult chat(const ChatRequest& req) override;
  std::vector<std::vector<double>> embed(const EmbedRequest& req) override;
  TokenLikelihoods score_tokens(const std::string& model_id, const std::string& text) override;

 private:
  ChatResultFn chat_fn_;
  EmbedFn embed_fn_;
  ScoreFn score_fn_;
};

// Strict replay backend: every call must hit a record captured earlier (keyed
// by request digest); a miss raises a replay-miss provider error naming the
// digest. Records are JSONL, one object per line. Repeated requests with the
// same digest replay their recorded responses in order; the final record for
// a digest keeps serving once the queue drains, so hand-written single-record
// fixtures can answer any number of identical calls.
class FixtureBackend : public Backend {
 public:
  explicit FixtureBackend(const std::filesystem::path& fixture_path);
  ~FixtureBackend() override;

  std::string name() const override { return "replay"; }

  ChatResult chat(const ChatRequest& req) override;
  std::vector<std::vector<double>> embed(const EmbedRequest& req) override;
  TokenLikelihoods score_tokens(const std::string& model_id, const std::string& text) override;

  std::size_t record_count() const;

 private:
  struct Record;
  Record next(const std::string& kind, const std::string& digest);

  std::mutex mutex_;
  std::map<std::string, std::deque<Record>> records_;
  std::size_t record_count_ = 0;
};

// Pass-through backend that appends every response to a JSONL recording file
// (the format FixtureBackend reads). Appends are flushed per record so an
// interrupted run still yields a usable fixture.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, const std::filesystem::path& recording_path);

  std::string name() const override { return "recording(" + inner_->name() + ")"; }

  ChatResult chat(const ChatRequest& req) override;
  std::vector<std::vector<double>> embed(const EmbedRequest& req) override;
  TokenLikelihoods score_tokens(const std::string& model_id, const std::string& text) override;

 private:
  void append(const std::string& line);

  std::shared_ptr<Backend> inner_;
  std::filesystem::path path_;
  std::mutex write_mutex_;
};

struct HttpBackendConfig {
  std::string provider_name = "openai";
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
  std::string chat_path = "/chat/completions";
  std::string embeddings_path = "/embeddings";
  std::string completions_path = "/completions";
  // Safety margin when mapping max_output_words to the provider max_tokens.
  int tokens_per_word = 4;
};

// OpenAI-compatible HTTP backend. chat -> POST {base_url}{chat_path};
// embed -> POST {base_url}{embeddings_path}; score_tokens -> legacy echo
// completions, raising a capability error where unsupported.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  std::string name() const override { return config_.provider_name; }

  ChatResult chat(const ChatRequest& req) override;
  std::vector<std::vector<double>> embed(const EmbedRequest& req) override;
  TokenLikelihoods score_tokens(const std::string& model_id, const std::string& text) override;

 private:
  struct Impl;
  HttpBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

// Builds an HttpBackend from environment variables
// RAGFC_<PROVIDER>_BASE_URL and RAGFC_<PROVIDER>_API_KEY (provider name
// uppercased). For provider "openai", OPENAI_BASE_URL / OPENAI_API_KEY are
// honored as fallbacks. Missing values raise a configuration error; secrets
// never pass through config files.
std::shared_ptr<HttpBackend> make_http_backend_from_env(const std::string& provider_name);

}  // namespace ragfc
