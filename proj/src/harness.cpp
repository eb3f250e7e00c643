#include "ragfc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "ragfc/errors.hpp"
#include "ragfc/prompts.hpp"
#include "ragfc/text.hpp"

namespace ragfc {

using nlohmann::json;

std::string to_string(InjectionMode mode) {
  return mode == InjectionMode::PerClaim ? "per_claim" : "all_at_once";
}

InjectionMode parse_injection_mode(const std::string& name) {
  const std::string lowered = to_lower(name);
  if (lowered == "per_claim" || lowered == "perclaim") return InjectionMode::PerClaim;
  if (lowered == "all_at_once" || lowered == "allatonce") return InjectionMode::AllAtOnce;
  throw ConfigError("unknown injection mode: " + name);
}

namespace {

std::string index_kind_name(IndexKind kind) {
  return kind == IndexKind::SparseBm25 ? "bm25" : "dense";
}

IndexKind parse_index_kind(const std::string& name) {
  const std::string lowered = to_lower(name);
  if (lowered == "bm25") return IndexKind::SparseBm25;
  if (lowered == "dense") return IndexKind::DenseEmbedding;
  throw ConfigError("unknown index kind: " + name);
}

std::string similarity_name(Similarity s) { return s == Similarity::Dot ? "dot" : "cosine"; }

Similarity parse_similarity(const std::string& name) {
  const std::string lowered = to_lower(name);
  if (lowered == "dot") return Similarity::Dot;
  if (lowered == "cosine") return Similarity::Cosine;
  throw ConfigError("unknown similarity: " + name);
}

json retriever_to_json(const IndexSpec& spec) {
  return {{"kind", index_kind_name(spec.kind)},
          {"similarity", similarity_name(spec.similarity)},
          {"bm25_k1", spec.bm25.k1},
          {"bm25_b", spec.bm25.b},
          {"embedding_model", spec.embedding_model_id},
          {"block_rows", spec.block_rows}};
}

IndexSpec retriever_from_json(const json& j) {
  IndexSpec spec;
  spec.kind = parse_index_kind(j.value("kind", "bm25"));
  spec.similarity = parse_similarity(j.value("similarity", "dot"));
  spec.bm25.k1 = j.value("bm25_k1", spec.bm25.k1);
  spec.bm25.b = j.value("bm25_b", spec.bm25.b);
  spec.embedding_model_id = j.value("embedding_model", "");
  spec.block_rows = j.value("block_rows", spec.block_rows);
  return spec;
}

json attack_cfg_to_json(const AttackConfig& a) {
  return {{"max_iterations", a.max_iterations},
          {"reset_interval", a.reset_interval},
          {"proxy_passage_count", a.proxy_passage_count},
          {"word_budget", a.word_budget},
          {"attacker_model", a.attacker_model},
          {"proxy_verifier_model", a.proxy_verifier_model},
          {"prefix_augment", a.prefix_augment},
          {"attacker_temperature", a.attacker_temperature},
          {"proxy_mode", a.proxy_mode == ProxyConstruction::SearchBased ? "search" : "llm"},
          {"refusal_patterns", a.refusal_patterns},
          {"max_search_rounds", a.max_search_rounds}};
}

AttackConfig attack_cfg_from_json(const json& j) {
  AttackConfig a;
  a.max_iterations = j.value("max_iterations", a.max_iterations);
  a.reset_interval = j.value("reset_interval", a.reset_interval);
  a.proxy_passage_count = j.value("proxy_passage_count", a.proxy_passage_count);
  a.word_budget = j.value("word_budget", a.word_budget);
  a.attacker_model = j.value("attacker_model", a.attacker_model);
  a.proxy_verifier_model = j.value("proxy_verifier_model", a.proxy_verifier_model);
  a.prefix_augment = j.value("prefix_augment", a.prefix_augment);
  a.attacker_temperature = j.value("attacker_temperature", a.attacker_temperature);
  a.proxy_mode = to_lower(j.value("proxy_mode", "llm")) == "search"
                     ? ProxyConstruction::SearchBased
                     : ProxyConstruction::LLMBased;
  if (j.contains("refusal_patterns")) {
    a.refusal_patterns = j["refusal_patterns"].get<std::vector<std::string>>();
  }
  a.max_search_rounds = j.value("max_search_rounds", a.max_search_rounds);
  return a;
}

json verifier_to_json(const VerifierConfig& v) {
  return {{"model_id", v.model_id},
          {"temperature", v.temperature},
          {"k", v.k},
          {"max_explanation_words", v.max_explanation_words}};
}

VerifierConfig verifier_from_json(const json& j) {
  VerifierConfig v;
  v.model_id = j.value("model_id", v.model_id);
  v.temperature = j.value("temperature", v.temperature);
  v.k = j.value("k", v.k);
  v.max_explanation_words = j.value("max_explanation_words", v.max_explanation_words);
  return v;
}

json usage_to_json(const UsageRecord& u) {
  json j = {{"input_tokens", u.input_tokens}, {"output_tokens", u.output_tokens}};
  if (u.cost_estimate) j["cost_estimate"] = *u.cost_estimate;
  return j;
}

UsageRecord usage_from_json(const json& j) {
  UsageRecord u;
  u.input_tokens = j.value("input_tokens", 0L);
  u.output_tokens = j.value("output_tokens", 0L);
  if (j.contains("cost_estimate")) u.cost_estimate = j["cost_estimate"].get<double>();
  return u;
}

std::string utc_now_iso8601() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm parts{};
  gmtime_r(&now, &parts);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &parts);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("experiment config: corpus path is required");
  if (!std::filesystem::exists(corpus_path)) {
    throw ConfigError("experiment config: corpus not found: " + corpus_path.string());
  }
  if (claims_path.empty()) throw ConfigError("experiment config: claims path is required");
  if (!std::filesystem::exists(claims_path)) {
    throw ConfigError("experiment config: claims file not found: " + claims_path.string());
  }
  if (!index_path.empty() && !std::filesystem::exists(index_path)) {
    throw ConfigError("experiment config: index not found: " + index_path.string());
  }
  if (k < 1) throw ConfigError("experiment config: k must be >= 1");
  if (shots.empty()) throw ConfigError("experiment config: shots list is empty");
  for (const int s : shots) {
    if (s < 1) throw ConfigError("experiment config: shot counts must be >= 1");
    if (s > k) throw ConfigError("experiment config: shots must not exceed k");
  }
  if (quota_supported < 0 || quota_refuted < 0 || quota_supported + quota_refuted == 0) {
    throw ConfigError("experiment config: quotas must be non-negative and not both zero");
  }
  if (sample_batch < 1) throw ConfigError("experiment config: sample batch must be >= 1");
  if (workers < 1) throw ConfigError("experiment config: workers must be >= 1");
  if (poisonedrag_max_attempts < 1) {
    throw ConfigError("experiment config: poisonedrag_max_attempts must be >= 1");
  }
  if (output_dir.empty()) throw ConfigError("experiment config: output dir is required");
  for (const auto& d : defenses) {
    if (d != "ppl" && d != "rouge" && d != "vote_passage" && d != "vote_group" && d != "select") {
      throw ConfigError("experiment config: unknown defense: " + d);
    }
  }
  attack_cfg.validate();
  if (retriever.kind == IndexKind::DenseEmbedding && retriever.embedding_model_id.empty()) {
    throw ConfigError("experiment config: dense retriever needs an embedding model id");
  }
  if (backend != "scripted" && backend != "fixture" && backend != "openai") {
    throw ConfigError("experiment config: unknown backend: " + backend);
  }
  if (backend == "fixture" && !std::filesystem::exists(fixture_path)) {
    throw ConfigError("experiment config: fixture file not found: " + fixture_path.string());
  }
}

json to_json(const ExperimentConfig& cfg) {
  return {{"corpus", cfg.corpus_path.string()},
          {"corpus_format", cfg.corpus_format == CorpusFormat::Jsonl ? "jsonl" : "tsv"},
          {"claims", cfg.claims_path.string()},
          {"index", cfg.index_path.string()},
          {"retriever", retriever_to_json(cfg.retriever)},
          {"k", cfg.k},
          {"shots", cfg.shots},
          {"attack", attack_name(cfg.attack)},
          {"defenses", cfg.defenses},
          {"injection_mode", to_string(cfg.injection_mode)},
          {"attack_cfg", attack_cfg_to_json(cfg.attack_cfg)},
          {"verifier", verifier_to_json(cfg.verifier)},
          {"seed", cfg.seed},
          {"output_dir", cfg.output_dir.string()},
          {"quota_supported", cfg.quota_supported},
          {"quota_refuted", cfg.quota_refuted},
          {"sample_batch", cfg.sample_batch},
          {"workers", cfg.workers},
          {"poisonedrag_max_attempts", cfg.poisonedrag_max_attempts},
          {"ppl_model", cfg.ppl_model_id},
          {"embed_model", cfg.embed_model_id},
          {"backend", cfg.backend},
          {"fixture", cfg.fixture_path.string()},
          {"record", cfg.record_path.string()},
          {"provider", cfg.provider}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.corpus_path = j.value("corpus", "");
  cfg.corpus_format =
      to_lower(j.value("corpus_format", "jsonl")) == "tsv" ? CorpusFormat::Tsv : CorpusFormat::Jsonl;
  cfg.claims_path = j.value("claims", "");
  cfg.index_path = j.value("index", "");
  if (j.contains("retriever")) cfg.retriever = retriever_from_json(j["retriever"]);
  cfg.k = j.value("k", cfg.k);
  if (j.contains("shots")) cfg.shots = j["shots"].get<std::vector<int>>();
  cfg.attack = parse_attack_kind(j.value("attack", "ADMIT"));
  if (j.contains("defenses")) cfg.defenses = j["defenses"].get<std::vector<std::string>>();
  cfg.injection_mode = parse_injection_mode(j.value("injection_mode", "per_claim"));
  if (j.contains("attack_cfg")) cfg.attack_cfg = attack_cfg_from_json(j["attack_cfg"]);
  if (j.contains("verifier")) cfg.verifier = verifier_from_json(j["verifier"]);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output_dir = j.value("output_dir", "");
  cfg.quota_supported = j.value("quota_supported", cfg.quota_supported);
  cfg.quota_refuted = j.value("quota_refuted", cfg.quota_refuted);
  cfg.sample_batch = j.value("sample_batch", cfg.sample_batch);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.poisonedrag_max_attempts = j.value("poisonedrag_max_attempts", cfg.poisonedrag_max_attempts);
  cfg.ppl_model_id = j.value("ppl_model", cfg.ppl_model_id);
  cfg.embed_model_id = j.value("embed_model", cfg.embed_model_id);
  cfg.backend = j.value("backend", cfg.backend);
  cfg.fixture_path = j.value("fixture", "");
  cfg.record_path = j.value("record", "");
  cfg.provider = j.value("provider", cfg.provider);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return experiment_config_from_json(j);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file for hashing: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return sha256_hex(buffer.str());
}

RunManifest RunManifest::for_config(const ExperimentConfig& cfg) {
  RunManifest m;
  m.config_snapshot = ragfc::to_json(cfg);
  m.template_version = prompts::kVersion;
  m.input_digests[cfg.corpus_path.string()] = sha256_file(cfg.corpus_path);
  m.input_digests[cfg.claims_path.string()] = sha256_file(cfg.claims_path);
  if (!cfg.index_path.empty()) {
    m.input_digests[cfg.index_path.string()] = sha256_file(cfg.index_path);
  }
  // Transport and placement knobs stay out of the hash so a replay into a
  // fresh directory reproduces the original records byte for byte.
  json hashed_config = m.config_snapshot;
  for (const char* key : {"output_dir", "workers", "backend", "fixture", "record", "provider"}) {
    hashed_config.erase(key);
  }
  const json hashed = {{"config", std::move(hashed_config)},
                       {"inputs", m.input_digests},
                       {"schema", m.schema_version},
                       {"templates", m.template_version}};
  m.manifest_hash = sha256_hex(hashed.dump());
  m.created_at = utc_now_iso8601();
  return m;
}

json RunManifest::to_json() const {
  return {{"config", config_snapshot},
          {"templates", template_version},
          {"schema", schema_version},
          {"inputs", input_digests},
          {"manifest_hash", manifest_hash},
          {"created_at", created_at}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.config_snapshot = j.at("config");
  m.template_version = j.at("templates").get<std::string>();
  m.schema_version = j.at("schema").get<std::string>();
  m.input_digests = j.at("inputs").get<std::map<std::string, std::string>>();
  m.manifest_hash = j.at("manifest_hash").get<std::string>();
  m.created_at = j.value("created_at", "");
  return m;
}

void RunManifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest: " + path.string());
  out << to_json().dump(2) << "\n";
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest: " + path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("manifest is not valid JSON: " + path.string());
  return from_json(j);
}

std::vector<SampledClaim> sample_target_claims(ModelGateway& gateway,
                                               const std::vector<Claim>& pool,
                                               const KnowledgeBase& kb,
                                               const RetrievalIndex& index,
                                               const VerifierConfig& verifier,
                                               int quota_supported, int quota_refuted, int batch,
                                               std::uint64_t seed) {
  if (batch < 1) throw ContractError("sample_target_claims: batch must be >= 1");
  if (quota_supported < 0 || quota_refuted < 0 || quota_supported + quota_refuted == 0) {
    throw ContractError("sample_target_claims: bad quotas");
  }

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<SampledClaim> picked;
  int have_supported = 0;
  int have_refuted = 0;

  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
    for (std::size_t i = start; i < stop; ++i) {
      const Claim& claim = pool[order[i]];
      const std::vector<RankedHit> hits = index.retrieve(claim.text, verifier.k);
      std::vector<Passage> context;
      for (const auto& hit : hits) {
        const Passage* p = kb.find(hit.passage_id);
        if (p == nullptr) {
          throw IntegrityError("retrieval returned a passage missing from the knowledge base",
                               hit.passage_id);
        }
        context.push_back(*p);
      }
      if (context.empty()) continue;
      const Verdict verdict = verify(gateway, claim, context, verifier);
      if (verdict.parse_failed || verdict.label == VerdictLabel::Nei) continue;
      if (verdict.label == VerdictLabel::Supported && have_supported < quota_supported) {
        picked.push_back({claim, verdict.label, flip(verdict.label)});
        ++have_supported;
      } else if (verdict.label == VerdictLabel::Refuted && have_refuted < quota_refuted) {
        picked.push_back({claim, verdict.label, flip(verdict.label)});
        ++have_refuted;
      }
      if (have_supported == quota_supported && have_refuted == quota_refuted) return picked;
    }
  }
  throw QuotaError("sample_target_claims: claim pool exhausted before quotas were met",
                   have_supported, have_refuted);
}

RunPaths run_paths(const std::filesystem::path& output_dir) {
  RunPaths p;
  p.manifest = output_dir / "manifest.json";
  p.passages = output_dir / "passages.jsonl";
  p.results = output_dir / "results.jsonl";
  p.traces = output_dir / "traces.jsonl";
  p.defense_records = output_dir / "defenses.jsonl";
  p.summary = output_dir / "summary.json";
  return p;
}

namespace {

json passage_to_json(const Passage& p) {
  return {{"id", p.id},
          {"title", p.title},
          {"text", p.text},
          {"attack", p.attack_name},
          {"target_claim_id", p.target_claim_id},
          {"shot_index", p.shot_index}};
}

Passage passage_from_json(const json& j) {
  Passage p;
  p.id = j.at("id").get<std::string>();
  p.title = j.value("title", "");
  p.text = j.at("text").get<std::string>();
  p.attack_name = j.value("attack", "");
  p.target_claim_id = j.value("target_claim_id", "");
  p.shot_index = j.value("shot_index", 0);
  p.provenance = Provenance::Injected;
  return p;
}

json trace_to_json(const AttackTrace& t) {
  json iterations = json::array();
  for (const auto& it : t.iterations) {
    iterations.push_back({{"candidate_text", it.candidate_text},
                          {"proxy_verdict", to_string(it.proxy_verdict)},
                          {"was_reset_point", it.was_reset_point},
                          {"skipped", it.skipped}});
  }
  return {{"claim_id", t.claim_id},
          {"target", to_string(t.target_verdict)},
          {"success", t.success},
          {"success_iteration", t.success_iteration},
          {"attacker_model", t.attacker_model},
          {"usage", usage_to_json(t.usage)},
          {"iterations", std::move(iterations)}};
}

VerdictLabel label_from_string(const std::string& s) {
  const ParsedVerdict parsed = parse_verdict(s);
  if (!parsed.ok) throw ParseError("bad verdict label in record: " + s, "results", 0);
  return parsed.label;
}

AttackTrace trace_from_json(const json& j) {
  AttackTrace t;
  t.claim_id = j.at("claim_id").get<std::string>();
  t.target_verdict = label_from_string(j.at("target").get<std::string>());
  t.success = j.at("success").get<bool>();
  t.success_iteration = j.at("success_iteration").get<int>();
  t.attacker_model = j.value("attacker_model", "");
  t.usage = usage_from_json(j.at("usage"));
  for (const auto& it : j.value("iterations", json::array())) {
    AttackIteration iteration;
    iteration.candidate_text = it.value("candidate_text", "");
    iteration.proxy_verdict = label_from_string(it.value("proxy_verdict", "NOT ENOUGH INFO"));
    iteration.was_reset_point = it.value("was_reset_point", false);
    iteration.skipped = it.value("skipped", false);
    t.iterations.push_back(std::move(iteration));
  }
  return t;
}

// Everything produced for one (shot count, claim) key during generation.
struct GenerationUnit {
  std::vector<json> passage_lines;  // one per attempted shot
  std::vector<json> trace_lines;    // one per generated passage
  std::vector<Passage> passages;
  std::vector<ShotStatus> statuses;
  std::vector<AttackTrace> traces;
};

// Everything produced for one (shot count, claim) key during evaluation.
struct EvaluationUnit {
  json result_line;
  std::vector<json> defense_lines;
  ClaimResult result;
  std::vector<RankedHit> hits;
  UsageRecord eval_usage;  // victim verify + defense calls
};

std::string unit_key(int shots, const std::string& claim_id) {
  return std::to_string(shots) + ":" + claim_id;
}

// Runs produce(0..n-1) on `workers` threads and hands items to commit in
// index order. The first exception aborts the pool and is rethrown after all
// workers stop.
template <typename Item>
void parallel_ordered(std::size_t n, int workers,
                      const std::function<Item(std::size_t)>& produce,
                      const std::function<void(std::size_t, Item&)>& commit) {
  if (n == 0) return;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      Item item = produce(i);
      commit(i, item);
    }
    return;
  }

  std::mutex mutex;
  std::condition_variable cv;
  std::vector<std::optional<Item>> done(n);
  std::vector<std::exception_ptr> failed(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        Item item = produce(i);
        std::lock_guard<std::mutex> lock(mutex);
        done[i] = std::move(item);
        cv.notify_all();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        failed[i] = std::current_exception();
        abort.store(true);
        cv.notify_all();
      }
    }
  };

  std::vector<std::thread> threads;
  const int count = std::min<int>(workers, static_cast<int>(n));
  threads.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) threads.emplace_back(worker);

  std::exception_ptr first_error;
  for (std::size_t i = 0; i < n && !first_error; ++i) {
    std::unique_lock<std::mutex> lock(mutex);
    cv.wait(lock, [&] { return done[i].has_value() || failed[i] != nullptr || abort.load(); });
    if (failed[i]) {
      first_error = failed[i];
    } else if (done[i]) {
      lock.unlock();
      commit(i, *done[i]);
    } else {
      // aborted by a later index; find its error below
      break;
    }
  }
  abort.store(true);
  cv.notify_all();
  for (auto& t : threads) t.join();
  if (!first_error) {
    for (auto& e : failed) {
      if (e) {
        first_error = e;
        break;
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

bool is_fatal(const Error& e) {
  return dynamic_cast<const ConfigError*>(&e) != nullptr ||
         dynamic_cast<const ProviderError*>(&e) != nullptr;
}

GenerationUnit generate_for_claim(ModelGateway& gateway, const ExperimentConfig& cfg,
                                  const SampledClaim& sampled, int shots,
                                  SearchProvider* search) {
  GenerationUnit unit;
  if (cfg.attack == AttackKind::Admit) {
    AdmitResult admit =
        run_admit(gateway, sampled.claim, sampled.target_verdict, shots, cfg.attack_cfg, search);
    unit.statuses = admit.shot_status;
    unit.passages = admit.passages;
    unit.traces = admit.traces;
    return unit;
  }

  for (int shot = 1; shot <= shots; ++shot) {
    ShotStatus status;
    status.shot_index = shot;
    try {
      BaselineResult result;
      switch (cfg.attack) {
        case AttackKind::Pia:
          result = pia_passage(sampled.claim, sampled.target_verdict);
          break;
        case AttackKind::MisinfoQa:
          result = misinfo_passage(gateway, sampled.claim, sampled.target_verdict, cfg.attack_cfg);
          break;
        case AttackKind::PoisonedRag:
          result = poisonedrag_passage(gateway, sampled.claim, sampled.target_verdict,
                                       cfg.attack_cfg, cfg.poisonedrag_max_attempts);
          break;
        case AttackKind::CorruptRag:
          result = corruptrag_passage(sampled.claim, sampled.target_verdict);
          break;
        case AttackKind::Admit:
          throw ContractError("unreachable");
      }
      Passage passage = finalize_injected(result.passage, cfg.attack, sampled.claim.id, shot);
      status.ok = true;
      unit.passages.push_back(std::move(passage));

      AttackTrace trace;
      trace.claim_id = sampled.claim.id;
      trace.target_verdict = sampled.target_verdict;
      trace.success = result.precheck_passed;
      trace.success_iteration = result.precheck_passed ? std::max(result.attempts, 1) : 0;
      trace.usage = result.usage;
      trace.attacker_model = cfg.attack_cfg.attacker_model;
      unit.traces.push_back(std::move(trace));
    } catch (const RefusalError& e) {
      status.refused = true;
      status.error = e.what();
    } catch (const Error& e) {
      if (is_fatal(e)) throw;
      status.error = e.what();
    }
    unit.statuses.push_back(std::move(status));
  }
  return unit;
}

void render_generation_lines(GenerationUnit& unit, const std::string& manifest_hash, int shots,
                             const std::string& claim_id) {
  std::size_t generated = 0;
  for (const auto& status : unit.statuses) {
    json line = {{"schema", kResultsSchemaVersion},
                 {"manifest_hash", manifest_hash},
                 {"shots", shots},
                 {"claim_id", claim_id},
                 {"shot_index", status.shot_index},
                 {"ok", status.ok},
                 {"refused", status.refused},
                 {"error", status.error}};
    if (status.ok) {
      line["passage"] = passage_to_json(unit.passages[generated]);
      json trace_line = {{"schema", kResultsSchemaVersion},
                         {"manifest_hash", manifest_hash},
                         {"shots", shots},
                         {"claim_id", claim_id},
                         {"shot_index", status.shot_index},
                         {"trace", trace_to_json(unit.traces[generated])}};
      unit.trace_lines.push_back(std::move(trace_line));
      ++generated;
    }
    unit.passage_lines.push_back(std::move(line));
  }
}

GenerationUnit generation_from_lines(const std::vector<json>& passage_lines,
                                     const std::vector<json>& trace_lines) {
  GenerationUnit unit;
  unit.passage_lines = passage_lines;
  unit.trace_lines = trace_lines;
  for (const auto& line : passage_lines) {
    ShotStatus status;
    status.shot_index = line.at("shot_index").get<int>();
    status.ok = line.at("ok").get<bool>();
    status.refused = line.at("refused").get<bool>();
    status.error = line.value("error", "");
    if (status.ok) unit.passages.push_back(passage_from_json(line.at("passage")));
    unit.statuses.push_back(std::move(status));
  }
  for (const auto& line : trace_lines) {
    unit.traces.push_back(trace_from_json(line.at("trace")));
  }
  return unit;
}

class JsonlWriter {
 public:
  JsonlWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("cannot write " + path.string());
  }
  void write(const json& line) {
    out_ << line.dump() << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> lines;
  std::ifstream in(path);
  if (!in) return lines;
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    json parsed = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) continue;  // torn tail line from an interrupted run
    lines.push_back(std::move(parsed));
  }
  return lines;
}

EvaluationUnit evaluate_claim(ModelGateway& gateway, const ExperimentConfig& cfg,
                              const RetrievalIndex& index, const KnowledgeBase& kb,
                              const SampledClaim& sampled, int shots,
                              const GenerationUnit& generation,
                              const std::vector<Passage>& overlay) {
  EvaluationUnit unit;
  unit.hits = index.retrieve_with_overlay(sampled.claim.text, cfg.k, overlay);

  std::unordered_map<std::string, const Passage*> overlay_by_id;
  for (const auto& p : overlay) overlay_by_id[p.id] = &p;
  std::set<std::string> own_ids;
  for (const auto& p : generation.passages) own_ids.insert(p.id);

  std::vector<Passage> context;
  long retrieved_injected = 0;
  for (const auto& hit : unit.hits) {
    auto in_overlay = overlay_by_id.find(hit.passage_id);
    if (in_overlay != overlay_by_id.end()) {
      context.push_back(*in_overlay->second);
    } else {
      const Passage* p = kb.find(hit.passage_id);
      if (p == nullptr) {
        throw IntegrityError("retrieval returned a passage missing from the knowledge base",
                             hit.passage_id);
      }
      context.push_back(*p);
    }
    if (own_ids.count(hit.passage_id)) ++retrieved_injected;
  }

  ClaimResult& result = unit.result;
  result.claim_id = sampled.claim.id;
  result.clean_verdict = sampled.clean_verdict;
  result.target_verdict = sampled.target_verdict;
  result.retrieved_injected = retrieved_injected;
  result.injected_total = static_cast<long>(generation.passages.size());

  if (context.empty()) {
    result.attacked_verdict = sampled.clean_verdict;
    result.justification = "";
  } else {
    const VerifiedCall checked = verify_call(gateway, sampled.claim, context, cfg.verifier);
    unit.eval_usage += checked.usage;
    result.attacked_verdict = checked.verdict.label;
    result.justification = checked.verdict.justification;
    result.parse_failed = checked.verdict.parse_failed;
  }

  json retrieved_ids = json::array();
  for (const auto& hit : unit.hits) retrieved_ids.push_back(hit.passage_id);
  unit.result_line = {{"schema", kResultsSchemaVersion},
                      {"shots", shots},
                      {"claim_id", result.claim_id},
                      {"clean", to_string(result.clean_verdict)},
                      {"target", to_string(result.target_verdict)},
                      {"attacked", to_string(result.attacked_verdict)},
                      {"retrieved_injected", result.retrieved_injected},
                      {"injected_total", result.injected_total},
                      {"justification", result.justification},
                      {"parse_failed", result.parse_failed},
                      {"retrieved_ids", std::move(retrieved_ids)},
                      {"usage", usage_to_json(unit.eval_usage)}};

  for (const auto& defense : cfg.defenses) {
    json record;
    try {
      if (defense == "ppl") {
        DetectionReport report = ppl_detect(gateway, cfg.ppl_model_id, context);
        record = to_json(report, sampled.claim.id, defense);
      } else if (defense == "rouge") {
        RougeConsistency rc = rouge_consistency_matrix(context, 1);
        record = {{"claim_id", sampled.claim.id}, {"defense", defense}, {"matrix", rc.matrix}};
        record["clean_clean"] = rc.clean_clean ? json(*rc.clean_clean) : json();
        record["clean_adversarial"] =
            rc.clean_adversarial ? json(*rc.clean_adversarial) : json();
        record["adversarial_adversarial"] =
            rc.adversarial_adversarial ? json(*rc.adversarial_adversarial) : json();
      } else if (defense == "vote_passage") {
        ConsolidationResult consolidated =
            divide_vote_passage(gateway, sampled.claim, context, cfg.verifier);
        unit.eval_usage += consolidated.usage;
        record = to_json(consolidated, sampled.claim.id, defense);
      } else if (defense == "vote_group") {
        ConsolidationResult consolidated = divide_vote_group(
            gateway, sampled.claim, context, cfg.embed_model_id, cfg.verifier, 3);
        unit.eval_usage += consolidated.usage;
        record = to_json(consolidated, sampled.claim.id, defense);
      } else if (defense == "select") {
        ConsolidateSelectConfig sel;
        sel.generator_model_id = cfg.verifier.model_id;
        sel.judge_model_id = cfg.verifier.model_id;
        sel.embed_model_id = cfg.embed_model_id;
        sel.word_budget = cfg.verifier.max_explanation_words;
        sel.temperature = cfg.verifier.temperature;
        ConsolidationResult consolidated =
            consolidate_select(gateway, sampled.claim, context, sel);
        unit.eval_usage += consolidated.usage;
        record = to_json(consolidated, sampled.claim.id, defense);
      }
    } catch (const Error& e) {
      if (is_fatal(e)) throw;
      record = {{"claim_id", sampled.claim.id}, {"defense", defense}, {"skipped", true},
                {"reason", e.what()}};
    }
    record["schema"] = kResultsSchemaVersion;
    record["shots"] = shots;
    unit.defense_lines.push_back(std::move(record));
  }
  // usage was finalized after the result line was built; refresh it
  unit.result_line["usage"] = usage_to_json(unit.eval_usage);
  return unit;
}

}  // namespace

RunPaths run_experiment(ModelGateway& gateway, const ExperimentConfig& cfg,
                        SearchProvider* search) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  const RunPaths paths = run_paths(cfg.output_dir);

  RunManifest manifest = RunManifest::for_config(cfg);
  if (std::filesystem::exists(paths.manifest)) {
    const RunManifest existing = RunManifest::load(paths.manifest);
    if (existing.manifest_hash != manifest.manifest_hash) {
      throw ConfigError("output dir holds a run with a different configuration: " +
                        paths.manifest.string());
    }
    manifest = existing;  // keep the original creation time
  } else {
    manifest.save(paths.manifest);
  }
  const std::string& hash = manifest.manifest_hash;

  const KnowledgeBase kb = load_corpus(cfg.corpus_path, cfg.corpus_format);
  const std::vector<Claim> pool = load_claims(cfg.claims_path);
  RetrievalIndex index = cfg.index_path.empty()
                             ? RetrievalIndex::build(kb, cfg.retriever, &gateway)
                             : RetrievalIndex::load(cfg.index_path, &gateway);

  const std::vector<SampledClaim> sampled =
      sample_target_claims(gateway, pool, kb, index, cfg.verifier, cfg.quota_supported,
                           cfg.quota_refuted, cfg.sample_batch, cfg.seed);

  // Prior progress: keep any line written under the same manifest hash.
  std::map<std::string, std::vector<json>> kept_passage_lines;
  std::map<std::string, std::vector<json>> kept_trace_lines;
  std::map<std::string, json> kept_result_lines;
  std::map<std::string, std::vector<json>> kept_defense_lines;
  for (auto& line : read_jsonl(paths.passages)) {
    if (line.value("manifest_hash", "") != hash) continue;
    kept_passage_lines[unit_key(line.at("shots").get<int>(),
                                line.at("claim_id").get<std::string>())]
        .push_back(std::move(line));
  }
  for (auto& line : read_jsonl(paths.traces)) {
    if (line.value("manifest_hash", "") != hash) continue;
    kept_trace_lines[unit_key(line.at("shots").get<int>(),
                              line.at("claim_id").get<std::string>())]
        .push_back(std::move(line));
  }
  for (auto& line : read_jsonl(paths.results)) {
    if (line.value("manifest_hash", "") != hash) continue;
    // key must be built before the assignment: json's operator= takes its
    // argument by value and may move from `line` before the key expression runs
    const std::string key =
        unit_key(line.at("shots").get<int>(), line.at("claim_id").get<std::string>());
    kept_result_lines[key] = std::move(line);
  }
  for (auto& line : read_jsonl(paths.defense_records)) {
    if (line.value("manifest_hash", "") != hash) continue;
    kept_defense_lines[unit_key(line.at("shots").get<int>(),
                                line.at("claim_id").get<std::string>())]
        .push_back(std::move(line));
  }

  JsonlWriter passages_out(paths.passages);
  JsonlWriter traces_out(paths.traces);
  JsonlWriter results_out(paths.results);
  JsonlWriter defenses_out(paths.defense_records);

  json summary_per_shots = json::array();
  std::vector<AttackTrace> all_traces;

  for (const int shots : cfg.shots) {
    // generation pass
    std::vector<GenerationUnit> generations(sampled.size());
    parallel_ordered<GenerationUnit>(
        sampled.size(), cfg.workers,
        [&](std::size_t i) -> GenerationUnit {
          const std::string key = unit_key(shots, sampled[i].claim.id);
          auto kept = kept_passage_lines.find(key);
          if (kept != kept_passage_lines.end() &&
              kept->second.size() == static_cast<std::size_t>(shots)) {
            auto traces_it = kept_trace_lines.find(key);
            return generation_from_lines(
                kept->second,
                traces_it == kept_trace_lines.end() ? std::vector<json>{} : traces_it->second);
          }
          GenerationUnit unit = generate_for_claim(gateway, cfg, sampled[i], shots, search);
          render_generation_lines(unit, hash, shots, sampled[i].claim.id);
          return unit;
        },
        [&](std::size_t i, GenerationUnit& unit) {
          for (const auto& line : unit.passage_lines) passages_out.write(line);
          for (const auto& line : unit.trace_lines) traces_out.write(line);
          generations[i] = std::move(unit);
        });

    // injection scope per claim
    std::vector<Passage> everything;
    if (cfg.injection_mode == InjectionMode::AllAtOnce) {
      for (const auto& unit : generations) {
        everything.insert(everything.end(), unit.passages.begin(), unit.passages.end());
      }
    }

    // evaluation pass
    std::vector<ClaimResult> results;
    std::map<std::string, std::vector<RankedHit>> per_claim_hits;
    UsageRecord eval_usage_total;
    parallel_ordered<EvaluationUnit>(
        sampled.size(), cfg.workers,
        [&](std::size_t i) -> EvaluationUnit {
          const std::string key = unit_key(shots, sampled[i].claim.id);
          auto kept = kept_result_lines.find(key);
          auto kept_defenses = kept_defense_lines.find(key);
          const std::size_t kept_defense_count =
              kept_defenses == kept_defense_lines.end() ? 0 : kept_defenses->second.size();
          if (kept != kept_result_lines.end() && kept_defense_count == cfg.defenses.size()) {
            EvaluationUnit unit;
            unit.result_line = kept->second;
            const json& line = unit.result_line;
            unit.result.claim_id = line.at("claim_id").get<std::string>();
            unit.result.clean_verdict = label_from_string(line.at("clean").get<std::string>());
            unit.result.target_verdict = label_from_string(line.at("target").get<std::string>());
            unit.result.attacked_verdict =
                label_from_string(line.at("attacked").get<std::string>());
            unit.result.retrieved_injected = line.at("retrieved_injected").get<long>();
            unit.result.injected_total = line.at("injected_total").get<long>();
            unit.result.justification = line.at("justification").get<std::string>();
            unit.result.parse_failed = line.at("parse_failed").get<bool>();
            int rank = 0;
            for (const auto& id : line.at("retrieved_ids")) {
              unit.hits.push_back({id.get<std::string>(), 0.0, ++rank});
            }
            unit.eval_usage = usage_from_json(line.at("usage"));
            if (kept_defenses != kept_defense_lines.end()) {
              unit.defense_lines = kept_defenses->second;
            }
            return unit;
          }
          return evaluate_claim(gateway, cfg, index, kb, sampled[i], shots, generations[i],
                                cfg.injection_mode == InjectionMode::PerClaim
                                    ? generations[i].passages
                                    : everything);
        },
        [&](std::size_t i, EvaluationUnit& unit) {
          // defenses first: a result line's presence marks the claim done
          for (json defense_line : unit.defense_lines) {
            defense_line["manifest_hash"] = hash;
            defenses_out.write(defense_line);
          }
          json line = unit.result_line;
          line["manifest_hash"] = hash;
          results_out.write(line);
          results.push_back(unit.result);
          per_claim_hits[sampled[i].claim.id] = unit.hits;
          eval_usage_total += unit.eval_usage;
        });

    // ownership of every injected passage this round, for contamination
    std::map<std::string, std::string> ownership;
    for (const auto& unit : generations) {
      for (const auto& p : unit.passages) ownership[p.id] = p.target_claim_id;
    }

    std::vector<ShotStatus> attempts;
    UsageRecord attack_usage;
    for (const auto& unit : generations) {
      attempts.insert(attempts.end(), unit.statuses.begin(), unit.statuses.end());
      for (const auto& trace : unit.traces) {
        attack_usage += trace.usage;
        all_traces.push_back(trace);
      }
    }

    std::vector<ClaimResult> successes;
    for (const auto& r : results) {
      if (!r.parse_failed && r.attacked_verdict == r.target_verdict) successes.push_back(r);
    }

    json entry = {{"shots", shots}, {"claims", results.size()}};
    entry["asr_strict"] = asr(results, false);
    entry["asr_inclusive"] = asr(results, true);
    entry["nei_count"] = nei_outcomes(results);
    try {
      entry["macro_recall"] = macro_recall(results);
      entry["micro_recall"] = micro_recall(results);
    } catch (const DomainError&) {
      entry["macro_recall"] = json();
      entry["micro_recall"] = json();
    }
    entry["djr"] = successes.empty() ? json() : json(djr(successes));
    entry["cross_contamination"] = cross_contamination(per_claim_hits, ownership);
    entry["rejection_rate"] = attempts.empty() ? 0.0 : rejection_rate(attempts);
    UsageRecord total = attack_usage;
    total += eval_usage_total;
    entry["usage"] = usage_to_json(total);
    summary_per_shots.push_back(std::move(entry));
  }

  // cost table over every trace; recorded estimates win, unknown scripted
  // models fall back to zero prices
  std::map<std::string, ModelPrice> prices;
  for (const auto& trace : all_traces) prices.emplace(trace.attacker_model, ModelPrice{});
  const CostTable costs = cost_summary(all_traces, prices);
  json cost_json = {{"trace_count", costs.trace_count},
                    {"total_cost", costs.total_cost},
                    {"mean_cost", costs.mean_cost}};
  json buckets = json::array();
  for (const auto& bucket : costs.buckets) {
    buckets.push_back({{"success_iteration", bucket.success_iteration},
                       {"count", bucket.count},
                       {"mean_input_tokens", bucket.mean_input_tokens},
                       {"mean_output_tokens", bucket.mean_output_tokens},
                       {"mean_cost", bucket.mean_cost},
                       {"total_cost", bucket.total_cost}});
  }
  cost_json["buckets"] = std::move(buckets);

  json summary = {{"schema", kResultsSchemaVersion},
                  {"manifest_hash", hash},
                  {"attack", attack_name(cfg.attack)},
                  {"dataset", kb.source_name()},
                  {"k", cfg.k},
                  {"injection_mode", to_string(cfg.injection_mode)},
                  {"per_shots", std::move(summary_per_shots)},
                  {"cost", std::move(cost_json)}};
  std::ofstream summary_out(paths.summary, std::ios::trunc);
  if (!summary_out) throw ConfigError("cannot write " + paths.summary.string());
  summary_out << summary.dump(2) << "\n";

  return paths;
}

namespace {

std::string fmt(double value, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

std::string fmt_cell(const json& value, int decimals) {
  if (value.is_null()) return "-";
  return fmt(value.get<double>(), decimals);
}

void require_schema(const json& j, const std::filesystem::path& where) {
  if (j.value("schema", "") != kResultsSchemaVersion) {
    throw ConfigError("unsupported results schema in " + where.string() + " (want " +
                      kResultsSchemaVersion + ")");
  }
}

}  // namespace

std::string report(const std::vector<std::filesystem::path>& run_dirs) {
  struct Run {
    std::filesystem::path dir;
    json summary;
    std::vector<json> results;
    std::vector<json> defenses;
  };

  std::map<int, std::vector<Run>> by_k;
  for (const auto& dir : run_dirs) {
    Run run;
    run.dir = dir;
    std::ifstream in(dir / "summary.json");
    if (!in) throw ConfigError("no summary.json under " + dir.string());
    run.summary = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (run.summary.is_discarded()) throw ConfigError("bad summary.json under " + dir.string());
    require_schema(run.summary, dir / "summary.json");
    run.results = read_jsonl(dir / "results.jsonl");
    for (const auto& line : run.results) require_schema(line, dir / "results.jsonl");
    run.defenses = read_jsonl(dir / "defenses.jsonl");
    by_k[run.summary.value("k", 0)].push_back(std::move(run));
  }

  std::ostringstream out;
  for (const auto& [k, runs] : by_k) {
    out << "== top-k = " << k << " ==\n";
    for (const auto& run : runs) {
      std::vector<int> shots;
      for (const auto& entry : run.summary.at("per_shots")) {
        shots.push_back(entry.at("shots").get<int>());
      }

      out << "dataset=" << run.summary.value("dataset", "?")
          << " attack=" << run.summary.value("attack", "?")
          << " mode=" << run.summary.value("injection_mode", "?") << "\n";
      out << "  metric          ";
      for (const int s : shots) out << " " << s << "-shot ";
      out << "\n";

      auto row = [&](const std::string& name, const std::string& field, int decimals) {
        out << "  " << name;
        for (std::size_t pad = name.size(); pad < 16; ++pad) out << ' ';
        for (const auto& entry : run.summary.at("per_shots")) {
          out << " " << fmt_cell(entry.at(field), decimals) << " ";
        }
        out << "\n";
      };
      row("recall(macro)", "macro_recall", 3);
      row("recall(micro)", "micro_recall", 3);
      row("asr_strict", "asr_strict", 3);
      row("asr_inclusive", "asr_inclusive", 3);
      row("djr", "djr", 3);
      row("contamination", "cross_contamination", 3);
      row("rejection", "rejection_rate", 3);

      // defense deltas: replace the attacked verdict with each defense's
      // final verdict and recompute strict ASR
      std::map<std::string, std::map<int, std::pair<long, long>>> defended;  // name -> shots -> (hits, n)
      std::map<std::pair<int, std::string>, std::string> targets;
      for (const auto& line : run.results) {
        targets[{line.at("shots").get<int>(), line.at("claim_id").get<std::string>()}] =
            line.at("target").get<std::string>();
      }
      for (const auto& line : run.defenses) {
        if (!line.contains("final_verdict")) continue;
        const int s = line.at("shots").get<int>();
        const std::string claim_id = line.at("claim_id").get<std::string>();
        auto target = targets.find({s, claim_id});
        if (target == targets.end()) continue;
        auto& cell = defended[line.at("defense").get<std::string>()][s];
        cell.second++;
        if (line.at("final_verdict").get<std::string>() == target->second) cell.first++;
      }
      if (!defended.empty()) {
        out << "  defense deltas (asr_strict):\n";
        for (const auto& [name, cells] : defended) {
          out << "    " << name;
          for (std::size_t pad = name.size(); pad < 14; ++pad) out << ' ';
          for (const auto& entry : run.summary.at("per_shots")) {
            const int s = entry.at("shots").get<int>();
            auto cell = cells.find(s);
            if (cell == cells.end() || cell->second.second == 0) {
              out << " -      ";
              continue;
            }
            const double defended_asr = static_cast<double>(cell->second.first) /
                                        static_cast<double>(cell->second.second);
            const double base = entry.at("asr_strict").get<double>();
            const double delta = defended_asr - base;
            out << " " << (delta >= 0 ? "+" : "") << fmt(delta, 3) << " ";
          }
          out << "\n";
        }
      }

      const json& cost = run.summary.at("cost");
      out << "  cost: traces=" << cost.at("trace_count").get<long>()
          << " total=" << fmt(cost.at("total_cost").get<double>(), 4)
          << " mean=" << fmt(cost.at("mean_cost").get<double>(), 4) << "\n";
      for (const auto& bucket : cost.at("buckets")) {
        out << "    iteration " << bucket.at("success_iteration").get<int>() << ": count "
            << bucket.at("count").get<long>() << ", mean cost "
            << fmt(bucket.at("mean_cost").get<double>(), 4) << "\n";
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace ragfc
