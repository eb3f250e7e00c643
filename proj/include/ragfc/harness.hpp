#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragfc/attack.hpp"
#include "ragfc/baselines.hpp"
#include "ragfc/corpus.hpp"
#include "ragfc/defenses.hpp"
#include "ragfc/gateway.hpp"
#include "ragfc/metrics.hpp"
#include "ragfc/retrieval.hpp"
#include "ragfc/verifier.hpp"

namespace ragfc {

inline constexpr const char* kResultsSchemaVersion = "v1";

enum class InjectionMode { PerClaim, AllAtOnce };

std::string to_string(InjectionMode mode);
InjectionMode parse_injection_mode(const std::string& name);

struct ExperimentConfig {
  std::filesystem::path corpus_path;
  CorpusFormat corpus_format = CorpusFormat::Jsonl;
  std::filesystem::path claims_path;
  std::filesystem::path index_path;  // optional prebuilt index; built from the corpus when empty
  IndexSpec retriever;
  int k = 5;
  std::vector<int> shots = {1, 2, 3, 4, 5};
  AttackKind attack = AttackKind::Admit;
  std::vector<std::string> defenses;  // ppl, rouge, vote_passage, vote_group, select
  InjectionMode injection_mode = InjectionMode::PerClaim;
  AttackConfig attack_cfg;
  VerifierConfig verifier;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  int quota_supported = 50;
  int quota_refuted = 50;
  int sample_batch = 10;
  int workers = 1;
  int poisonedrag_max_attempts = 3;
  std::string ppl_model_id = "scripted-scorer";
  std::string embed_model_id = "scripted-embedder";  // defenses that cluster

  // Transport: which backend serves the model calls. These knobs (plus
  // output_dir and workers) do not enter the manifest hash, so a replay into
  // a new directory still writes records under the original hash.
  std::string backend = "scripted";        // scripted | fixture | openai
  std::filesystem::path fixture_path;      // replay source when backend=fixture
  std::filesystem::path record_path;       // optional recording sink
  std::string provider = "openai";         // env-var prefix for the http backend

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct RunManifest {
  nlohmann::json config_snapshot;
  std::string template_version;
  std::string schema_version = kResultsSchemaVersion;
  std::map<std::string, std::string> input_digests;  // path -> sha256 of bytes
  std::string manifest_hash;  // content hash over everything except timestamps
  std::string created_at;

  static RunManifest for_config(const ExperimentConfig& cfg);
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

struct SampledClaim {
  Claim claim;
  VerdictLabel clean_verdict = VerdictLabel::Nei;
  VerdictLabel target_verdict = VerdictLabel::Nei;
};

// Shuffles the pool under the seed, then walks it in batches, fact-checking
// each claim over the clean top-k. Non-NEI claims fill their label's quota;
// the target verdict is the flipped clean verdict. Exhausting the pool
// before both quotas fill raises a quota error carrying the achieved counts.
std::vector<SampledClaim> sample_target_claims(ModelGateway& gateway,
                                               const std::vector<Claim>& pool,
                                               const KnowledgeBase& kb,
                                               const RetrievalIndex& index,
                                               const VerifierConfig& verifier,
                                               int quota_supported, int quota_refuted, int batch,
                                               std::uint64_t seed);

struct RunPaths {
  std::filesystem::path manifest;
  std::filesystem::path passages;
  std::filesystem::path results;
  std::filesystem::path traces;
  std::filesystem::path defense_records;
  std::filesystem::path summary;
};

RunPaths run_paths(const std::filesystem::path& output_dir);

// Executes the full experiment: sample targets, generate attack passages per
// shot count, inject, retrieve, verify, run defenses, and persist manifest,
// per-claim results, attack traces and summary. Line-delimited outputs are
// committed in a fixed order so reruns are byte-identical. Existing result
// lines whose manifest hash matches are kept and their claims skipped.
RunPaths run_experiment(ModelGateway& gateway, const ExperimentConfig& cfg,
                        SearchProvider* search = nullptr);

// Renders ASR/recall tables (one column per shot count), defense deltas and
// the cost table for one or more finished runs, grouped by retrieval depth.
std::string report(const std::vector<std::filesystem::path>& run_dirs);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace ragfc
