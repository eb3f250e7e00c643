#include "ragfc/cli.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ragfc/backends.hpp"
#include "ragfc/baselines.hpp"
#include "ragfc/errors.hpp"
#include "ragfc/harness.hpp"
#include "ragfc/scripted_demo.hpp"
#include "ragfc/verifier.hpp"

namespace ragfc {

namespace {

using nlohmann::json;

std::shared_ptr<Backend> make_backend(const ExperimentConfig& cfg) {
  std::shared_ptr<Backend> base;
  if (cfg.backend == "scripted") {
    base = make_demo_backend();
  } else if (cfg.backend == "fixture") {
    base = std::make_shared<FixtureBackend>(cfg.fixture_path);
  } else {
    base = make_http_backend_from_env(cfg.provider);
  }
  if (!cfg.record_path.empty()) {
    base = std::make_shared<RecordingBackend>(base, cfg.record_path);
  }
  return base;
}

ExperimentConfig config_from_flags(const std::string& config_path, const std::string& output_dir,
                                   int workers, const std::string& backend) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (workers > 0) cfg.workers = workers;
  if (!backend.empty()) cfg.backend = backend;
  return cfg;
}

CorpusFormat parse_format(const std::string& name) {
  if (name == "jsonl") return CorpusFormat::Jsonl;
  if (name == "tsv") return CorpusFormat::Tsv;
  throw ConfigError("unknown corpus format: " + name);
}

int run_index(const std::string& corpus, const std::string& format, const std::string& out_path,
              const std::string& kind, const std::string& similarity,
              const std::string& embedding_model, const std::string& backend_name,
              std::ostream& out) {
  ExperimentConfig stub;
  stub.backend = backend_name;
  auto backend = make_backend(stub);
  ModelGateway gateway(backend, {});

  IndexSpec spec;
  spec.kind = kind == "dense" ? IndexKind::DenseEmbedding : IndexKind::SparseBm25;
  spec.similarity = similarity == "cosine" ? Similarity::Cosine : Similarity::Dot;
  spec.embedding_model_id = embedding_model;

  const KnowledgeBase kb = load_corpus(corpus, parse_format(format));
  RetrievalIndex index = RetrievalIndex::build(kb, spec, &gateway);
  index.save(out_path);
  out << "indexed " << index.size() << " passages -> " << out_path << "\n";
  return 0;
}

int run_sample(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& out) {
  auto backend = make_backend(cfg);
  ModelGateway gateway(backend, {});
  const KnowledgeBase kb = load_corpus(cfg.corpus_path, cfg.corpus_format);
  const std::vector<Claim> pool = load_claims(cfg.claims_path);
  RetrievalIndex index = cfg.index_path.empty()
                             ? RetrievalIndex::build(kb, cfg.retriever, &gateway)
                             : RetrievalIndex::load(cfg.index_path, &gateway);
  const std::vector<SampledClaim> sampled =
      sample_target_claims(gateway, pool, kb, index, cfg.verifier, cfg.quota_supported,
                           cfg.quota_refuted, cfg.sample_batch, cfg.seed);

  std::ofstream file;
  std::ostream* sink = &out;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw ConfigError("cannot write " + out_path);
    sink = &file;
  }
  for (const auto& s : sampled) {
    *sink << json{{"claim_id", s.claim.id},
                  {"text", s.claim.text},
                  {"clean", to_string(s.clean_verdict)},
                  {"target", to_string(s.target_verdict)}}
                 .dump()
          << "\n";
  }
  if (!out_path.empty()) out << "sampled " << sampled.size() << " claims -> " << out_path << "\n";
  return 0;
}

int run_attack(const ExperimentConfig& cfg, const std::string& claim_id,
               const std::string& claim_text, const std::string& target, int shots,
               std::ostream& out) {
  auto backend = make_backend(cfg);
  ModelGateway gateway(backend, {});
  Claim claim;
  claim.id = claim_id;
  claim.text = claim_text;
  const ParsedVerdict parsed = parse_verdict(target);
  if (!parsed.ok || parsed.label == VerdictLabel::Nei) {
    throw ConfigError("attack target must be SUPPORTED or REFUTED");
  }

  std::vector<Passage> passages;
  if (cfg.attack == AttackKind::Admit) {
    AdmitResult result = run_admit(gateway, claim, parsed.label, shots, cfg.attack_cfg, nullptr);
    passages = result.passages;
  } else {
    for (int shot = 1; shot <= shots; ++shot) {
      BaselineResult r;
      switch (cfg.attack) {
        case AttackKind::Pia: r = pia_passage(claim, parsed.label); break;
        case AttackKind::MisinfoQa:
          r = misinfo_passage(gateway, claim, parsed.label, cfg.attack_cfg);
          break;
        case AttackKind::PoisonedRag:
          r = poisonedrag_passage(gateway, claim, parsed.label, cfg.attack_cfg,
                                  cfg.poisonedrag_max_attempts);
          break;
        case AttackKind::CorruptRag: r = corruptrag_passage(claim, parsed.label); break;
        case AttackKind::Admit: break;
      }
      passages.push_back(finalize_injected(r.passage, cfg.attack, claim.id, shot));
    }
  }
  for (const auto& p : passages) {
    out << json{{"id", p.id},
                {"title", p.title},
                {"text", p.text},
                {"attack", p.attack_name},
                {"target_claim_id", p.target_claim_id},
                {"shot_index", p.shot_index}}
               .dump()
        << "\n";
  }
  return 0;
}

std::vector<Passage> load_passage_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open passages file: " + path);
  std::vector<Passage> passages;
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ParseError("bad JSON in passages file", path, line_number);
    if (j.contains("passage")) j = j["passage"];  // harness passages.jsonl shape
    if (!j.value("ok", true)) continue;           // failed generation attempts carry no passage
    Passage p;
    p.id = j.at("id").get<std::string>();
    p.title = j.value("title", "");
    p.text = j.at("text").get<std::string>();
    p.attack_name = j.value("attack", "unknown");
    p.target_claim_id = j.value("target_claim_id", "");
    p.shot_index = j.value("shot_index", 0);
    p.provenance = Provenance::Injected;
    passages.push_back(std::move(p));
  }
  return passages;
}

int run_inject(const std::string& corpus, const std::string& format,
               const std::string& passages_path, const std::string& out_path, std::ostream& out) {
  const KnowledgeBase kb = load_corpus(corpus, parse_format(format));
  const std::vector<Passage> injected = load_passage_lines(passages_path);
  const KnowledgeBase poisoned = inject(kb, injected);

  std::ofstream file(out_path, std::ios::trunc);
  if (!file) throw ConfigError("cannot write " + out_path);
  auto dump = [&file](const Passage& p) {
    json j = {{"_id", p.id}, {"title", p.title}, {"text", p.text},
              {"provenance", p.injected() ? "injected" : "clean"}};
    if (p.injected()) {
      j["attack"] = p.attack_name;
      j["target_claim_id"] = p.target_claim_id;
      j["shot_index"] = p.shot_index;
    }
    file << j.dump() << "\n";
  };
  for (const auto& p : poisoned.clean_passages()) dump(p);
  for (const auto& p : poisoned.injected_passages()) dump(p);
  out << "wrote " << poisoned.total_count() << " passages (" << poisoned.injected_count()
      << " injected) -> " << out_path << "\n";
  return 0;
}

int run_verify(const ExperimentConfig& cfg, const std::string& only_claim, std::ostream& out) {
  auto backend = make_backend(cfg);
  ModelGateway gateway(backend, {});
  const KnowledgeBase kb = load_corpus(cfg.corpus_path, cfg.corpus_format);
  const std::vector<Claim> claims = load_claims(cfg.claims_path);
  RetrievalIndex index = cfg.index_path.empty()
                             ? RetrievalIndex::build(kb, cfg.retriever, &gateway)
                             : RetrievalIndex::load(cfg.index_path, &gateway);

  for (const auto& claim : claims) {
    if (!only_claim.empty() && claim.id != only_claim) continue;
    const std::vector<RankedHit> hits = index.retrieve(claim.text, cfg.verifier.k);
    std::vector<Passage> context;
    for (const auto& hit : hits) {
      const Passage* p = kb.find(hit.passage_id);
      if (p != nullptr) context.push_back(*p);
    }
    if (context.empty()) {
      out << json{{"claim_id", claim.id}, {"error", "no retrievable context"}}.dump() << "\n";
      continue;
    }
    const Verdict verdict = verify(gateway, claim, context, cfg.verifier);
    out << json{{"claim_id", claim.id},
                {"verdict", to_string(verdict.label)},
                {"justification", verdict.justification},
                {"parse_failed", verdict.parse_failed}}
               .dump()
        << "\n";
  }
  return 0;
}

int run_defend(const ExperimentConfig& cfg, const std::string& passages_path, std::ostream& out) {
  if (cfg.defenses.empty()) throw ConfigError("defend: config lists no defenses");
  auto backend = make_backend(cfg);
  ModelGateway gateway(backend, {});
  const KnowledgeBase clean = load_corpus(cfg.corpus_path, cfg.corpus_format);
  const KnowledgeBase kb = inject(clean, load_passage_lines(passages_path));
  const std::vector<Claim> claims = load_claims(cfg.claims_path);
  RetrievalIndex index = RetrievalIndex::build(kb, cfg.retriever, &gateway);

  for (const auto& claim : claims) {
    const std::vector<RankedHit> hits = index.retrieve(claim.text, cfg.k);
    std::vector<Passage> context;
    for (const auto& hit : hits) {
      const Passage* p = kb.find(hit.passage_id);
      if (p != nullptr) context.push_back(*p);
    }
    if (context.empty()) continue;
    for (const auto& defense : cfg.defenses) {
      json record;
      try {
        if (defense == "ppl") {
          record = to_json(ppl_detect(gateway, cfg.ppl_model_id, context), claim.id, defense);
        } else if (defense == "rouge") {
          RougeConsistency rc = rouge_consistency_matrix(context, 1);
          record = {{"claim_id", claim.id}, {"defense", defense}, {"matrix", rc.matrix}};
        } else if (defense == "vote_passage") {
          record = to_json(divide_vote_passage(gateway, claim, context, cfg.verifier), claim.id,
                           defense);
        } else if (defense == "vote_group") {
          record = to_json(
              divide_vote_group(gateway, claim, context, cfg.embed_model_id, cfg.verifier, 3),
              claim.id, defense);
        } else if (defense == "select") {
          ConsolidateSelectConfig sel;
          sel.generator_model_id = cfg.verifier.model_id;
          sel.judge_model_id = cfg.verifier.model_id;
          sel.embed_model_id = cfg.embed_model_id;
          sel.word_budget = cfg.verifier.max_explanation_words;
          sel.temperature = cfg.verifier.temperature;
          record = to_json(consolidate_select(gateway, claim, context, sel), claim.id, defense);
        }
      } catch (const DomainError& e) {
        record = {{"claim_id", claim.id}, {"defense", defense}, {"skipped", true},
                  {"reason", e.what()}};
      }
      out << record.dump() << "\n";
    }
  }
  return 0;
}

int run_evaluate(const ExperimentConfig& cfg, std::ostream& out) {
  auto backend = make_backend(cfg);
  ModelGateway gateway(backend, {});
  const RunPaths paths = run_experiment(gateway, cfg, nullptr);
  out << "results: " << paths.results.string() << "\n";
  out << "summary: " << paths.summary.string() << "\n";
  return 0;
}

int run_replay(const std::string& run_dir, const std::string& out_dir, std::ostream& out) {
  const RunPaths original = run_paths(run_dir);
  const RunManifest manifest = RunManifest::load(original.manifest);
  ExperimentConfig cfg = experiment_config_from_json(manifest.config_snapshot);
  cfg.output_dir = out_dir.empty() ? run_dir + "_replay" : out_dir;
  if (!cfg.record_path.empty()) {
    // re-serve the recorded responses instead of recording again
    cfg.backend = "fixture";
    cfg.fixture_path = cfg.record_path;
    cfg.record_path.clear();
  }

  auto backend = make_backend(cfg);
  ModelGateway gateway(backend, {});
  const RunPaths replayed = run_experiment(gateway, cfg, nullptr);

  const std::string original_hash = sha256_file(original.results);
  const std::string replay_hash = sha256_file(replayed.results);
  const bool match = original_hash == replay_hash;
  out << "original results sha256: " << original_hash << "\n";
  out << "replayed results sha256: " << replay_hash << "\n";
  out << (match ? "MATCH" : "MISMATCH") << "\n";
  return match ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"few-shot knowledge poisoning harness for retrieval-backed fact checking"};
  app.require_subcommand(1);

  // index
  auto* index_cmd = app.add_subcommand("index", "build and save a retrieval index");
  std::string corpus, format = "jsonl", out_path, kind = "bm25", similarity = "dot";
  std::string embedding_model, backend_name = "scripted";
  index_cmd->add_option("--corpus", corpus)->required();
  index_cmd->add_option("--format", format);
  index_cmd->add_option("--out", out_path)->required();
  index_cmd->add_option("--kind", kind);
  index_cmd->add_option("--similarity", similarity);
  index_cmd->add_option("--embedding-model", embedding_model);
  index_cmd->add_option("--backend", backend_name);

  // shared config-driven flags
  std::string config_path, output_dir, backend_override;
  int workers = 0;
  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path)->required();
    cmd->add_option("--output", output_dir);
    cmd->add_option("--workers", workers);
    cmd->add_option("--backend", backend_override);
  };

  auto* sample_cmd = app.add_subcommand("sample", "pick target claims with clean verdicts");
  std::string sample_out;
  add_config_flags(sample_cmd);
  sample_cmd->add_option("--out", sample_out);

  auto* attack_cmd = app.add_subcommand("attack", "generate adversarial passages for one claim");
  std::string claim_id = "claim-1", claim_text, target = "REFUTED";
  int shots = 1;
  add_config_flags(attack_cmd);
  attack_cmd->add_option("--claim-id", claim_id);
  attack_cmd->add_option("--claim", claim_text)->required();
  attack_cmd->add_option("--target", target);
  attack_cmd->add_option("--shots", shots);

  auto* inject_cmd = app.add_subcommand("inject", "write a corpus with passages injected");
  std::string inject_corpus, inject_format = "jsonl", passages_path, inject_out;
  inject_cmd->add_option("--corpus", inject_corpus)->required();
  inject_cmd->add_option("--format", inject_format);
  inject_cmd->add_option("--passages", passages_path)->required();
  inject_cmd->add_option("--out", inject_out)->required();

  auto* verify_cmd = app.add_subcommand("verify", "fact-check claims over the clean corpus");
  std::string only_claim;
  add_config_flags(verify_cmd);
  verify_cmd->add_option("--claim-id", only_claim);

  auto* defend_cmd = app.add_subcommand("defend", "run configured defenses over a poisoned corpus");
  std::string defend_passages;
  add_config_flags(defend_cmd);
  defend_cmd->add_option("--passages", defend_passages)->required();

  auto* evaluate_cmd = app.add_subcommand("evaluate", "run the full experiment from a config");
  add_config_flags(evaluate_cmd);

  auto* report_cmd = app.add_subcommand("report", "render tables for finished runs");
  std::vector<std::string> run_dirs;
  report_cmd->add_option("dirs", run_dirs)->required();

  auto* replay_cmd = app.add_subcommand("replay", "re-run a finished run and compare bytes");
  std::string replay_run, replay_out;
  replay_cmd->add_option("--run", replay_run)->required();
  replay_cmd->add_option("--out", replay_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (index_cmd->parsed()) {
      return run_index(corpus, format, out_path, kind, similarity, embedding_model, backend_name,
                       out);
    }
    if (sample_cmd->parsed()) {
      return run_sample(config_from_flags(config_path, output_dir, workers, backend_override),
                        sample_out, out);
    }
    if (attack_cmd->parsed()) {
      return run_attack(config_from_flags(config_path, output_dir, workers, backend_override),
                        claim_id, claim_text, target, shots, out);
    }
    if (inject_cmd->parsed()) {
      return run_inject(inject_corpus, inject_format, passages_path, inject_out, out);
    }
    if (verify_cmd->parsed()) {
      return run_verify(config_from_flags(config_path, output_dir, workers, backend_override),
                        only_claim, out);
    }
    if (defend_cmd->parsed()) {
      return run_defend(config_from_flags(config_path, output_dir, workers, backend_override),
                        defend_passages, out);
    }
    if (evaluate_cmd->parsed()) {
      return run_evaluate(config_from_flags(config_path, output_dir, workers, backend_override),
                          out);
    }
    if (report_cmd->parsed()) {
      std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
      out << report(dirs);
      return 0;
    }
    if (replay_cmd->parsed()) {
      return run_replay(replay_run, replay_out, out);
    }
    err << "error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ProviderError& e) {
    err << "provider error: " << e.what() << "\n";
    return 3;
  } catch (const QuotaError& e) {
    err << "quota error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ragfc
