#include "ragfc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ragfc/text.hpp"

namespace ragfc {

namespace {

using nlohmann::json;

constexpr int kIndexFormatVersion = 1;

struct Candidate {
  double score = 0.0;
  const std::string* id = nullptr;
};

std::vector<RankedHit> take_top_k(std::vector<Candidate>& candidates, int k) {
  const std::size_t take = std::min(candidates.size(), static_cast<std::size_t>(k));
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return *a.id < *b.id;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(take),
                    candidates.end(), better);
  std::vector<RankedHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    hits.push_back({*candidates[i].id, candidates[i].score, static_cast<int>(i + 1)});
  }
  return hits;
}

double bm25_idf(long long n_docs, long long df) {
  return std::log(1.0 + (static_cast<double>(n_docs) - static_cast<double>(df) + 0.5) /
                            (static_cast<double>(df) + 0.5));
}

double bm25_term(double idf, double tf, double doc_len, double avgdl, const Bm25Params& p) {
  return idf * (tf * (p.k1 + 1.0)) / (tf + p.k1 * (1.0 - p.b + p.b * doc_len / avgdl));
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

std::filesystem::path sidecar_path(const std::filesystem::path& header) {
  std::filesystem::path p = header;
  p += ".vec";
  return p;
}

}  // namespace

std::string indexed_text(const Passage& passage) {
  if (passage.title.empty()) return passage.text;
  return passage.title + " " + passage.text;
}

RetrievalIndex RetrievalIndex::build(const KnowledgeBase& kb, const IndexSpec& spec,
                                     ModelGateway* gateway) {
  if (spec.kind == IndexKind::DenseEmbedding) {
    if (gateway == nullptr) throw ContractError("dense index requires an embedding gateway");
    if (spec.embedding_model_id.empty()) {
      throw ConfigError("dense index requires embedding_model_id");
    }
  }
  RetrievalIndex index;
  index.spec_ = spec;
  index.gateway_ = gateway;

  std::vector<Passage> snapshot;
  snapshot.reserve(kb.total_count());
  snapshot.insert(snapshot.end(), kb.clean_passages().begin(), kb.clean_passages().end());
  snapshot.insert(snapshot.end(), kb.injected_passages().begin(), kb.injected_passages().end());
  index.index_documents(snapshot);
  return index;
}

void RetrievalIndex::add_passages(std::span<const Passage> passages) {
  if (disk_backed_) throw ContractError("disk-backed index is read-only; rebuild instead");
  index_documents(passages);
}

void RetrievalIndex::index_documents(std::span<const Passage> passages) {
  for (const Passage& p : passages) {
    if (!ids_.insert(p.id).second) {
      throw IntegrityError("passage id already indexed", p.id);
    }
  }

  if (spec_.kind == IndexKind::SparseBm25) {
    for (const Passage& p : passages) {
      const auto ordinal = static_cast<std::uint32_t>(docs_.size());
      std::vector<std::string> tokens = tokenize_alnum(indexed_text(p));
      std::unordered_map<std::string, std::uint32_t> tf;
      for (const std::string& t : tokens) ++tf[t];
      for (const auto& [term, count] : tf) postings_[term].emplace_back(ordinal, count);
      docs_.push_back({p.id, static_cast<long>(tokens.size())});
      total_length_ += static_cast<long long>(tokens.size());
    }
    // Ordinal order within each posting list keeps merges deterministic.
    for (auto& [term, list] : postings_) {
      std::sort(list.begin(), list.end());
    }
    return;
  }

  constexpr std::size_t kBatch = 64;
  for (std::size_t start = 0; start < passages.size(); start += kBatch) {
    const std::size_t end = std::min(passages.size(), start + kBatch);
    EmbedRequest req;
    req.model_id = spec_.embedding_model_id;
    for (std::size_t i = start; i < end; ++i) req.texts.push_back(indexed_text(passages[i]));
    std::vector<std::vector<double>> rows;
    try {
      rows = gateway_->embed(req);
    } catch (const ProviderError& e) {
      throw ProviderError(e.kind(),
                          std::string(e.what()) + " while embedding passage " + passages[start].id,
                          e.digest());
    }
    for (std::size_t i = start; i < end; ++i) {
      const std::vector<double>& row = rows[i - start];
      if (dim_ == 0 && docs_.empty()) {
        dim_ = row.size();
      }
      if (row.size() != dim_) {
        throw IntegrityError("embedding dimension mismatch", passages[i].id);
      }
      vectors_.insert(vectors_.end(), row.begin(), row.end());
      row_norms_.push_back(norm(row.data(), row.size()));
      docs_.push_back({passages[i].id, static_cast<long>(count_words(passages[i].text))});
    }
  }
}

std::vector<double> RetrievalIndex::embed_cached(const std::string& text) const {
  {
    std::lock_guard<std::mutex> lock(embed_cache_->mutex);
    auto it = embed_cache_->by_text.find(text);
    if (it != embed_cache_->by_text.end()) return it->second;
  }
  EmbedRequest req;
  req.model_id = spec_.embedding_model_id;
  req.texts.push_back(text);
  std::vector<double> vec = gateway_->embed(req)[0];
  std::lock_guard<std::mutex> lock(embed_cache_->mutex);
  return embed_cache_->by_text.emplace(text, std::move(vec)).first->second;
}

std::vector<RankedHit> RetrievalIndex::retrieve(const std::string& query, int k) const {
  return retrieve_with_overlay(query, k, {});
}

std::vector<RankedHit> RetrievalIndex::retrieve_with_overlay(
    const std::string& query, int k, std::span<const Passage> overlay) const {
  if (k < 1) throw ContractError("retrieve: k must be >= 1");
  for (const Passage& p : overlay) {
    if (ids_.count(p.id) != 0) {
      throw IntegrityError("overlay passage id collides with indexed id", p.id);
    }
  }
  if (spec_.kind == IndexKind::SparseBm25) return ranked_bm25(query, k, overlay);
  return ranked_dense(query, k, overlay);
}

std::vector<RankedHit> RetrievalIndex::ranked_bm25(const std::string& query, int k,
                                                   std::span<const Passage> overlay) const {
  const std::vector<std::string> query_tokens = tokenize_alnum(query);

  struct OverlayDoc {
    const std::string* id;
    std::unordered_map<std::string, std::uint32_t> tf;
    long length;
  };
  std::vector<OverlayDoc> extra;
  extra.reserve(overlay.size());
  for (const Passage& p : overlay) {
    std::vector<std::string> tokens = tokenize_alnum(indexed_text(p));
    OverlayDoc doc{&p.id, {}, static_cast<long>(tokens.size())};
    for (const std::string& t : tokens) ++doc.tf[t];
    extra.push_back(std::move(doc));
  }

  const long long n_docs = static_cast<long long>(docs_.size() + extra.size());
  if (n_docs == 0) return {};
  long long total = total_length_;
  for (const OverlayDoc& d : extra) total += d.length;
  const double avgdl = static_cast<double>(total) / static_cast<double>(n_docs);

  std::vector<double> base_scores(docs_.size(), 0.0);
  std::vector<double> extra_scores(extra.size(), 0.0);
  for (const std::string& token : query_tokens) {
    auto it = postings_.find(token);
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>* list =
        it == postings_.end() ? nullptr : &it->second;
    long long df = list == nullptr ? 0 : static_cast<long long>(list->size());
    for (const OverlayDoc& d : extra) df += d.tf.count(token) != 0 ? 1 : 0;
    if (df == 0) continue;
    const double idf = bm25_idf(n_docs, df);
    if (list != nullptr) {
      for (const auto& [ordinal, tf] : *list) {
        base_scores[ordinal] += bm25_term(idf, static_cast<double>(tf),
                                          static_cast<double>(docs_[ordinal].length), avgdl,
                                          spec_.bm25);
      }
    }
    for (std::size_t i = 0; i < extra.size(); ++i) {
      auto tf_it = extra[i].tf.find(token);
      if (tf_it == extra[i].tf.end()) continue;
      extra_scores[i] += bm25_term(idf, static_cast<double>(tf_it->second),
                                   static_cast<double>(extra[i].length), avgdl, spec_.bm25);
    }
  }

  std::vector<Candidate> candidates;
  candidates.reserve(docs_.size() + extra.size());
  for (std::size_t i = 0; i < docs_.size(); ++i) candidates.push_back({base_scores[i], &docs_[i].id});
  for (std::size_t i = 0; i < extra.size(); ++i) candidates.push_back({extra_scores[i], extra[i].id});
  return take_top_k(candidates, k);
}

std::vector<RankedHit> RetrievalIndex::ranked_dense(const std::string& query, int k,
                                                    std::span<const Passage> overlay) const {
  const std::vector<double> q = embed_cached(query);
  if (q.size() != dim_ && !docs_.empty()) {
    throw ProviderError(ProviderErrorKind::BadResponse,
                        "query embedding dimension does not match index", "");
  }
  const double q_norm = norm(q.data(), q.size());
  const bool cosine = spec_.similarity == Similarity::Cosine;

  std::vector<double> scores(docs_.size(), 0.0);
  for_each_block([&](std::size_t first_row, std::size_t rows, const double* data) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double raw = dot(data + r * dim_, q.data(), dim_);
      if (cosine) {
        const double denom = row_norms_[first_row + r] * q_norm;
        scores[first_row + r] = denom == 0.0 ? 0.0 : raw / denom;
      } else {
        scores[first_row + r] = raw;
      }
    }
  });

  std::vector<Candidate> candidates;
  candidates.reserve(docs_.size() + overlay.size());
  for (std::size_t i = 0; i < docs_.size(); ++i) candidates.push_back({scores[i], &docs_[i].id});
  for (const Passage& p : overlay) {
    const std::vector<double> v = embed_cached(indexed_text(p));
    if (v.size() != dim_) throw IntegrityError("overlay embedding dimension mismatch", p.id);
    const double raw = dot(v.data(), q.data(), dim_);
    double score = raw;
    if (cosine) {
      const double denom = norm(v.data(), v.size()) * q_norm;
      score = denom == 0.0 ? 0.0 : raw / denom;
    }
    candidates.push_back({score, &p.id});
  }
  return take_top_k(candidates, k);
}

void RetrievalIndex::for_each_block(
    const std::function<void(std::size_t, std::size_t, const double*)>& fn) const {
  const std::size_t block = spec_.block_rows == 0 ? 4096 : spec_.block_rows;
  if (!disk_backed_) {
    for (std::size_t first = 0; first < docs_.size(); first += block) {
      const std::size_t rows = std::min(block, docs_.size() - first);
      fn(first, rows, vectors_.data() + first * dim_);
    }
    return;
  }
  std::ifstream in(vector_file_, std::ios::binary);
  if (!in) throw ConfigError("cannot open vector file: " + vector_file_.string());
  std::vector<double> buffer(block * dim_);
  for (std::size_t first = 0; first < docs_.size(); first += block) {
    const std::size_t rows = std::min(block, docs_.size() - first);
    in.read(reinterpret_cast<char*>(buffer.data()),
            static_cast<std::streamsize>(rows * dim_ * sizeof(double)));
    if (!in) throw ConfigError("vector file truncated: " + vector_file_.string());
    fn(first, rows, buffer.data());
  }
}

void RetrievalIndex::save(const std::filesystem::path& path) const {
  json header;
  header["version"] = kIndexFormatVersion;
  header["kind"] = spec_.kind == IndexKind::SparseBm25 ? "bm25" : "dense";
  header["similarity"] = spec_.similarity == Similarity::Cosine ? "cosine" : "dot";
  header["bm25"] = {{"k1", spec_.bm25.k1}, {"b", spec_.bm25.b}};
  header["embedding_model_id"] = spec_.embedding_model_id;
  header["total_length"] = total_length_;
  json docs = json::array();
  for (const Doc& d : docs_) docs.push_back({d.id, d.length});
  header["docs"] = std::move(docs);

  if (spec_.kind == IndexKind::SparseBm25) {
    json postings = json::object();
    for (const auto& [term, list] : postings_) {
      json entries = json::array();
      for (const auto& [ordinal, tf] : list) entries.push_back({ordinal, tf});
      postings[term] = std::move(entries);
    }
    header["postings"] = std::move(postings);
  } else {
    header["dim"] = dim_;
    header["row_norms"] = row_norms_;
    const std::filesystem::path vec_path = sidecar_path(path);
    if (disk_backed_ && std::filesystem::exists(vector_file_) &&
        std::filesystem::exists(vec_path) &&
        std::filesystem::equivalent(vec_path, vector_file_)) {
      // Re-saving a disk-backed index in place: the sidecar is already there.
      std::ofstream out(path, std::ios::trunc);
      if (!out) throw ConfigError("cannot write index file: " + path.string());
      out << header.dump() << '\n';
      return;
    }
    std::ofstream vec(vec_path, std::ios::binary | std::ios::trunc);
    if (!vec) throw ConfigError("cannot write vector file: " + vec_path.string());
    if (disk_backed_) {
      // Stream the existing sidecar through instead of materializing it.
      for_each_block([&](std::size_t, std::size_t rows, const double* data) {
        vec.write(reinterpret_cast<const char*>(data),
                  static_cast<std::streamsize>(rows * dim_ * sizeof(double)));
      });
    } else {
      vec.write(reinterpret_cast<const char*>(vectors_.data()),
                static_cast<std::streamsize>(vectors_.size() * sizeof(double)));
    }
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write index file: " + path.string());
  out << header.dump() << '\n';
}

RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path, ModelGateway* gateway,
                                    bool disk_backed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open index file: " + path.string());
  json header = json::parse(in, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw ParseError("malformed index header", path.string(), 1);
  }
  if (header.value("version", -1) != kIndexFormatVersion) {
    throw ConfigError("unsupported index format version in " + path.string());
  }

  RetrievalIndex index;
  index.spec_.kind =
      header.value("kind", "bm25") == std::string("dense") ? IndexKind::DenseEmbedding
                                                           : IndexKind::SparseBm25;
  index.spec_.similarity = header.value("similarity", "dot") == std::string("cosine")
                               ? Similarity::Cosine
                               : Similarity::Dot;
  index.spec_.bm25.k1 = header["bm25"].value("k1", 1.2);
  index.spec_.bm25.b = header["bm25"].value("b", 0.75);
  index.spec_.embedding_model_id = header.value("embedding_model_id", "");
  index.total_length_ = header.value("total_length", 0LL);
  index.gateway_ = gateway;

  for (const json& d : header["docs"]) {
    Doc doc{d[0].get<std::string>(), d[1].get<long>()};
    index.ids_.insert(doc.id);
    index.docs_.push_back(std::move(doc));
  }

  if (index.spec_.kind == IndexKind::SparseBm25) {
    for (const auto& [term, entries] : header["postings"].items()) {
      auto& list = index.postings_[term];
      for (const json& e : entries) {
        list.emplace_back(e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>());
      }
    }
    return index;
  }

  if (gateway == nullptr) throw ContractError("dense index requires an embedding gateway");
  index.dim_ = header.value("dim", std::size_t{0});
  index.row_norms_ = header.value("row_norms", std::vector<double>{});
  index.vector_file_ = sidecar_path(path);
  if (disk_backed) {
    index.disk_backed_ = true;
    return index;
  }
  std::ifstream vec(index.vector_file_, std::ios::binary);
  if (!vec) throw ConfigError("cannot open vector file: " + index.vector_file_.string());
  index.vectors_.resize(index.docs_.size() * index.dim_);
  vec.read(reinterpret_cast<char*>(index.vectors_.data()),
           static_cast<std::streamsize>(index.vectors_.size() * sizeof(double)));
  if (!vec && !index.vectors_.empty()) {
    throw ConfigError("vector file truncated: " + index.vector_file_.string());
  }
  return index;
}

double recall_at_k(const std::vector<RankedHit>& hits,
                   const std::unordered_set<std::string>& injected_ids) {
  if (injected_ids.empty()) throw DomainError("recall_at_k: injected id set is empty");
  std::size_t found = 0;
  for (const RankedHit& hit : hits) {
    if (injected_ids.count(hit.passage_id) != 0) ++found;
  }
  return static_cast<double>(found) / static_cast<double>(injected_ids.size());
}

}  // namespace ragfc
