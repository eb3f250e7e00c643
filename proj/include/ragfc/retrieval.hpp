#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ragfc/corpus.hpp"
#include "ragfc/gateway.hpp"

namespace ragfc {

enum class IndexKind { SparseBm25, DenseEmbedding };
enum class Similarity { Dot, Cosine };

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct IndexSpec {
  IndexKind kind = IndexKind::SparseBm25;
  Similarity similarity = Similarity::Dot;  // dense only
  Bm25Params bm25;
  std::string embedding_model_id;  // dense only
  // Rows scored per block during dense scans.
  std::size_t block_rows = 4096;
};

struct RankedHit {
  std::string passage_id;
  double score = 0.0;
  int rank = 0;
};

// Top-k retrieval over a knowledge-base snapshot.
//
// Documents are indexed as title + " " + text, tokenized to lowercase
// alphanumeric runs. BM25 keeps raw term frequencies and computes scores at
// query time from the current aggregates, which makes incremental adds give
// the same results as a full rebuild. Dense retrieval is an exact scan,
// scored block by block. Ties always break toward the ascending passage id.
class RetrievalIndex {
 public:
  // `gateway` is required for dense specs and must outlive the index.
  static RetrievalIndex build(const KnowledgeBase& kb, const IndexSpec& spec,
                              ModelGateway* gateway = nullptr);

  // Permanently extends the index. Equivalent to rebuilding over the larger
  // snapshot.
  void add_passages(std::span<const Passage> passages);

  std::vector<RankedHit> retrieve(const std::string& query, int k) const;

  // Retrieval over the index plus an ephemeral overlay of extra passages,
  // with scores identical to a rebuild that included them. Lets many claims
  // share one clean index while each sees only its own injections.
  std::vector<RankedHit> retrieve_with_overlay(const std::string& query, int k,
                                               std::span<const Passage> overlay) const;

  const IndexSpec& spec() const { return spec_; }
  std::size_t size() const { return docs_.size(); }

  // On-disk layout: a versioned JSON header; dense vectors go to a binary
  // sidecar (<path>.vec, little-endian doubles, row-major).
  void save(const std::filesystem::path& path) const;
  // `disk_backed` keeps dense vectors in the sidecar and scans them from
  // disk block-wise instead of loading them into memory.
  static RetrievalIndex load(const std::filesystem::path& path, ModelGateway* gateway = nullptr,
                             bool disk_backed = false);

 private:
  struct Doc {
    std::string id;
    long length = 0;
  };
  struct Scratch;

  RetrievalIndex() = default;
  void index_documents(std::span<const Passage> passages);
  std::vector<double> embed_cached(const std::string& text) const;
  std::vector<RankedHit> ranked_bm25(const std::string& query, int k,
                                     std::span<const Passage> overlay) const;
  std::vector<RankedHit> ranked_dense(const std::string& query, int k,
                                      std::span<const Passage> overlay) const;
  void for_each_block(const std::function<void(std::size_t first_row, std::size_t rows,
                                               const double* data)>& fn) const;

  IndexSpec spec_;
  ModelGateway* gateway_ = nullptr;
  std::vector<Doc> docs_;
  std::unordered_set<std::string> ids_;
  long long total_length_ = 0;

  // BM25: term -> (doc ordinal, term frequency), ordinals ascending.
  std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;

  // Dense: row-major vectors and per-row norms, or a disk sidecar.
  std::size_t dim_ = 0;
  std::vector<double> vectors_;
  std::vector<double> row_norms_;
  std::filesystem::path vector_file_;
  bool disk_backed_ = false;

  struct EmbedCache {
    std::mutex mutex;
    std::unordered_map<std::string, std::vector<double>> by_text;
  };
  mutable std::shared_ptr<EmbedCache> embed_cache_ = std::make_shared<EmbedCache>();
};

// Fraction of `injected_ids` that appear among the hits.
double recall_at_k(const std::vector<RankedHit>& hits,
                   const std::unordered_set<std::string>& injected_ids);

// Document text as indexed: title and text joined by a single space.
std::string indexed_text(const Passage& passage);

}  // namespace ragfc
