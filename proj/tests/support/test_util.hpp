#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ragfc/corpus.hpp"

namespace ragfc::testsupport {

// Scratch directory that removes itself and everything inside it.
class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::mt19937_64 rng(std::random_device{}());
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto candidate = base / ("ragfc_test_" + std::to_string(rng()));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: could not create scratch directory");
  }

  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline Passage clean_passage(std::string id, std::string text, std::string title = "") {
  Passage p;
  p.id = std::move(id);
  p.title = std::move(title);
  p.text = std::move(text);
  return p;
}

inline std::vector<Passage> clean_passages(
    const std::vector<std::pair<std::string, std::string>>& rows) {
  std::vector<Passage> out;
  out.reserve(rows.size());
  for (const auto& [id, text] : rows) out.push_back(clean_passage(id, text));
  return out;
}

inline Claim make_claim(std::string id, std::string text,
                        ClaimLabel label = ClaimLabel::Unknown) {
  Claim c;
  c.id = std::move(id);
  c.text = std::move(text);
  c.gold_label = label;
  return c;
}

// Deterministic word soup for randomized fixtures.
inline std::string random_words(std::mt19937& rng, int count,
                                const std::vector<std::string>& vocab) {
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::string out;
  for (int i = 0; i < count; ++i) {
    if (i > 0) out += ' ';
    out += vocab[pick(rng)];
  }
  return out;
}

inline std::vector<std::string> small_vocab() {
  return {"alpha", "bravo", "charlie", "delta", "echo",  "foxtrot", "golf",
          "hotel", "india", "juliet",  "kilo",  "lima",  "mike",    "november",
          "oscar", "papa",  "quebec",  "romeo", "sierra", "tango"};
}

}  // namespace ragfc::testsupport
