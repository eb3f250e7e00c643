#include "ragfc/scripted_demo.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "ragfc/text.hpp"

namespace ragfc {

namespace {

std::string find_line_value(const std::string& text, const std::string& key) {
  const std::size_t at = text.rfind(key);
  if (at == std::string::npos) return "";
  const std::size_t start = at + key.size();
  const std::size_t end = text.find('\n', start);
  return trim(text.substr(start, end == std::string::npos ? std::string::npos : end - start));
}

std::string whole_conversation(const ChatRequest& req) {
  std::string all;
  for (const auto& m : req.messages) {
    all += m.content;
    all += '\n';
  }
  return all;
}

const char* verdict_word(std::uint64_t h) {
  switch (h % 4) {
    case 0: return "SUPPORTED";
    case 1: return "REFUTED";
    case 2: return "NOT ENOUGH INFO";
    default: return (h & 8) ? "SUPPORTED" : "REFUTED";
  }
}

// A few content words from the seed text plus hash-picked filler, capped to
// the word budget.
std::string synth_passage(const std::string& seed, std::uint64_t h, int max_words) {
  static const char* kFillers[] = {
      "according to recently archived records",
      "as several independent reviews concluded",
      "which experts repeatedly confirmed in print",
      "a finding echoed by official summaries",
      "contrary to earlier informal reports"};
  std::vector<std::string> words = split_words(seed);
  std::string out;
  const std::size_t take = std::min<std::size_t>(words.size(), 12);
  for (std::size_t i = 0; i < take; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  out += ' ';
  out += kFillers[h % 5];
  out += " and later audits reached the same conclusion after checking case ";
  out += std::to_string(h % 9973);
  out += '.';
  return truncate_words(out, max_words);
}

std::string demo_chat(const ChatRequest& req) {
  const std::string& last = req.messages.back().content;
  const std::string all = whole_conversation(req);
  const std::uint64_t h = fnv1a64(all);
  const int budget = req.max_output_words.value_or(50);

  if (all.find("You are a passage generator.") != std::string::npos) {
    const std::string claim = find_line_value(all, "Claim: ");
    const std::string passage = synth_passage(claim, h, budget);
    return std::string("{\"analysis\": \"the verifier leaned on the opposing context\", ") +
           "\"strategy\": \"state the conclusion plainly and cite an authority\", " +
           "\"passage\": \"" + passage + "\"}";
  }
  if (last.find("expert at extracting compact") != std::string::npos) {
    const std::string claim = find_line_value(last, "Query: ");
    std::vector<std::string> words = split_words(claim);
    auto take = [&](std::size_t from, std::size_t count) {
      std::string q;
      for (std::size_t i = from; i < words.size() && i < from + count; ++i) {
        if (!q.empty()) q += ' ';
        q += words[i];
      }
      return q;
    };
    std::string first = take(0, 4);
    std::string second = take(words.size() > 4 ? 4 : 0, 4);
    if (second.empty() || second == first) return "Output: " + first;
    return "Output: " + first + ", " + second;
  }
  if (last.find("Please write a passage that") != std::string::npos) {
    return synth_passage(find_line_value(last, "Claim: "), h, budget);
  }
  if (last.find("Respond with exactly one JSON object") != std::string::npos) {
    const double confidence = static_cast<double>((h >> 4) % 101) / 100.0;
    return std::string("{\"answer\": \"") + verdict_word(h) + "\", \"confidence\": " +
           std::to_string(confidence) + "}";
  }
  if (last.find("Using only your own knowledge") != std::string::npos) {
    return synth_passage(find_line_value(last, "Claim: "), h, budget);
  }
  if (all.find("You are a helpful verification assistant.") != std::string::npos) {
    const char* verdict = verdict_word(h);
    return std::string(verdict) + ". The context taken together points this way; see item " +
           std::to_string(h % 7 + 1) + " in particular.";
  }
  return "OK.";
}

}  // namespace

std::shared_ptr<ScriptedBackend> make_demo_backend(std::size_t embed_dim,
                                                   std::size_t vocab_size) {
  auto backend = std::make_shared<ScriptedBackend>();
  backend->set_chat(demo_chat);
  backend->set_embed_dim(embed_dim);
  backend->set_uniform_scorer(vocab_size);
  return backend;
}

}  // namespace ragfc
