#pragma once

#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <memory>
#include <string>
#include <vector>

#include "slicelm/alignment.hpp"
#include "slicelm/bpe.hpp"
#include "slicelm/graph.hpp"
#include "slicelm/rng.hpp"

namespace fixtures {

using namespace slicelm;

inline std::filesystem::path data_dir() { return SLICELM_TEST_DATA; }

inline const TokenizerTables& gpt2() {
  static const TokenizerTables tables =
      TokenizerTables::load(data_dir() / "gpt2" / "vocab.json", data_dir() / "gpt2" / "merges.txt");
  return tables;
}

inline const std::string kExampleText = "Numerous injuries were reported";

// byte spans of the four words
inline const Span kNumerous{0, 8}, kInjuries{9, 17}, kWere{18, 22}, kReported{23, 31};

// EDS: 0 = quantifier over "Numerous injuries", 1 = "Numerous", 2 = "injuries",
// 3 = "reported"; "were" is unanchored.
inline Graph example_eds() {
  Graph g;
  g.id = "example-eds";
  g.text = kExampleText;
  g.nodes = {{0, {Span{0, 17}}, "udef_q"}, {1, {kNumerous}, "numerous_a_1"}, {2, {kInjuries}, "_injury_n_1"},
             {3, {kReported}, "_report_v_to"}};
  g.edges = {{3, 2, "ARG2"}, {1, 2, "ARG1"}, {0, 2, "BV"}};
  g.tops = {3};
  return g;
}

// UD: one node per word, "reported" is the root.
inline Graph example_ud() {
  Graph g;
  g.id = "example-ud";
  g.text = kExampleText;
  g.nodes = {{0, {kNumerous}, "Numerous"}, {1, {kInjuries}, "injuries"}, {2, {kWere}, "were"},
             {3, {kReported}, "reported"}};
  g.edges = {{3, 1, "nsubj:pass"}, {3, 2, "aux:pass"}, {1, 0, "amod"}};
  g.tops = {3};
  return g;
}

inline std::string example_eds_mrp() {
  return R"({"id":"example-eds","input":"Numerous injuries were reported","tops":[3],)"
         R"("nodes":[{"id":0,"label":"udef_q","anchors":[{"from":0,"to":17}]},)"
         R"({"id":1,"label":"numerous_a_1","anchors":[{"from":0,"to":8}]},)"
         R"({"id":2,"label":"_injury_n_1","anchors":[{"from":9,"to":17}]},)"
         R"({"id":3,"label":"_report_v_to","anchors":[{"from":23,"to":31}]}],)"
         R"("edges":[{"source":3,"target":2,"label":"ARG2"},{"source":1,"target":2,"label":"ARG1"},)"
         R"({"source":0,"target":2,"label":"BV"}]})";
}

// Word-per-token sequence over "w0 w1 ...": token k covers " wk" (no space for
// k = 0) and has id k.
struct WordSentence {
  std::string text;
  TokenSequence tokens;
  std::vector<Span> words;
};

inline WordSentence word_sentence(std::size_t n) {
  WordSentence s;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t from = s.text.size();
    const std::string surface = (k ? " w" : "w") + std::to_string(k);
    s.text += surface;
    s.tokens.tokens.push_back({static_cast<TokenId>(k), surface, {from, s.text.size()}});
    s.words.push_back({from + (k ? 1 : 0), s.text.size()});
  }
  return s;
}

// Random DAG over a word sentence: edges follow a random topological order,
// anchors are sorted disjoint word ranges or empty.
inline Graph random_dag(Rng& rng, std::size_t nodes, std::size_t words, double edge_p, std::string id = "rnd") {
  const auto s = word_sentence(words);
  Graph g;
  g.id = std::move(id);
  g.text = s.text;
  std::vector<NodeId> order(nodes);
  for (std::size_t k = 0; k < nodes; ++k) order[k] = static_cast<NodeId>(k);
  rng.shuffle(std::span<NodeId>(order));
  for (std::size_t k = 0; k < nodes; ++k) {
    Node n;
    n.id = static_cast<NodeId>(k);
    const auto kind = rng.below(5);
    if (kind != 0) {
      std::size_t w = rng.below(words);
      const std::size_t pieces = kind == 4 ? 2 : 1;
      for (std::size_t p = 0; p < pieces && w < words; ++p) {
        const std::size_t len = 1 + rng.below(kind == 3 ? 3 : 1);
        const std::size_t end = std::min(words, w + len);
        n.anchors.push_back({s.words[w].from, s.words[end - 1].to});
        w = end + 1 + rng.below(2);
      }
    }
    g.nodes.push_back(std::move(n));
  }
  static const char* kLabels[] = {"A", "B", "C", "D"};
  for (std::size_t a = 0; a < nodes; ++a)
    for (std::size_t b = a + 1; b < nodes; ++b)
      if (rng.uniform() < edge_p) g.edges.push_back({order[a], order[b], kLabels[rng.below(4)]});
  return g;
}

inline AlignedSentence align_words(const Graph& g, std::size_t words) {
  return align_tokens_to_anchors(word_sentence(words).tokens, std::make_shared<const Graph>(g));
}

inline AlignedSentence align_gpt2(const Graph& g) {
  return align_tokens_to_anchors(bbpe_tokenize(g.text, gpt2()), std::make_shared<const Graph>(g));
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() / ("slicelm-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
