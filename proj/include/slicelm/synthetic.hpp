#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slicelm/bpe.hpp"
#include "slicelm/encoder.hpp"
#include "slicelm/graph.hpp"

namespace slicelm {

struct SyntheticSentence {
  std::string id;
  std::string text;
  std::vector<std::string> words;
  std::vector<std::string> upos;
  Graph constituency;  // derivation tree, rule-name edge labels
  Graph dependency;    // head-percolated word graph
};

// Samples n sentences from a small built-in grammar with number agreement.
// Sentence k depends only on (seed, k).
std::vector<SyntheticSentence> generate_synthetic_corpus(std::uint64_t seed, std::size_t n);

std::size_t synthetic_rule_count();

// Greedy byte-level BPE: starts from the bytes present in `texts` and adds the
// most frequent adjacent pair (ties to the smaller pair) until vocab_size.
TokenizerTables learn_bpe(std::span<const std::string> texts, std::size_t vocab_size);

// Gaussian rows with standard deviation 1/sqrt(dim).
EmbeddingTable random_embeddings(std::size_t rows, std::size_t dim, std::uint64_t seed);

// Add-alpha token bigram model; position 0 conditions on a start state.
class BigramLM {
 public:
  BigramLM(std::size_t vocab_size, double alpha);

  void fit(std::span<const std::vector<TokenId>> sequences);
  std::vector<float> logits(std::optional<TokenId> previous) const;
  std::size_t vocab_size() const { return vocab_; }

  struct Sequence {
    std::string id;
    std::vector<TokenId> tokens;
  };
  // Writes LGT1 rows plus the index sidecar.
  void export_logits(std::span<const Sequence> sequences, const std::filesystem::path& path) const;

 private:
  std::size_t vocab_;
  double alpha_;
  std::vector<double> counts_;  // (V + 1) x V, last row is the start state
  std::vector<double> totals_;
};

}  // namespace slicelm
