#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slicelm/bpe.hpp"

namespace slicelm {

struct TokenEval {
  double nll = 0.0;      // nats
  double entropy = 0.0;  // nats
  bool correct = false;
  double confidence = 0.0;
  double reciprocal_rank = 0.0;
  std::optional<std::string> pos;
};

struct EvalReport {
  std::size_t tokens = 0;
  double ppl = 0.0;
  double entropy = 0.0;
  double accuracy = 0.0;  // percent
  double confidence = 0.0;  // percent
  double mrr = 0.0;
  std::map<std::string, EvalReport> by_pos;
  std::size_t unknown_tags = 0;
};

// Accuracy and rank break ties toward the lowest token id; rank is one plus
// the number of strictly more probable tokens.
TokenEval evaluate_token(std::span<const double> dist, TokenId gold);
// The same from logits, via log-sum-exp; avoids underflow in nll.
TokenEval evaluate_token_logits(std::span<const double> logits, TokenId gold);

// Micro-averages; PPL = exp(mean nll).
EvalReport summarize(std::span<const TokenEval> evals);

// Throws DataError if a distribution's mass differs from 1 by more than 1e-6.
EvalReport evaluate(std::span<const std::vector<double>> posteriors, std::span<const TokenId> golds);

// {NOUN, PROPN} -> noun, {ADJ, ADV} -> mod, {INTJ, SYM, X} -> misc, other
// universal tags lowercased. Unknown tags map to misc.
std::string merge_pos_class(std::string_view upos, bool* unknown = nullptr);

std::map<std::string, EvalReport> pos_breakdown(std::span<const TokenEval> evals, std::span<const std::string> tags,
                                                std::size_t* unknown = nullptr);

// Index of the whitespace-delimited word each token belongs to: the word
// holding its first non-space byte, or the preceding word for pure whitespace.
std::vector<std::size_t> token_word_indices(const TokenSequence& tokens, std::string_view text);

// Word-level tags to token-level tags, so continuation tokens share the tag
// of their word.
std::vector<std::string> token_tags(const TokenSequence& tokens, std::string_view text,
                                    std::span<const std::string> word_tags);

double approx_randomization_test(std::span<const double> a, std::span<const double> b, std::size_t rounds,
                                 std::uint64_t seed, std::size_t threads = 1);

struct SignificanceResult {
  std::vector<double> p_values;
  double alpha = 0.05;
  bool significant = false;  // p < alpha for every seed
};

SignificanceResult significance_all_seeds(std::span<const std::vector<double>> a, std::span<const std::vector<double>> b,
                                          std::size_t rounds, std::uint64_t seed, double alpha,
                                          std::size_t threads = 1);

nlohmann::json report_json(const EvalReport& report);

}  // namespace slicelm
