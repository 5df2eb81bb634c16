#include "slicelm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "slicelm/error.hpp"
#include "slicelm/graph.hpp"
#include "slicelm/mlp.hpp"
#include "slicelm/parallel.hpp"
#include "slicelm/rng.hpp"

namespace slicelm {

namespace {

// Ranks and the argmax come from `scores`, which must be order-equivalent to
// the probabilities.
TokenEval finish(std::span<const double> scores, TokenId gold, double nll, double entropy, double top_prob) {
  TokenEval e;
  e.nll = nll;
  e.entropy = entropy;
  std::size_t best = 0;
  std::size_t above = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (scores[k] > scores[best]) best = k;
    if (scores[k] > scores[gold]) ++above;
  }
  e.correct = best == gold;
  e.confidence = top_prob;
  e.reciprocal_rank = 1.0 / static_cast<double>(above + 1);
  return e;
}

}  // namespace

TokenEval evaluate_token(std::span<const double> dist, TokenId gold) {
  if (gold >= dist.size()) throw std::out_of_range("evaluate_token: gold id outside the distribution");
  double entropy = 0.0;
  double top = 0.0;
  for (const auto p : dist) {
    if (p > 0.0) entropy -= p * std::log(p);
    top = std::max(top, p);
  }
  return finish(dist, gold, -std::log(dist[gold]), entropy, top);
}

TokenEval evaluate_token_logits(std::span<const double> logits, TokenId gold) {
  if (gold >= logits.size()) throw std::out_of_range("evaluate_token: gold id outside the distribution");
  const auto logp = log_softmax(logits);
  double entropy = 0.0;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto lp : logp) {
    const double p = std::exp(lp);
    if (p > 0.0) entropy -= p * lp;
    top = std::max(top, lp);
  }
  return finish(logits, gold, -logp[gold], entropy, std::exp(top));
}

EvalReport summarize(std::span<const TokenEval> evals) {
  EvalReport r;
  r.tokens = evals.size();
  if (evals.empty()) return r;
  double nll = 0.0, h = 0.0, conf = 0.0, rr = 0.0;
  std::size_t hits = 0;
  for (const auto& e : evals) {
    nll += e.nll;
    h += e.entropy;
    conf += e.confidence;
    rr += e.reciprocal_rank;
    hits += e.correct ? 1 : 0;
  }
  const double n = static_cast<double>(evals.size());
  r.ppl = std::exp(nll / n);
  r.entropy = h / n;
  r.accuracy = 100.0 * static_cast<double>(hits) / n;
  r.confidence = 100.0 * conf / n;
  r.mrr = rr / n;
  return r;
}

EvalReport evaluate(std::span<const std::vector<double>> posteriors, std::span<const TokenId> golds) {
  if (posteriors.size() != golds.size())
    throw DataError("evaluate: " + std::to_string(posteriors.size()) + " posteriors for " +
                    std::to_string(golds.size()) + " gold tokens");
  std::vector<TokenEval> evals;
  evals.reserve(golds.size());
  for (std::size_t i = 0; i < golds.size(); ++i) {
    double mass = 0.0;
    for (const auto p : posteriors[i]) mass += p;
    if (!(std::abs(mass - 1.0) <= 1e-6))
      throw DataError("evaluate: distribution " + std::to_string(i) + " sums to " + std::to_string(mass));
    evals.push_back(evaluate_token(posteriors[i], golds[i]));
  }
  return summarize(evals);
}

std::string merge_pos_class(std::string_view upos, bool* unknown) {
  static const std::set<std::string_view> kUniversal = {"ADJ", "ADP",  "ADV",  "AUX",   "CCONJ", "DET",
                                                         "INTJ", "NOUN", "NUM",  "PART",  "PRON",  "PROPN",
                                                         "PUNCT", "SCONJ", "SYM", "VERB", "X"};
  if (unknown) *unknown = false;
  if (upos == "NOUN" || upos == "PROPN") return "noun";
  if (upos == "ADJ" || upos == "ADV") return "mod";
  if (upos == "INTJ" || upos == "SYM" || upos == "X") return "misc";
  if (!kUniversal.contains(upos)) {
    if (unknown) *unknown = true;
    return "misc";
  }
  std::string out(upos);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::map<std::string, EvalReport> pos_breakdown(std::span<const TokenEval> evals, std::span<const std::string> tags,
                                                std::size_t* unknown) {
  if (evals.size() != tags.size())
    throw DataError("pos_breakdown: " + std::to_string(tags.size()) + " tags for " + std::to_string(evals.size()) +
                    " tokens");
  std::map<std::string, std::vector<TokenEval>> groups;
  std::size_t unknown_count = 0;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    bool is_unknown = false;
    groups[merge_pos_class(tags[i], &is_unknown)].push_back(evals[i]);
    unknown_count += is_unknown ? 1 : 0;
  }
  if (unknown) *unknown = unknown_count;
  std::map<std::string, EvalReport> out;
  for (const auto& [cls, group] : groups) out[cls] = summarize(group);
  return out;
}

std::vector<std::size_t> token_word_indices(const TokenSequence& tokens, std::string_view text) {
  const auto words = word_spans(text);
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  std::size_t w = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& span = tokens[i].span;
    std::size_t first = span.from;
    while (first < span.to && std::isspace(static_cast<unsigned char>(text[first]))) ++first;
    if (first < span.to)
      while (w + 1 < words.size() && words[w].to <= first) ++w;
    out.push_back(w);
  }
  return out;
}

std::vector<std::string> token_tags(const TokenSequence& tokens, std::string_view text,
                                    std::span<const std::string> word_tags) {
  const auto words = word_spans(text);
  if (words.size() != word_tags.size())
    throw DataError("tags: " + std::to_string(word_tags.size()) + " tags for " + std::to_string(words.size()) +
                    " words");
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto w : token_word_indices(tokens, text)) out.push_back(words.empty() ? std::string("X") : word_tags[w]);
  return out;
}

double approx_randomization_test(std::span<const double> a, std::span<const double> b, std::size_t rounds,
                                 std::uint64_t seed, std::size_t threads) {
  if (a.size() != b.size())
    throw std::invalid_argument("randomization test: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + " paired scores");
  if (rounds == 0) throw std::invalid_argument("randomization test: R must be at least 1");
  std::vector<double> d(a.size());
  double observed = 0.0, magnitude = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    d[k] = a[k] - b[k];
    observed += d[k];
    magnitude += std::abs(d[k]);
  }
  // summation order differs between rounds; ties within rounding count as reached
  observed = std::abs(observed) - 1e-12 * magnitude;
  std::vector<char> reached(rounds, 0);
  parallel_for(rounds, threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r, "randomization"));
    double sum = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (k % 64 == 0) bits = rng.next();
      sum += (bits & 1) ? -d[k] : d[k];
      bits >>= 1;
    }
    reached[r] = std::abs(sum) >= observed ? 1 : 0;
  });
  const auto count = static_cast<double>(std::count(reached.begin(), reached.end(), 1));
  return (count + 1.0) / (static_cast<double>(rounds) + 1.0);
}

SignificanceResult significance_all_seeds(std::span<const std::vector<double>> a, std::span<const std::vector<double>> b,
                                          std::size_t rounds, std::uint64_t seed, double alpha, std::size_t threads) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("significance: need paired runs per seed");
  SignificanceResult result;
  result.alpha = alpha;
  result.significant = true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double p = approx_randomization_test(a[k], b[k], rounds, derive_seed(seed, k, "run"), threads);
    result.p_values.push_back(p);
    result.significant = result.significant && p < alpha;
  }
  return result;
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json j = {{"tokens", report.tokens},     {"ppl", report.ppl}, {"entropy", report.entropy},
                      {"accuracy", report.accuracy}, {"confidence", report.confidence},
                      {"mrr", report.mrr}};
  j["conf_over_acc"] = report.accuracy > 0 ? nlohmann::json(report.confidence / report.accuracy) : nlohmann::json(nullptr);
  if (!report.by_pos.empty()) {
    auto& classes = j["by_pos"] = nlohmann::json::object();
    for (const auto& [cls, sub] : report.by_pos) classes[cls] = report_json(sub);
    j["unknown_tags"] = report.unknown_tags;
  }
  return j;
}

}  // namespace slicelm
