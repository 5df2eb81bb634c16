#include "slicelm/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "slicelm/error.hpp"
#include "slicelm/parallel.hpp"

namespace slicelm {

std::size_t EncodedCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.targets.size();
  return n;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(adam.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("AdamW betas must be in [0, 1)");
  if (!(adam.eps > 0.0) || !(adam.weight_decay >= 0.0)) throw ConfigError("AdamW eps/weight decay out of range");
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ConfigError("dev fraction must be in (0, 1)");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"weight_decay", adam.weight_decay},
          {"dev_fraction", dev_fraction},
          {"seed", seed},
          {"hidden", hidden},
          {"dropout", dropout},
          {"train_embedding", train_embedding}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.dev_fraction = j.value("dev_fraction", c.dev_fraction);
    c.seed = j.value("seed", c.seed);
    c.hidden = j.value("hidden", c.hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.train_embedding = j.value("train_embedding", c.train_embedding);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

namespace {

void fill_inputs(const EncodedSentence& s, const ModelParams& p, Eigen::Ref<Eigen::MatrixXd> x) {
  if (s.recipes.empty()) {
    x = s.dense;
    return;
  }
  auto rows = [&](TokenId t) { return p.embedding.row(t); };
  for (std::size_t c = 0; c < s.recipes.size(); ++c)
    materialize(s.recipes[c], p.embedding_dim(), rows,
                std::span<double>(x.col(static_cast<Eigen::Index>(c)).data(), static_cast<std::size_t>(x.rows())));
}

void check_corpus(const EncodedCorpus& corpus, std::size_t vocab) {
  for (const auto& s : corpus.sentences) {
    if (s.recipes.empty() && !s.targets.empty()) {
      if (static_cast<std::size_t>(s.dense.cols()) != s.targets.size() ||
          static_cast<std::size_t>(s.dense.rows()) != corpus.dim)
        throw DataError("sentence '" + s.id + "': dense input shape does not match its targets");
    } else if (s.recipes.size() != s.targets.size()) {
      throw DataError("sentence '" + s.id + "': recipe and target counts differ");
    }
    for (const auto t : s.targets)
      if (t >= vocab) throw VocabularyError("sentence '" + s.id + "': target id outside the embedding table");
    for (const auto& r : s.recipes) {
      if (r.dim != corpus.dim) throw ConfigError("sentence '" + s.id + "': slice vector dim mismatch");
      for (const auto& term : r.terms)
        if (term.token >= vocab) throw VocabularyError("sentence '" + s.id + "': token id outside the embedding table");
    }
  }
}

struct DevScore {
  double ppl = 0.0;
  double accuracy = 0.0;
};

DevScore score_dev(const EncodedCorpus& corpus, std::size_t first, const ModelParams& p,
                   const BaseLogitsSource* base, std::size_t threads) {
  const std::size_t n = corpus.sentences.size() - first;
  std::vector<double> nll(n, 0.0);
  std::vector<std::size_t> correct(n, 0), tokens(n, 0);
  parallel_for(n, threads, [&](std::size_t k) {
    const auto& s = corpus.sentences[first + k];
    const Eigen::MatrixXd z = sentence_logits(s, p, base);
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const auto col = z.col(c);
      const double max = col.maxCoeff();
      nll[k] += max + std::log((col.array() - max).exp().sum()) - col(s.targets[c]);
      Eigen::Index best = 0;
      col.maxCoeff(&best);
      if (static_cast<TokenId>(best) == s.targets[c]) ++correct[k];
    }
    tokens[k] = s.targets.size();
  });
  const double total_nll = std::accumulate(nll.begin(), nll.end(), 0.0);
  const auto total = std::accumulate(tokens.begin(), tokens.end(), std::size_t{0});
  const auto hits = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
  if (total == 0) return {1.0, 0.0};
  return {std::exp(total_nll / static_cast<double>(total)), static_cast<double>(hits) / static_cast<double>(total)};
}

}  // namespace

Eigen::MatrixXd base_logits_matrix(const BaseLogitsSource& base, const EncodedSentence& s) {
  const auto range = base.require(s.id, s.targets.size());
  Eigen::MatrixXd out(base.vocab_size(), range.count);
  for (std::size_t c = 0; c < range.count; ++c) {
    const auto row = base.row(range.offset + c);
    for (std::size_t v = 0; v < row.size(); ++v) out(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c)) = row[v];
  }
  return out;
}

Eigen::MatrixXd sentence_logits(const EncodedSentence& s, const ModelParams& p, const BaseLogitsSource* base) {
  Eigen::MatrixXd x(p.input_dim(), s.targets.size());
  fill_inputs(s, p, x);
  Eigen::MatrixXd z = forward_batch(x, p, false).logits;
  if (base) {
    if (base->vocab_size() != p.vocab_size())
      throw AlignmentError("base logits vocabulary " + std::to_string(base->vocab_size()) +
                           " differs from the embedding vocabulary " + std::to_string(p.vocab_size()));
    z += base_logits_matrix(*base, s);
  }
  return z;
}

TrainResult train(const EncodedCorpus& corpus, const EmbeddingTable& emb, const BaseLogitsSource* base,
                  const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = corpus.sentences.size();
  if (n == 0 || corpus.token_count() == 0) throw DataError("training corpus is empty");
  check_corpus(corpus, emb.rows());
  if (cfg.train_embedding)
    for (const auto& s : corpus.sentences)
      if (s.recipes.empty() && !s.targets.empty())
        throw ConfigError("training the embedding needs recipe inputs, sentence '" + s.id + "' has dense vectors");
  const auto dev = static_cast<std::size_t>(std::ceil(cfg.dev_fraction * static_cast<double>(n)));
  if (dev >= n) throw DataError("training corpus has too few sentences for a dev split");
  const std::size_t train_n = n - dev;
  if (base) {
    if (base->vocab_size() != emb.rows())
      throw AlignmentError("base logits vocabulary " + std::to_string(base->vocab_size()) +
                           " differs from the embedding vocabulary " + std::to_string(emb.rows()));
    for (const auto& s : corpus.sentences) base->require(s.id, s.targets.size());
  }

  TrainResult result;
  result.train_sentences = train_n;
  result.dev_sentences = dev;
  ModelParams p = init_params(corpus.dim, cfg.hidden, emb, cfg.dropout, cfg.seed);
  p.train_embedding = cfg.train_embedding;
  AdamW opt(p, cfg.adam);
  result.params = p;
  result.best_dev_ppl = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_n);
  Gradients grads;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, epoch, "shuffle"));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    Rng dropout_rng(derive_seed(cfg.seed, epoch, "dropout"));

    double loss_sum = 0.0;
    std::size_t loss_tokens = 0;
    for (std::size_t start = 0; start < train_n; start += cfg.batch_size) {
      const std::size_t stop = std::min(train_n, start + cfg.batch_size);
      std::vector<const SliceRecipe*> recipes;
      std::vector<TokenId> targets;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = corpus.sentences[order[k]];
        for (const auto& r : s.recipes) recipes.push_back(&r);
        targets.insert(targets.end(), s.targets.begin(), s.targets.end());
      }
      if (targets.empty()) continue;
      Eigen::MatrixXd x(corpus.dim, targets.size());
      {
        Eigen::Index col = 0;
        for (std::size_t k = start; k < stop; ++k) {
          const auto& s = corpus.sentences[order[k]];
          const auto n = static_cast<Eigen::Index>(s.targets.size());
          fill_inputs(s, p, x.middleCols(col, n));
          col += n;
        }
      }
      std::optional<Eigen::MatrixXd> base_batch;
      if (base) {
        base_batch.emplace(base->vocab_size(), targets.size());
        Eigen::Index col = 0;
        for (std::size_t k = start; k < stop; ++k) {
          const auto& s = corpus.sentences[order[k]];
          if (s.targets.empty()) continue;
          base_batch->middleCols(col, static_cast<Eigen::Index>(s.targets.size())) = base_logits_matrix(*base, s);
          col += static_cast<Eigen::Index>(s.targets.size());
        }
      }
      const auto cache = forward_batch(x, p, true, &dropout_rng);
      const double loss = backward(cache, p, targets, base_batch ? &*base_batch : nullptr, grads);
      if (p.train_embedding) accumulate_input_gradient(recipes, grads.input, p.embedding_dim(), grads);
      opt.step(p, grads);
      loss_sum += loss * static_cast<double>(targets.size());
      loss_tokens += targets.size();
    }

    const auto score = score_dev(corpus, train_n, p, base, cfg.threads);
    EpochLog entry{epoch, loss_tokens ? loss_sum / static_cast<double>(loss_tokens) : 0.0, score.ppl, score.accuracy};
    result.log.push_back(entry);
    if (score.ppl < result.best_dev_ppl) {
      result.best_dev_ppl = score.ppl;
      result.best_epoch = epoch;
      result.params = p;
    }
  }
  round_to_float(result.params);
  return result;
}

nlohmann::json training_log_json(const TrainResult& result) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : result.log)
    epochs.push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_ppl", e.dev_ppl}, {"dev_accuracy", e.dev_accuracy}});
  return {{"epochs", epochs},
          {"best_epoch", result.best_epoch},
          {"best_dev_ppl", result.best_dev_ppl},
          {"train_sentences", result.train_sentences},
          {"dev_sentences", result.dev_sentences}};
}

}  // namespace slicelm
