#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "slicelm/binary_io.hpp"
#include "slicelm/encoder.hpp"
#include "slicelm/mlp.hpp"

namespace slicelm {

// Inputs come either from recipes (materialized against the current
// embedding) or, when there are none, from precomputed dense columns.
struct EncodedSentence {
  std::string id;
  std::vector<SliceRecipe> recipes;
  Eigen::MatrixXd dense;  // dim x n
  std::vector<TokenId> targets;
};

struct EncodedCorpus {
  std::size_t dim = 0;
  std::vector<EncodedSentence> sentences;

  std::size_t token_count() const;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;  // sentences per update
  AdamWConfig adam;
  double dev_fraction = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {1024, 768};
  double dropout = 0.2;
  bool train_embedding = false;
  std::size_t threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep the values of `defaults`.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig defaults);
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_ppl = 0.0;
  double dev_accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_ppl = 0.0;
  std::size_t train_sentences = 0;
  std::size_t dev_sentences = 0;
};

// Trains on the first (1 - dev_fraction) of the sentences in corpus order and
// keeps the snapshot with the best perplexity on the rest. With `base`, the
// loss and the dev perplexity use the ensembled posterior.
TrainResult train(const EncodedCorpus& corpus, const EmbeddingTable& emb, const BaseLogitsSource* base,
                  const TrainConfig& cfg);

// V x n ensembled logits for one sentence (eval mode); base may be null.
Eigen::MatrixXd sentence_logits(const EncodedSentence& s, const ModelParams& p, const BaseLogitsSource* base);

// V x n base logits for one sentence.
Eigen::MatrixXd base_logits_matrix(const BaseLogitsSource& base, const EncodedSentence& s);

nlohmann::json training_log_json(const TrainResult& result);

}  // namespace slicelm
