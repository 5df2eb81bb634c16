#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "slicelm/bpe.hpp"
#include "slicelm/encoder.hpp"
#include "slicelm/rng.hpp"

namespace slicelm {

// Hidden ReLU layers followed by the tied projection onto the embedding
// table: logits = Emb * H_d(...H_1(x)). The last hidden width must equal the
// embedding dim.
struct ModelParams {
  std::vector<Eigen::MatrixXd> weight;  // out x in
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd embedding;            // V x E
  double dropout = 0.2;
  bool train_embedding = false;

  std::size_t layers() const { return weight.size(); }
  std::size_t input_dim() const { return weight.empty() ? 0 : static_cast<std::size_t>(weight.front().cols()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(embedding.rows()); }
  std::size_t embedding_dim() const { return static_cast<std::size_t>(embedding.cols()); }
  std::size_t parameter_count() const;
};

// He-uniform weights (bound sqrt(6 / fan_in)) and zero biases.
ModelParams init_params(std::size_t input_dim, const std::vector<std::size_t>& hidden, const EmbeddingTable& emb,
                        double dropout, std::uint64_t seed);

// Rounds every parameter through float32, the checkpoint precision.
void round_to_float(ModelParams& p);

// Samples are columns.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;     // pre-activations per layer
  std::vector<Eigen::MatrixXd> output;  // post ReLU and dropout
  std::vector<Eigen::MatrixXd> mask;    // scaled keep mask, empty in eval mode
  Eigen::MatrixXd logits;               // V x n
};

ForwardCache forward_batch(const Eigen::MatrixXd& x, const ModelParams& p, bool train_mode, Rng* rng = nullptr);

// Single-sample eval-mode forward.
std::vector<double> mlp_forward(std::span<const double> x, const ModelParams& p);
// Train-mode forward draws dropout masks from rng.
std::vector<double> mlp_forward(std::span<const double> x, const ModelParams& p, Rng& rng);

std::vector<double> ensemble_logits(std::span<const double> slr, std::span<const double> lm);
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
double cross_entropy(std::span<const double> dist, TokenId target);

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd embedding;  // zero-sized unless the embedding trains
  Eigen::MatrixXd input;      // d loss / d x, D x n

  static Gradients zeros_like(const ModelParams& p);
};

// Mean cross-entropy over the batch columns of softmax(logits + base) and its
// gradient. `base` may be null. The embedding gradient covers the output
// projection only; input-side contributions come from accumulate_input_gradient.
double backward(const ForwardCache& cache, const ModelParams& p, std::span<const TokenId> targets,
                const Eigen::MatrixXd* base, Gradients& grads);

// Routes d loss / d x back onto the embedding rows referenced by each
// column's recipe.
void accumulate_input_gradient(std::span<const SliceRecipe* const> recipes, const Eigen::MatrixXd& input_grad,
                               std::size_t embedding_dim, Gradients& grads);

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// One decoupled-decay AdamW update on a flat tensor; t counts from 1.
void adamw_step(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                const AdamWConfig& cfg, std::uint64_t t);

class AdamW {
 public:
  AdamW(const ModelParams& p, AdamWConfig cfg);
  void step(ModelParams& p, const Gradients& g);
  std::uint64_t steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::uint64_t t_ = 0;
  Gradients m_, v_;
};

// CKPT: magic, u32 version, u32 metadata length, metadata JSON, u32 tensor
// count, then per tensor: u32 name length, name, u32 rows, u32 cols and
// row-major float32 values.
struct Checkpoint {
  nlohmann::json metadata;
  ModelParams params;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// The tied embedding is restored from `emb` unless the checkpoint stores a
// trained copy.
Checkpoint read_checkpoint(const std::filesystem::path& path, const EmbeddingTable& emb);

}  // namespace slicelm
