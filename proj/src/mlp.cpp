#include "slicelm/mlp.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "slicelm/error.hpp"

namespace slicelm {

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layers(); ++l) n += weight[l].size() + bias[l].size();
  if (train_embedding) n += embedding.size();
  return n;
}

ModelParams init_params(std::size_t input_dim, const std::vector<std::size_t>& hidden, const EmbeddingTable& emb,
                        double dropout, std::uint64_t seed) {
  if (hidden.empty()) throw ConfigError("the head needs at least one hidden layer");
  if (hidden.back() != emb.dim())
    throw ConfigError("last hidden width " + std::to_string(hidden.back()) + " must equal the embedding dim " +
                      std::to_string(emb.dim()) + " for the tied projection");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  ModelParams p;
  p.dropout = dropout;
  Rng rng(derive_seed(seed, 0, "init"));
  std::size_t fan_in = input_dim;
  for (const auto width : hidden) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Eigen::MatrixXd w(width, fan_in);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
    p.weight.push_back(std::move(w));
    p.bias.push_back(Eigen::VectorXd::Zero(width));
    fan_in = width;
  }
  p.embedding.resize(emb.rows(), emb.dim());
  for (std::size_t r = 0; r < emb.rows(); ++r) {
    const auto row = emb.row(static_cast<TokenId>(r));
    for (std::size_t j = 0; j < emb.dim(); ++j) p.embedding(r, j) = row[j];
  }
  return p;
}

void round_to_float(ModelParams& p) {
  auto round = [](auto& m) { m = m.template cast<float>().template cast<double>(); };
  for (auto& w : p.weight) round(w);
  for (auto& b : p.bias) round(b);
  round(p.embedding);
}

ForwardCache forward_batch(const Eigen::MatrixXd& x, const ModelParams& p, bool train_mode, Rng* rng) {
  if (static_cast<std::size_t>(x.rows()) != p.input_dim())
    throw ConfigError("input has " + std::to_string(x.rows()) + " rows, model expects " +
                      std::to_string(p.input_dim()));
  const bool drop = train_mode && p.dropout > 0.0;
  if (drop && rng == nullptr) throw std::invalid_argument("forward_batch: train mode needs an rng");
  ForwardCache cache;
  cache.input = x;
  const Eigen::MatrixXd* in = &cache.input;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    Eigen::MatrixXd pre = p.weight[l] * *in;
    pre.colwise() += p.bias[l];
    Eigen::MatrixXd out = pre.cwiseMax(0.0);
    if (drop) {
      Eigen::MatrixXd mask(out.rows(), out.cols());
      const double keep = 1.0 / (1.0 - p.dropout);
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = rng->uniform() < p.dropout ? 0.0 : keep;
      out = out.cwiseProduct(mask);
      cache.mask.push_back(std::move(mask));
    }
    cache.pre.push_back(std::move(pre));
    cache.output.push_back(std::move(out));
    in = &cache.output.back();
  }
  cache.logits = p.embedding * *in;
  return cache;
}

namespace {

std::vector<double> to_vector(const Eigen::MatrixXd& column) {
  return {column.data(), column.data() + column.size()};
}

void require_finite(std::span<const double> v, const char* where) {
  for (const auto x : v)
    if (!std::isfinite(x)) throw NumericError(std::string(where) + ": non-finite input");
}

}  // namespace

std::vector<double> mlp_forward(std::span<const double> x, const ModelParams& p) {
  const Eigen::Map<const Eigen::MatrixXd> col(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  return to_vector(forward_batch(col, p, false).logits);
}

std::vector<double> mlp_forward(std::span<const double> x, const ModelParams& p, Rng& rng) {
  const Eigen::Map<const Eigen::MatrixXd> col(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  return to_vector(forward_batch(col, p, true, &rng).logits);
}

std::vector<double> ensemble_logits(std::span<const double> slr, std::span<const double> lm) {
  if (slr.size() != lm.size())
    throw std::invalid_argument("ensemble_logits: length mismatch (" + std::to_string(slr.size()) + " vs " +
                                std::to_string(lm.size()) + ")");
  std::vector<double> out(slr.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = slr[k] + lm[k];
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  require_finite(logits, "softmax");
  if (logits.empty()) return {};
  double max = logits[0];
  for (const auto z : logits) max = std::max(max, z);
  double sum = 0.0;
  for (const auto z : logits) sum += std::exp(z - max);
  const double lse = max + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  require_finite(logits, "softmax");
  if (logits.empty()) return {};
  double max = logits[0];
  for (const auto z : logits) max = std::max(max, z);
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < out.size(); ++k) sum += out[k] = std::exp(logits[k] - max);
  for (auto& v : out) v /= sum;
  return out;
}

double cross_entropy(std::span<const double> dist, TokenId target) {
  if (target >= dist.size()) throw std::out_of_range("cross_entropy: target outside the distribution");
  require_finite(dist, "cross_entropy");
  return -std::log(dist[target]);
}

Gradients Gradients::zeros_like(const ModelParams& p) {
  Gradients g;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    g.weight.push_back(Eigen::MatrixXd::Zero(p.weight[l].rows(), p.weight[l].cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(p.bias[l].size()));
  }
  if (p.train_embedding) g.embedding = Eigen::MatrixXd::Zero(p.embedding.rows(), p.embedding.cols());
  return g;
}

double backward(const ForwardCache& cache, const ModelParams& p, std::span<const TokenId> targets,
                const Eigen::MatrixXd* base, Gradients& grads) {
  const auto n = cache.logits.cols();
  if (static_cast<std::size_t>(n) != targets.size()) throw std::invalid_argument("backward: target count mismatch");
  if (base && (base->rows() != cache.logits.rows() || base->cols() != n))
    throw AlignmentError("backward: base logits shape does not match the batch");
  grads = Gradients::zeros_like(p);
  if (n == 0) return 0.0;

  Eigen::MatrixXd dz = base ? Eigen::MatrixXd(cache.logits + *base) : cache.logits;
  double loss = 0.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    auto col = dz.col(c);
    if (!col.allFinite()) throw NumericError("backward: non-finite logits");
    const double max = col.maxCoeff();
    const double gold = col(targets[c]);
    col = (col.array() - max).exp();
    const double sum = col.sum();
    loss += std::log(sum) + max - gold;
    col /= sum;
    col(targets[c]) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  dz *= inv_n;

  Eigen::MatrixXd dh = p.embedding.transpose() * dz;
  if (p.train_embedding) grads.embedding.noalias() += dz * cache.output.back().transpose();
  for (std::size_t l = p.layers(); l-- > 0;) {
    if (!cache.mask.empty()) dh = dh.cwiseProduct(cache.mask[l]);
    dh = dh.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd& in = l == 0 ? cache.input : cache.output[l - 1];
    grads.weight[l].noalias() = dh * in.transpose();
    grads.bias[l] = dh.rowwise().sum();
    if (l > 0 || p.train_embedding) dh = p.weight[l].transpose() * dh;
  }
  if (p.train_embedding) grads.input = std::move(dh);
  return loss * inv_n;
}

void accumulate_input_gradient(std::span<const SliceRecipe* const> recipes, const Eigen::MatrixXd& input_grad,
                               std::size_t embedding_dim, Gradients& grads) {
  if (grads.embedding.size() == 0) return;
  for (std::size_t c = 0; c < recipes.size(); ++c) {
    for (const auto& term : recipes[c]->terms) {
      for (std::size_t j = 0; j < embedding_dim; ++j)
        grads.embedding(term.token, static_cast<Eigen::Index>(j)) +=
            term.weight * input_grad(static_cast<Eigen::Index>(term.offset + j), static_cast<Eigen::Index>(c));
    }
  }
}

void adamw_step(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                const AdamWConfig& cfg, std::uint64_t t) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw std::invalid_argument("adamw_step: state shape mismatch");
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < param.size(); ++k) {
    param[k] *= decay;
    m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
    v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
    param[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
  }
}

AdamW::AdamW(const ModelParams& p, AdamWConfig cfg)
    : cfg_(cfg), m_(Gradients::zeros_like(p)), v_(Gradients::zeros_like(p)) {}

namespace {

template <typename M>
std::span<double> flat(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename M>
std::span<const double> flat(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

void AdamW::step(ModelParams& p, const Gradients& g) {
  ++t_;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    adamw_step(flat(p.weight[l]), flat(g.weight[l]), flat(m_.weight[l]), flat(v_.weight[l]), cfg_, t_);
    adamw_step(flat(p.bias[l]), flat(g.bias[l]), flat(m_.bias[l]), flat(v_.bias[l]), cfg_, t_);
  }
  if (p.train_embedding)
    adamw_step(flat(p.embedding), flat(g.embedding), flat(m_.embedding), flat(v_.embedding), cfg_, t_);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw DataError("checkpoint: truncated");
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = m.cast<float>();
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  nlohmann::json meta = ckpt.metadata;
  std::vector<std::size_t> hidden;
  for (const auto& w : p.weight) hidden.push_back(static_cast<std::size_t>(w.rows()));
  meta["model"] = {{"input_dim", p.input_dim()},
                   {"hidden", hidden},
                   {"dropout", p.dropout},
                   {"train_embedding", p.train_embedding},
                   {"vocab_size", p.vocab_size()},
                   {"embedding_dim", p.embedding_dim()}};
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write("CKPT", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u32(out, static_cast<std::uint32_t>(2 * p.layers() + (p.train_embedding ? 1 : 0)));
  for (std::size_t l = 0; l < p.layers(); ++l) {
    put_tensor(out, "layer" + std::to_string(l) + ".weight", p.weight[l]);
    put_tensor(out, "layer" + std::to_string(l) + ".bias", p.bias[l]);
  }
  if (p.train_embedding) put_tensor(out, "embedding", p.embedding);
}

Checkpoint read_checkpoint(const std::filesystem::path& path, const EmbeddingTable& emb) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "CKPT") throw DataError(path.string() + ": bad magic");
  if (const auto version = get_u32(in); version != kCheckpointVersion)
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::string text(get_u32(in), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text.size()))) throw DataError("checkpoint: truncated");
  Checkpoint ckpt;
  try {
    ckpt.metadata = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  const auto& model = ckpt.metadata.at("model");
  const auto hidden = model.at("hidden").get<std::vector<std::size_t>>();
  ckpt.params = init_params(model.at("input_dim").get<std::size_t>(), hidden, emb, model.at("dropout"), 0);
  ckpt.params.train_embedding = model.at("train_embedding").get<bool>();

  const auto count = get_u32(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(get_u32(in), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) throw DataError("checkpoint: truncated");
    const auto rows = get_u32(in), cols = get_u32(in);
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(rows, cols);
    if (!in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float))))
      throw DataError("checkpoint: truncated tensor " + name);
    Eigen::MatrixXd* target = nullptr;
    Eigen::MatrixXd bias_buffer;
    std::size_t layer = 0;
    bool is_bias = false;
    if (name == "embedding") {
      target = &ckpt.params.embedding;
    } else if (name.rfind("layer", 0) == 0) {
      const auto dot = name.find('.');
      layer = std::stoul(name.substr(5, dot - 5));
      if (layer >= ckpt.params.layers()) throw DataError("checkpoint: unexpected tensor " + name);
      is_bias = name.substr(dot + 1) == "bias";
      target = is_bias ? &bias_buffer : &ckpt.params.weight[layer];
      if (is_bias) bias_buffer.resize(ckpt.params.bias[layer].size(), 1);
    } else {
      throw DataError("checkpoint: unexpected tensor " + name);
    }
    if (target->rows() != static_cast<Eigen::Index>(rows) || target->cols() != static_cast<Eigen::Index>(cols))
      throw DataError("checkpoint: tensor " + name + " has the wrong shape");
    *target = f.cast<double>();
    if (is_bias) ckpt.params.bias[layer] = bias_buffer.col(0);
  }
  return ckpt;
}

}  // namespace slicelm
