#include "slicelm/encoder.hpp"

#include <algorithm>

#include "slicelm/error.hpp"

namespace slicelm {

SlotLayout slot_layout(const EncoderConfig& cfg) {
  SlotLayout layout;
  layout.slot_width = cfg.label_count + cfg.embedding_dim;
  std::size_t offset = 0;
  for (std::size_t t = 0; t < kRelativeTypes.size(); ++t) {
    for (std::size_t k = 0; k < cfg.capacity[t]; ++k) {
      layout.high[t].push_back(offset);
      offset += layout.slot_width;
    }
    layout.low[t] = offset;
    offset += layout.slot_width;
  }
  layout.context = offset;
  layout.dim = offset + cfg.embedding_dim;
  return layout;
}

std::size_t vector_dim(const EncoderConfig& cfg) {
  std::size_t slots = 0;
  for (const auto c : cfg.capacity) slots += c + 1;
  return slots * (cfg.label_count + cfg.embedding_dim) + cfg.embedding_dim;
}

EmbeddingTable::EmbeddingTable(std::size_t rows, std::size_t dim, std::vector<float> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
  if (values_.size() != rows_ * dim_) throw DataError("embedding table size does not match rows x dim");
}

ResolutionSplit partition_resolution(std::span<const Relative> ranked, std::size_t capacity) {
  const auto cut = std::min(capacity, ranked.size());
  return {{ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(cut)},
          {ranked.begin() + static_cast<std::ptrdiff_t>(cut), ranked.end()}};
}

std::vector<double> encode_relative(const Relative& r, const EmbeddingTable& emb, const LabelVocabulary& labels) {
  std::vector<double> out(labels.size() + emb.dim(), 0.0);
  out[labels.index_of(r.label)] = 1.0;
  if (!r.anchor_tokens.empty()) {
    const double w = 1.0 / static_cast<double>(r.anchor_tokens.size());
    for (const auto t : r.anchor_tokens) {
      const auto row = emb.row(t);
      for (std::size_t j = 0; j < emb.dim(); ++j) out[labels.size() + j] += w * row[j];
    }
  }
  return out;
}

namespace {

// Adds `scale` * [one-hot ; mean word vector] of r into the slot at `offset`.
void add_relative(SliceRecipe& recipe, const Relative& r, std::size_t offset, double scale,
                  const LabelVocabulary& labels) {
  recipe.constants.emplace_back(static_cast<std::uint32_t>(offset + labels.index_of(r.label)), scale);
  if (r.anchor_tokens.empty()) return;
  const double w = scale / static_cast<double>(r.anchor_tokens.size());
  for (const auto t : r.anchor_tokens)
    recipe.terms.push_back({static_cast<std::uint32_t>(offset + labels.size()), t, w});
}

}  // namespace

SliceRecipe slice_recipe(const Slice& s, const EncoderConfig& cfg, const LabelVocabulary& labels) {
  if (labels.size() != cfg.label_count)
    throw ConfigError("label vocabulary has " + std::to_string(labels.size()) + " labels, encoder expects " +
                      std::to_string(cfg.label_count));
  const auto layout = slot_layout(cfg);
  SliceRecipe recipe;
  recipe.dim = layout.dim;
  for (std::size_t t = 0; t < kRelativeTypes.size(); ++t) {
    const auto split = partition_resolution(s.relatives[kRelativeTypes[t]], cfg.capacity[t]);
    for (std::size_t k = 0; k < split.high.size(); ++k) add_relative(recipe, split.high[k], layout.high[t][k], 1.0, labels);
    const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(split.low.size(), 1));
    for (const auto& r : split.low) add_relative(recipe, r, layout.low[t], scale, labels);
  }
  if (!s.context_tokens.empty()) {
    const double w = 1.0 / static_cast<double>(s.context_tokens.size());
    for (const auto t : s.context_tokens) recipe.terms.push_back({static_cast<std::uint32_t>(layout.context), t, w});
  }
  return recipe;
}

SliceVector encode_slice(const Slice& s, const EncoderConfig& cfg, const EmbeddingTable& emb,
                         const LabelVocabulary& labels) {
  if (emb.dim() != cfg.embedding_dim)
    throw ConfigError("embedding dim " + std::to_string(emb.dim()) + " does not match encoder dim " +
                      std::to_string(cfg.embedding_dim));
  const auto recipe = slice_recipe(s, cfg, labels);
  SliceVector v;
  v.layout = slot_layout(cfg);
  v.values.resize(recipe.dim);
  materialize(recipe, emb.dim(), [&](TokenId t) { return emb.row(t); }, v.values);
  return v;
}

}  // namespace slicelm
