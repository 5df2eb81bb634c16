#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "slicelm/graph.hpp"
#include "slicelm/slicer.hpp"

namespace slicelm {

// Per-type high-resolution capacities, in kRelativeTypes order.
using Capacities = std::array<std::size_t, 6>;
inline constexpr Capacities kDefaultCapacities = {2, 2, 1, 2, 2, 1};

struct EncoderConfig {
  Capacities capacity = kDefaultCapacities;
  std::size_t embedding_dim = 768;
  std::size_t label_count = 0;
};

// Every type gets its high-resolution slots followed by one low-resolution
// slot, in kRelativeTypes order; the context slot comes last. Each relative
// slot is [one-hot label ; word vector].
struct SlotLayout {
  std::size_t slot_width = 0;
  std::array<std::vector<std::size_t>, 6> high;
  std::array<std::size_t, 6> low{};
  std::size_t context = 0;
  std::size_t dim = 0;
};

SlotLayout slot_layout(const EncoderConfig& cfg);
std::size_t vector_dim(const EncoderConfig& cfg);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim, std::vector<float> values);

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> row(TokenId id) const {
    if (id >= rows_) throw std::out_of_range("embedding row out of range");
    return {values_.data() + static_cast<std::size_t>(id) * dim_, dim_};
  }
  const std::vector<float>& values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

struct ResolutionSplit {
  std::vector<Relative> high;  // first `capacity` relatives, in order
  std::vector<Relative> low;   // the remainder, treated as a set
};

ResolutionSplit partition_resolution(std::span<const Relative> ranked, std::size_t capacity);

// [one-hot(label) ; mean embedding of the accessible anchor tokens].
std::vector<double> encode_relative(const Relative& r, const EmbeddingTable& emb, const LabelVocabulary& labels);

// A slice vector expressed as a linear function of embedding rows:
// x = sum(constants) + sum(weight * Emb[token] placed at offset).
struct SliceRecipe {
  struct Term {
    std::uint32_t offset;
    TokenId token;
    double weight;
  };
  std::size_t dim = 0;
  std::vector<std::pair<std::uint32_t, double>> constants;
  std::vector<Term> terms;
};

SliceRecipe slice_recipe(const Slice& s, const EncoderConfig& cfg, const LabelVocabulary& labels);

// rows(token) must return a contiguous range of embedding_dim values.
template <typename RowLookup>
void materialize(const SliceRecipe& recipe, std::size_t embedding_dim, RowLookup&& rows, std::span<double> out) {
  if (out.size() != recipe.dim) throw std::invalid_argument("materialize: output size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& [index, value] : recipe.constants) out[index] += value;
  for (const auto& term : recipe.terms) {
    const auto row = rows(term.token);
    double* dst = out.data() + term.offset;
    for (std::size_t j = 0; j < embedding_dim; ++j) dst[j] += term.weight * static_cast<double>(row[j]);
  }
}

struct SliceVector {
  std::vector<double> values;
  SlotLayout layout;
};

SliceVector encode_slice(const Slice& s, const EncoderConfig& cfg, const EmbeddingTable& emb,
                         const LabelVocabulary& labels);

}  // namespace slicelm
