#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slicelm/encoder.hpp"

namespace slicelm {

// Little-endian float32 matrices with a 4-byte magic and two u32 header
// fields.
//   EMB1: rows, dim          (embedding table)
//   SVC1: rows, dim          (encoded slice vectors)
//   LGT1: width, rows        (base-LM logits)
//   PST1: width, rows        (posterior distributions)
inline constexpr std::string_view kEmbeddingMagic = "EMB1";
inline constexpr std::string_view kSliceVectorMagic = "SVC1";
inline constexpr std::string_view kLogitsMagic = "LGT1";
inline constexpr std::string_view kPosteriorMagic = "PST1";

struct FloatRows {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * width, width}; }
};

FloatRows read_float_rows(const std::filesystem::path& path, std::string_view magic);
void write_float_rows(const std::filesystem::path& path, std::string_view magic, const FloatRows& rows);

EmbeddingTable read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

struct RowRange {
  std::size_t offset = 0;
  std::size_t count = 0;
};

// Sentence id -> row range sidecar, stored as "<file>.index.json".
using RowIndex = std::map<std::string, RowRange>;

std::filesystem::path index_path_for(const std::filesystem::path& data);
RowIndex read_row_index(const std::filesystem::path& path);
void write_row_index(const std::filesystem::path& path, const RowIndex& index);

// Per-token base-LM logits: row i of a sentence predicts token i from the
// tokens before it.
class BaseLogitsSource {
 public:
  BaseLogitsSource(FloatRows rows, RowIndex index);
  static BaseLogitsSource load(const std::filesystem::path& logits);

  std::size_t vocab_size() const { return rows_.width; }
  std::size_t total_rows() const { return rows_.rows; }
  std::optional<RowRange> find(const std::string& sentence) const;
  // Throws AlignmentError if the sentence is missing or has a different length.
  RowRange require(const std::string& sentence, std::size_t token_count) const;
  std::span<const float> row(std::size_t i) const { return rows_.row(i); }
  const RowIndex& index() const { return index_; }

 private:
  FloatRows rows_;
  RowIndex index_;
};

}  // namespace slicelm
