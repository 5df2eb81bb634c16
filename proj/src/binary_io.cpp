#include "slicelm/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "slicelm/error.hpp"

namespace slicelm {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& in, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw DataError(path.string() + ": truncated header");
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw DataError(std::string(what) + " does not fit the u32 header field");
  return static_cast<std::uint32_t>(v);
}

bool width_first(std::string_view magic) { return magic == kLogitsMagic || magic == kPosteriorMagic; }

}  // namespace

FloatRows read_float_rows(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  char got[4];
  if (!in.read(got, 4) || std::string_view(got, 4) != magic)
    throw DataError(path.string() + ": bad magic, expected " + std::string(magic));
  const auto a = read_u32(in, path);
  const auto b = read_u32(in, path);
  FloatRows rows;
  rows.width = width_first(magic) ? a : b;
  rows.rows = width_first(magic) ? b : a;
  rows.values.resize(rows.rows * rows.width);
  const auto bytes = static_cast<std::streamsize>(rows.values.size() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(rows.values.data()), bytes))
    throw DataError(path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes after payload");
  return rows;
}

void write_float_rows(const std::filesystem::path& path, std::string_view magic, const FloatRows& rows) {
  if (rows.values.size() != rows.rows * rows.width) throw DataError("float rows: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(magic.data(), 4);
  const auto w = checked_u32(rows.width, "row width");
  const auto r = checked_u32(rows.rows, "row count");
  write_u32(out, width_first(magic) ? w : r);
  write_u32(out, width_first(magic) ? r : w);
  out.write(reinterpret_cast<const char*>(rows.values.data()),
            static_cast<std::streamsize>(rows.values.size() * sizeof(float)));
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  auto rows = read_float_rows(path, kEmbeddingMagic);
  return EmbeddingTable(rows.rows, rows.width, std::move(rows.values));
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  write_float_rows(path, kEmbeddingMagic, FloatRows{table.rows(), table.dim(), table.values()});
}

std::filesystem::path index_path_for(const std::filesystem::path& data) {
  auto p = data;
  p += ".index.json";
  return p;
}

RowIndex read_row_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open index " + path.string());
  nlohmann::json object;
  try {
    object = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  if (!object.is_object()) throw SchemaError("index", "expected an object of sentence id -> {offset, count}");
  RowIndex index;
  for (const auto& [id, entry] : object.items()) {
    if (!entry.contains("offset") || !entry.contains("count")) throw SchemaError("index", "entry '" + id + "'");
    index[id] = {entry["offset"].get<std::size_t>(), entry["count"].get<std::size_t>()};
  }
  return index;
}

void write_row_index(const std::filesystem::path& path, const RowIndex& index) {
  nlohmann::json object = nlohmann::json::object();
  for (const auto& [id, range] : index) object[id] = {{"offset", range.offset}, {"count", range.count}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << object.dump() << '\n';
}

BaseLogitsSource::BaseLogitsSource(FloatRows rows, RowIndex index) : rows_(std::move(rows)), index_(std::move(index)) {
  std::size_t total = 0;
  for (const auto& [id, range] : index_) {
    if (range.offset + range.count > rows_.rows)
      throw DataError("logits index entry '" + id + "' points past the last row");
    total += range.count;
  }
  if (total != rows_.rows)
    throw DataError("logits index covers " + std::to_string(total) + " rows, file has " + std::to_string(rows_.rows));
}

BaseLogitsSource BaseLogitsSource::load(const std::filesystem::path& logits) {
  return BaseLogitsSource(read_float_rows(logits, kLogitsMagic), read_row_index(index_path_for(logits)));
}

std::optional<RowRange> BaseLogitsSource::find(const std::string& sentence) const {
  const auto it = index_.find(sentence);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

RowRange BaseLogitsSource::require(const std::string& sentence, std::size_t token_count) const {
  const auto range = find(sentence);
  if (!range) throw AlignmentError("no base logits for sentence '" + sentence + "'");
  if (range->count != token_count)
    throw AlignmentError("base logits for sentence '" + sentence + "' have " + std::to_string(range->count) +
                         " rows, sentence has " + std::to_string(token_count) + " tokens");
  return *range;
}

}  // namespace slicelm
