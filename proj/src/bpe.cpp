#include "slicelm/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "slicelm/error.hpp"

namespace slicelm {

namespace {

struct CodePointRange {
  char32_t first;
  char32_t last;
};

#include "unicode_tables.inc"

template <std::size_t N>
bool in_ranges(const CodePointRange (&ranges)[N], char32_t c) {
  const auto it = std::upper_bound(std::begin(ranges), std::end(ranges), c,
                                   [](char32_t value, const CodePointRange& r) { return value < r.first; });
  if (it == std::begin(ranges)) return false;
  return c <= std::prev(it)->last;
}

enum class CharClass { letter, number, space, other };

CharClass classify(char32_t c) {
  if (c < 0x80) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return CharClass::letter;
    if (c >= '0' && c <= '9') return CharClass::number;
  }
  if (in_ranges(kSpaceRanges, c)) return CharClass::space;
  if (in_ranges(kLetterRanges, c)) return CharClass::letter;
  if (in_ranges(kNumberRanges, c)) return CharClass::number;
  return CharClass::other;
}

struct DecodedChar {
  char32_t value;
  std::size_t byte;
};

// Lenient UTF-8 decoding: an invalid byte decodes to itself as a code point.
std::vector<DecodedChar> decode_utf8(std::string_view text) {
  std::vector<DecodedChar> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    char32_t cp = b0;
    if (b0 >= 0xF0 && b0 < 0xF8) {
      len = 4;
      cp = b0 & 0x07;
    } else if (b0 >= 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if (b0 >= 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    }
    bool valid = len == 1 ? b0 < 0x80 : i + len <= text.size();
    for (std::size_t k = 1; valid && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) valid = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!valid) {
      len = 1;
      cp = b0;
    }
    out.push_back({cp, i});
    i += len;
  }
  return out;
}

std::string encode_utf8(char32_t cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

std::string merge_key(std::string_view left, std::string_view right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key.append(left).append(1, ' ').append(right);
  return key;
}

}  // namespace

std::vector<TokenId> TokenSequence::ids() const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.id);
  return out;
}

std::string detokenize(const TokenSequence& tokens) {
  std::string out;
  for (const auto& t : tokens.tokens) out += t.surface;
  return out;
}

const std::array<std::string, 256>& byte_to_unicode() {
  static const std::array<std::string, 256> table = [] {
    std::array<std::string, 256> t;
    auto printable = [](int b) { return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF); };
    int extra = 0;
    for (int b = 0; b < 256; ++b) t[b] = encode_utf8(printable(b) ? char32_t(b) : char32_t(256 + extra++));
    return t;
  }();
  return table;
}

TokenizerTables::TokenizerTables(std::vector<std::string> id_to_token, std::vector<MergePair> merges)
    : id_to_token_(std::move(id_to_token)), merges_(std::move(merges)) {
  for (std::size_t i = 0; i < id_to_token_.size(); ++i)
    if (!token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i)).second)
      throw TokenizerError("duplicate vocabulary entry '" + id_to_token_[i] + "'");
  for (std::size_t r = 0; r < merges_.size(); ++r) rank_.emplace(merge_key(merges_[r].first, merges_[r].second), r);
}

TokenizerTables TokenizerTables::load(const std::filesystem::path& vocab, const std::filesystem::path& merges) {
  std::ifstream vin(vocab);
  if (!vin) throw ConfigError("cannot open vocabulary file " + vocab.string());
  nlohmann::json object;
  try {
    object = nlohmann::json::parse(vin);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(vocab.string() + ": " + e.what(), e.byte);
  }
  if (!object.is_object()) throw SchemaError("vocab", "expected a JSON object of token -> id");
  std::vector<std::string> id_to_token(object.size());
  std::vector<bool> seen(object.size(), false);
  for (const auto& [token, id] : object.items()) {
    if (!id.is_number_integer()) throw SchemaError("vocab", "id of '" + token + "' is not an integer");
    const auto i = id.get<std::int64_t>();
    if (i < 0 || static_cast<std::size_t>(i) >= id_to_token.size() || seen[static_cast<std::size_t>(i)])
      throw TokenizerError("vocabulary ids are not dense in [0, " + std::to_string(id_to_token.size()) + ")");
    seen[static_cast<std::size_t>(i)] = true;
    id_to_token[static_cast<std::size_t>(i)] = token;
  }

  std::ifstream min(merges);
  if (!min) throw ConfigError("cannot open merges file " + merges.string());
  std::vector<MergePair> pairs;
  std::string line;
  bool first = true;
  while (std::getline(min, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && !line.empty() && line.front() == '#') {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() || line.find(' ', sp + 1) != std::string::npos)
      throw TokenizerError("malformed merge line '" + line + "'");
    pairs.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return TokenizerTables(std::move(id_to_token), std::move(pairs));
}

void TokenizerTables::save(const std::filesystem::path& vocab, const std::filesystem::path& merges) const {
  nlohmann::ordered_json object = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) object[id_to_token_[i]] = i;
  std::ofstream vout(vocab, std::ios::binary);
  if (!vout) throw ConfigError("cannot write " + vocab.string());
  vout << object.dump() << '\n';
  std::ofstream mout(merges, std::ios::binary);
  if (!mout) throw ConfigError("cannot write " + merges.string());
  mout << "#version: 0.2\n";
  for (const auto& [a, b] : merges_) mout << a << ' ' << b << '\n';
}

std::optional<TokenId> TokenizerTables::find(std::string_view token) const {
  const auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> TokenizerTables::merge_rank(std::string_view left, std::string_view right) const {
  const auto it = rank_.find(merge_key(left, right));
  if (it == rank_.end()) return std::nullopt;
  return it->second;
}

std::vector<Span> gpt2_pretokenize(std::string_view text) {
  const auto chars = decode_utf8(text);
  const std::size_t n = chars.size();
  std::vector<CharClass> cls(n);
  for (std::size_t k = 0; k < n; ++k) cls[k] = classify(chars[k].value);
  auto byte_at = [&](std::size_t k) { return k < n ? chars[k].byte : text.size(); };

  std::vector<Span> pieces;
  std::size_t p = 0;
  while (p < n) {
    std::size_t end = p;
    const char32_t c = chars[p].value;
    // 's|'t|'re|'ve|'m|'ll|'d
    if (c == U'\'' && p + 1 < n) {
      const char32_t a = chars[p + 1].value;
      const char32_t b = p + 2 < n ? chars[p + 2].value : 0;
      if (a == U's' || a == U't' || a == U'm' || a == U'd')
        end = p + 2;
      else if ((a == U'r' && b == U'e') || (a == U'v' && b == U'e') || (a == U'l' && b == U'l'))
        end = p + 3;
    }
    //  ?\p{L}+ |  ?\p{N}+ |  ?[^\s\p{L}\p{N}]+
    if (end == p) {
      for (const CharClass run : {CharClass::letter, CharClass::number, CharClass::other}) {
        std::size_t q = p;
        if (c == U' ' && p + 1 < n && cls[p + 1] == run)
          q = p + 1;
        else if (cls[p] != run)
          continue;
        while (q < n && cls[q] == run) ++q;
        end = q;
        break;
      }
    }
    // \s+(?!\S) | \s+
    if (end == p) {
      std::size_t r = p;
      while (r < n && cls[r] == CharClass::space) ++r;
      end = (r < n && r - p > 1) ? r - 1 : r;
    }
    pieces.push_back({byte_at(p), byte_at(end)});
    p = end;
  }
  return pieces;
}

std::vector<std::pair<std::string, std::size_t>> bpe_merge(std::string_view piece, const TokenizerTables& tables) {
  const auto& alphabet = byte_to_unicode();
  std::vector<std::pair<std::string, std::size_t>> symbols;
  symbols.reserve(piece.size());
  for (const char ch : piece) symbols.emplace_back(alphabet[static_cast<unsigned char>(ch)], 1);

  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = 0; k + 1 < symbols.size(); ++k)
      if (const auto r = tables.merge_rank(symbols[k].first, symbols[k + 1].first); r && *r < best_rank) best_rank = *r;
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const auto& [left, right] = tables.merges()[best_rank];
    std::vector<std::pair<std::string, std::size_t>> merged;
    merged.reserve(symbols.size());
    for (std::size_t k = 0; k < symbols.size(); ++k) {
      if (k + 1 < symbols.size() && symbols[k].first == left && symbols[k + 1].first == right) {
        merged.emplace_back(symbols[k].first + symbols[k + 1].first, symbols[k].second + symbols[k + 1].second);
        ++k;
      } else {
        merged.push_back(std::move(symbols[k]));
      }
    }
    symbols = std::move(merged);
  }
  return symbols;
}

TokenSequence bbpe_tokenize(std::string_view text, const TokenizerTables& tables) {
  TokenSequence out;
  for (const auto& piece : gpt2_pretokenize(text)) {
    std::size_t offset = piece.from;
    for (auto& [symbol, bytes] : bpe_merge(text.substr(piece.from, piece.to - piece.from), tables)) {
      const auto id = tables.find(symbol);
      if (!id) throw TokenizerError("merged symbol '" + symbol + "' is not in the vocabulary");
      out.tokens.push_back({*id, std::string(text.substr(offset, bytes)), {offset, offset + bytes}});
      offset += bytes;
    }
  }
  return out;
}

}  // namespace slicelm
