#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slicelm/graph.hpp"

namespace slicelm {

using TokenId = std::uint32_t;

struct Token {
  TokenId id = 0;
  std::string surface;  // raw bytes of the input covered by this token
  Span span;

  bool operator==(const Token&) const = default;
};

struct TokenSequence {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  const Token& operator[](std::size_t i) const { return tokens[i]; }
  std::vector<TokenId> ids() const;
};

std::string detokenize(const TokenSequence& tokens);

using MergePair = std::pair<std::string, std::string>;

// Vocabulary and ranked merges of a byte-level BPE model, in the GPT-2
// byte-to-unicode alphabet.
class TokenizerTables {
 public:
  // id_to_token[i] is the string of token id i.
  TokenizerTables(std::vector<std::string> id_to_token, std::vector<MergePair> merges);

  // vocab: JSON object {token -> id}; merges: one "a b" pair per line with an
  // optional leading comment line.
  static TokenizerTables load(const std::filesystem::path& vocab, const std::filesystem::path& merges);
  void save(const std::filesystem::path& vocab, const std::filesystem::path& merges) const;

  std::size_t vocab_size() const { return id_to_token_.size(); }
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return id_to_token_.at(id); }
  std::optional<std::size_t> merge_rank(std::string_view left, std::string_view right) const;
  const std::vector<MergePair>& merges() const { return merges_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<MergePair> merges_;
  std::unordered_map<std::string, std::size_t> rank_;
};

// GPT-2's reversible byte -> printable code point mapping, as UTF-8 strings.
const std::array<std::string, 256>& byte_to_unicode();

// Splits text with the GPT-2 pre-tokenization pattern. Returned spans are
// byte ranges covering the input exactly.
std::vector<Span> gpt2_pretokenize(std::string_view text);

// Applies ranked merges to the byte symbols of one pre-token. Returns the
// merged symbol strings with the number of input bytes each covers.
std::vector<std::pair<std::string, std::size_t>> bpe_merge(std::string_view piece, const TokenizerTables& tables);

TokenSequence bbpe_tokenize(std::string_view text, const TokenizerTables& tables);

}  // namespace slicelm
