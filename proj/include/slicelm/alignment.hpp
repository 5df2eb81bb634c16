#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "slicelm/bpe.hpp"
#include "slicelm/graph.hpp"

namespace slicelm {

// Why a token gets no slice of its own.
enum class Unanalyzable {
  no,
  multiword_continuation,  // continues an anchor that spans several words
  subword_continuation,    // non-initial BPE piece of a single anchored word
  unanchored,              // no node anchors this token
};

std::string_view to_string(Unanalyzable reason);

struct TokenAlignment {
  std::vector<NodeId> candidates;  // nodes whose anchors overlap the token, ascending
  // The token's own anchor for analyzable tokens; the group's anchor for
  // continuations; empty for unanchored tokens.
  std::optional<NodeId> anchor;
  Unanalyzable reason = Unanalyzable::no;
  std::size_t group_start = 0;  // first token of the anchor group
  std::size_t group_index = 0;  // position within the group

  bool analyzable() const { return reason == Unanalyzable::no; }
};

class AlignedSentence {
 public:
  AlignedSentence(std::shared_ptr<const Graph> graph, TokenSequence tokens, std::vector<TokenAlignment> alignment);

  const Graph& graph() const { return *graph_; }
  const std::shared_ptr<const Graph>& graph_ptr() const { return graph_; }
  const GraphTopology& topology() const { return topology_; }
  const TokenSequence& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  const TokenAlignment& at(std::size_t i) const { return alignment_.at(i); }
  const std::vector<TokenAlignment>& alignment() const { return alignment_; }
  // Ascending positions of the tokens overlapped by a node's anchors.
  std::span<const std::size_t> node_tokens(NodeId node) const;

 private:
  std::shared_ptr<const Graph> graph_;
  GraphTopology topology_;
  TokenSequence tokens_;
  std::vector<TokenAlignment> alignment_;
  std::unordered_map<NodeId, std::vector<std::size_t>> node_tokens_;
};

// Most incident edges wins; ties go to the highest node id. Throws
// std::invalid_argument for an empty candidate set.
NodeId select_anchor_node(std::span<const NodeId> candidates, const GraphTopology& topology);

// g.text must equal the detokenized tokens.
AlignedSentence align_tokens_to_anchors(TokenSequence tokens, std::shared_ptr<const Graph> g);

}  // namespace slicelm
