#include "slicelm/alignment.hpp"

#include <algorithm>
#include <stdexcept>

#include "slicelm/error.hpp"

namespace slicelm {

std::string_view to_string(Unanalyzable reason) {
  switch (reason) {
    case Unanalyzable::no: return "analyzable";
    case Unanalyzable::multiword_continuation: return "multiword_continuation";
    case Unanalyzable::subword_continuation: return "subword_continuation";
    case Unanalyzable::unanchored: return "unanchored";
  }
  return "unknown";
}

AlignedSentence::AlignedSentence(std::shared_ptr<const Graph> graph, TokenSequence tokens,
                                 std::vector<TokenAlignment> alignment)
    : graph_(std::move(graph)), topology_(*graph_), tokens_(std::move(tokens)), alignment_(std::move(alignment)) {
  for (const auto& n : graph_->nodes) {
    auto& positions = node_tokens_[n.id];
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (std::any_of(n.anchors.begin(), n.anchors.end(), [&](const Span& s) { return s.overlaps(tokens_[i].span); }))
        positions.push_back(i);
  }
}

std::span<const std::size_t> AlignedSentence::node_tokens(NodeId node) const {
  const auto it = node_tokens_.find(node);
  if (it == node_tokens_.end()) return {};
  return it->second;
}

NodeId select_anchor_node(std::span<const NodeId> candidates, const GraphTopology& topology) {
  if (candidates.empty()) throw std::invalid_argument("select_anchor_node: empty candidate set");
  NodeId best = candidates.front();
  std::size_t best_degree = topology.degree(best);
  for (const auto c : candidates.subspan(1)) {
    const auto d = topology.degree(c);
    if (d > best_degree || (d == best_degree && c > best)) {
      best = c;
      best_degree = d;
    }
  }
  return best;
}

AlignedSentence align_tokens_to_anchors(TokenSequence tokens, std::shared_ptr<const Graph> g) {
  if (detokenize(tokens) != g->text)
    throw AlignmentError("graph " + g->id + ": token surfaces do not reproduce the graph text");
  const GraphTopology topology(*g);
  std::vector<TokenAlignment> alignment(tokens.size());

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto& a = alignment[i];
    for (const auto& n : g->nodes)
      if (std::any_of(n.anchors.begin(), n.anchors.end(), [&](const Span& s) { return s.overlaps(tokens[i].span); }))
        a.candidates.push_back(n.id);
    std::sort(a.candidates.begin(), a.candidates.end());

    const TokenAlignment* prev = i > 0 ? &alignment[i - 1] : nullptr;
    const bool continues = prev != nullptr && prev->anchor &&
                           std::binary_search(a.candidates.begin(), a.candidates.end(), *prev->anchor);
    if (continues) {
      const bool new_word = !tokens[i].surface.empty() && tokens[i].surface.front() == ' ';
      a.reason = new_word ? Unanalyzable::multiword_continuation : Unanalyzable::subword_continuation;
      a.anchor = prev->anchor;
    } else if (a.candidates.empty()) {
      a.reason = Unanalyzable::unanchored;
    } else {
      a.anchor = select_anchor_node(a.candidates, topology);
    }

    if (a.analyzable() || i == 0) {
      a.group_start = i;
    } else {
      a.group_start = prev->group_start;
    }
    a.group_index = i - a.group_start;
  }
  return AlignedSentence(std::move(g), std::move(tokens), std::move(alignment));
}

}  // namespace slicelm
