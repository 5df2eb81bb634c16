#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "slicelm/alignment.hpp"
#include "slicelm/graph.hpp"

namespace slicelm {

enum class RelativeType : std::uint8_t { parent, sibling, grandparent, aunt, child, coparent };

inline constexpr std::array<RelativeType, 6> kRelativeTypes = {
    RelativeType::parent, RelativeType::sibling, RelativeType::grandparent,
    RelativeType::aunt,   RelativeType::child,   RelativeType::coparent};

std::string_view to_string(RelativeType type);
std::optional<RelativeType> parse_relative_type(std::string_view name);

struct Relative {
  NodeId node = 0;
  RelativeType type = RelativeType::parent;
  std::string label;           // label of the edge that selected this node
  std::vector<NodeId> via;     // intermediate nodes on the path from the anchor
  std::size_t discovery = 0;   // rank of the selecting path in edge order
  bool anchor_stripped = false;
  std::vector<std::size_t> anchor_positions;  // accessible anchor tokens, all before the target
  std::vector<TokenId> anchor_tokens;
  std::optional<std::size_t> distance;  // target position minus nearest accessible anchor

  bool operator==(const Relative&) const = default;
};

class RelativeSet {
 public:
  std::vector<Relative>& operator[](RelativeType t) { return lists_[static_cast<std::size_t>(t)]; }
  const std::vector<Relative>& operator[](RelativeType t) const { return lists_[static_cast<std::size_t>(t)]; }
  std::size_t total() const;
  bool empty() const { return total() == 0; }
  bool operator==(const RelativeSet&) const = default;

 private:
  std::array<std::vector<Relative>, 6> lists_;
};

struct Slice {
  std::size_t position = 0;
  std::optional<NodeId> anchor;
  RelativeSet relatives;
  std::vector<std::size_t> context_positions;  // preceding tokens of the same anchor group
  std::vector<TokenId> context_tokens;

  bool operator==(const Slice&) const = default;
};

// Every typed path instance from the anchor, in discovery order, without
// masking or deduplication.
RelativeSet collect_relatives(const GraphTopology& topology, NodeId anchor);

// Drops relatives reached through or ending in nodes anchored only after
// position i, strips anchors of nodes anchored at i, records the accessible
// past anchor tokens, and keeps the first admissible instance per node and type.
// Discovery indices are renumbered over the survivors.
RelativeSet apply_future_mask(RelativeSet relatives, const AlignedSentence& aligned, std::size_t i);

// Orders each type by distance to position i; anchorless relatives last, by
// discovery.
RelativeSet rank_relatives(RelativeSet relatives, const AlignedSentence& aligned, std::size_t i);

Slice extract_slice(const AlignedSentence& aligned, std::size_t i);
std::vector<Slice> slice_sentence(const AlignedSentence& aligned);

nlohmann::json slice_to_json(const Slice& slice);
Slice slice_from_json(const nlohmann::json& object);

}  // namespace slicelm
