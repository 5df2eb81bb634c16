#include "slicelm/slicer.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include "slicelm/error.hpp"

namespace slicelm {

std::string_view to_string(RelativeType type) {
  switch (type) {
    case RelativeType::parent: return "parent";
    case RelativeType::sibling: return "sibling";
    case RelativeType::grandparent: return "grandparent";
    case RelativeType::aunt: return "aunt";
    case RelativeType::child: return "child";
    case RelativeType::coparent: return "coparent";
  }
  return "unknown";
}

std::optional<RelativeType> parse_relative_type(std::string_view name) {
  for (const auto t : kRelativeTypes)
    if (to_string(t) == name) return t;
  return std::nullopt;
}

std::size_t RelativeSet::total() const {
  std::size_t n = 0;
  for (const auto& l : lists_) n += l.size();
  return n;
}

RelativeSet collect_relatives(const GraphTopology& topology, NodeId anchor) {
  RelativeSet out;
  auto add = [&](RelativeType type, NodeId node, const Edge& via_edge, std::vector<NodeId> via) {
    auto& list = out[type];
    Relative r;
    r.node = node;
    r.type = type;
    r.label = via_edge.label;
    r.via = std::move(via);
    r.discovery = list.size();
    list.push_back(std::move(r));
  };

  for (const auto pe : topology.in_edges(anchor)) {
    const NodeId p = topology.edge(pe).source;
    add(RelativeType::parent, p, topology.edge(pe), {});
    for (const auto se : topology.out_edges(p)) {
      const NodeId b = topology.edge(se).target;
      if (b != anchor) add(RelativeType::sibling, b, topology.edge(se), {p});
    }
    for (const auto ge : topology.in_edges(p)) {
      const NodeId o = topology.edge(ge).source;
      add(RelativeType::grandparent, o, topology.edge(ge), {p});
      for (const auto ae : topology.out_edges(o)) {
        const NodeId t = topology.edge(ae).target;
        if (t != p && t != anchor) add(RelativeType::aunt, t, topology.edge(ae), {p, o});
      }
    }
  }
  for (const auto ce : topology.out_edges(anchor)) {
    const NodeId c = topology.edge(ce).target;
    add(RelativeType::child, c, topology.edge(ce), {});
    for (const auto re : topology.in_edges(c)) {
      const NodeId r = topology.edge(re).source;
      if (r != anchor) add(RelativeType::coparent, r, topology.edge(re), {c});
    }
  }
  return out;
}

namespace {

enum class Visibility { future_only, stripped, past, unanchored };

Visibility visibility(const AlignedSentence& aligned, NodeId node, std::size_t i) {
  const auto positions = aligned.node_tokens(node);
  if (positions.empty()) return Visibility::unanchored;
  if (positions.front() > i) return Visibility::future_only;
  if (std::binary_search(positions.begin(), positions.end(), i)) return Visibility::stripped;
  return Visibility::past;
}

}  // namespace

RelativeSet apply_future_mask(RelativeSet relatives, const AlignedSentence& aligned, std::size_t i) {
  RelativeSet out;
  for (const auto type : kRelativeTypes) {
    std::set<NodeId> seen;
    for (auto& r : relatives[type]) {
      const auto vis = visibility(aligned, r.node, i);
      if (vis == Visibility::future_only) continue;
      if (std::any_of(r.via.begin(), r.via.end(),
                      [&](NodeId v) { return visibility(aligned, v, i) == Visibility::future_only; }))
        continue;
      if (!seen.insert(r.node).second) continue;
      r.discovery = out[type].size();
      r.anchor_stripped = vis == Visibility::stripped;
      r.anchor_positions.clear();
      r.anchor_tokens.clear();
      if (vis == Visibility::past) {
        for (const auto pos : aligned.node_tokens(r.node)) {
          if (pos >= i) break;
          r.anchor_positions.push_back(pos);
          r.anchor_tokens.push_back(aligned.tokens()[pos].id);
        }
      }
      out[type].push_back(std::move(r));
    }
  }
  return out;
}

RelativeSet rank_relatives(RelativeSet relatives, const AlignedSentence& /*aligned*/, std::size_t i) {
  for (const auto type : kRelativeTypes) {
    auto& list = relatives[type];
    for (auto& r : list) {
      r.distance.reset();
      if (!r.anchor_positions.empty()) r.distance = i - r.anchor_positions.back();
    }
    std::stable_sort(list.begin(), list.end(), [](const Relative& a, const Relative& b) {
      if (a.distance.has_value() != b.distance.has_value()) return a.distance.has_value();
      if (a.distance && *a.distance != *b.distance) return *a.distance < *b.distance;
      return a.discovery < b.discovery;
    });
  }
  return relatives;
}

namespace {

Slice empty_slice(std::size_t i) {
  Slice s;
  s.position = i;
  return s;
}

Slice analyzable_slice(const AlignedSentence& aligned, std::size_t i) {
  Slice s;
  s.position = i;
  s.anchor = aligned.at(i).anchor;
  s.relatives =
      rank_relatives(apply_future_mask(collect_relatives(aligned.topology(), *s.anchor), aligned, i), aligned, i);
  return s;
}

Slice inherited_slice(const AlignedSentence& aligned, std::size_t i, const Slice& group_head) {
  Slice s = group_head;
  s.position = i;
  s.context_positions.clear();
  s.context_tokens.clear();
  for (std::size_t k = aligned.at(i).group_start; k < i; ++k) {
    s.context_positions.push_back(k);
    s.context_tokens.push_back(aligned.tokens()[k].id);
  }
  return s;
}

}  // namespace

Slice extract_slice(const AlignedSentence& aligned, std::size_t i) {
  if (i >= aligned.size()) throw std::out_of_range("extract_slice: position out of range");
  const auto& a = aligned.at(i);
  if (a.analyzable()) return analyzable_slice(aligned, i);
  if (a.group_start == i) return empty_slice(i);
  return inherited_slice(aligned, i, extract_slice(aligned, a.group_start));
}

std::vector<Slice> slice_sentence(const AlignedSentence& aligned) {
  std::vector<Slice> slices;
  slices.reserve(aligned.size());
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    const auto& a = aligned.at(i);
    if (a.analyzable())
      slices.push_back(analyzable_slice(aligned, i));
    else if (a.group_start == i)
      slices.push_back(empty_slice(i));
    else
      slices.push_back(inherited_slice(aligned, i, slices[a.group_start]));
  }
  return slices;
}

nlohmann::json slice_to_json(const Slice& slice) {
  nlohmann::json object;
  object["position"] = slice.position;
  object["anchor"] = slice.anchor ? nlohmann::json(*slice.anchor) : nlohmann::json(nullptr);
  auto& rels = object["relatives"] = nlohmann::json::object();
  for (const auto type : kRelativeTypes) {
    auto& list = rels[std::string(to_string(type))] = nlohmann::json::array();
    for (const auto& r : slice.relatives[type]) {
      list.push_back({{"node", r.node},
                      {"label", r.label},
                      {"via", r.via},
                      {"discovery", r.discovery},
                      {"masked", r.anchor_stripped},
                      {"positions", r.anchor_positions},
                      {"tokens", r.anchor_tokens},
                      {"distance", r.distance ? nlohmann::json(*r.distance) : nlohmann::json(nullptr)}});
    }
  }
  object["context_positions"] = slice.context_positions;
  object["context_tokens"] = slice.context_tokens;
  return object;
}

Slice slice_from_json(const nlohmann::json& object) {
  try {
    Slice s;
    s.position = object.at("position").get<std::size_t>();
    if (!object.at("anchor").is_null()) s.anchor = object.at("anchor").get<NodeId>();
    for (const auto& [name, list] : object.at("relatives").items()) {
      const auto type = parse_relative_type(name);
      if (!type) throw SchemaError("relatives", "unknown relative type '" + name + "'");
      for (const auto& jr : list) {
        Relative r;
        r.node = jr.at("node").get<NodeId>();
        r.type = *type;
        r.label = jr.at("label").get<std::string>();
        r.via = jr.at("via").get<std::vector<NodeId>>();
        r.discovery = jr.at("discovery").get<std::size_t>();
        r.anchor_stripped = jr.at("masked").get<bool>();
        r.anchor_positions = jr.at("positions").get<std::vector<std::size_t>>();
        r.anchor_tokens = jr.at("tokens").get<std::vector<TokenId>>();
        if (!jr.at("distance").is_null()) r.distance = jr.at("distance").get<std::size_t>();
        s.relatives[*type].push_back(std::move(r));
      }
    }
    s.context_positions = object.at("context_positions").get<std::vector<std::size_t>>();
    s.context_tokens = object.at("context_tokens").get<std::vector<TokenId>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("slice", e.what());
  }
}

}  // namespace slicelm
