#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "slicelm/alignment.hpp"
#include "slicelm/graph.hpp"
#include "slicelm/slicer.hpp"

// Brute-force slicing straight from the relative-type definitions: every
// length <= 2 path from the anchor is classified by its edge directions, then
// admissibility is decided per path from raw token overlaps.
namespace oracle {

using namespace slicelm;

struct PathInstance {
  RelativeType type;
  NodeId node;
  std::vector<NodeId> via;
  std::string label;
};

struct ExpectedRelative {
  NodeId node;
  std::string label;
  bool stripped;
  std::vector<std::size_t> positions;
};

using Expected = std::array<std::vector<ExpectedRelative>, 6>;

inline std::vector<std::size_t> token_positions(const Graph& g, const TokenSequence& tokens, NodeId id) {
  std::vector<std::size_t> out;
  const Node* n = g.find_node(id);
  if (!n) return out;
  for (std::size_t t = 0; t < tokens.size(); ++t)
    for (const auto& s : n->anchors)
      if (s.from < tokens[t].span.to && tokens[t].span.from < s.to) {
        out.push_back(t);
        break;
      }
  return out;
}

inline std::vector<PathInstance> enumerate_paths(const Graph& g, NodeId a) {
  std::vector<PathInstance> out;
  const auto& E = g.edges;
  auto loop = [](const Edge& e) { return e.source == e.target; };
  // parents and everything above them
  for (const auto& pe : E) {
    if (loop(pe) || pe.target != a) continue;
    const NodeId p = pe.source;
    out.push_back({RelativeType::parent, p, {}, pe.label});
    for (const auto& se : E)
      if (!loop(se) && se.source == p && se.target != a) out.push_back({RelativeType::sibling, se.target, {p}, se.label});
    for (const auto& ge : E) {
      if (loop(ge) || ge.target != p) continue;
      const NodeId o = ge.source;
      out.push_back({RelativeType::grandparent, o, {p}, ge.label});
      for (const auto& ae : E)
        if (!loop(ae) && ae.source == o && ae.target != p && ae.target != a)
          out.push_back({RelativeType::aunt, ae.target, {p, o}, ae.label});
    }
  }
  for (const auto& ce : E) {
    if (loop(ce) || ce.source != a) continue;
    const NodeId c = ce.target;
    out.push_back({RelativeType::child, c, {}, ce.label});
    for (const auto& re : E)
      if (!loop(re) && re.target == c && re.source != a) out.push_back({RelativeType::coparent, re.source, {c}, re.label});
  }
  return out;
}

inline Expected expected_relatives(const Graph& g, const TokenSequence& tokens, NodeId anchor, std::size_t i) {
  auto future_only = [&](NodeId v) {
    const auto pos = token_positions(g, tokens, v);
    return !pos.empty() && std::all_of(pos.begin(), pos.end(), [&](std::size_t p) { return p > i; });
  };
  Expected out;
  std::array<std::set<NodeId>, 6> seen;
  for (const auto& path : enumerate_paths(g, anchor)) {
    if (future_only(path.node)) continue;
    if (std::any_of(path.via.begin(), path.via.end(), future_only)) continue;
    const auto t = static_cast<std::size_t>(path.type);
    if (!seen[t].insert(path.node).second) continue;
    const auto pos = token_positions(g, tokens, path.node);
    ExpectedRelative r{path.node, path.label, std::find(pos.begin(), pos.end(), i) != pos.end(), {}};
    if (!r.stripped)
      for (const auto p : pos)
        if (p < i) r.positions.push_back(p);
    out[t].push_back(std::move(r));
  }
  return out;
}

// Sort key for ranked lists: anchored before anchorless, then nearest first.
inline bool ranked(const std::vector<Relative>& list, std::size_t i) {
  for (std::size_t k = 1; k < list.size(); ++k) {
    const auto& a = list[k - 1];
    const auto& b = list[k];
    const bool ha = !a.anchor_positions.empty(), hb = !b.anchor_positions.empty();
    if (ha != hb) {
      if (!ha) return false;
      continue;
    }
    if (ha) {
      const auto da = i - a.anchor_positions.back(), db = i - b.anchor_positions.back();
      if (da > db || (da == db && a.discovery > b.discovery)) return false;
    } else if (a.discovery > b.discovery) {
      return false;
    }
  }
  return true;
}

}  // namespace oracle
