#include "slicelm/graph.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "slicelm/error.hpp"

namespace slicelm {

const Node* Graph::find_node(NodeId node_id) const {
  for (const auto& n : nodes)
    if (n.id == node_id) return &n;
  return nullptr;
}

GraphTopology::GraphTopology(const Graph& graph) : graph_(&graph) {
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) index_.emplace(graph.nodes[i].id, i);
  in_.resize(graph.nodes.size());
  out_.resize(graph.nodes.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    if (edge.source == edge.target) continue;
    const auto s = index_.find(edge.source);
    const auto t = index_.find(edge.target);
    if (s == index_.end() || t == index_.end()) continue;
    out_[s->second].push_back(e);
    in_[t->second].push_back(e);
  }
}

std::span<const std::size_t> GraphTopology::in_edges(NodeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return {};
  return in_[it->second];
}

std::span<const std::size_t> GraphTopology::out_edges(NodeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return {};
  return out_[it->second];
}

LabelVocabulary::LabelVocabulary(std::vector<std::string> labels) : labels_(std::move(labels)) {
  labels_.emplace_back(kDummyLabel);
  std::sort(labels_.begin(), labels_.end());
  labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
  for (std::size_t i = 0; i < labels_.size(); ++i) index_.emplace(labels_[i], i);
}

LabelVocabulary LabelVocabulary::from_graphs(std::span<const Graph> graphs) {
  std::vector<std::string> labels;
  for (const auto& g : graphs)
    for (const auto& e : g.edges) labels.push_back(e.label);
  return LabelVocabulary(std::move(labels));
}

std::optional<std::size_t> LabelVocabulary::find(std::string_view label) const {
  const auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelVocabulary::index_of(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw VocabularyError("unknown edge label '" + std::string(label) + "'");
}

std::string_view to_string(FrameworkClass value) {
  return value == FrameworkClass::dependency ? "dependency" : "constituency";
}

std::size_t ValidationReport::count(Violation::Kind kind) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; }));
}

std::string_view to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::dangling_endpoint: return "dangling_endpoint";
    case Violation::Kind::duplicate_node: return "duplicate_node";
    case Violation::Kind::self_loop: return "self_loop";
    case Violation::Kind::cycle: return "cycle";
    case Violation::Kind::span_bounds: return "span_bounds";
    case Violation::Kind::anchor_order: return "anchor_order";
  }
  return "unknown";
}

namespace {

// Strongly connected components with more than one node (Tarjan).
std::vector<std::vector<NodeId>> cyclic_components(const Graph& g, const GraphTopology& topo) {
  std::map<NodeId, int> index, low;
  std::set<NodeId> on_stack;
  std::vector<NodeId> stack;
  std::vector<std::vector<NodeId>> result;
  int counter = 0;

  std::function<void(NodeId)> visit = [&](NodeId v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    for (const auto e : topo.out_edges(v)) {
      const NodeId w = topo.edge(e).target;
      if (!index.contains(w)) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.contains(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<NodeId> component;
      NodeId w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        component.push_back(w);
      } while (w != v);
      if (component.size() > 1) {
        std::sort(component.begin(), component.end());
        result.push_back(std::move(component));
      }
    }
  };
  for (const auto& n : g.nodes)
    if (!index.contains(n.id)) visit(n.id);
  return result;
}

}  // namespace

ValidationReport validate_graph(const Graph& g) {
  ValidationReport report;
  auto add = [&](Violation::Kind kind, std::string detail) {
    report.violations.push_back({kind, std::move(detail)});
  };

  std::set<NodeId> ids;
  for (const auto& n : g.nodes)
    if (!ids.insert(n.id).second) add(Violation::Kind::duplicate_node, "node " + std::to_string(n.id));

  for (const auto& e : g.edges) {
    for (const NodeId end : {e.source, e.target})
      if (!ids.contains(end))
        add(Violation::Kind::dangling_endpoint,
            "edge " + std::to_string(e.source) + "->" + std::to_string(e.target) + " references missing node " +
                std::to_string(end));
    if (e.source == e.target) add(Violation::Kind::self_loop, "node " + std::to_string(e.source));
  }

  const GraphTopology topo(g);
  for (const auto& component : cyclic_components(g, topo)) {
    std::string detail = "cycle through nodes";
    for (const auto v : component) detail += " " + std::to_string(v);
    add(Violation::Kind::cycle, std::move(detail));
  }

  for (const auto& n : g.nodes) {
    for (const auto& s : n.anchors)
      if (!(s.from < s.to && s.to <= g.text.size()))
        add(Violation::Kind::span_bounds, "node " + std::to_string(n.id) + " anchor [" + std::to_string(s.from) +
                                              ", " + std::to_string(s.to) + ")");
    for (std::size_t k = 1; k < n.anchors.size(); ++k)
      if (n.anchors[k].from < n.anchors[k - 1].to)
        add(Violation::Kind::anchor_order, "node " + std::to_string(n.id));
  }
  return report;
}

Graph convert_ptb_node_labels(const Graph& g) {
  const GraphTopology topo(g);
  for (const auto& n : g.nodes)
    if (topo.in_edges(n.id).size() > 1)
      throw NotATreeError("graph " + g.id + ": node " + std::to_string(n.id) + " has several incoming edges");

  Graph out = g;
  for (auto& e : out.edges) {
    const Node* child = g.find_node(e.target);
    if (child == nullptr) throw SchemaError("edges", "edge target " + std::to_string(e.target) + " does not exist");
    if (topo.out_edges(child->id).empty()) {
      e.label = std::string(kTerminalLabel);
    } else {
      if (!child->label) throw SchemaError("label", "phrase node " + std::to_string(child->id) + " has no label");
      e.label = *child->label;
    }
  }
  for (auto& n : out.nodes) n.label.reset();
  return out;
}

Graph ensure_nonempty_edges(const Graph& g) {
  if (g.nodes.empty()) throw EmptyGraphError("graph " + g.id + " has no nodes");
  if (!g.edges.empty()) return g;
  Graph out = g;
  NodeId max_id = g.nodes.front().id, min_id = g.nodes.front().id;
  for (const auto& n : g.nodes) {
    max_id = std::max(max_id, n.id);
    min_id = std::min(min_id, n.id);
  }
  out.nodes.push_back(Node{max_id + 1, {}, std::nullopt});
  out.edges.push_back(Edge{max_id + 1, min_id, std::string(kDummyLabel)});
  return out;
}

Graph remove_self_loops(const Graph& g) {
  Graph out = g;
  std::erase_if(out.edges, [](const Edge& e) { return e.source == e.target; });
  return out;
}

std::vector<Span> word_spans(std::string_view text) {
  std::vector<Span> words;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back({start, i});
  }
  return words;
}

namespace {

bool exempt_from_classification(const Node& n, const GraphTopology& topo) {
  if (!n.anchors.empty()) return false;
  if (n.label && *n.label == "ROOT") return true;
  // Synthetic root added by ensure_nonempty_edges.
  const auto out = topo.out_edges(n.id);
  if (!topo.in_edges(n.id).empty() || out.empty()) return false;
  return std::all_of(out.begin(), out.end(), [&](std::size_t e) { return topo.edge(e).label == kDummyLabel; });
}

}  // namespace

FrameworkClass classify_framework(std::span<const Graph> corpus) {
  for (const auto& g : corpus) {
    const GraphTopology topo(g);
    const auto words = word_spans(g.text);
    for (const auto& n : g.nodes) {
      if (exempt_from_classification(n, topo)) continue;
      std::size_t anchored_words = 0;
      for (const auto& w : words)
        if (std::any_of(n.anchors.begin(), n.anchors.end(), [&](const Span& s) { return s.overlaps(w); }))
          ++anchored_words;
      if (anchored_words != 1) return FrameworkClass::constituency;
    }
  }
  return FrameworkClass::dependency;
}

}  // namespace slicelm
