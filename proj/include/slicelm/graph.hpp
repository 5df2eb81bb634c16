#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace slicelm {

using NodeId = int;

// Half-open byte range [from, to) into a sentence's UTF-8 text.
struct Span {
  std::size_t from = 0;
  std::size_t to = 0;

  bool overlaps(const Span& other) const { return from < other.to && other.from < to; }
  bool operator==(const Span&) const = default;
};

struct Node {
  NodeId id = 0;
  std::vector<Span> anchors;
  std::optional<std::string> label;

  bool operator==(const Node&) const = default;
};

struct Edge {
  NodeId source = 0;
  NodeId target = 0;
  std::string label;

  bool operator==(const Edge&) const = default;
};

// An anchored, edge-labeled DAG over one sentence. Anchors are byte offsets
// into `text`.
struct Graph {
  std::string id;
  std::string text;
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<NodeId> tops;

  const Node* find_node(NodeId id) const;
  bool operator==(const Graph&) const = default;
};

inline constexpr std::string_view kDummyLabel = "__DUMMY__";
inline constexpr std::string_view kTerminalLabel = "TERM";

// Incidence lists over a graph, in edge order. Self-loops are skipped. The
// graph must outlive the topology.
class GraphTopology {
 public:
  explicit GraphTopology(const Graph& graph);

  const Graph& graph() const { return *graph_; }
  bool contains(NodeId id) const { return index_.contains(id); }
  // Indices into graph().edges.
  std::span<const std::size_t> in_edges(NodeId id) const;
  std::span<const std::size_t> out_edges(NodeId id) const;
  std::size_t degree(NodeId id) const { return in_edges(id).size() + out_edges(id).size(); }
  const Edge& edge(std::size_t index) const { return graph_->edges[index]; }

 private:
  const Graph* graph_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<std::vector<std::size_t>> in_;
  std::vector<std::vector<std::size_t>> out_;
};

class LabelVocabulary {
 public:
  LabelVocabulary() : LabelVocabulary(std::vector<std::string>{}) {}
  // Sorts and deduplicates; the dummy label is always present.
  explicit LabelVocabulary(std::vector<std::string> labels);

  static LabelVocabulary from_graphs(std::span<const Graph> graphs);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<std::size_t> find(std::string_view label) const;
  // Throws VocabularyError for unknown labels.
  std::size_t index_of(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class FrameworkClass { dependency, constituency };

std::string_view to_string(FrameworkClass value);

struct Violation {
  enum class Kind { dangling_endpoint, duplicate_node, self_loop, cycle, span_bounds, anchor_order };
  Kind kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(Violation::Kind kind) const;
};

std::string_view to_string(Violation::Kind kind);

ValidationReport validate_graph(const Graph& g);

// Moves phrase labels of a node-labeled tree onto incoming edges. Leaves
// (preterminals) lose their POS label; their incoming edge gets kTerminalLabel.
Graph convert_ptb_node_labels(const Graph& g);

// Adds a synthetic root with a dummy-labeled edge to graphs without edges.
Graph ensure_nonempty_edges(const Graph& g);

Graph remove_self_loops(const Graph& g);

// Whitespace-delimited word spans of a sentence.
std::vector<Span> word_spans(std::string_view text);

FrameworkClass classify_framework(std::span<const Graph> corpus);

}  // namespace slicelm
