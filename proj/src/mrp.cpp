#include "slicelm/mrp.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "slicelm/error.hpp"

namespace slicelm {

using nlohmann::json;

std::vector<std::size_t> codepoint_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if ((c & 0xC0) != 0x80) offsets.push_back(i);
  }
  offsets.push_back(text.size());
  return offsets;
}

namespace {

const json& require(const json& object, const char* field, const std::string& where) {
  const auto it = object.find(field);
  if (it == object.end()) throw SchemaError(field, "missing in " + where);
  return *it;
}

std::int64_t require_integer(const json& value, const char* field) {
  if (!value.is_number_integer()) throw SchemaError(field, "expected an integer");
  return value.get<std::int64_t>();
}

std::size_t char_to_byte(const std::vector<std::size_t>& offsets, std::int64_t c, const char* field) {
  if (c < 0) throw SchemaError(field, "negative anchor offset");
  const auto chars = static_cast<std::int64_t>(offsets.size()) - 1;
  // Out-of-range offsets are kept (shifted past the end) so validation can report them.
  if (c > chars) return offsets.back() + static_cast<std::size_t>(c - chars);
  return offsets[static_cast<std::size_t>(c)];
}

std::size_t byte_to_char(const std::vector<std::size_t>& offsets, std::size_t b) {
  if (b > offsets.back()) return offsets.size() - 1 + (b - offsets.back());
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), b);
  return static_cast<std::size_t>(it - offsets.begin()) - 1;
}

}  // namespace

Graph parse_mrp_line(std::string_view line) {
  json object;
  try {
    object = json::parse(line.begin(), line.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  }
  if (!object.is_object()) throw SchemaError("<root>", "expected a JSON object");

  Graph g;
  const auto& id = require(object, "id", "graph");
  g.id = id.is_string() ? id.get<std::string>() : id.dump();
  const auto& input = require(object, "input", "graph");
  if (!input.is_string()) throw SchemaError("input", "expected a string");
  g.text = input.get<std::string>();
  const auto offsets = codepoint_offsets(g.text);

  const auto& nodes = require(object, "nodes", "graph");
  if (!nodes.is_array()) throw SchemaError("nodes", "expected an array");
  for (const auto& jn : nodes) {
    Node n;
    n.id = static_cast<NodeId>(require_integer(require(jn, "id", "node"), "id"));
    if (const auto it = jn.find("label"); it != jn.end() && it->is_string()) n.label = it->get<std::string>();
    if (const auto it = jn.find("anchors"); it != jn.end()) {
      if (!it->is_array()) throw SchemaError("anchors", "expected an array");
      for (const auto& ja : *it) {
        const auto from = require_integer(require(ja, "from", "anchor"), "from");
        const auto to = require_integer(require(ja, "to", "anchor"), "to");
        n.anchors.push_back({char_to_byte(offsets, from, "from"), char_to_byte(offsets, to, "to")});
      }
    }
    g.nodes.push_back(std::move(n));
  }

  const auto& edges = require(object, "edges", "graph");
  if (!edges.is_array()) throw SchemaError("edges", "expected an array");
  for (const auto& je : edges) {
    Edge e;
    e.source = static_cast<NodeId>(require_integer(require(je, "source", "edge"), "source"));
    e.target = static_cast<NodeId>(require_integer(require(je, "target", "edge"), "target"));
    if (const auto it = je.find("label"); it != je.end() && it->is_string()) e.label = it->get<std::string>();
    for (const auto end : {e.source, e.target})
      if (g.find_node(end) == nullptr)
        throw SchemaError(end == e.source ? "source" : "target",
                          "edge endpoint " + std::to_string(end) + " is not a node");
    g.edges.push_back(std::move(e));
  }

  if (const auto it = object.find("tops"); it != object.end() && it->is_array())
    for (const auto& t : *it) g.tops.push_back(static_cast<NodeId>(require_integer(t, "tops")));
  return g;
}

std::string to_mrp_line(const Graph& g) {
  const auto offsets = codepoint_offsets(g.text);
  json object;
  object["id"] = g.id;
  object["input"] = g.text;
  object["tops"] = g.tops;
  auto& nodes = object["nodes"] = json::array();
  for (const auto& n : g.nodes) {
    json jn;
    jn["id"] = n.id;
    if (n.label) jn["label"] = *n.label;
    if (!n.anchors.empty()) {
      auto& anchors = jn["anchors"] = json::array();
      for (const auto& s : n.anchors)
        anchors.push_back({{"from", byte_to_char(offsets, s.from)}, {"to", byte_to_char(offsets, s.to)}});
    }
    nodes.push_back(std::move(jn));
  }
  auto& edges = object["edges"] = json::array();
  for (const auto& e : g.edges) edges.push_back({{"source", e.source}, {"target", e.target}, {"label", e.label}});
  return object.dump();
}

std::vector<Graph> read_mrp_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open graph file " + path.string());
  std::vector<Graph> graphs;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      graphs.push_back(parse_mrp_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return graphs;
}

void write_mrp_file(const std::filesystem::path& path, const std::vector<Graph>& graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& g : graphs) out << to_mrp_line(g) << '\n';
}

}  // namespace slicelm
