#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "slicelm/graph.hpp"

namespace slicelm {

// Byte offset of every code point in `text`, followed by text.size().
// MRP anchors count characters; the graph model stores bytes.
std::vector<std::size_t> codepoint_offsets(std::string_view text);

// Parses one MRP JSON object (id, input, nodes, edges; optional tops).
// Throws ParseError for malformed JSON, SchemaError for missing or
// inconsistent fields.
Graph parse_mrp_line(std::string_view line);

// Serializes the supported subset back to one line of MRP JSON with
// character offsets.
std::string to_mrp_line(const Graph& g);

std::vector<Graph> read_mrp_file(const std::filesystem::path& path);
void write_mrp_file(const std::filesystem::path& path, const std::vector<Graph>& graphs);

}  // namespace slicelm
