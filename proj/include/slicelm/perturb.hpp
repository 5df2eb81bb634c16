#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "slicelm/graph.hpp"
#include "slicelm/rng.hpp"

namespace slicelm {

enum class PerturbPhase { training, testing, both };

std::string_view to_string(PerturbPhase phase);
std::optional<PerturbPhase> parse_perturb_phase(std::string_view name);

struct PerturbSpec {
  bool shuffle_labels = false;
  bool shuffle_anchors = false;
  PerturbPhase phase = PerturbPhase::both;
  std::uint64_t seed = 0;

  bool active() const { return shuffle_labels || shuffle_anchors; }
  bool applies_to_training() const { return active() && phase != PerturbPhase::testing; }
  bool applies_to_testing() const { return active() && phase != PerturbPhase::training; }
};

// Permutes the edge labels of g across its edges.
Graph shuffle_labels(const Graph& g, Rng& rng);
// Permutes the anchor lists (empty ones included) across g's nodes.
Graph shuffle_anchors(const Graph& g, Rng& rng);

// Applies the spec's shuffles to every graph with per-graph streams derived
// from (seed, graph index, shuffle kind). `salt` separates training and test
// corpora.
std::vector<Graph> perturb_corpus(std::span<const Graph> graphs, const PerturbSpec& spec, std::string_view salt = {},
                                  std::size_t threads = 1);

}  // namespace slicelm
