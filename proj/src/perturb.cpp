#include "slicelm/perturb.hpp"

#include <string>

#include "slicelm/parallel.hpp"

namespace slicelm {

std::string_view to_string(PerturbPhase phase) {
  switch (phase) {
    case PerturbPhase::training: return "train";
    case PerturbPhase::testing: return "test";
    case PerturbPhase::both: return "both";
  }
  return "both";
}

std::optional<PerturbPhase> parse_perturb_phase(std::string_view name) {
  if (name == "train" || name == "training") return PerturbPhase::training;
  if (name == "test" || name == "testing") return PerturbPhase::testing;
  if (name == "both") return PerturbPhase::both;
  return std::nullopt;
}

Graph shuffle_labels(const Graph& g, Rng& rng) {
  Graph out = g;
  std::vector<std::string> labels;
  labels.reserve(g.edges.size());
  for (const auto& e : g.edges) labels.push_back(e.label);
  rng.shuffle(std::span<std::string>(labels));
  for (std::size_t k = 0; k < labels.size(); ++k) out.edges[k].label = std::move(labels[k]);
  return out;
}

Graph shuffle_anchors(const Graph& g, Rng& rng) {
  Graph out = g;
  std::vector<std::vector<Span>> anchors;
  anchors.reserve(g.nodes.size());
  for (const auto& n : g.nodes) anchors.push_back(n.anchors);
  rng.shuffle(std::span<std::vector<Span>>(anchors));
  for (std::size_t k = 0; k < anchors.size(); ++k) out.nodes[k].anchors = std::move(anchors[k]);
  return out;
}

std::vector<Graph> perturb_corpus(std::span<const Graph> graphs, const PerturbSpec& spec, std::string_view salt,
                                  std::size_t threads) {
  std::vector<Graph> out(graphs.size());
  const std::string label_tag = std::string(salt) + "labels";
  const std::string anchor_tag = std::string(salt) + "anchors";
  parallel_for(graphs.size(), threads, [&](std::size_t i) {
    Graph g = graphs[i];
    if (spec.shuffle_labels) {
      Rng rng(derive_seed(spec.seed, i, label_tag));
      g = shuffle_labels(g, rng);
    }
    if (spec.shuffle_anchors) {
      Rng rng(derive_seed(spec.seed, i, anchor_tag));
      g = shuffle_anchors(g, rng);
    }
    out[i] = std::move(g);
  });
  return out;
}

}  // namespace slicelm
