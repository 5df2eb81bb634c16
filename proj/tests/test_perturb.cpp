#include <algorithm>

#include <doctest.h>

#include "fixtures.hpp"
#include "slicelm/mrp.hpp"
#include "slicelm/perturb.hpp"

using namespace slicelm;

namespace {

std::vector<std::string> sorted_labels(const Graph& g) {
  std::vector<std::string> out;
  for (const auto& e : g.edges) out.push_back(e.label);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<Span>> sorted_anchors(const Graph& g) {
  std::vector<std::vector<Span>> out;
  for (const auto& n : g.nodes) out.push_back(n.anchors);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](const Span& x, const Span& y) {
      return std::pair(x.from, x.to) < std::pair(y.from, y.to);
    });
  });
  return out;
}

Graph without_labels(Graph g) {
  for (auto& e : g.edges) e.label.clear();
  return g;
}

Graph without_anchors(Graph g) {
  for (auto& n : g.nodes) n.anchors.clear();
  return g;
}

}  // namespace

TEST_CASE("phase names") {
  CHECK(parse_perturb_phase("train") == PerturbPhase::training);
  CHECK(parse_perturb_phase("test") == PerturbPhase::testing);
  CHECK(parse_perturb_phase("both") == PerturbPhase::both);
  CHECK_FALSE(parse_perturb_phase("dev").has_value());
  for (const auto p : {PerturbPhase::training, PerturbPhase::testing, PerturbPhase::both})
    CHECK(parse_perturb_phase(to_string(p)) == p);
  PerturbSpec spec;
  CHECK_FALSE(spec.applies_to_training());
  spec.shuffle_labels = true;
  spec.phase = PerturbPhase::testing;
  CHECK_FALSE(spec.applies_to_training());
  CHECK(spec.applies_to_testing());
}

TEST_CASE("shuffle_labels examples") {
  Graph g;
  g.text = "a b";
  g.nodes = {{0, {Span{0, 1}}, {}}, {1, {Span{2, 3}}, {}}, {2, {}, {}}};
  SUBCASE("one shared label") {
    g.edges = {{0, 1, "x"}, {2, 1, "x"}, {2, 0, "x"}};
    Rng rng(9);
    CHECK(shuffle_labels(g, rng) == g);
  }
  SUBCASE("seed 0 swaps two labels") {
    g.edges = {{0, 1, "a"}, {2, 1, "b"}};
    Rng rng(0);
    const auto out = shuffle_labels(g, rng);
    CHECK(out.edges[0].label == "b");
    CHECK(out.edges[1].label == "a");
  }
  SUBCASE("seed 3 keeps them") {
    g.edges = {{0, 1, "a"}, {2, 1, "b"}};
    Rng rng(3);
    CHECK(shuffle_labels(g, rng) == g);
  }
}

TEST_CASE("shuffle_anchors examples") {
  SUBCASE("single anchored node") {
    Graph g;
    g.text = "ab";
    g.nodes = {{0, {Span{0, 2}}, {}}};
    Rng rng(1);
    CHECK(shuffle_anchors(g, rng) == g);
  }
  SUBCASE("seed 42 on three nodes applies the recorded permutation") {
    Graph g;
    g.text = "a b c";
    const Span a{0, 1}, b{2, 3}, c{4, 5};
    g.nodes = {{0, {a}, {}}, {1, {b}, {}}, {2, {c}, {}}};
    g.edges = {{0, 1, "x"}, {1, 2, "y"}};
    Rng rng(42);
    const auto out = shuffle_anchors(g, rng);
    CHECK(out.nodes[0].anchors == std::vector<Span>{b});
    CHECK(out.nodes[1].anchors == std::vector<Span>{c});
    CHECK(out.nodes[2].anchors == std::vector<Span>{a});
    CHECK(out.edges == g.edges);
  }
}

TEST_CASE("shuffles preserve their multisets and leave everything else intact") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = fixtures::random_dag(rng, 1 + rng.below(10), 1 + rng.below(8), 0.35);
    const auto l = shuffle_labels(g, rng);
    CHECK(sorted_labels(l) == sorted_labels(g));
    CHECK(to_mrp_line(without_labels(l)) == to_mrp_line(without_labels(g)));
    const auto a = shuffle_anchors(g, rng);
    CHECK(sorted_anchors(a) == sorted_anchors(g));
    CHECK(to_mrp_line(without_anchors(a)) == to_mrp_line(without_anchors(g)));
    CHECK(validate_graph(a).ok());
  }
}

TEST_CASE("shuffles commute given their own seeded streams") {
  Rng gen(18);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = fixtures::random_dag(gen, 2 + gen.below(10), 1 + gen.below(8), 0.35);
    Rng l1(trial), a1(1000 + trial), l2(trial), a2(1000 + trial);
    const auto first = shuffle_anchors(shuffle_labels(g, l1), a1);
    const auto second = shuffle_labels(shuffle_anchors(g, a2), l2);
    CHECK(first == second);
  }
}

TEST_CASE("perturb_corpus is deterministic, per-graph, salted and thread independent") {
  Rng gen(19);
  std::vector<Graph> corpus;
  for (int k = 0; k < 20; ++k) corpus.push_back(fixtures::random_dag(gen, 3 + gen.below(8), 6, 0.4, "g" + std::to_string(k)));
  PerturbSpec spec;
  spec.shuffle_labels = spec.shuffle_anchors = true;
  spec.seed = 5;
  const auto a = perturb_corpus(corpus, spec, "train");
  CHECK(perturb_corpus(corpus, spec, "train", 4) == a);
  CHECK(perturb_corpus(corpus, spec, "eval") != a);
  // a graph's result depends only on its own index
  const auto prefix = perturb_corpus(std::span<const Graph>(corpus).first(7), spec, "train");
  CHECK(std::equal(prefix.begin(), prefix.end(), a.begin()));
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    CHECK(sorted_labels(a[k]) == sorted_labels(corpus[k]));
    CHECK(sorted_anchors(a[k]) == sorted_anchors(corpus[k]));
  }
  PerturbSpec labels_only = spec;
  labels_only.shuffle_anchors = false;
  const auto relabeled = perturb_corpus(corpus, labels_only, "train");
  for (std::size_t k = 0; k < corpus.size(); ++k)
    CHECK(without_labels(relabeled[k]) == without_labels(corpus[k]));
  PerturbSpec none;
  CHECK(perturb_corpus(corpus, none) == corpus);
}
