#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "fixtures.hpp"
#include "slicelm/encoder.hpp"
#include "slicelm/error.hpp"

using namespace slicelm;

namespace {

const LabelVocabulary& labels() {
  static const LabelVocabulary v({"A", "B", "C", "D"});
  return v;
}

EmbeddingTable random_table(Rng& rng, std::size_t rows, std::size_t dim) {
  std::vector<float> values(rows * dim);
  for (auto& x : values) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return EmbeddingTable(rows, dim, std::move(values));
}

Relative rel(NodeId node, std::string label, std::vector<TokenId> tokens, bool stripped = false) {
  Relative r;
  r.node = node;
  r.label = std::move(label);
  r.anchor_stripped = stripped;
  for (std::size_t k = 0; k < tokens.size(); ++k) r.anchor_positions.push_back(k);
  r.anchor_tokens = std::move(tokens);
  return r;
}

Relative random_relative(Rng& rng, std::size_t rows) {
  static const char* kNames[] = {"A", "B", "C", "D"};
  std::vector<TokenId> tokens(rng.below(4));
  for (auto& t : tokens) t = static_cast<TokenId>(rng.below(rows));
  return rel(static_cast<NodeId>(rng.below(100)), kNames[rng.below(4)], tokens, tokens.empty() && rng.coin());
}

Slice random_slice(Rng& rng, std::size_t rows, std::size_t max_per_type) {
  Slice s;
  s.position = rng.below(20);
  for (const auto t : kRelativeTypes) {
    const auto n = rng.below(max_per_type + 1);
    for (std::size_t k = 0; k < n; ++k) {
      auto r = random_relative(rng, rows);
      r.type = t;
      r.discovery = k;
      s.relatives[t].push_back(std::move(r));
    }
  }
  const auto ctx = rng.below(3);
  for (std::size_t k = 0; k < ctx; ++k) s.context_tokens.push_back(static_cast<TokenId>(rng.below(rows)));
  return s;
}

EncoderConfig config(std::size_t dim, Capacities caps = kDefaultCapacities) {
  EncoderConfig cfg;
  cfg.capacity = caps;
  cfg.embedding_dim = dim;
  cfg.label_count = labels().size();
  return cfg;
}

std::span<const double> slot(const SliceVector& v, std::size_t offset) {
  return std::span<const double>(v.values).subspan(offset, v.layout.slot_width);
}

bool all_zero(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return x == 0.0; });
}

}  // namespace

TEST_CASE("partition_resolution examples") {
  const std::vector<Relative> one{rel(1, "A", {})};
  auto split = partition_resolution(one, 2);
  CHECK(split.high.size() == 1);
  CHECK(split.low.empty());
  const std::vector<Relative> four{rel(1, "A", {}), rel(2, "A", {}), rel(3, "A", {}), rel(4, "A", {})};
  split = partition_resolution(four, 2);
  CHECK(split.high == std::vector<Relative>{four[0], four[1]});
  CHECK(split.low == std::vector<Relative>{four[2], four[3]});
}

TEST_CASE("partition_resolution: sizes and permutation property") {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Relative> list(rng.below(8));
    for (std::size_t k = 0; k < list.size(); ++k) list[k] = rel(static_cast<NodeId>(k), "A", {});
    const auto gamma = rng.below(5);
    const auto split = partition_resolution(list, gamma);
    CHECK(split.high.size() == std::min<std::size_t>(gamma, list.size()));
    auto joined = split.high;
    joined.insert(joined.end(), split.low.begin(), split.low.end());
    CHECK(joined == list);
  }
}

TEST_CASE("vector_dim examples") {
  EncoderConfig cfg;
  cfg.label_count = 10;
  cfg.embedding_dim = 768;
  CHECK(vector_dim(cfg) == 13216);
  cfg.label_count = 537;
  CHECK(vector_dim(cfg) == 21648);
  cfg.label_count = 0;
  cfg.embedding_dim = 0;
  CHECK(vector_dim(cfg) == 0);
  CHECK(std::accumulate(kDefaultCapacities.begin(), kDefaultCapacities.end(), std::size_t{0}) + 6 == 16);
}

TEST_CASE("vector_dim matches the formula and the layout for random configs") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    EncoderConfig cfg;
    for (auto& c : cfg.capacity) c = rng.below(4);
    cfg.label_count = rng.below(50);
    cfg.embedding_dim = rng.below(100);
    std::size_t slots = 0;
    for (const auto c : cfg.capacity) slots += c + 1;
    CHECK(vector_dim(cfg) == slots * (cfg.label_count + cfg.embedding_dim) + cfg.embedding_dim);
    CHECK(slot_layout(cfg).dim == vector_dim(cfg));
  }
}

TEST_CASE("encode_relative") {
  // 2-dim embedding over 4 rows
  const EmbeddingTable emb(4, 2, {1.0f, 2.0f, 3.0f, -4.0f, 0.5f, 0.25f, -2.0f, 8.0f});
  const auto L = labels().size();
  SUBCASE("one anchor token") {
    const auto v = encode_relative(rel(0, "B", {1}), emb, labels());
    REQUIRE(v.size() == L + 2);
    CHECK(v[*labels().find("B")] == 1.0);
    CHECK(std::count(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(L), 0.0) == static_cast<long>(L - 1));
    CHECK(v[L] == 3.0);
    CHECK(v[L + 1] == -4.0);
  }
  SUBCASE("stripped anchor gives a zero word vector") {
    const auto v = encode_relative(rel(0, "C", {}, true), emb, labels());
    CHECK(v[*labels().find("C")] == 1.0);
    CHECK(v[L] == 0.0);
    CHECK(v[L + 1] == 0.0);
  }
  SUBCASE("three anchor tokens are averaged") {
    const auto v = encode_relative(rel(0, "A", {0, 2, 3}), emb, labels());
    // (1 + 0.5 - 2) / 3 and (2 + 0.25 + 8) / 3
    CHECK(v[L] == doctest::Approx(-0.5 / 3.0).epsilon(1e-15));
    CHECK(v[L + 1] == doctest::Approx(10.25 / 3.0).epsilon(1e-15));
  }
  SUBCASE("unknown label") { CHECK_THROWS_AS(encode_relative(rel(0, "Z", {}), emb, labels()), VocabularyError); }
}

TEST_CASE("empty slice encodes to zeros") {
  Rng rng(3);
  const auto emb = random_table(rng, 10, 8);
  const auto v = encode_slice(Slice{}, config(8), emb, labels());
  CHECK(v.values.size() == vector_dim(config(8)));
  CHECK(all_zero(v.values));
}

TEST_CASE("one relative per type occupies exactly its first high-resolution slot") {
  Rng rng(4);
  const std::size_t E = 6;
  const auto emb = random_table(rng, 10, E);
  const auto cfg = config(E);
  const auto L = labels().size();
  // layout walked independently: types in order, gamma high slots then one low slot, context last
  std::array<std::size_t, 6> first{};
  std::size_t at = 0;
  for (std::size_t t = 0; t < 6; ++t) {
    first[t] = at;
    at += (cfg.capacity[t] + 1) * (L + E);
  }
  CHECK(at + E == vector_dim(cfg));
  for (int trial = 0; trial < 50; ++trial) {
    Slice s;
    for (const auto t : kRelativeTypes) s.relatives[t].push_back(rel(1, "D", {static_cast<TokenId>(rng.below(10))}));
    const auto v = encode_slice(s, cfg, emb, labels());
    std::size_t nonzero_slots = 0;
    for (std::size_t off = 0; off + E < v.values.size(); off += L + E) {
      const auto chunk = slot(v, off);
      if (all_zero(chunk)) continue;
      ++nonzero_slots;
      CHECK(std::find(first.begin(), first.end(), off) != first.end());
    }
    CHECK(nonzero_slots == 6);
    for (std::size_t t = 0; t < 6; ++t) {
      CHECK(v.layout.high[t].front() == first[t]);
      const auto want = encode_relative(s.relatives[kRelativeTypes[t]][0], emb, labels());
      const auto got = slot(v, first[t]);
      CHECK(std::equal(got.begin(), got.end(), want.begin()));
    }
  }
}

TEST_CASE("slot contents match the per-relative encodings on random slices") {
  Rng rng(5);
  const std::size_t E = 5;
  const auto emb = random_table(rng, 12, E);
  for (int trial = 0; trial < 300; ++trial) {
    Capacities caps;
    for (auto& c : caps) c = rng.below(4);
    const auto cfg = config(E, caps);
    const auto s = random_slice(rng, 12, 5);
    const auto v = encode_slice(s, cfg, emb, labels());
    REQUIRE(v.values.size() == vector_dim(cfg));
    std::vector<bool> covered(v.values.size(), false);
    for (std::size_t t = 0; t < 6; ++t) {
      const auto& list = s.relatives[kRelativeTypes[t]];
      for (std::size_t k = 0; k < caps[t]; ++k) {
        const auto got = slot(v, v.layout.high[t][k]);
        if (k < list.size()) {
          const auto want = encode_relative(list[k], emb, labels());
          CHECK(std::equal(got.begin(), got.end(), want.begin()));
          for (std::size_t j = 0; j < got.size(); ++j) covered[v.layout.high[t][k] + j] = true;
        }
      }
      // lo-res slot is the arithmetic mean of the members
      const auto got = slot(v, v.layout.low[t]);
      if (list.size() <= caps[t]) {
        CHECK(all_zero(got));
        continue;
      }
      std::vector<double> mean(got.size(), 0.0);
      for (std::size_t k = caps[t]; k < list.size(); ++k) {
        const auto x = encode_relative(list[k], emb, labels());
        for (std::size_t j = 0; j < x.size(); ++j) mean[j] += x[j];
      }
      for (auto& m : mean) m /= static_cast<double>(list.size() - caps[t]);
      for (std::size_t j = 0; j < got.size(); ++j) {
        CHECK(std::abs(got[j] - mean[j]) <= 1e-12 * std::max(1.0, std::abs(mean[j])));
        covered[v.layout.low[t] + j] = true;
      }
    }
    const auto ctx = std::span<const double>(v.values).subspan(v.layout.context, E);
    for (std::size_t j = 0; j < E; ++j) {
      double want = 0.0;
      for (const auto tok : s.context_tokens) want += emb.row(tok)[j];
      if (!s.context_tokens.empty()) want /= static_cast<double>(s.context_tokens.size());
      CHECK(std::abs(ctx[j] - want) <= 1e-12);
      covered[v.layout.context + j] = true;
    }
    // zero padding everywhere else
    for (std::size_t j = 0; j < v.values.size(); ++j)
      if (!covered[j]) CHECK(v.values[j] == 0.0);
  }
}

TEST_CASE("all slices share one length and layout") {
  Rng rng(6);
  const auto emb = random_table(rng, 12, 4);
  const auto cfg = config(4);
  const auto reference = slot_layout(cfg);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = encode_slice(random_slice(rng, 12, 6), cfg, emb, labels());
    CHECK(v.values.size() == reference.dim);
    CHECK(v.layout.high == reference.high);
    CHECK(v.layout.low == reference.low);
    CHECK(v.layout.context == reference.context);
  }
}

TEST_CASE("swapping high-resolution parents changes the vector, permuting the low set does not") {
  Rng rng(7);
  const auto emb = random_table(rng, 12, 4);
  const auto cfg = config(4);
  Slice s;
  auto& parents = s.relatives[RelativeType::parent];
  parents = {rel(1, "A", {1}), rel(2, "B", {2}), rel(3, "C", {3}), rel(4, "D", {4, 5}), rel(5, "A", {6})};
  const auto base = encode_slice(s, cfg, emb, labels()).values;
  auto swapped = s;
  std::swap(swapped.relatives[RelativeType::parent][0], swapped.relatives[RelativeType::parent][1]);
  CHECK(encode_slice(swapped, cfg, emb, labels()).values != base);
  auto permuted = s;
  std::reverse(permuted.relatives[RelativeType::parent].begin() + 2, permuted.relatives[RelativeType::parent].end());
  const auto p = encode_slice(permuted, cfg, emb, labels()).values;
  REQUIRE(p.size() == base.size());
  for (std::size_t j = 0; j < p.size(); ++j) CHECK(std::abs(p[j] - base[j]) <= 1e-12);
}

TEST_CASE("recipe materialization equals encode_slice and is deterministic") {
  Rng rng(8);
  const auto emb = random_table(rng, 12, 7);
  const auto cfg = config(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_slice(rng, 12, 4);
    const auto v = encode_slice(s, cfg, emb, labels());
    const auto recipe = slice_recipe(s, cfg, labels());
    std::vector<double> out(recipe.dim);
    materialize(recipe, 7, [&](TokenId t) { return emb.row(t); }, out);
    CHECK(out == v.values);
    CHECK(encode_slice(s, cfg, emb, labels()).values == v.values);
  }
}

TEST_CASE("configuration mismatches are reported") {
  Rng rng(9);
  const auto emb = random_table(rng, 4, 3);
  auto cfg = config(5);
  CHECK_THROWS_AS(encode_slice(Slice{}, cfg, emb, labels()), ConfigError);
  cfg = config(3);
  cfg.label_count = 2;
  CHECK_THROWS_AS(encode_slice(Slice{}, cfg, emb, labels()), ConfigError);
  CHECK_THROWS_AS(EmbeddingTable(2, 3, std::vector<float>(5)), DataError);
  std::vector<double> out(1);
  CHECK_THROWS_AS(materialize(slice_recipe(Slice{}, config(3), labels()), 3, [&](TokenId t) { return emb.row(t); }, out),
                  std::invalid_argument);
}
