#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "cvir/error.hpp"
#include "cvir/feature_store.hpp"

namespace cvir {
namespace {

EmbeddingSet grid_set(std::size_t classes, std::size_t per_cell, std::size_t dim = 3) {
  EmbeddingSet set(dim);
  for (std::size_t c = 0; c < classes; ++c)
    for (View v : {View::ground, View::aerial})
      for (std::size_t i = 0; i < per_cell; ++i) {
        const std::string id = std::string(to_string(v)) + "_" + std::to_string(c) + "_" + std::to_string(i);
        set.add({id, v, "c" + std::to_string(c), std::vector<float>(dim, static_cast<float>(i))});
      }
  return set;
}

bool bit_identical(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim() != b.dim() || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.id != y.id || x.view != y.view || x.class_label != y.class_label) return false;
    if (x.vector.size() != y.vector.size()) return false;
    if (std::memcmp(x.vector.data(), y.vector.data(), x.vector.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

EmbeddingSet round_trip(const EmbeddingSet& s) {
  std::stringstream ss;
  write_cvf(s, ss);
  return read_cvf(ss);
}

TEST(Cvf, TwoRecordRoundTrip) {
  EmbeddingSet s(4);
  s.add({"g1", View::ground, "park", {0.1f, -2.5f, 3e-8f, 1e30f}});
  s.add({"a1", View::aerial, "park", {1.f, 0.f, -0.f, 7.25f}});
  EXPECT_TRUE(bit_identical(s, round_trip(s)));
}

TEST(Cvf, EmptySetLoadsEmpty) {
  EmbeddingSet s(1024);
  const auto back = round_trip(s);
  EXPECT_EQ(back.dim(), 1024u);
  EXPECT_EQ(back.size(), 0u);
}

TEST(Cvf, RandomSetsRoundTripBitExactly) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng() % 16;
    EmbeddingSet s(d);
    const std::size_t n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(d);
      for (auto& x : v) {
        std::uint32_t bits;
        do {
          bits = static_cast<std::uint32_t>(rng());
          std::memcpy(&x, &bits, 4);
        } while (!std::isfinite(x));
      }
      s.add({"r" + std::to_string(i), i % 2 ? View::aerial : View::ground, "k" + std::to_string(i % 3), v});
    }
    EXPECT_TRUE(bit_identical(s, round_trip(s)));
  }
}

TEST(Cvf, WrongValueCountNamesRecord) {
  std::stringstream ss;
  ss << R"({"format":"CVF","version":1,"dim":8,"count":1})" << "\n"
     << R"({"id":"short_one","view":"ground","class":"x","vec":[1,2,3,4,5,6,7]})" << "\n";
  try {
    read_cvf(ss);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("short_one"), std::string::npos);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Cvf, DuplicateIdRejected) {
  std::stringstream ss;
  ss << R"({"format":"CVF","version":1,"dim":1,"count":2})" << "\n"
     << R"({"id":"x","view":"ground","class":"c","vec":[1]})" << "\n"
     << R"({"id":"x","view":"aerial","class":"c","vec":[2]})" << "\n";
  EXPECT_THROW(read_cvf(ss), ParseError);
}

TEST(Cvf, MalformedHeadersRejected) {
  for (const char* header : {"", "{\"format\":\"CVF\",\"version\":1,\"dim\":4", "[1,2]",
                             "{\"format\":\"XYZ\",\"version\":1,\"dim\":4,\"count\":0}",
                             "{\"format\":\"CVF\",\"version\":2,\"dim\":4,\"count\":0}",
                             "{\"format\":\"CVF\",\"version\":1,\"dim\":0,\"count\":0}"}) {
    std::stringstream ss(std::string(header) + "\n");
    EXPECT_THROW(read_cvf(ss), ParseError) << header;
  }
}

TEST(Cvf, CountMismatchRejected) {
  std::stringstream ss;
  ss << R"({"format":"CVF","version":1,"dim":1,"count":2})" << "\n"
     << R"({"id":"x","view":"ground","class":"c","vec":[1]})" << "\n";
  EXPECT_THROW(read_cvf(ss), ParseError);
}

TEST(Cvf, FormatFloatShortest) {
  EXPECT_EQ(format_float(0.1f), "0.1");
  EXPECT_EQ(format_float(1.0f), "1");
}

TEST(Split, StratifiedCounts) {
  const auto set = grid_set(6, 50);
  const auto [train, val] = split(set, 0.8, 42);
  EXPECT_EQ(train.size(), 480u);
  EXPECT_EQ(val.size(), 120u);
  std::map<std::pair<std::string, View>, int> cells;
  for (const auto& r : val.records()) ++cells[{r.class_label, r.view}];
  EXPECT_EQ(cells.size(), 12u);
  for (const auto& [k, n] : cells) EXPECT_EQ(n, 10);
}

TEST(Split, DeterministicDisjointAndComplete) {
  const auto set = grid_set(3, 10);
  const auto a = split(set, 0.8, 7);
  const auto b = split(set, 0.8, 7);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  std::set<std::string> ids;
  for (const auto& r : a.first.records()) ids.insert(r.id);
  for (const auto& r : a.second.records()) EXPECT_TRUE(ids.insert(r.id).second);
  EXPECT_EQ(ids.size(), set.size());
}

TEST(Split, SeedsChangeMembershipNotSizes) {
  const auto set = grid_set(2, 10);
  const auto a = split(set, 0.8, 1);
  const auto b = split(set, 0.8, 2);
  EXPECT_EQ(a.first.size(), b.first.size());
  std::set<std::string> ia, ib;
  for (const auto& r : a.second.records()) ia.insert(r.id);
  for (const auto& r : b.second.records()) ib.insert(r.id);
  EXPECT_NE(ia, ib);
}

TEST(Split, Errors) {
  EXPECT_THROW(split(grid_set(2, 1), 0.8, 1), InvalidArgument);
  EXPECT_THROW(split(grid_set(2, 5), 0.0, 1), InvalidArgument);
  EXPECT_THROW(split(grid_set(2, 5), 1.0, 1), InvalidArgument);
}

TEST(Pairs, ExhaustiveSmallCase) {
  const auto set = grid_set(2, 1);
  const auto pairs = make_pairs(set, {}, 3);
  ASSERT_EQ(pairs.size(), 4u);
  int pos = 0;
  for (const auto& p : pairs) pos += p.label == 0;
  EXPECT_EQ(pos, 2);
}

TEST(Pairs, SingleClassHasNoNegatives) { EXPECT_THROW(make_pairs(grid_set(1, 3), {}, 1), InvalidArgument); }

TEST(Pairs, BalancedOnSyntheticAndLabelsCorrect) {
  SyntheticConfig cfg;
  cfg.dim = 8;
  cfg.seed = 1;
  const auto set = generate_synthetic(cfg);
  const auto pairs = make_pairs(set, {}, 7);
  std::size_t similar = 0;
  for (const auto& p : pairs) {
    const auto& g = set.at(p.ground_id);
    const auto& a = set.at(p.aerial_id);
    ASSERT_EQ(g.view, View::ground);
    ASSERT_EQ(a.view, View::aerial);
    ASSERT_EQ(p.label == 0, g.class_label == a.class_label);
    similar += p.label == 0;
  }
  EXPECT_EQ(2 * similar, pairs.size());
  EXPECT_EQ(similar, 6u * 100u * 100u);
  EXPECT_EQ(pairs, make_pairs(set, {}, 7));
}

TEST(Pairs, MaxPositivesSubsamples) {
  const auto set = grid_set(3, 4);
  PairOptions o;
  o.max_positives = 5;
  o.negatives_per_positive = 2.0;
  const auto pairs = make_pairs(set, o, 1);
  std::size_t pos = 0;
  for (const auto& p : pairs) pos += p.label == 0;
  EXPECT_EQ(pos, 5u);
  EXPECT_EQ(pairs.size(), 15u);
}

TEST(Synthetic, CountsAndDeterminism) {
  SyntheticConfig cfg;
  cfg.seed = 42;
  cfg.dim = 64;
  const auto a = generate_synthetic(cfg);
  EXPECT_EQ(a.size(), 1200u);
  EXPECT_EQ(a.indices_of(View::ground).size(), 600u);
  EXPECT_EQ(a.class_names().size(), 6u);
  EXPECT_TRUE(bit_identical(a, generate_synthetic(cfg)));
}

TEST(Synthetic, ZeroNoiseSameClassSameViewIdentical) {
  SyntheticConfig cfg;
  cfg.noise_sigma = 0.0;
  cfg.per_class = 3;
  cfg.dim = 16;
  const auto s = generate_synthetic(cfg);
  const auto g = s.indices_of(View::ground);
  EXPECT_EQ(s[g[0]].vector, s[g[1]].vector);
  EXPECT_NE(s[g[0]].vector, s[g[3]].vector);
}

TEST(Synthetic, WithinViewSeparability) {
  SyntheticConfig cfg;
  cfg.dim = 32;
  cfg.per_class = 20;
  cfg.seed = 5;
  const auto s = generate_synthetic(cfg);
  std::mt19937_64 rng(9);
  const auto dist = [&](std::size_t i, std::size_t j) {
    double acc = 0;
    for (std::size_t k = 0; k < s.dim(); ++k) acc += std::pow(double(s[i].vector[k]) - s[j].vector[k], 2);
    return acc;
  };
  int ok = 0, total = 0;
  for (View v : {View::ground, View::aerial}) {
    const auto idx = s.indices_of(v);
    for (int t = 0; t < 500; ++t) {
      const auto a = idx[rng() % idx.size()];
      std::size_t p, n;
      do p = idx[rng() % idx.size()];
      while (p == a || s[p].class_label != s[a].class_label);
      do n = idx[rng() % idx.size()];
      while (s[n].class_label == s[a].class_label);
      ok += dist(a, p) < dist(a, n);
      ++total;
    }
  }
  EXPECT_GE(ok, 0.95 * total);
}

TEST(EmbeddingSet, Invariants) {
  EmbeddingSet s(2);
  EXPECT_THROW(s.add({"a", View::ground, "c", {1.f}}), ShapeError);
  EXPECT_THROW(s.add({"a", View::ground, "c", {1.f, NAN}}), InvalidArgument);
  s.add({"a", View::ground, "c", {1.f, 2.f}});
  EXPECT_THROW(s.add({"a", View::aerial, "c", {1.f, 2.f}}), InvalidArgument);
}

TEST(EmbeddingSet, L2Normalized) {
  EmbeddingSet s(2);
  s.add({"a", View::ground, "c", {3.f, 4.f}});
  s.add({"z", View::ground, "c", {0.f, 0.f}});
  const auto n = l2_normalized(s);
  EXPECT_FLOAT_EQ(n[0].vector[0], 0.6f);
  EXPECT_FLOAT_EQ(n[0].vector[1], 0.8f);
  EXPECT_EQ(n[1].vector, (std::vector<float>{0.f, 0.f}));
}

}  // namespace
}  // namespace cvir
