#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "cvir/error.hpp"
#include "cvir/retrieval.hpp"

namespace cvir {
namespace {

EmbeddingSet tiny_set(std::uint64_t seed, std::size_t per_view = 8, std::size_t d = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  EmbeddingSet s(d);
  for (View v : {View::ground, View::aerial})
    for (std::size_t i = 0; i < per_view; ++i) {
      std::vector<float> x(d);
      for (auto& e : x) e = static_cast<float>(n(rng));
      s.add({std::string(v == View::ground ? "g" : "a") + std::to_string(i), v, "c" + std::to_string(i % 3), x});
    }
  return s;
}

TEST(Rank, SingleTarget) {
  EmbeddingSet s(2);
  s.add({"q", View::ground, "x", {0, 0}});
  s.add({"t", View::aerial, "y", {100, 100}});
  const auto r = rank({"q", Direction::str2sat, 5}, s, Matcher::euclidean());
  ASSERT_EQ(r.results.size(), 1u);
  EXPECT_EQ(r.results[0].id, "t");
}

TEST(Rank, IdenticalVectorRanksFirstWithZero) {
  auto s = tiny_set(1);
  s.add({"a_copy", View::aerial, "c0", s.at("g3").vector});
  const auto r = rank({"g3", Direction::str2sat, 5}, s, Matcher::euclidean());
  EXPECT_EQ(r.results[0].id, "a_copy");
  EXPECT_EQ(r.results[0].score, 0.0);
}

TEST(Rank, SortedCompleteAndTieBrokenById) {
  EmbeddingSet s(1);
  s.add({"q", View::aerial, "c", {0}});
  for (const char* id : {"z", "b", "m", "a"}) s.add({id, View::ground, "c", {1}});
  s.add({"close", View::ground, "c", {0.5}});
  const auto r = rank({"q", Direction::sat2str, 5}, s, Matcher::euclidean());
  std::vector<std::string> ids;
  for (const auto& e : r.results) ids.push_back(e.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"close", "a", "b", "m", "z"}));
}

TEST(Rank, Errors) {
  const auto s = tiny_set(2);
  EXPECT_THROW(rank({"nope", Direction::str2sat}, s, Matcher::euclidean()), InvalidArgument);
  EXPECT_THROW(rank({"g1", Direction::sat2str}, s, Matcher::euclidean()), InvalidArgument);
  EmbeddingSet only_ground(4);
  only_ground.add(s.at("g0"));
  EXPECT_THROW(rank({"g0", Direction::str2sat}, only_ground, Matcher::euclidean()), InvalidArgument);
}

TEST(Rank, PermutationInvariant) {
  const auto s = tiny_set(3, 12);
  std::vector<EmbeddingRecord> recs = s.records();
  std::mt19937_64 rng(4);
  std::shuffle(recs.begin(), recs.end(), rng);
  EmbeddingSet shuffled(s.dim());
  for (auto& r : recs) shuffled.add(r);
  for (const char* q : {"g0", "g5"}) {
    EXPECT_EQ(rank({q, Direction::str2sat}, s, Matcher::euclidean()),
              rank({q, Direction::str2sat}, shuffled, Matcher::euclidean()));
  }
}

TEST(Rank, MonotoneTransformKeepsOrder) {
  const auto s = tiny_set(5, 20);
  const auto r = rank({"a2", Direction::sat2str}, s, Matcher::euclidean());
  auto transformed = r.results;
  for (auto& e : transformed) e.score = std::exp(3.0 * e.score * e.score) + 1.0;
  sort_ranked(transformed);
  for (std::size_t i = 0; i < r.results.size(); ++i) EXPECT_EQ(transformed[i].id, r.results[i].id);
}

TEST(TopK, PrefixSemantics) {
  const auto s = tiny_set(6);
  const auto r = rank({"g0", Direction::str2sat}, s, Matcher::euclidean());
  EXPECT_EQ(top_k(r, 100).results.size(), r.results.size());
  EXPECT_EQ(top_k(r, 1).results[0], r.results[0]);
  const auto t5 = top_k(r, 5), t10 = top_k(r, 10);
  for (std::size_t i = 0; i < t5.results.size(); ++i) EXPECT_EQ(t5.results[i], t10.results[i]);
  EXPECT_THROW(top_k(r, 0), InvalidArgument);
}

TEST(RankedList, JsonShape) {
  const auto s = tiny_set(7);
  const auto j = to_json(top_k(rank({"g0", Direction::str2sat}, s, Matcher::euclidean()), 2));
  EXPECT_EQ(j["query"], "g0");
  EXPECT_EQ(j["direction"], "str2sat");
  EXPECT_EQ(j["matcher"], "euclidean");
  ASSERT_EQ(j["results"].size(), 2u);
  EXPECT_TRUE(j["results"][0].contains("id"));
  EXPECT_TRUE(j["results"][0].contains("score"));
  EXPECT_TRUE(j["results"][0].contains("class"));
  EXPECT_EQ(j.begin().key(), "query");
}

TEST(ScoreMatrix, AgreesWithRankAndIgnoresThreads) {
  const auto s = tiny_set(8, 10);
  const auto m = Matcher::contrastive(ContrastiveModel(4, 3, 1.0, 1));
  const ScoreMatrix one(s, m, 1), many(s, m, 4);
  for (std::size_t gi = 0; gi < one.ground().size(); ++gi)
    for (std::size_t ai = 0; ai < one.aerial().size(); ++ai) EXPECT_EQ(one.at(gi, ai), many.at(gi, ai));
  for (auto qi : s.indices_of(View::aerial)) {
    EXPECT_EQ(one.ranked(qi, Direction::sat2str), rank({s[qi].id, Direction::sat2str}, s, m));
  }
  const auto dml = Matcher::dml(build_model({1}, 4, {2, {4}}, 1));
  const ScoreMatrix dm(s, dml);
  EXPECT_EQ(dm.ranked(0, Direction::str2sat), rank({s[0].id, Direction::str2sat}, s, dml));
}

TEST(Direction, Parse) {
  EXPECT_EQ(parse_direction("sat2str"), Direction::sat2str);
  EXPECT_THROW(parse_direction("both"), InvalidArgument);
  EXPECT_EQ(source_view(Direction::str2sat), View::ground);
}

}  // namespace
}  // namespace cvir
