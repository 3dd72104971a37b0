#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fixtures.hpp"
#include "isi/errors.hpp"
#include "isi/eval.hpp"

namespace isi {
namespace {

using testing::numbered;
using testing::random_model;

TEST(GroundTruthRanks, CountsOrderCandidates) {
  // (bowl, atLocation, ?) with cabinet seen 22 times and table 5 times.
  CountedTripleSet full;
  full.add({0, 0, 1}, 22);
  full.add({0, 0, 2}, 5);
  full.add({3, 0, 2}, 40);
  const auto g = ground_truth_ranks(full, {QueryKind::tail, 0, 0});
  EXPECT_EQ(g.ranks.at(1), 1u);
  EXPECT_EQ(g.ranks.at(2), 2u);
  EXPECT_EQ(g.ranks.size(), 2u);
}

TEST(GroundTruthRanks, CompetitionRankingOnTies) {
  CountedTripleSet full;
  full.add({0, 0, 1}, 4);
  full.add({0, 0, 2}, 2);
  full.add({0, 0, 3}, 2);
  full.add({0, 0, 4}, 1);
  const auto g = ground_truth_ranks(full, {QueryKind::tail, 0, 0});
  EXPECT_EQ(g.ranks.at(1), 1u);
  EXPECT_EQ(g.ranks.at(2), 2u);
  EXPECT_EQ(g.ranks.at(3), 2u);
  EXPECT_EQ(g.ranks.at(4), 4u);

  CountedTripleSet flat;
  for (EntityId h = 1; h < 5; ++h) flat.add({h, 0, 0}, 3);
  for (const auto& [e, r] : ground_truth_ranks(flat, {QueryKind::head, 0, 0}).ranks) EXPECT_EQ(r, 1u);
}

TEST(GroundTruthRanks, MatchesSortByCountOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint64_t> count(1, 6);
  CountedTripleSet full;
  for (EntityId t = 0; t < 30; ++t)
    if (t % 3) full.add({0, 0, t}, count(rng));
  const auto g = ground_truth_ranks(full, {QueryKind::tail, 0, 0});
  std::vector<std::pair<std::uint64_t, EntityId>> sorted;
  for (const auto& [t, c] : full) sorted.push_back({c, t.tail});
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    std::size_t first = i;
    while (first > 0 && sorted[first - 1].first == sorted[i].first) --first;
    EXPECT_EQ(g.ranks.at(sorted[i].second), first + 1);
  }
}

TEST(GroundTruthRanks, EmptyWhenNoCompletion) {
  CountedTripleSet full;
  full.add({0, 0, 1});
  EXPECT_TRUE(ground_truth_ranks(full, {QueryKind::tail, 1, 0}).empty());
}

TEST(PredictedRanks, HighestScoreRanksFirstAndTiesShareMeanRank) {
  EmbeddingModel m(numbered("e", 3), numbered("r", 1), {1, 1});
  m.entity(0)[0] = 1.0;
  m.entity(1)[0] = 3.0;
  m.entity(2)[0] = 2.0;
  const Query q{QueryKind::tail, 0, 0};
  const EntityId cands[] = {1, 2, 0};
  EXPECT_EQ(predicted_ranks(m, q, cands, {}), (std::vector<double>{1.0, 2.0, 3.0}));

  m.entity(2)[0] = 3.0;
  const EntityId tied[] = {1, 2};
  EXPECT_EQ(predicted_ranks(m, q, tied, {}), (std::vector<double>{1.5, 1.5}));
}

TEST(PredictedRanks, FilterRemovesOtherPositivesOnly) {
  EmbeddingModel m(numbered("e", 4), numbered("r", 1), {1, 1});
  for (EntityId e = 0; e < 4; ++e) m.entity(e)[0] = 1.0 + e;
  CountedTripleSet filter;
  filter.add({0, 0, 3});
  filter.add({0, 0, 2});
  const Query q{QueryKind::tail, 0, 0};
  const EntityId c1[] = {1};
  EXPECT_EQ(predicted_ranks(m, q, c1, filter).front(), 1.0);
  // A filtered candidate is still ranked against the unfiltered pool.
  const EntityId c3[] = {3};
  EXPECT_EQ(predicted_ranks(m, q, c3, filter).front(), 1.0);
  const EntityId c2[] = {2};
  EXPECT_EQ(predicted_ranks(m, q, c2, {}).front(), 2.0);
}

TEST(PredictedRanks, FilteredNeverExceedsRaw) {
  std::mt19937_64 rng(2);
  auto m = random_model(12, 2, {4, 2}, rng);
  CountedTripleSet filter;
  std::uniform_int_distribution<EntityId> e(0, 11);
  for (int i = 0; i < 40; ++i) filter.add({e(rng), static_cast<RelationId>(i % 2), e(rng)});
  std::vector<EntityId> all(12);
  std::iota(all.begin(), all.end(), 0u);
  for (EntityId a = 0; a < 12; ++a)
    for (auto kind : {QueryKind::tail, QueryKind::head}) {
      const Query q{kind, a, 1};
      const auto f = predicted_ranks(m, q, all, filter);
      const auto raw = predicted_ranks(m, q, all, {});
      for (std::size_t i = 0; i < all.size(); ++i) {
        EXPECT_LE(f[i], raw[i]);
        EXPECT_GE(f[i], 1.0);
      }
    }
}

TEST(Mrr, ClosedForms) {
  const double ones[] = {1, 1, 1};
  EXPECT_EQ(mrr(ones), 1.0);
  const double r12[] = {1, 2};
  EXPECT_EQ(mrr(r12), 0.75);
  EXPECT_THROW(mrr(std::span<const double>{}), InvalidArgument);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1.0, 50.0);
  std::vector<double> ranks(100);
  for (auto& r : ranks) r = u(rng);
  double s = 0;
  for (double r : ranks) s += 1.0 / r;
  EXPECT_NEAR(mrr(ranks), s / 100, 1e-15);
}

TEST(MrrStar, ClosedForms) {
  const RankPair exact[] = {{1, 1, 1}, {3, 3, 2}, {2, 2, 5}};
  EXPECT_EQ(mrr_star(exact), 1.0);
  const RankPair one[] = {{3, 5, 1}};
  EXPECT_DOUBLE_EQ(mrr_star(one), 1.0 / 3.0);
  const RankPair weighted[] = {{1, 2, 3}, {1, 1, 1}};
  EXPECT_DOUBLE_EQ(mrr_star(weighted), (3 * 0.5 + 1.0) / 4.0);
  EXPECT_THROW(mrr_star(std::span<const RankPair>{}), InvalidArgument);
  const RankPair bad[] = {{0.5, 1, 1}};
  EXPECT_THROW(mrr_star(bad), InvalidArgument);
}

TEST(MrrStar, StaysInUnitIntervalAndHitsOneOnlyWhenExact) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> r(1, 20);
  for (int i = 0; i < 200; ++i) {
    std::vector<RankPair> pairs;
    bool exact = true;
    for (int j = 0; j < 5; ++j) {
      pairs.push_back({static_cast<double>(r(rng)), static_cast<double>(r(rng)), static_cast<double>(r(rng))});
      exact = exact && pairs.back().truth == pairs.back().predicted;
    }
    const double v = mrr_star(pairs);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(v == 1.0, exact);
  }
}

struct SmallGraph {
  EmbeddingModel model;
  DatasetSplit split;
};

SmallGraph small_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SmallGraph g{random_model(10, 2, {4, 2}, rng), {}};
  g.split.entities = g.model.entity_names();
  g.split.relations = g.model.relation_names();
  std::uniform_int_distribution<EntityId> e(0, 9);
  std::uniform_int_distribution<std::uint64_t> c(1, 5);
  CountedTripleSet all;
  for (int i = 0; i < 45; ++i) all.add({e(rng), static_cast<RelationId>(i % 2), e(rng)}, c(rng));
  split_unique(all, seed, {0.6, 0.1}, g.split);
  return g;
}

TEST(EvaluateSplit, MatchesBruteForcePipeline) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto g = small_graph(seed);
    const auto res = evaluate_split(g.model, g.split);
    const double oracle =
        testing::oracle_mrr_star(g.model, g.split.test, g.split.all(), g.split.known_positives());
    EXPECT_DOUBLE_EQ(res.mrr_star, oracle);
    EXPECT_EQ(res.outcomes.size(), 2 * g.split.test.unique_count());
    const auto uniform = evaluate_split(g.model, g.split, {QueryWeighting::uniform, {}});
    EXPECT_DOUBLE_EQ(uniform.mrr_star, testing::oracle_mrr_star(g.model, g.split.test, g.split.all(),
                                                                g.split.known_positives(), false));
  }
}

TEST(EvaluateSplit, PerfectModelOnSingleTriple) {
  EmbeddingModel m(numbered("e", 3), numbered("r", 1), {1, 1});
  m.entity(0)[0] = 1;
  m.entity(1)[0] = 1;
  m.entity(2)[0] = -1;
  DatasetSplit s;
  s.entities = m.entity_names();
  s.relations = m.relation_names();
  s.test.add({0, 0, 1}, 7);
  // Self pairs are known positives, so only entity 2 competes and it scores -1.
  s.train.add({0, 0, 0});
  s.train.add({1, 0, 1});
  const auto res = evaluate_split(m, s);
  EXPECT_EQ(res.mrr_star, 1.0);
  EXPECT_EQ(res.total_weight, 14.0);
}

TEST(EvaluateSplit, InvariantUnderMonotoneScoreTransform) {
  auto g = small_graph(7);
  const double before = evaluate_split(g.model, g.split).mrr_star;
  // Scaling every entity by 3 multiplies every score by 9.
  for (EntityId e = 0; e < g.model.entity_count(); ++e)
    for (auto& x : g.model.entity(e)) x *= 3.0;
  EXPECT_DOUBLE_EQ(evaluate_split(g.model, g.split).mrr_star, before);
}

TEST(EvaluateSplit, SensitiveToEntityRows) {
  auto g = small_graph(8);
  const double before = evaluate_split(g.model, g.split).mrr_star;
  auto shuffled = g.model;
  std::vector<EntityId> perm(10);
  std::iota(perm.begin(), perm.end(), 0u);
  std::rotate(perm.begin(), perm.begin() + 3, perm.end());
  for (EntityId e = 0; e < 10; ++e)
    std::copy(g.model.entity(perm[e]).begin(), g.model.entity(perm[e]).end(), shuffled.entity(e).begin());
  EXPECT_NE(evaluate_split(shuffled, g.split).mrr_star, before);
}

TEST(EvaluateSplit, RestrictionIsNoOpWhenSubsetCoversTest) {
  const auto g = small_graph(9);
  std::vector<bool> mask(10, false);
  for (const auto& [t, n] : g.split.test) mask[t.head] = mask[t.tail] = true;
  const auto a = evaluate_split(g.model, g.split);
  const auto b = evaluate_split(g.model, g.split, {QueryWeighting::count, within(mask)});
  EXPECT_EQ(a.mrr_star, b.mrr_star);

  std::vector<bool> none(10, false);
  EXPECT_TRUE(evaluate_split(g.model, g.split, {QueryWeighting::count, within(none)}).empty());
  EXPECT_TRUE(evaluate_split(g.model, g.split, {QueryWeighting::count, touching(none)}).empty());
}

}  // namespace
}  // namespace isi
