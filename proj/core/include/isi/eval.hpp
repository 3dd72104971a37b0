#pragma once

// Filtered link-prediction ranking with count-derived ground truth.
//
// For a query such as (h, r, ?) the ground-truth rank of a candidate comes
// from observation counts in the full graph (more observations rank higher,
// competition ranking on ties). The predicted rank comes from model scores
// (mean rank on ties). Both are computed over the same filtered candidate
// pool: completions already in train or valid are removed, except the
// candidate being ranked. MRR* averages 1 / (|R_G - R_P| + 1).

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "isi/analogy.hpp"
#include "isi/kg.hpp"

namespace isi {

enum class QueryKind { tail, head };  // tail: (h, r, ?), head: (?, r, t)

struct Query {
  QueryKind kind = QueryKind::tail;
  EntityId anchor = 0;
  RelationId relation = 0;

  Triple complete(EntityId candidate) const {
    return kind == QueryKind::tail ? Triple{anchor, relation, candidate} : Triple{candidate, relation, anchor};
  }
  static Query tail_of(const Triple& t) { return {QueryKind::tail, t.head, t.relation}; }
  static Query head_of(const Triple& t) { return {QueryKind::head, t.tail, t.relation}; }
};

struct GroundTruthRanking {
  std::map<EntityId, std::uint64_t> counts;
  std::map<EntityId, std::size_t> ranks;  // 1-based competition ranks

  bool empty() const noexcept { return ranks.empty(); }
};

// Candidates completing the query in `full`. With `filter`, completions in
// the filter are dropped unless equal to `keep`.
GroundTruthRanking ground_truth_ranks(const CountedTripleSet& full, const Query& query,
                                      const CountedTripleSet* filter = nullptr,
                                      std::optional<EntityId> keep = std::nullopt);

// Filtered predicted rank of each entry of `candidates` among all entities of
// `model`, mean rank for ties.
std::vector<double> predicted_ranks(const EmbeddingModel& model, const Query& query,
                                    std::span<const EntityId> candidates,
                                    const CountedTripleSet& filter);

struct RankPair {
  double truth = 1.0;
  double predicted = 1.0;
  double weight = 1.0;
};

double mrr(std::span<const double> predicted);
// Weighted mean of 1 / (|truth - predicted| + 1); a fraction in (0, 1].
double mrr_star(std::span<const RankPair> pairs);

enum class QueryWeighting { count, uniform };

struct EvalOptions {
  QueryWeighting weighting = QueryWeighting::count;
  // Keeps only test triples for which this returns true (all when empty).
  std::function<bool(const Triple&)> include;
};

// Test triples with both endpoints inside `mask`.
std::function<bool(const Triple&)> within(std::vector<bool> mask);
// Test triples with at least one endpoint inside `mask`.
std::function<bool(const Triple&)> touching(std::vector<bool> mask);

struct QueryOutcome {
  Triple triple;
  QueryKind kind = QueryKind::tail;
  RankPair ranks;
};

struct EvaluationResult {
  double mrr_star = 0.0;
  double total_weight = 0.0;
  std::vector<QueryOutcome> outcomes;

  bool empty() const noexcept { return outcomes.empty(); }
};

// Head and tail queries of every included test triple.
EvaluationResult evaluate_split(const EmbeddingModel& model, const CountedTripleSet& test,
                                const CountedTripleSet& full, const CountedTripleSet& filter,
                                const EvalOptions& options = {});

// Convenience over a DatasetSplit: full = all(), filter = known_positives().
EvaluationResult evaluate_split(const EmbeddingModel& model, const DatasetSplit& split,
                                const EvalOptions& options = {});

}  // namespace isi
