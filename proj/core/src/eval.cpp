#include "isi/eval.hpp"

#include <cmath>
#include <numeric>

#include "isi/errors.hpp"

namespace isi {

GroundTruthRanking ground_truth_ranks(const CountedTripleSet& full, const Query& query,
                                      const CountedTripleSet* filter, std::optional<EntityId> keep) {
  GroundTruthRanking out;
  for (const auto& [t, c] : full) {
    if (t.relation != query.relation) continue;
    const bool match = query.kind == QueryKind::tail ? t.head == query.anchor : t.tail == query.anchor;
    if (!match) continue;
    const EntityId cand = query.kind == QueryKind::tail ? t.tail : t.head;
    if (filter && filter->contains(t) && (!keep || *keep != cand)) continue;
    out.counts[cand] += c;
  }
  for (const auto& [cand, c] : out.counts) {
    std::size_t higher = 0;
    for (const auto& [other, oc] : out.counts) higher += oc > c ? 1 : 0;
    out.ranks[cand] = higher + 1;
  }
  return out;
}

namespace {

// Scores of every entity as the open slot of `query`.
std::vector<double> candidate_scores(const EmbeddingModel& model, const Query& query) {
  const auto d = model.dim();
  std::vector<double> probe(d);
  if (query.kind == QueryKind::tail)
    model.forward(model.entity(query.anchor), query.relation, probe);
  else
    model.backward(query.relation, model.entity(query.anchor), probe);
  std::vector<double> scores(model.entity_count());
  for (EntityId e = 0; e < scores.size(); ++e) {
    auto v = model.entity(e);
    scores[e] = std::inner_product(v.begin(), v.end(), probe.begin(), 0.0);
  }
  return scores;
}

}  // namespace

std::vector<double> predicted_ranks(const EmbeddingModel& model, const Query& query,
                                    std::span<const EntityId> candidates, const CountedTripleSet& filter) {
  const auto scores = candidate_scores(model, query);
  std::vector<char> filtered(scores.size(), 0);
  for (EntityId e = 0; e < scores.size(); ++e) filtered[e] = filter.contains(query.complete(e)) ? 1 : 0;

  std::vector<double> out;
  out.reserve(candidates.size());
  for (auto cand : candidates) {
    if (cand >= scores.size()) throw InvalidArgument("candidate outside the model vocabulary");
    const double s = scores[cand];
    std::size_t higher = 0, tied = 0;
    for (EntityId e = 0; e < scores.size(); ++e) {
      if (e == cand || filtered[e]) continue;
      if (scores[e] > s)
        ++higher;
      else if (scores[e] == s)
        ++tied;
    }
    out.push_back(1.0 + static_cast<double>(higher) + 0.5 * static_cast<double>(tied));
  }
  return out;
}

double mrr(std::span<const double> predicted) {
  if (predicted.empty()) throw InvalidArgument("MRR of an empty result list");
  double sum = 0.0;
  for (double r : predicted) {
    if (!(r >= 1.0)) throw InvalidArgument("ranks must be >= 1");
    sum += 1.0 / r;
  }
  return sum / static_cast<double>(predicted.size());
}

double mrr_star(std::span<const RankPair> pairs) {
  if (pairs.empty()) throw InvalidArgument("MRR* of an empty result list");
  double sum = 0.0, weight = 0.0;
  for (const auto& p : pairs) {
    if (!(p.truth >= 1.0) || !(p.predicted >= 1.0)) throw InvalidArgument("ranks must be >= 1");
    if (!(p.weight > 0.0)) throw InvalidArgument("weights must be positive");
    sum += p.weight / (std::abs(p.truth - p.predicted) + 1.0);
    weight += p.weight;
  }
  return sum / weight;
}

std::function<bool(const Triple&)> within(std::vector<bool> mask) {
  return [mask = std::move(mask)](const Triple& t) {
    return t.head < mask.size() && t.tail < mask.size() && mask[t.head] && mask[t.tail];
  };
}

std::function<bool(const Triple&)> touching(std::vector<bool> mask) {
  return [mask = std::move(mask)](const Triple& t) {
    return (t.head < mask.size() && mask[t.head]) || (t.tail < mask.size() && mask[t.tail]);
  };
}

EvaluationResult evaluate_split(const EmbeddingModel& model, const CountedTripleSet& test,
                                const CountedTripleSet& full, const CountedTripleSet& filter,
                                const EvalOptions& options) {
  EvaluationResult result;
  std::vector<RankPair> pairs;
  for (const auto& [t, c] : test) {
    if (options.include && !options.include(t)) continue;
    const double w = options.weighting == QueryWeighting::count ? static_cast<double>(c) : 1.0;
    for (auto kind : {QueryKind::tail, QueryKind::head}) {
      const Query q = kind == QueryKind::tail ? Query::tail_of(t) : Query::head_of(t);
      const EntityId answer = kind == QueryKind::tail ? t.tail : t.head;
      auto truth = ground_truth_ranks(full, q, &filter, answer);
      auto it = truth.ranks.find(answer);
      // The answer is always observed in `full` when test is a subset of it;
      // otherwise it ranks after every observed candidate.
      const double truth_rank =
          it != truth.ranks.end() ? static_cast<double>(it->second) : static_cast<double>(truth.ranks.size() + 1);
      const EntityId cand[] = {answer};
      const double pred = predicted_ranks(model, q, cand, filter).front();
      RankPair p{truth_rank, pred, w};
      pairs.push_back(p);
      result.outcomes.push_back({t, kind, p});
    }
  }
  if (!pairs.empty()) {
    result.mrr_star = mrr_star(pairs);
    for (const auto& p : pairs) result.total_weight += p.weight;
  }
  return result;
}

EvaluationResult evaluate_split(const EmbeddingModel& model, const DatasetSplit& split,
                                const EvalOptions& options) {
  return evaluate_split(model, split.test, split.all(), split.known_positives(), options);
}

}  // namespace isi
