#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "isi/analogy.hpp"
#include "isi/kg.hpp"

namespace isi::testing {

inline Vocabulary numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return Vocabulary(std::move(names));
}

// Every parameter drawn from Uniform(-1, 1).
inline EmbeddingModel random_model(std::size_t entities, std::size_t relations, BlockLayout layout,
                                   std::mt19937_64& rng) {
  EmbeddingModel m(numbered("e", entities), numbered("r", relations), layout);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (EntityId e = 0; e < entities; ++e)
    for (auto& x : m.entity(e)) x = u(rng);
  for (RelationId r = 0; r < relations; ++r)
    for (auto& x : m.relation(r)) x = u(rng);
  return m;
}

// Dense v_h^T M v_t.
inline double dense_score(const EmbeddingModel& m, EntityId h, RelationId r, EntityId t) {
  const auto M = m.dense_relation(r);
  const auto vh = m.entity(h);
  const auto vt = m.entity(t);
  const std::size_t d = m.dim();
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) s += vh[i] * M[i * d + j] * vt[j];
  return s;
}

// Solves M x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(std::vector<double> M, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(M[r * n + c]) > std::abs(M[p * n + c])) p = r;
    for (std::size_t k = 0; k < n; ++k) std::swap(M[c * n + k], M[p * n + k]);
    std::swap(b[c], b[p]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = M[r * n + c] / M[c * n + c];
      for (std::size_t k = c; k < n; ++k) M[r * n + k] -= f * M[c * n + k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= M[i * n + i];
  return b;
}

// Largest relative error between analytic gradients and central finite
// differences over every entity and relation coordinate. Relative error is
// |a - n| / max(|a|, |n|, floor), so coordinates with gradients below the
// floor are held to an absolute bound of tol * floor.
inline double max_gradient_error(EmbeddingModel model, std::span<const LabeledExample> batch,
                                 const RegularizationConfig& reg, double step = 1e-5, double floor = 1e-3) {
  const Gradients g = gradients(model, batch, reg);
  double worst = 0.0;
  auto check = [&](std::span<double> params, auto analytic_at) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + step;
      const double up = loss(model, batch, reg);
      params[i] = saved - step;
      const double down = loss(model, batch, reg);
      params[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double analytic = analytic_at(i);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  };
  for (EntityId e = 0; e < model.entity_count(); ++e) {
    const bool touched = g.entity_touched(e);
    check(model.entity(e), [&](std::size_t i) { return touched ? g.entity(e)[i] : 0.0; });
  }
  for (RelationId r = 0; r < model.relation_count(); ++r) {
    const bool touched = g.relation_touched(r);
    check(model.relation(r), [&](std::size_t i) { return touched ? g.relation(r)[i] : 0.0; });
  }
  return worst;
}

// Brute-force filtered ranking of one (query, answer) pair, written without
// the library's ranking code: enumerate completions, drop filtered ones
// except the answer, sort, and read positions.
struct OracleRanks {
  double truth = 0;
  double predicted = 0;
};

inline OracleRanks oracle_ranks(const EmbeddingModel& m, const Triple& t, bool tail_query,
                                const CountedTripleSet& full, const CountedTripleSet& filter) {
  const EntityId answer = tail_query ? t.tail : t.head;
  auto complete = [&](EntityId e) {
    return tail_query ? Triple{t.head, t.relation, e} : Triple{e, t.relation, t.tail};
  };
  std::vector<std::pair<double, EntityId>> pool;
  std::vector<std::pair<std::uint64_t, EntityId>> observed;
  for (EntityId e = 0; e < m.entity_count(); ++e) {
    const Triple c = complete(e);
    if (e != answer && filter.contains(c)) continue;
    pool.push_back({dense_score(m, c.head, c.relation, c.tail), e});
    if (full.count(c) > 0) observed.push_back({full.count(c), e});
  }
  std::sort(pool.begin(), pool.end(), [](auto& a, auto& b) { return a.first > b.first; });
  double predicted = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].second != answer) continue;
    std::size_t first = i, last = i;
    while (first > 0 && pool[first - 1].first == pool[i].first) --first;
    while (last + 1 < pool.size() && pool[last + 1].first == pool[i].first) ++last;
    predicted = (static_cast<double>(first + 1) + static_cast<double>(last + 1)) / 2.0;
  }
  std::sort(observed.begin(), observed.end(), [](auto& a, auto& b) { return a.first > b.first; });
  double truth = static_cast<double>(observed.size() + 1);
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i].second != answer) continue;
    std::size_t first = i;
    while (first > 0 && observed[first - 1].first == observed[i].first) --first;
    truth = static_cast<double>(first + 1);
  }
  return {truth, predicted};
}

// Weighted MRR* over head and tail queries of every test triple.
inline double oracle_mrr_star(const EmbeddingModel& m, const CountedTripleSet& test, const CountedTripleSet& full,
                              const CountedTripleSet& filter, bool count_weights = true) {
  double sum = 0, weight = 0;
  for (const auto& [t, n] : test)
    for (bool tail : {true, false}) {
      const auto r = oracle_ranks(m, t, tail, full, filter);
      const double w = count_weights ? static_cast<double>(n) : 1.0;
      sum += w / (std::abs(r.truth - r.predicted) + 1.0);
      weight += w;
    }
  return sum / weight;
}

}  // namespace isi::testing
