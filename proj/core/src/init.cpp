#include "isi/init.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "isi/errors.hpp"

namespace isi {

std::string_view to_string(InitMethod m) {
  switch (m) {
    case InitMethod::xavier: return "xavier";
    case InitMethod::informed_uniform: return "iu";
    case InitMethod::es: return "es";
    case InitMethod::rs: return "rs";
    case InitMethod::ers: return "ers";
  }
  return "?";
}

std::optional<InitMethod> parse_init_method(std::string_view name) {
  if (name == "xavier") return InitMethod::xavier;
  if (name == "iu" || name == "informed_uniform") return InitMethod::informed_uniform;
  if (name == "es") return InitMethod::es;
  if (name == "rs") return InitMethod::rs;
  if (name == "ers") return InitMethod::ers;
  return std::nullopt;
}

void InitConfig::validate() const {
  if (k_es == 0 || k_rs == 0 || k_ers == 0 || k_ers_preliminary == 0)
    throw ConfigError("indicator set sizes must be positive");
  if (k_ers > k_ers_preliminary) throw ConfigError("k_ers must not exceed k_ers_preliminary");
}

namespace {

double norm(std::span<const double> v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

// Highest score first, lower id on ties.
IndicatorSet top_k(IndicatorSet scored, std::size_t k) {
  std::stable_sort(scored.begin(), scored.end(), [](const Indicator& a, const Indicator& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entity < b.entity;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

}  // namespace

std::vector<double> centroid_init(const IndicatorSet& indicators, const EmbeddingModel& model) {
  if (indicators.empty()) throw InvalidArgument("centroid of an empty indicator set");
  std::vector<double> out(model.dim(), 0.0);
  for (const auto& ind : indicators) {
    auto v = model.entity(ind.entity);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  const double n = static_cast<double>(indicators.size());
  for (auto& x : out) x /= n;
  return out;
}

std::optional<IndicatorSet> es_indicators(std::string_view ookb_name, const Vocabulary& known,
                                          const WordVectorTable& table, std::size_t k) {
  if (k == 0) throw InvalidArgument("indicator set size must be positive");
  auto target = entity_vector(table, ookb_name);
  if (!target) return std::nullopt;
  IndicatorSet scored;
  for (EntityId e = 0; e < known.size(); ++e) {
    auto v = entity_vector(table, known.name(e));
    if (!v) continue;
    scored.push_back({e, cosine(*v, *target)});
  }
  if (scored.size() < k)
    spdlog::warn("ES for '{}': only {} known entities have word vectors (k = {})", ookb_name, scored.size(), k);
  if (scored.empty()) return std::nullopt;
  return top_k(std::move(scored), k);
}

Resultants rs_resultants(const EmbeddingModel& model, const CountedTripleSet& insert, EntityId ookb,
                         double singular_tolerance) {
  Resultants out;
  const auto known = model.entity_count();
  std::vector<double> alpha(model.dim());
  for (const auto& [t, count] : insert) {
    if (t.relation >= model.relation_count()) continue;
    bool ok = false;
    if (t.tail == ookb && t.head != ookb && t.head < known) {
      model.forward(model.entity(t.head), t.relation, alpha);
      ok = true;
    } else if (t.head == ookb && t.tail != ookb && t.tail < known) {
      ok = model.forward_inverse(model.entity(t.tail), t.relation, alpha, singular_tolerance);
      if (!ok) {
        ++out.skipped;
        spdlog::warn("RS: relation '{}' is singular, skipping an insert triple",
                     model.relation_names().name(t.relation));
        continue;
      }
    } else {
      continue;
    }
    auto& c = out.centroids[t.relation];
    if (c.mean.empty()) c.mean.assign(model.dim(), 0.0);
    const double w = static_cast<double>(count);
    for (std::size_t i = 0; i < alpha.size(); ++i) c.mean[i] += w * alpha[i];
    c.support += w;
  }
  for (auto& [r, c] : out.centroids)
    for (auto& x : c.mean) x /= c.support;
  return out;
}

IndicatorSet rs_indicators(const EmbeddingModel& model, const Resultants& resultants,
                           std::span<const EntityId> candidates, std::size_t k) {
  if (k == 0) throw InvalidArgument("indicator set size must be positive");
  if (resultants.centroids.empty()) throw InvalidArgument("no resultant centroids");
  std::vector<std::pair<const std::vector<double>*, double>> dirs;
  for (const auto& [r, c] : resultants.centroids) {
    const double n = norm(c.mean);
    if (n > 0) dirs.emplace_back(&c.mean, n);
  }
  IndicatorSet scored;
  scored.reserve(candidates.size());
  for (auto e : candidates) {
    auto v = model.entity(e);
    const double nv = norm(v);
    double s = 0.0;
    if (nv > 0)
      for (const auto& [mean, n] : dirs) s += std::inner_product(v.begin(), v.end(), mean->begin(), 0.0) / (nv * n);
    scored.push_back({e, s});
  }
  return top_k(std::move(scored), k);
}

std::vector<double> xavier_init(std::size_t dim, std::mt19937_64& rng) {
  if (dim == 0) throw InvalidArgument("dimension must be positive");
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> out(dim);
  for (auto& x : out) x = u(rng);
  return out;
}

std::vector<double> iu_init(const EmbeddingModel& model, std::mt19937_64& rng) {
  if (model.entity_count() == 0) throw InvalidArgument("informed-uniform needs at least one entity");
  const auto d = model.dim();
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (EntityId e = 0; e < model.entity_count(); ++e) {
    auto v = model.entity(e);
    for (std::size_t i = 0; i < d; ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (lo[i] == hi[i]) {
      out[i] = lo[i];
    } else {
      // uniform_real_distribution is half-open; clamp guards rounding at hi.
      out[i] = std::min(std::uniform_real_distribution<double>(lo[i], hi[i])(rng), hi[i]);
    }
  }
  return out;
}

void write_init_report(std::ostream& out, const InitReport& report, const Vocabulary& names) {
  out << "entity\trequested\tused\tindicators\tnotes\n";
  for (const auto& rec : report.records) {
    out << rec.entity << '\t' << to_string(rec.requested) << '\t' << to_string(rec.used) << '\t';
    for (std::size_t i = 0; i < rec.indicators.size(); ++i) {
      if (i) out << ';';
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", rec.indicators[i].score);
      out << names.name(rec.indicators[i].entity) << ':' << buf;
    }
    out << '\t';
    for (std::size_t i = 0; i < rec.notes.size(); ++i) out << (i ? "; " : "") << rec.notes[i];
    out << '\n';
  }
}

namespace {

struct Initializer {
  const EmbeddingModel& previous;
  const CountedTripleSet& insert;
  const WordVectorTable* words;
  const InitConfig& cfg;
  std::mt19937_64& rng;

  std::vector<double> iu(InitRecord& rec) {
    rec.used = InitMethod::informed_uniform;
    rec.indicators.clear();
    return iu_init(previous, rng);
  }

  std::vector<double> es(const std::string& name, InitRecord& rec) {
    if (words) {
      if (auto ind = es_indicators(name, previous.entity_names(), *words, cfg.k_es)) {
        rec.used = InitMethod::es;
        rec.indicators = std::move(*ind);
        return centroid_init(rec.indicators, previous);
      }
    }
    rec.notes.push_back("no word vector, fell back to iu");
    spdlog::info("'{}' has no word vector; using informed-uniform", name);
    return iu(rec);
  }

  std::vector<double> rs(const std::string& name, EntityId id, InitRecord& rec) {
    auto res = rs_resultants(previous, insert, id);
    if (res.skipped) rec.notes.push_back(std::to_string(res.skipped) + " insert triples skipped (singular)");
    if (res.centroids.empty()) {
      rec.notes.push_back("no usable insert triples, fell back to es");
      spdlog::info("'{}' has no usable insert triples; falling back to ES", name);
      return es(name, rec);
    }
    std::vector<EntityId> candidates(previous.entity_count());
    std::iota(candidates.begin(), candidates.end(), EntityId{0});
    rec.used = InitMethod::rs;
    rec.indicators = rs_indicators(previous, res, candidates, cfg.k_rs);
    return centroid_init(rec.indicators, previous);
  }

  std::vector<double> ers(const std::string& name, EntityId id, InitRecord& rec) {
    std::optional<IndicatorSet> preliminary;
    if (words) preliminary = es_indicators(name, previous.entity_names(), *words, cfg.k_ers_preliminary);
    auto res = rs_resultants(previous, insert, id);
    if (res.skipped) rec.notes.push_back(std::to_string(res.skipped) + " insert triples skipped (singular)");
    if (!preliminary || res.centroids.empty()) {
      rec.notes.push_back(!preliminary ? "no word vector, fell back to es" : "no usable insert triples, fell back to es");
      return es(name, rec);
    }
    std::vector<EntityId> candidates;
    for (const auto& ind : *preliminary) candidates.push_back(ind.entity);
    rec.used = InitMethod::ers;
    rec.indicators = rs_indicators(previous, res, candidates, cfg.k_ers);
    return centroid_init(rec.indicators, previous);
  }
};

}  // namespace

InitResult initialize_ookb(const EmbeddingModel& previous, std::span<const std::string> ookb_names,
                           const CountedTripleSet& insert, const WordVectorTable* words,
                           const InitConfig& cfg) {
  cfg.validate();
  for (const auto& name : ookb_names)
    if (previous.entity_names().find(name))
      throw InvalidArgument("OOKB entity '" + name + "' is already known");
  if (!ookb_names.empty() && previous.entity_count() == 0)
    throw InvalidArgument("cannot initialize OOKB entities without known entities");

  std::mt19937_64 rng(cfg.seed);
  Initializer init{previous, insert, words, cfg, rng};
  std::vector<std::vector<double>> rows;
  InitReport report;
  const auto known = static_cast<EntityId>(previous.entity_count());
  for (std::size_t i = 0; i < ookb_names.size(); ++i) {
    const auto& name = ookb_names[i];
    const EntityId id = known + static_cast<EntityId>(i);
    InitRecord rec{name, cfg.method, cfg.method, {}, {}};
    switch (cfg.method) {
      case InitMethod::xavier: rows.push_back(xavier_init(previous.dim(), rng)); break;
      case InitMethod::informed_uniform: rows.push_back(init.iu(rec)); break;
      case InitMethod::es: rows.push_back(init.es(name, rec)); break;
      case InitMethod::rs: rows.push_back(init.rs(name, id, rec)); break;
      case InitMethod::ers: rows.push_back(init.ers(name, id, rec)); break;
    }
    report.records.push_back(std::move(rec));
  }

  InitResult result{previous, std::move(report)};
  for (std::size_t i = 0; i < ookb_names.size(); ++i) result.model.append_entity(ookb_names[i], rows[i]);
  return result;
}

}  // namespace isi
