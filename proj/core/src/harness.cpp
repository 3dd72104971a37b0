#include "isi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "isi/errors.hpp"

namespace isi {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) {
  const auto h = fnv1a(tag);
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(h),    static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

std::optional<double> percent(const std::vector<RankPair>& pairs) {
  if (pairs.empty()) return std::nullopt;
  return 100.0 * mrr_star(pairs);
}

struct Stats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Sample standard deviation; 0 for fewer than two values.
Stats stats(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::string fixed(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string fixed(const std::optional<double>& x) { return x ? fixed(*x) : "NA"; }

// Runs f(i) for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) f(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

void SessionConfig::validate() const {
  layout.validate();
  initial.validate();
  fine_tune.validate();
  if (ratios.train <= 0 || ratios.valid < 0 || ratios.train + ratios.valid > 1.0)
    throw ConfigError("split ratios must be positive and sum to at most 1");
  if (!(convergence_threshold >= 0.0)) throw ConfigError("convergence threshold must be non-negative");
}

Variant Variant::of(InitMethod m, const InitConfig& base) {
  Variant v{std::string(to_string(m)), m, base};
  v.init.method = m;
  return v;
}

std::optional<Variant> parse_variant(std::string_view name, const InitConfig& base) {
  if (name == "joint") return Variant::joint();
  if (auto m = parse_init_method(name)) return Variant::of(*m, base);
  return std::nullopt;
}

PreparedSession prepare_session(const KnowledgeGraph& kg, std::span<const EntityId> ookb,
                                const SessionConfig& cfg, std::uint64_t seed,
                                const EmbeddingModel* trained_initial) {
  cfg.validate();
  PreparedSession s;
  s.split = split_for_session(kg, ookb, derive_seed(seed, "split"), cfg.ratios);
  const auto& ext = s.split.extended;
  for (auto id : s.split.ookb) s.ookb_names.push_back(ext.entities.name(id));
  for (const auto& [t, c] : s.split.insert)
    if (ext.train.contains(t)) s.insert_train.add(t, c);
  s.old_mask.assign(ext.entities.size(), false);
  for (EntityId e = 0; e < s.split.initial.entities.size(); ++e) s.old_mask[e] = true;

  s.initial.n = 0;
  s.initial.dataset = s.split.initial;
  s.initial.ookb = s.split.ookb;
  s.initial.insert_triples = s.split.insert;
  if (trained_initial) {
    if (trained_initial->entity_names() != s.split.initial.entities ||
        trained_initial->relation_names() != s.split.initial.relations)
      throw InvalidArgument("supplied initial model does not match the session-0 vocabulary");
    s.initial.model = *trained_initial;
  } else {
    s.initial.model = EmbeddingModel(s.split.initial.entities, s.split.initial.relations, cfg.layout);
    std::mt19937_64 rng(derive_seed(seed, "initial-params"));
    initialize_parameters(s.initial.model, rng);
    TrainConfig tc = cfg.initial;
    tc.seed = derive_seed(seed, "initial-train");
    train(s.initial.model, s.split.initial, tc);
  }
  const auto res = evaluate_split(s.initial.model, s.split.initial, {cfg.weighting, {}});
  if (res.empty()) spdlog::warn("session-0 test set is empty");
  s.initial_mrr_star = res.empty() ? 0.0 : 100.0 * res.mrr_star;
  return s;
}

EpochMetrics evaluate_session(const EmbeddingModel& model, const PreparedSession& session,
                              QueryWeighting weighting, std::size_t epoch) {
  const auto res = evaluate_split(model, session.split.extended, {weighting, {}});
  std::vector<RankPair> all, old, fresh;
  for (const auto& o : res.outcomes) {
    all.push_back(o.ranks);
    const bool is_old = session.old_mask[o.triple.head] && session.old_mask[o.triple.tail];
    (is_old ? old : fresh).push_back(o.ranks);
  }
  return {epoch, percent(all), percent(old), percent(fresh)};
}

SessionLog run_incremental_session(const PreparedSession& session, const Variant& variant,
                                   const WordVectorTable* words, const SessionConfig& cfg,
                                   std::uint64_t seed, std::size_t max_epochs,
                                   std::optional<double> joint_reference) {
  const auto& ext = session.split.extended;
  EmbeddingModel model;
  TrainConfig tc;
  if (!variant.method) {
    model = EmbeddingModel(ext.entities, ext.relations, cfg.layout);
    std::mt19937_64 rng(derive_seed(seed, "joint-params"));
    initialize_parameters(model, rng);
    tc = cfg.initial;
    tc.seed = derive_seed(seed, "joint-train");
  } else {
    InitConfig ic = variant.init;
    ic.method = *variant.method;
    ic.seed = derive_seed(seed, "ookb-init");
    auto result = initialize_ookb(session.initial.model, session.ookb_names, session.insert_train, words, ic);
    model = std::move(result.model);
    tc = cfg.fine_tune;
    tc.seed = derive_seed(seed, "fine-tune");
  }
  if (model.entity_names() != ext.entities) throw InvalidArgument("session-1 model vocabulary mismatch");
  tc.max_epochs = max_epochs;

  SessionLog log{variant.label, {}};
  auto converged = [&](const EpochMetrics& m) {
    return joint_reference && cfg.stop_at_convergence && m.mrr_star &&
           *m.mrr_star >= *joint_reference - cfg.convergence_threshold;
  };
  log.epochs.push_back(evaluate_session(model, session, cfg.weighting, 0));
  if (max_epochs == 0 || converged(log.epochs.back())) return log;
  train(model, ext, tc, [&](std::size_t epoch, const EmbeddingModel& m) {
    log.epochs.push_back(evaluate_session(m, session, cfg.weighting, epoch));
    return !converged(log.epochs.back());
  });
  return log;
}

std::optional<std::size_t> epochs_to_convergence(const SessionLog& log, double joint_reference, double threshold,
                                                 std::size_t cap) {
  for (const auto& m : log.epochs) {
    if (m.epoch > cap) break;
    if (m.mrr_star && *m.mrr_star >= joint_reference - threshold) return m.epoch;
  }
  return std::nullopt;
}

std::vector<EntityId> eligible_ookb(const KnowledgeGraph& kg, std::uint64_t min_observations) {
  std::vector<std::uint64_t> seen(kg.entities.size(), 0);
  for (const auto& [t, c] : kg.triples) {
    seen[t.head] += c;
    if (t.tail != t.head) seen[t.tail] += c;
  }
  std::vector<EntityId> out;
  for (EntityId e = 0; e < seen.size(); ++e)
    if (seen[e] >= min_observations) out.push_back(e);
  return out;
}

std::vector<EntityId> select_ookb(std::span<const EntityId> eligible, std::size_t count, std::mt19937_64& rng) {
  if (count > eligible.size())
    throw InvalidArgument("cannot withhold " + std::to_string(count) + " entities, only " +
                          std::to_string(eligible.size()) + " are eligible");
  std::vector<EntityId> pool(eligible.begin(), eligible.end());
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

ExperimentData load_dataset(const DatasetSource& source) {
  ExperimentData data;
  if (source.generator) {
    data.kg = generate_synthetic_kg(*source.generator, source.generator_seed);
    if (source.word_vectors.empty()) data.words = synthesize_word_vectors(*source.generator);
  } else {
    if (source.triples.empty()) throw ConfigError("dataset needs a generator or a triples file");
    data.kg = load_triples(source.triples);
  }
  if (!source.word_vectors.empty()) data.words = load_word_vectors(source.word_vectors);
  return data;
}

void ExperimentPlan::validate() const {
  session.validate();
  init.validate();
  if (methods.empty()) throw ConfigError("plan lists no methods");
  for (const auto& m : methods)
    if (!parse_variant(m)) throw ConfigError("unknown method '" + m + "'");
  if (ookb_sizes.empty()) throw ConfigError("plan lists no OOKB sizes");
  if (replicates == 0) throw ConfigError("replicates must be positive");
  if (corruption_inserted == 0 || corruption_replicates == 0)
    throw ConfigError("corruption experiment needs positive inserted and replicates");
  for (auto k : sweep_k)
    if (k == 0) throw ConfigError("sweep k values must be positive");
  if (sweep_ookb_size == 0 || sweep_replicates == 0) throw ConfigError("sweep needs positive size and replicates");
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (!dataset.generator && dataset.triples.empty()) throw ConfigError("dataset needs a generator or a triples file");
  if (dataset.generator) dataset.generator->validate();
  if (deployment.generator) deployment.generator->validate();
}

namespace {

std::vector<Variant> plan_variants(const ExperimentPlan& plan) {
  std::vector<Variant> out;
  for (const auto& m : plan.methods) out.push_back(*parse_variant(m, plan.init));
  return out;
}

const WordVectorTable* words_of(const ExperimentData& data) { return data.words ? &*data.words : nullptr; }

// One replicate per (size, replicate index); every variant sees the same
// withheld set and session-0 model.
std::vector<ReplicateRecord> run_replicates(const ExperimentPlan& plan, const ExperimentData& data,
                                            std::span<const std::size_t> sizes, std::size_t replicates,
                                            const std::vector<Variant>& variants, std::size_t epochs,
                                            bool need_joint, std::string_view tag) {
  const auto eligible = eligible_ookb(data.kg, plan.min_observations);
  std::vector<ReplicateRecord> records;
  for (auto size : sizes)
    for (std::size_t r = 0; r < replicates; ++r) records.push_back({size, r, {}, 0.0, {}, {}, false, {}});

  parallel_for(records.size(), plan.jobs, [&](std::size_t i) {
    auto& rec = records[i];
    const auto seed = derive_seed(plan.seed, tag, rec.ookb_size, rec.replicate);
    try {
      std::mt19937_64 rng(derive_seed(seed, "ookb-select"));
      const auto ookb = select_ookb(eligible, rec.ookb_size, rng);
      const auto session = prepare_session(data.kg, ookb, plan.session, seed);
      rec.ookb_names = session.ookb_names;
      rec.initial_mrr_star = session.initial_mrr_star;
      std::optional<SessionLog> joint;
      if (need_joint) {
        joint = run_incremental_session(session, Variant::joint(), words_of(data), plan.session, seed,
                                        plan.session.initial.max_epochs);
        if (!joint->epochs.back().mrr_star) throw InvalidArgument("session-1 test set is empty");
        rec.joint_reference = joint->epochs.back().mrr_star;
      }
      for (const auto& v : variants) {
        if (!v.method && joint) {
          rec.logs.push_back(*joint);
          continue;
        }
        rec.logs.push_back(
            run_incremental_session(session, v, words_of(data), plan.session, seed, epochs, rec.joint_reference));
      }
      spdlog::info("{} replicate |ookb|={} #{} done", tag, rec.ookb_size, rec.replicate);
    } catch (const Error& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.logs.clear();
      spdlog::warn("{} replicate |ookb|={} #{} failed and is excluded: {}", tag, rec.ookb_size, rec.replicate,
                   e.what());
    }
  });
  return records;
}

std::vector<ConvergenceRow> convergence_rows(const std::vector<ReplicateRecord>& records,
                                             const std::vector<Variant>& variants, const SessionConfig& cfg) {
  std::vector<ConvergenceRow> rows;
  const auto cap = cfg.fine_tune.max_epochs;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    ConvergenceRow row{variants[v].label, 0, 0.0, 0.0, 0};
    std::vector<double> epochs;
    for (const auto& rec : records) {
      if (rec.failed) continue;
      auto e = epochs_to_convergence(rec.logs[v], *rec.joint_reference, cfg.convergence_threshold, cap);
      if (!e) ++row.not_converged;
      epochs.push_back(static_cast<double>(e.value_or(cap)));
    }
    row.replicates = epochs.size();
    const auto s = stats(epochs);
    row.mean_epochs = s.mean;
    row.stddev_epochs = s.stddev;
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> epoch0_values(const std::vector<ReplicateRecord>& records, std::size_t variant,
                                  std::optional<double> EpochMetrics::*field, std::size_t size = 0) {
  std::vector<double> out;
  for (const auto& rec : records) {
    if (rec.failed || (size && rec.ookb_size != size)) continue;
    const auto& value = rec.logs[variant].epochs.front().*field;
    if (value) out.push_back(*value);
  }
  return out;
}

}  // namespace

ImmediateResult experiment_immediate(const ExperimentPlan& plan, const ExperimentData& data) {
  plan.validate();
  const auto variants = plan_variants(plan);
  ImmediateResult result;
  result.records = run_replicates(plan, data, plan.ookb_sizes, plan.replicates, variants, 0, false, "immediate");
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (auto size : plan.ookb_sizes) {
      const auto xs = epoch0_values(result.records, v, &EpochMetrics::mrr_star, size);
      const auto s = stats(xs);
      result.rows.push_back({variants[v].label, size, xs.size(), s.mean, s.stddev});
    }
  }
  return result;
}

ConvergenceResult experiment_convergence(const ExperimentPlan& plan, const ExperimentData& data) {
  plan.validate();
  const auto variants = plan_variants(plan);
  ConvergenceResult result;
  result.records = run_replicates(plan, data, plan.ookb_sizes, plan.replicates, variants,
                                  plan.session.fine_tune.max_epochs, true, "convergence");
  result.rows = convergence_rows(result.records, variants, plan.session);
  return result;
}

CorruptionResult experiment_corruption(const ExperimentPlan& plan, const ExperimentData& original,
                                       const ExperimentData& deployment) {
  plan.validate();
  const auto variants = plan_variants(plan);
  const auto& a = original.kg;
  const auto& b = deployment.kg;

  // Inserted candidates: entities new to the original graph with enough
  // observations linking them to it.
  std::vector<std::uint64_t> linked(b.entities.size(), 0);
  for (const auto& [t, c] : b.triples) {
    if (!a.relations.find(b.relations.name(t.relation))) continue;
    const bool head_new = !a.entities.find(b.entities.name(t.head));
    const bool tail_new = !a.entities.find(b.entities.name(t.tail));
    if (head_new && !tail_new) linked[t.head] += c;
    if (tail_new && !head_new) linked[t.tail] += c;
  }
  std::vector<EntityId> candidates;
  for (EntityId e = 0; e < linked.size(); ++e)
    if (linked[e] >= plan.min_observations) candidates.push_back(e);
  if (candidates.size() < plan.corruption_inserted)
    throw ConfigError("deployment graph has " + std::to_string(candidates.size()) +
                      " insertable entities, fewer than " + std::to_string(plan.corruption_inserted));

  std::optional<WordVectorTable> words;
  if (original.words || deployment.words) {
    const auto& first = original.words ? *original.words : *deployment.words;
    words = first;
    if (original.words && deployment.words) {
      if (deployment.words->dim() != first.dim()) throw ConfigError("word-vector dimensions differ between graphs");
      for (const auto& tok : deployment.words->tokens())
        if (!first.find(tok)) words->insert(tok, *deployment.words->find(tok));
    }
  }

  auto merged_graph = [&](const std::vector<EntityId>& chosen, std::vector<EntityId>& ookb) {
    KnowledgeGraph kg = a;
    std::set<std::string> chosen_names;
    ookb.clear();
    for (auto e : chosen) {
      chosen_names.insert(b.entities.name(e));
      ookb.push_back(kg.entities.intern(b.entities.name(e)));
    }
    for (const auto& [t, c] : b.triples) {
      const auto rel = a.relations.find(b.relations.name(t.relation));
      if (!rel) continue;
      const auto& hn = b.entities.name(t.head);
      const auto& tn = b.entities.name(t.tail);
      if (!chosen_names.count(hn) && !chosen_names.count(tn)) continue;
      auto h = kg.entities.find(hn);
      auto tl = kg.entities.find(tn);
      if (h && tl) kg.triples.add({*h, *rel, *tl}, c);
    }
    return kg;
  };

  CorruptionResult result;
  for (std::size_t r = 0; r < plan.corruption_replicates; ++r)
    result.records.push_back({plan.corruption_inserted, r, {}, 0.0, {}, {}, false, {}});
  const auto session_seed = derive_seed(plan.seed, "corruption");
  std::optional<EmbeddingModel> initial_model;
  auto run_one = [&](std::size_t i) {
    auto& rec = result.records[i];
    try {
      std::mt19937_64 rng(derive_seed(plan.seed, "corruption-select", rec.replicate));
      const auto chosen = select_ookb(candidates, plan.corruption_inserted, rng);
      std::vector<EntityId> ookb;
      const auto kg = merged_graph(chosen, ookb);
      const auto session =
          prepare_session(kg, ookb, plan.session, session_seed, initial_model ? &*initial_model : nullptr);
      if (!initial_model) initial_model = session.initial.model;
      rec.ookb_names = session.ookb_names;
      rec.initial_mrr_star = session.initial_mrr_star;
      for (const auto& v : variants)
        rec.logs.push_back(run_incremental_session(session, v, words ? &*words : nullptr, plan.session, session_seed,
                                                   plan.corruption_epochs));
      spdlog::info("corruption replicate #{} done", rec.replicate);
    } catch (const Error& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.logs.clear();
      spdlog::warn("corruption replicate #{} failed and is excluded: {}", rec.replicate, e.what());
    }
  };
  // The session-0 model depends only on the original graph; train it once.
  run_one(0);
  if (!initial_model) throw Error("corruption experiment could not train the initial model: " + result.records[0].error);
  parallel_for(result.records.size() - 1, plan.jobs, [&](std::size_t i) { run_one(i + 1); });

  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<double> pre, post;
    for (const auto& rec : result.records) {
      if (rec.failed) continue;
      const auto& m = rec.logs[v].epochs.front();
      if (!m.old_entities) continue;
      pre.push_back(rec.initial_mrr_star);
      post.push_back(*m.old_entities);
    }
    const auto fresh = epoch0_values(result.records, v, &EpochMetrics::new_entities);
    CorruptionRow row{variants[v].label, pre.size(), stats(pre).mean, stats(post).mean, 0.0, std::nullopt};
    row.drop = row.pre_insertion - row.epoch0;
    if (!fresh.empty()) row.epoch0_new = stats(fresh).mean;
    result.rows.push_back(row);
  }
  return result;
}

SweepResult sensitivity_sweep(const ExperimentPlan& plan, const ExperimentData& data,
                              std::span<const std::size_t> k_values) {
  plan.validate();
  std::vector<InitMethod> methods;
  for (const auto& m : plan.methods) {
    auto parsed = parse_init_method(m);
    if (parsed && (*parsed == InitMethod::es || *parsed == InitMethod::rs || *parsed == InitMethod::ers))
      methods.push_back(*parsed);
  }
  if (methods.empty()) methods = {InitMethod::es, InitMethod::rs, InitMethod::ers};

  std::vector<Variant> variants;
  std::vector<std::pair<std::string, std::size_t>> keys;
  for (auto m : methods) {
    for (auto k : k_values) {
      if (k == 0) throw ConfigError("sweep k values must be positive");
      InitConfig ic = plan.init;
      ic.k_es = ic.k_rs = ic.k_ers = k;
      ic.k_ers_preliminary = std::max(ic.k_ers_preliminary, k);
      auto v = Variant::of(m, ic);
      v.label += "@" + std::to_string(k);
      variants.push_back(v);
      keys.emplace_back(std::string(to_string(m)), k);
    }
  }
  SweepResult result;
  const std::size_t sizes[] = {plan.sweep_ookb_size};
  result.records = run_replicates(plan, data, sizes, plan.sweep_replicates, variants,
                                  plan.session.fine_tune.max_epochs, true, "sweep");
  const auto conv = convergence_rows(result.records, variants, plan.session);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto xs = epoch0_values(result.records, v, &EpochMetrics::mrr_star);
    result.rows.push_back({keys[v].first, keys[v].second, conv[v].replicates, stats(xs).mean, conv[v].mean_epochs,
                           conv[v].stddev_epochs, conv[v].not_converged});
  }
  return result;
}

void write_epoch_log(std::ostream& out, std::span<const ReplicateRecord> records) {
  out << "epoch,method,ookb_size,replicate,mrr_star,mrr_star_old_entities,mrr_star_new_entities\n";
  for (const auto& rec : records)
    for (const auto& log : rec.logs)
      for (const auto& m : log.epochs)
        out << m.epoch << ',' << log.method << ',' << rec.ookb_size << ',' << rec.replicate << ','
            << fixed(m.mrr_star) << ',' << fixed(m.old_entities) << ',' << fixed(m.new_entities) << '\n';
}

void write_immediate_table(std::ostream& out, std::span<const ImmediateRow> rows) {
  out << "method,ookb_size,replicates,mean_mrr_star,stddev_mrr_star\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.ookb_size << ',' << r.replicates << ',' << fixed(r.mean) << ',' << fixed(r.stddev)
        << '\n';
}

void write_convergence_table(std::ostream& out, std::span<const ConvergenceRow> rows) {
  out << "method,replicates,mean_epochs,stddev_epochs,not_converged\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.replicates << ',' << fixed(r.mean_epochs) << ',' << fixed(r.stddev_epochs) << ','
        << r.not_converged << '\n';
}

void write_corruption_table(std::ostream& out, std::span<const CorruptionRow> rows) {
  out << "method,replicates,pre_insertion_mrr_star_old,epoch0_mrr_star_old,drop,epoch0_mrr_star_new\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.replicates << ',' << fixed(r.pre_insertion) << ',' << fixed(r.epoch0) << ','
        << fixed(r.drop) << ',' << fixed(r.epoch0_new) << '\n';
}

void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows) {
  out << "method,k,replicates,mean_mrr_star,mean_epochs,stddev_epochs,not_converged\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.k << ',' << r.replicates << ',' << fixed(r.mean_mrr_star) << ','
        << fixed(r.mean_epochs) << ',' << fixed(r.stddev_epochs) << ',' << r.not_converged << '\n';
}

void write_learning_curves(std::ostream& out, std::span<const ReplicateRecord> records,
                           std::span<const std::string> methods) {
  std::vector<std::map<std::size_t, std::vector<double>>> by_epoch(methods.size());
  std::size_t last = 0;
  for (const auto& rec : records)
    for (const auto& log : rec.logs) {
      auto it = std::find(methods.begin(), methods.end(), log.method);
      if (it == methods.end()) continue;
      auto& slot = by_epoch[static_cast<std::size_t>(it - methods.begin())];
      for (const auto& m : log.epochs) {
        if (!m.mrr_star) continue;
        slot[m.epoch].push_back(*m.mrr_star);
        last = std::max(last, m.epoch);
      }
    }
  out << "# epoch";
  for (const auto& m : methods) out << ' ' << m;
  out << '\n';
  for (std::size_t e = 0; e <= last; ++e) {
    out << e;
    for (const auto& slot : by_epoch) {
      auto it = slot.find(e);
      out << ' ' << (it == slot.end() ? std::string("NaN") : fixed(stats(it->second).mean));
    }
    out << '\n';
  }
}

namespace {

std::optional<double> parse_metric(const std::string& field, const std::string& source, std::size_t line) {
  if (field == "NA") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError(source, line, "bad metric '" + field + "'");
  }
}

std::size_t parse_index(const std::string& field, const std::string& source, std::size_t line) {
  if (field.empty() || field.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError(source, line, "bad index '" + field + "'");
  return std::stoull(field);
}

}  // namespace

std::vector<ReplicateRecord> read_epoch_log(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) ||
      line != "epoch,method,ookb_size,replicate,mrr_star,mrr_star_old_entities,mrr_star_new_entities")
    throw ParseError(source, 1, "missing epoch log header");
  std::vector<ReplicateRecord> records;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw ParseError(source, lineno, "expected 7 fields");
    const auto key = std::make_pair(parse_index(f[2], source, lineno), parse_index(f[3], source, lineno));
    auto [it, fresh] = index.emplace(key, records.size());
    if (fresh) records.push_back({key.first, key.second, {}, 0.0, {}, {}, false, {}});
    auto& rec = records[it->second];
    if (rec.logs.empty() || rec.logs.back().method != f[1]) rec.logs.push_back({f[1], {}});
    rec.logs.back().epochs.push_back({parse_index(f[0], source, lineno), parse_metric(f[4], source, lineno),
                                      parse_metric(f[5], source, lineno), parse_metric(f[6], source, lineno)});
  }
  for (auto& rec : records)
    for (const auto& log : rec.logs)
      if (log.method == "joint" && !log.epochs.empty()) rec.joint_reference = log.epochs.back().mrr_star;
  return records;
}

std::vector<std::string> logged_methods(std::span<const ReplicateRecord> records) {
  std::vector<std::string> out;
  for (const auto& rec : records)
    for (const auto& log : rec.logs)
      if (std::find(out.begin(), out.end(), log.method) == out.end()) out.push_back(log.method);
  return out;
}

std::vector<ImmediateRow> summarize_immediate(std::span<const ReplicateRecord> records) {
  std::vector<ImmediateRow> rows;
  std::set<std::size_t> sizes;
  for (const auto& rec : records) sizes.insert(rec.ookb_size);
  for (const auto& method : logged_methods(records))
    for (auto size : sizes) {
      std::vector<double> xs;
      for (const auto& rec : records) {
        if (rec.failed || rec.ookb_size != size) continue;
        for (const auto& log : rec.logs)
          if (log.method == method && !log.epochs.empty() && log.epochs.front().mrr_star)
            xs.push_back(*log.epochs.front().mrr_star);
      }
      if (xs.empty()) continue;
      const auto s = stats(xs);
      rows.push_back({method, size, xs.size(), s.mean, s.stddev});
    }
  return rows;
}

std::vector<ConvergenceRow> summarize_convergence(std::span<const ReplicateRecord> records, double threshold,
                                                  std::size_t cap) {
  std::vector<ConvergenceRow> rows;
  for (const auto& method : logged_methods(records)) {
    ConvergenceRow row{method, 0, 0.0, 0.0, 0};
    std::vector<double> epochs;
    for (const auto& rec : records) {
      if (rec.failed || !rec.joint_reference) continue;
      for (const auto& log : rec.logs) {
        if (log.method != method) continue;
        auto e = epochs_to_convergence(log, *rec.joint_reference, threshold, cap);
        if (!e) ++row.not_converged;
        epochs.push_back(static_cast<double>(e.value_or(cap)));
      }
    }
    if (epochs.empty()) continue;
    row.replicates = epochs.size();
    const auto s = stats(epochs);
    row.mean_epochs = s.mean;
    row.stddev_epochs = s.stddev;
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_ookb_sets(std::ostream& out, std::span<const ReplicateRecord> records) {
  out << "ookb_size,replicate,status,entities\n";
  for (const auto& rec : records) {
    out << rec.ookb_size << ',' << rec.replicate << ',' << (rec.failed ? "failed" : "ok") << ',';
    for (std::size_t i = 0; i < rec.ookb_names.size(); ++i) out << (i ? ";" : "") << rec.ookb_names[i];
    out << '\n';
  }
}

template <class Rows, class Writer>
void write_experiment(const ExperimentPlan& plan, const std::string& name, const std::vector<ReplicateRecord>& records,
                      const Rows& rows, Writer&& write_rows, const std::vector<std::string>& curve_methods,
                      std::vector<std::filesystem::path>& written) {
  const auto dir = plan.output_dir;
  auto emit = [&](const std::string& file, auto&& fn) {
    const auto path = dir / file;
    auto out = open_output(path);
    fn(out);
    if (!out) throw Error("failed writing " + path.string());
    written.push_back(path);
  };
  emit(name + ".csv", [&](std::ostream& o) { write_rows(o, std::span(rows)); });
  emit(name + "_epochs.csv", [&](std::ostream& o) { write_epoch_log(o, records); });
  emit(name + "_ookb.csv", [&](std::ostream& o) { write_ookb_sets(o, records); });
  emit(name + "_curves.dat", [&](std::ostream& o) { write_learning_curves(o, records, curve_methods); });
}

}  // namespace

std::vector<std::filesystem::path> run_plan(const ExperimentPlan& plan, std::span<const Experiment> experiments) {
  plan.validate();
  std::filesystem::create_directories(plan.output_dir);
  const auto data = load_dataset(plan.dataset);
  std::vector<std::filesystem::path> written;
  for (auto ex : experiments) {
    switch (ex) {
      case Experiment::immediate: {
        auto r = experiment_immediate(plan, data);
        write_experiment(plan, "immediate", r.records, r.rows, write_immediate_table, plan.methods, written);
        break;
      }
      case Experiment::convergence: {
        auto r = experiment_convergence(plan, data);
        write_experiment(plan, "convergence", r.records, r.rows, write_convergence_table, plan.methods, written);
        break;
      }
      case Experiment::corruption: {
        const auto deployment = load_dataset(plan.deployment);
        auto r = experiment_corruption(plan, data, deployment);
        write_experiment(plan, "corruption", r.records, r.rows, write_corruption_table, plan.methods, written);
        break;
      }
    }
  }
  return written;
}

std::vector<std::filesystem::path> run_sweep(const ExperimentPlan& plan, std::span<const std::size_t> k_values) {
  plan.validate();
  std::filesystem::create_directories(plan.output_dir);
  const auto data = load_dataset(plan.dataset);
  auto r = sensitivity_sweep(plan, data, k_values);
  std::vector<std::string> labels;
  for (const auto& rec : r.records) {
    if (rec.failed) continue;
    for (const auto& log : rec.logs) labels.push_back(log.method);
    break;
  }
  std::vector<std::filesystem::path> written;
  write_experiment(plan, "sweep", r.records, r.rows, write_sweep_table, labels, written);
  return written;
}

}  // namespace isi
