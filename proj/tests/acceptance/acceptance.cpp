// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "isi/eval.hpp"
#include "isi/harness.hpp"
#include "isi/init.hpp"
#include "isi/synth.hpp"

namespace isi {
namespace {

using testing::random_model;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Criterion 1: analytic gradients against central differences.
Outcome gradient_correctness() {
  const BlockLayout layouts[] = {{4, 2}, {4, 0}, {10, 4}, {10, 6}};
  std::mt19937_64 rng(101);
  double worst = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (int model_index = 0; model_index < 20; ++model_index) {
    const auto layout = layouts[model_index % 4];
    auto m = random_model(6, 3, layout, rng);
    std::uniform_int_distribution<EntityId> e(0, 5);
    std::uniform_int_distribution<RelationId> r(0, 2);
    std::vector<LabeledExample> batch;
    for (int i = 0; i < 8; ++i) batch.push_back({{e(rng), r(rng), e(rng)}, i % 3 == 0 ? 1 : -1});
    RegularizationConfig reg;
    reg.decay_relations = model_index % 2 == 1;
    worst = std::max(worst, testing::max_gradient_error(m, batch, reg));
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= 1e-5 && seconds < 10.0,
          fmt::format("max relative error {:.2e} over 20 models, {:.2f} s", worst, seconds)};
}

// Criterion 2: blockwise score against the materialized matrix.
Outcome scoring_oracle() {
  std::mt19937_64 rng(202);
  const BlockLayout layouts[] = {{4, 2}, {10, 4}, {11, 5}, BlockLayout::balanced(100)};
  double worst = 0.0;
  std::size_t probes = 0;
  for (const auto& layout : layouts) {
    const auto m = random_model(20, 4, layout, rng);
    std::uniform_int_distribution<EntityId> e(0, 19);
    std::uniform_int_distribution<RelationId> r(0, 3);
    for (int i = 0; i < 250; ++i, ++probes) {
      const EntityId h = e(rng), t = e(rng);
      const RelationId rel = r(rng);
      worst = std::max(worst, std::abs(m.score(h, rel, t) - testing::dense_score(m, h, rel, t)));
    }
  }
  return {worst <= 1e-10 && probes == 1000, fmt::format("max |difference| {:.2e} over {} probes", worst, probes)};
}

// Criterion 3: ranking and MRR* against brute force on small graphs.
Outcome ranking_oracle() {
  std::mt19937_64 rng(303);
  std::size_t queries = 0, mismatches = 0;
  bool exact_mrr = true, in_range = true;
  for (int graph = 0; graph < 40; ++graph) {
    const std::size_t n = 4 + graph % 12;
    auto m = random_model(n, 2, graph % 2 ? BlockLayout{4, 2} : BlockLayout{3, 1}, rng);
    // Ties in model scores exercise the mean-rank rule.
    if (graph % 5 == 0) std::copy(m.entity(0).begin(), m.entity(0).end(), m.entity(1).begin());
    DatasetSplit split;
    split.entities = m.entity_names();
    split.relations = m.relation_names();
    std::uniform_int_distribution<EntityId> e(0, static_cast<EntityId>(n - 1));
    std::uniform_int_distribution<std::uint64_t> count(1, 4);
    CountedTripleSet all;
    for (std::size_t i = 0; i < 3 * n; ++i) all.add({e(rng), static_cast<RelationId>(i % 2), e(rng)}, count(rng));
    split_unique(all, graph, {0.6, 0.1}, split);
    if (split.test.empty()) continue;

    const auto full = split.all();
    const auto filter = split.known_positives();
    const auto res = evaluate_split(m, split);
    for (const auto& o : res.outcomes) {
      const auto want = testing::oracle_ranks(m, o.triple, o.kind == QueryKind::tail, full, filter);
      ++queries;
      if (want.truth != o.ranks.truth || want.predicted != o.ranks.predicted) ++mismatches;
    }
    if (res.mrr_star != testing::oracle_mrr_star(m, split.test, full, filter)) exact_mrr = false;
    if (!(res.mrr_star > 0.0 && res.mrr_star <= 1.0)) in_range = false;
  }

  // Predicted ranks equal to ground-truth ranks give exactly 1.
  std::vector<RankPair> same;
  std::uniform_int_distribution<int> rank(1, 15);
  for (int i = 0; i < 50; ++i) {
    const double r = rank(rng);
    same.push_back({r, r, static_cast<double>(rank(rng))});
  }
  const bool identical_is_one = mrr_star(same) == 1.0;
  for (int i = 0; i < 1000 && in_range; ++i) {
    const RankPair p{static_cast<double>(rank(rng)), 1.0 + (rank(rng) - 1) / 2.0, 1.0};
    const double v = mrr_star(std::span(&p, 1));
    in_range = v > 0.0 && v <= 1.0;
  }
  return {mismatches == 0 && exact_mrr && identical_is_one && in_range,
          fmt::format("{} queries, {} rank mismatches, MRR* exact {}, identical ranks give 1: {}, range ok {}", queries,
                      mismatches, exact_mrr, identical_is_one, in_range)};
}

bool within_known_range(const EmbeddingModel& prior, std::span<const double> row) {
  for (std::size_t i = 0; i < prior.dim(); ++i) {
    double lo = prior.entity(0)[i], hi = lo;
    for (EntityId e = 1; e < prior.entity_count(); ++e) {
      lo = std::min(lo, prior.entity(e)[i]);
      hi = std::max(hi, prior.entity(e)[i]);
    }
    if (row[i] < lo || row[i] > hi) return false;
  }
  return true;
}

bool prior_unchanged(const EmbeddingModel& prior, const EmbeddingModel& next) {
  for (EntityId e = 0; e < prior.entity_count(); ++e)
    if (std::memcmp(prior.entity(e).data(), next.entity(e).data(), prior.dim() * sizeof(double)) != 0) return false;
  for (RelationId r = 0; r < prior.relation_count(); ++r)
    if (prior.relation(r).size() != next.relation(r).size() ||
        std::memcmp(prior.relation(r).data(), next.relation(r).data(), prior.relation(r).size() * sizeof(double)) != 0)
      return false;
  return true;
}

// Criterion 4: initializer ranges and untouched prior parameters.
Outcome initializer_properties() {
  std::mt19937_64 rng(404);
  const std::size_t d = 100;
  const double bound = 6.0 / std::sqrt(static_cast<double>(d));
  std::size_t xavier_out = 0, samples = 0;
  while (samples < 100000) {
    for (double x : xavier_init(d, rng)) {
      xavier_out += std::abs(x) > bound;
      ++samples;
    }
  }

  const auto kg = generate_synthetic_kg({}, 4);
  const auto words = synthesize_word_vectors({});
  std::size_t iu_out = 0, semantic_out = 0, changed = 0, runs = 0;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    std::mt19937_64 pick(trial);
    const auto ookb = select_ookb(eligible_ookb(kg, 6), 5, pick);
    const auto split = split_for_session(kg, ookb, trial);
    EmbeddingModel prior(split.initial.entities, split.initial.relations, BlockLayout::balanced(20));
    std::mt19937_64 init_rng(trial + 10);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (EntityId e = 0; e < prior.entity_count(); ++e)
      for (auto& x : prior.entity(e)) x = 0.3 * e / prior.entity_count() + u(init_rng);
    for (RelationId r = 0; r < prior.relation_count(); ++r)
      for (auto& x : prior.relation(r)) x = u(init_rng);

    for (int i = 0; i < 200; ++i) iu_out += !within_known_range(prior, iu_init(prior, init_rng));

    std::vector<std::string> names;
    for (auto id : split.ookb) names.push_back(split.extended.entities.name(id));
    for (auto method : {InitMethod::xavier, InitMethod::informed_uniform, InitMethod::es, InitMethod::rs,
                        InitMethod::ers}) {
      InitConfig cfg;
      cfg.method = method;
      cfg.seed = trial;
      const auto result = initialize_ookb(prior, names, split.insert, &words, cfg);
      ++runs;
      changed += !prior_unchanged(prior, result.model);
      if (method == InitMethod::xavier) continue;
      for (EntityId e = prior.entity_count(); e < result.model.entity_count(); ++e) {
        const bool ok = within_known_range(prior, result.model.entity(e));
        (method == InitMethod::informed_uniform ? iu_out : semantic_out) += !ok;
      }
    }
  }
  return {xavier_out == 0 && iu_out == 0 && semantic_out == 0 && changed == 0,
          fmt::format("xavier {} of {} outside +-{:.3f}; iu out of range {}; es/rs/ers out of range {}; "
                      "prior parameters changed in {} of {} insertions",
                      xavier_out, samples, bound, iu_out, semantic_out, changed, runs)};
}

// Criterion 5: blockwise inverse and resultants against dense algebra.
Outcome inverse_correctness() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_roundtrip = 0.0, worst_resultant = 0.0;
  std::size_t checks = 0, singular = 0;
  for (const auto& layout : {BlockLayout{4, 2}, BlockLayout{10, 4}, BlockLayout::balanced(100)}) {
    const std::size_t d = layout.dim;
    auto m = random_model(8, 3, layout, rng);
    for (int i = 0; i < 100; ++i) {
      const RelationId r = i % 3;
      std::vector<double> x(d), y(d), back(d);
      for (auto& v : x) v = u(rng);
      m.forward(x, r, y);
      if (!m.forward_inverse(y, r, back)) {
        ++singular;
        continue;
      }
      for (std::size_t k = 0; k < d; ++k) worst_roundtrip = std::max(worst_roundtrip, std::abs(back[k] - x[k]));
      ++checks;
    }

    // Dense oracle: tail resultants are v_h^T M, head resultants solve x^T M = v_t^T.
    const EntityId ookb = 8;
    CountedTripleSet insert;
    insert.add({0, 0, ookb}, 2);
    insert.add({ookb, 0, 3}, 1);
    insert.add({ookb, 1, 5}, 3);
    insert.add({6, 1, ookb}, 1);
    insert.add({ookb, 2, 7}, 1);
    const auto res = rs_resultants(m, insert, ookb);
    std::map<RelationId, std::vector<double>> sums;
    std::map<RelationId, double> weights;
    for (const auto& [t, c] : insert) {
      const auto M = m.dense_relation(t.relation);
      std::vector<double> v(d, 0.0);
      if (t.tail == ookb) {
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t i = 0; i < d; ++i) v[j] += m.entity(t.head)[i] * M[i * d + j];
      } else {
        std::vector<double> Mt(d * d);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) Mt[i * d + j] = M[j * d + i];
        v = testing::dense_solve(Mt, {m.entity(t.tail).begin(), m.entity(t.tail).end()});
      }
      auto& s = sums[t.relation];
      s.resize(d, 0.0);
      for (std::size_t i = 0; i < d; ++i) s[i] += static_cast<double>(c) * v[i];
      weights[t.relation] += static_cast<double>(c);
    }
    if (res.centroids.size() != sums.size()) return {false, "resultant relations differ from the oracle"};
    for (const auto& [r, s] : sums)
      for (std::size_t i = 0; i < d; ++i)
        worst_resultant = std::max(worst_resultant, std::abs(res.centroids.at(r).mean[i] - s[i] / weights[r]));
  }
  return {worst_roundtrip <= 1e-9 && worst_resultant <= 1e-9 && checks > 0,
          fmt::format("round trip max error {:.2e} over {} vectors ({} singular skipped); resultant max error {:.2e}",
                      worst_roundtrip, checks, singular, worst_resultant)};
}

template <class Row>
const Row* find_method(const std::vector<Row>& rows, const std::string& method) {
  for (const auto& r : rows)
    if (r.method == method) return &r;
  return nullptr;
}

// Criterion 6: immediate MRR* at five withheld entities.
Outcome immediate_gain(const ExperimentData& data, std::uint64_t seed) {
  ExperimentPlan plan;
  plan.seed = seed;
  plan.ookb_sizes = {5};
  plan.replicates = 10;
  const auto result = experiment_immediate(plan, data);
  const auto* xavier = find_method(result.rows, "xavier");
  const auto* iu = find_method(result.rows, "iu");
  bool pass = xavier && iu && xavier->replicates >= 10;
  std::string detail = fmt::format("xavier {:.1f}, iu {:.1f}", xavier->mean, iu->mean);
  for (const char* m : {"es", "rs", "ers"}) {
    const auto* row = find_method(result.rows, m);
    pass = pass && row && row->replicates >= 10 && row->mean >= xavier->mean + 15.0 && row->mean > iu->mean;
    detail += fmt::format(", {} {:.1f} (+{:.1f})", m, row->mean, row->mean - xavier->mean);
  }
  return {pass, detail + fmt::format(" over {} replicates", xavier->replicates)};
}

// Criterion 7: epochs to convergence pooled over three withheld-set sizes.
Outcome convergence_order(const ExperimentData& data, std::uint64_t seed) {
  ExperimentPlan plan;
  plan.seed = seed;
  plan.ookb_sizes = {1, 5, 10};
  plan.replicates = 4;
  const auto result = experiment_convergence(plan, data);
  auto mean = [&](const std::string& m) { return find_method(result.rows, m)->mean_epochs; };
  const double isi = (mean("es") + mean("rs") + mean("ers")) / 3.0;
  const auto pooled = find_method(result.rows, "es")->replicates;
  const bool pass = pooled >= 10 && mean("es") < mean("iu") && mean("iu") < mean("xavier") && isi < 0.5 * mean("xavier");
  std::string detail;
  for (const auto& r : result.rows)
    detail += fmt::format("{} {:.2f} ({} not converged), ", r.method, r.mean_epochs, r.not_converged);
  return {pass, detail + fmt::format("ISI mean {:.2f} over {} pooled replicates", isi, pooled)};
}

// Criterion 8: damage to old-entity MRR* when inserting a second graph.
Outcome corruption_drop(const ExperimentData& original, const ExperimentData& deployment, std::uint64_t seed) {
  ExperimentPlan plan;
  plan.seed = seed;
  plan.corruption_replicates = 10;
  plan.corruption_epochs = 0;
  const auto result = experiment_corruption(plan, original, deployment);
  const auto* xavier = find_method(result.rows, "xavier");
  bool pass = xavier && xavier->replicates >= 10 && xavier->drop > 0.0;
  std::string detail = fmt::format("pre-insertion {:.1f}; drop xavier {:.2f}", xavier->pre_insertion, xavier->drop);
  for (const char* m : {"es", "rs", "ers"}) {
    const auto* row = find_method(result.rows, m);
    pass = pass && row && row->drop < 0.5 * xavier->drop;
    detail += fmt::format(", {} {:.2f}", m, row->drop);
  }
  return {pass, detail + fmt::format(" over {} replicates", xavier->replicates)};
}

std::vector<std::string> read_all(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    std::ifstream in(p, std::ios::binary);
    out.push_back(std::string(std::istreambuf_iterator<char>(in), {}));
  }
  return out;
}

// Criterion 9: identical plans and seeds give byte-identical files.
Outcome determinism(std::uint64_t seed) {
  const auto root = std::filesystem::temp_directory_path() / fmt::format("isi_acceptance_{}", seed);
  std::filesystem::remove_all(root);
  ExperimentPlan plan;
  plan.seed = seed;
  plan.ookb_sizes = {3};
  plan.replicates = 2;
  plan.methods = {"xavier", "iu", "es", "rs", "ers"};
  plan.session.initial.max_epochs = 5;
  plan.session.fine_tune.max_epochs = 3;
  const Experiment experiments[] = {Experiment::immediate, Experiment::convergence};
  std::vector<std::string> runs[2];
  std::size_t files = 0;
  for (int run = 0; run < 2; ++run) {
    plan.output_dir = root / std::to_string(run);
    plan.jobs = run + 1;  // the second run also checks that threading does not change results
    const auto paths = run_plan(plan, experiments);
    files = paths.size();
    runs[run] = read_all(paths);
  }
  std::filesystem::remove_all(root);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < files; ++i) differing += runs[0][i] != runs[1][i];
  return {differing == 0 && files > 0,
          fmt::format("{} files compared, {} differ (runs with 1 and 2 jobs)", files, differing)};
}

// Average ranks, ties sharing the mean position.
std::vector<double> ranks_of(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = (i + j) / 2.0 + 1.0;
    i = j + 1;
  }
  return r;
}

// Spearman correlation; 0 when either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks_of(a), rb = ranks_of(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa == 0 || sbb == 0 ? 0.0 : sab / std::sqrt(saa * sbb);
}

// Criterion 10: larger indicator sets converge no slower but start worse.
Outcome sensitivity(const ExperimentData& data, std::uint64_t seed) {
  ExperimentPlan plan;
  plan.seed = seed;
  const std::vector<std::size_t> ks = {2, 4, 8, 16, 32};
  const auto result = sensitivity_sweep(plan, data, ks);
  bool pass = true;
  std::string detail;
  for (const char* m : {"es", "rs", "ers"}) {
    std::vector<double> k, epochs, mrr;
    for (const auto& row : result.rows)
      if (row.method == m) {
        k.push_back(static_cast<double>(row.k));
        epochs.push_back(row.mean_epochs);
        mrr.push_back(row.mean_mrr_star);
      }
    const double rho = spearman(k, epochs);
    const auto best = std::max_element(mrr.begin(), mrr.end()) - mrr.begin();
    const bool ok = rho <= 0.0 && mrr.back() < mrr[best];
    pass = pass && ok;
    detail += fmt::format("{}: rho {:+.2f}, MRR* at 32 {:.1f} vs best {:.1f} at k={}, epochs [", m, rho, mrr.back(),
                          mrr[best], ks[best]);
    for (std::size_t i = 0; i < epochs.size(); ++i) detail += fmt::format("{}{:.2f}", i ? " " : "", epochs[i]);
    detail += "]; ";
  }
  detail += fmt::format("{} replicates", plan.sweep_replicates);
  return {pass, detail};
}

}  // namespace
}  // namespace isi

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::uint64_t seed = 2024;
  app.add_option("--only", only, "criterion numbers to run (default all)")->delimiter(',');
  app.add_option("--seed", seed, "base seed of the experiment criteria");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  std::optional<isi::ExperimentData> data, deployment;
  auto household = [&]() -> const isi::ExperimentData& {
    if (!data) data = isi::load_dataset(isi::ExperimentPlan{}.dataset);
    return *data;
  };
  auto second = [&]() -> const isi::ExperimentData& {
    if (!deployment) deployment = isi::load_dataset(isi::ExperimentPlan{}.deployment);
    return *deployment;
  };

  const std::vector<std::pair<std::string, std::function<isi::Outcome()>>> criteria = {
      {"gradient correctness", isi::gradient_correctness},
      {"scoring oracle", isi::scoring_oracle},
      {"ranking and metric oracle", isi::ranking_oracle},
      {"initializer ranges", isi::initializer_properties},
      {"inverse and resultants", isi::inverse_correctness},
      {"immediate MRR* gain", [&] { return isi::immediate_gain(household(), seed); }},
      {"convergence order", [&] { return isi::convergence_order(household(), seed); }},
      {"old-entity corruption", [&] { return isi::corruption_drop(household(), second(), seed); }},
      {"determinism", [&] { return isi::determinism(seed); }},
      {"indicator-size sensitivity", [&] { return isi::sensitivity(household(), seed); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    isi::Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !out.pass;
    std::cout << fmt::format("{} C{} {}: {} [{:.1f} s]", out.pass ? "PASS" : "FAIL", number, criteria[i].first,
                             out.detail, seconds)
              << std::endl;
  }
  return failed ? 1 : 0;
}
