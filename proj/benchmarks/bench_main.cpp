#include <benchmark/benchmark.h>

#include <random>

#include "isi/analogy.hpp"
#include "isi/eval.hpp"
#include "isi/harness.hpp"
#include "isi/init.hpp"
#include "isi/synth.hpp"

namespace {

using namespace isi;

struct Fixture {
  KnowledgeGraph kg = generate_synthetic_kg({}, 1);
  DatasetSplit split;
  EmbeddingModel model;

  explicit Fixture(std::size_t dim) {
    split.entities = kg.entities;
    split.relations = kg.relations;
    split_unique(kg.triples, 1, {}, split);
    model = EmbeddingModel(split.entities, split.relations, BlockLayout::balanced(dim));
    std::mt19937_64 rng(1);
    initialize_parameters(model, rng);
  }
};

const Fixture& fixture(std::size_t dim) {
  static Fixture f100(100);
  static Fixture f20(20);
  return dim == 100 ? f100 : f20;
}

void BM_Score(benchmark::State& state) {
  const auto& f = fixture(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<EntityId> e(0, static_cast<EntityId>(f.model.entity_count() - 1));
  std::uniform_int_distribution<RelationId> r(0, static_cast<RelationId>(f.model.relation_count() - 1));
  for (auto _ : state) benchmark::DoNotOptimize(f.model.score(e(rng), r(rng), e(rng)));
}
BENCHMARK(BM_Score)->Arg(20)->Arg(100);

void BM_BatchGradients(benchmark::State& state) {
  const auto& f = fixture(100);
  std::mt19937_64 rng(3);
  std::vector<LabeledExample> batch;
  for (const auto& [t, n] : f.split.train) {
    batch.push_back({t, 1});
    for (auto& neg : sample_negatives(t, 9, f.split, rng)) batch.push_back(neg);
    if (batch.size() >= 1280) break;
  }
  for (auto _ : state) benchmark::DoNotOptimize(gradients(f.model, batch, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_BatchGradients);

void BM_TrainEpoch(benchmark::State& state) {
  const auto& f = fixture(100);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  for (auto _ : state) {
    auto m = f.model;
    train(m, f.split, cfg);
    benchmark::DoNotOptimize(m);
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_EvaluateSplit(benchmark::State& state) {
  const auto& f = fixture(100);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_split(f.model, f.split).mrr_star);
}
BENCHMARK(BM_EvaluateSplit)->Unit(benchmark::kMillisecond);

void BM_InitializeOokb(benchmark::State& state) {
  const auto kg = generate_synthetic_kg({}, 1);
  const auto words = synthesize_word_vectors({});
  std::mt19937_64 pick(4);
  const auto ookb = select_ookb(eligible_ookb(kg, 6), 10, pick);
  const auto split = split_for_session(kg, ookb, 4);
  EmbeddingModel prior(split.initial.entities, split.initial.relations, BlockLayout::balanced(100));
  std::mt19937_64 rng(5);
  initialize_parameters(prior, rng);
  std::vector<std::string> names;
  for (auto id : split.ookb) names.push_back(split.extended.entities.name(id));
  InitConfig cfg;
  cfg.method = static_cast<InitMethod>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(initialize_ookb(prior, names, split.insert, &words, cfg));
  state.SetLabel(std::string(to_string(cfg.method)));
}
BENCHMARK(BM_InitializeOokb)->DenseRange(0, 4)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
