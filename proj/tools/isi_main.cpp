#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "isi/analogy.hpp"
#include "isi/errors.hpp"
#include "isi/eval.hpp"
#include "isi/harness.hpp"
#include "isi/init.hpp"
#include "isi/kg.hpp"
#include "isi/synth.hpp"
#include "isi/wordvec.hpp"

namespace fs = std::filesystem;
using namespace isi;

namespace {

enum ExitCode { ok = 0, usage = 1, data_error = 2, numerical = 3 };

// Invalid command-line input detected after CLI11 parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw Error("failed writing " + path.string());
  spdlog::info("wrote {}", path.string());
}

std::vector<std::string> read_name_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> names;
  for (std::string line; std::getline(in, line);) {
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty() || line[0] == '#') continue;
    if (std::find(names.begin(), names.end(), line) != names.end())
      throw ParseError(path.string(), 0, "duplicate name '" + line + "'");
    names.push_back(line);
  }
  return names;
}

CountedTripleSet load_triples_with(const fs::path& path, const Vocabulary& entities, const Vocabulary& relations) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_triples_with(in, entities, relations, path.string());
}

ExperimentPlan plan_from(const std::string& spec) {
  if (spec == "default") return ExperimentPlan{};
  return load_plan(spec);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

struct GenerateArgs {
  std::string spec;
  std::string preset = "household";
  std::uint64_t seed = 1;
  fs::path out;
  fs::path word_vectors_out;
};

int cmd_generate(const GenerateArgs& a) {
  SyntheticKGSpec spec;
  if (!a.spec.empty())
    spec = load_synthetic_spec(a.spec);
  else if (a.preset == "household")
    spec = SyntheticKGSpec::household();
  else if (a.preset == "deployment")
    spec = SyntheticKGSpec::deployment();
  else
    throw UsageError("unknown preset '" + a.preset + "'");
  const auto kg = generate_synthetic_kg(spec, a.seed);
  save_triples(a.out, kg);
  spdlog::info("wrote {}", a.out.string());
  if (!a.word_vectors_out.empty()) {
    auto out = open_out(a.word_vectors_out);
    save_word_vectors(out, synthesize_word_vectors(spec));
    finish(out, a.word_vectors_out);
  }
  const auto s = summarize(kg);
  std::cout << "entities " << s.entities << "\nrelations " << s.relations << "\nunique_triples " << s.unique_triples
            << "\ntotal_observations " << s.total_observations << '\n';
  return ok;
}

struct TrainArgs {
  fs::path data;
  std::string config;
  std::uint64_t seed = 0;
  fs::path out_model;
  fs::path split_dir;
};

int cmd_train(const TrainArgs& a) {
  const auto plan = a.config.empty() ? ExperimentPlan{} : load_plan(a.config);
  const auto kg = load_triples(a.data);
  DatasetSplit split;
  split.entities = kg.entities;
  split.relations = kg.relations;
  split_unique(kg.triples, a.seed, plan.session.ratios, split);

  EmbeddingModel model(kg.entities, kg.relations, plan.session.layout);
  std::mt19937_64 rng(a.seed);
  initialize_parameters(model, rng);
  TrainConfig tc = plan.session.initial;
  tc.seed = a.seed;
  const auto log = train(model, split, tc, [](std::size_t epoch, const EmbeddingModel&) {
    if (epoch % 10 == 0) spdlog::info("epoch {}", epoch);
    return true;
  });
  if (!log.epochs.empty()) spdlog::info("final loss {:.6f}", log.epochs.back().loss);
  const auto res = evaluate_split(model, split, {plan.session.weighting, {}});
  if (!res.empty()) spdlog::info("test MRR* {:.4f}%", 100.0 * res.mrr_star);

  save_model(a.out_model, model);
  spdlog::info("wrote {}", a.out_model.string());
  if (!a.split_dir.empty()) {
    fs::create_directories(a.split_dir);
    for (auto [name, part] : {std::pair{"train.tsv", &split.train}, {"valid.tsv", &split.valid},
                              {"test.tsv", &split.test}}) {
      const auto path = a.split_dir / name;
      auto out = open_out(path);
      write_triples(out, split.entities, split.relations, *part);
      finish(out, path);
    }
  }
  return ok;
}

struct InsertArgs {
  fs::path model;
  std::string method;
  fs::path ookb_list;
  fs::path word_vectors;
  fs::path insert_triples;
  fs::path out_model;
  fs::path report;
  std::uint64_t seed = 0;
  InitConfig init{};
};

int cmd_insert(const InsertArgs& a) {
  const auto method = parse_init_method(a.method);
  if (!method) throw UsageError("unknown method '" + a.method + "' (xavier, iu, es, rs, ers)");
  InitConfig ic = a.init;
  ic.method = *method;
  ic.seed = a.seed;
  ic.validate();

  const auto previous = load_model(a.model);
  const auto names = read_name_list(a.ookb_list);
  Vocabulary extended = previous.entity_names();
  for (const auto& n : names) {
    if (extended.find(n)) throw InvalidArgument("entity '" + n + "' is already in the model");
    extended.intern(n);
  }
  CountedTripleSet insert;
  if (!a.insert_triples.empty()) insert = load_triples_with(a.insert_triples, extended, previous.relation_names());
  std::optional<WordVectorTable> words;
  if (!a.word_vectors.empty()) words = load_word_vectors(a.word_vectors);

  const auto result = initialize_ookb(previous, names, insert, words ? &*words : nullptr, ic);
  for (const auto& rec : result.report.records)
    if (rec.used != rec.requested)
      spdlog::warn("{}: {} fell back to {}", rec.entity, to_string(rec.requested), to_string(rec.used));
  save_model(a.out_model, result.model);
  spdlog::info("wrote {}", a.out_model.string());
  if (!a.report.empty()) {
    auto out = open_out(a.report);
    write_init_report(out, result.report, result.model.entity_names());
    finish(out, a.report);
  }
  return ok;
}

struct EvaluateArgs {
  fs::path model;
  fs::path data;
  fs::path known;
  fs::path restrict_entities;
  std::string weighting = "count";
  fs::path out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto model = load_model(a.model);
  const auto& ents = model.entity_names();
  const auto& rels = model.relation_names();
  const auto test = load_triples_with(a.data, ents, rels);
  CountedTripleSet known;
  if (!a.known.empty()) known = load_triples_with(a.known, ents, rels);
  CountedTripleSet full = known;
  full.merge(test);

  EvalOptions opts;
  if (a.weighting == "uniform")
    opts.weighting = QueryWeighting::uniform;
  else if (a.weighting != "count")
    throw UsageError("weighting must be 'count' or 'uniform'");
  if (!a.restrict_entities.empty()) {
    std::vector<bool> mask(ents.size(), false);
    for (const auto& n : read_name_list(a.restrict_entities)) {
      const auto id = ents.find(n);
      if (!id) throw InvalidArgument("restricted entity '" + n + "' is not in the model");
      mask[*id] = true;
    }
    opts.include = within(std::move(mask));
  }
  const auto res = evaluate_split(model, test, full, known, opts);
  if (res.empty()) throw InvalidArgument("no test queries to evaluate");
  if (!a.out.empty()) {
    auto out = open_out(a.out);
    out << "head,relation,tail,query,truth_rank,predicted_rank,weight\n";
    for (const auto& o : res.outcomes)
      out << ents.name(o.triple.head) << ',' << rels.name(o.triple.relation) << ',' << ents.name(o.triple.tail)
          << ',' << (o.kind == QueryKind::tail ? "tail" : "head") << ',' << o.ranks.truth << ','
          << o.ranks.predicted << ',' << o.ranks.weight << '\n';
    finish(out, a.out);
  }
  std::cout << "queries " << res.outcomes.size() << "\nmrr_star " << 100.0 * res.mrr_star << '\n';
  return ok;
}

struct PlanOverrides {
  std::string plan = "default";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> replicates;
  fs::path out_dir;

  ExperimentPlan load() const {
    auto p = plan_from(plan);
    if (seed) p.seed = *seed;
    if (jobs) p.jobs = *jobs;
    if (replicates) p.replicates = p.corruption_replicates = p.sweep_replicates = *replicates;
    if (!out_dir.empty()) p.output_dir = out_dir;
    for (const auto& m : p.methods)
      if (!parse_variant(m)) throw UsageError("unknown method '" + m + "' in plan");
    return p;
  }
};

int cmd_experiment(const PlanOverrides& o, const std::string& which) {
  std::vector<Experiment> experiments;
  for (const auto& name : split_list(which)) {
    if (name == "immediate")
      experiments.push_back(Experiment::immediate);
    else if (name == "convergence")
      experiments.push_back(Experiment::convergence);
    else if (name == "corruption")
      experiments.push_back(Experiment::corruption);
    else
      throw UsageError("unknown experiment '" + name + "'");
  }
  if (experiments.empty()) throw UsageError("no experiments selected");
  const auto plan = o.load();
  for (const auto& p : run_plan(plan, experiments)) spdlog::info("wrote {}", p.string());
  return ok;
}

int cmd_sweep(const PlanOverrides& o, const std::vector<std::size_t>& k_values) {
  if (k_values.empty()) throw UsageError("--k-values is empty");
  if (std::find(k_values.begin(), k_values.end(), 0u) != k_values.end()) throw UsageError("k values must be positive");
  const auto plan = o.load();
  for (const auto& p : run_sweep(plan, k_values)) spdlog::info("wrote {}", p.string());
  return ok;
}

struct ReportArgs {
  fs::path epochs;
  fs::path out_dir;
  double threshold = 8.0;
  std::size_t cap = 150;
};

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.epochs);
  if (!in) throw Error("cannot open " + a.epochs.string());
  const auto records = read_epoch_log(in, a.epochs.string());
  const auto dir = a.out_dir.empty() ? a.epochs.parent_path() : a.out_dir;
  const auto stem = a.epochs.stem().string() + "_report";
  const auto methods = logged_methods(records);

  const auto immediate = dir / (stem + "_immediate.csv");
  auto out = open_out(immediate);
  write_immediate_table(out, summarize_immediate(records));
  finish(out, immediate);

  const auto conv = summarize_convergence(records, a.threshold, a.cap);
  if (!conv.empty()) {
    const auto path = dir / (stem + "_convergence.csv");
    auto c = open_out(path);
    write_convergence_table(c, conv);
    finish(c, path);
  } else {
    spdlog::info("no joint logs; skipping the convergence summary");
  }

  const auto curves = dir / (stem + "_curves.dat");
  auto cv = open_out(curves);
  write_learning_curves(cv, records, methods);
  finish(cv, curves);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("isi"));
  CLI::App app{"Incremental semantic initialization for knowledge-graph embeddings"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "Generate a synthetic household knowledge graph");
  g->add_option("--spec", gen.spec, "JSON generator spec");
  g->add_option("--preset", gen.preset, "household or deployment when no spec is given");
  g->add_option("--seed", gen.seed, "sampling seed")->required();
  g->add_option("--out", gen.out, "triple TSV to write")->required();
  g->add_option("--word-vectors-out", gen.word_vectors_out, "also write the companion word vectors");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train an embedding on a triple file");
  t->add_option("--data", tr.data, "triple TSV")->required();
  t->add_option("--config", tr.config, "plan JSON whose training section is used");
  t->add_option("--seed", tr.seed, "split, initialization and sampling seed")->required();
  t->add_option("--out-model", tr.out_model, "model checkpoint to write")->required();
  t->add_option("--split-dir", tr.split_dir, "write train.tsv, valid.tsv and test.tsv here");

  InsertArgs ins;
  auto* i = app.add_subcommand("insert", "Insert new entities into a trained model");
  i->add_option("--model", ins.model, "trained checkpoint")->required();
  i->add_option("--method", ins.method, "xavier, iu, es, rs or ers")->required();
  i->add_option("--ookb-list", ins.ookb_list, "new entity names, one per line")->required();
  i->add_option("--word-vectors", ins.word_vectors, "word vectors for es and ers");
  i->add_option("--insert-triples", ins.insert_triples, "triples linking new and known entities")
      ;
  i->add_option("--seed", ins.seed, "seed for the random initializers")->required();
  i->add_option("--out-model", ins.out_model, "extended checkpoint to write")->required();
  i->add_option("--report", ins.report, "per-entity indicator report TSV");
  i->add_option("--k-es", ins.init.k_es, "indicator count for es");
  i->add_option("--k-rs", ins.init.k_rs, "indicator count for rs");
  i->add_option("--k-ers", ins.init.k_ers, "indicator count for ers");
  i->add_option("--k-ers-preliminary", ins.init.k_ers_preliminary, "es candidates re-ranked by ers");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Filtered MRR* of a model on test triples");
  e->add_option("--model", ev.model, "checkpoint")->required();
  e->add_option("--data", ev.data, "test triple TSV with counts")->required();
  e->add_option("--known", ev.known, "train and valid triples used as the filter");
  e->add_option("--restrict-entities", ev.restrict_entities, "only test triples among these names")
      ;
  e->add_option("--weighting", ev.weighting, "count or uniform");
  e->add_option("--out", ev.out, "per-query rank CSV");

  PlanOverrides ex_plan;
  std::string which = "immediate,convergence,corruption";
  auto* x = app.add_subcommand("experiment", "Run experiments from a plan");
  x->add_option("--plan", ex_plan.plan, "plan JSON or 'default'");
  x->add_option("--experiments", which, "comma list of immediate, convergence, corruption");
  x->add_option("--seed", ex_plan.seed, "overrides the plan seed");
  x->add_option("--jobs", ex_plan.jobs, "parallel replicates")->check(CLI::PositiveNumber);
  x->add_option("--replicates", ex_plan.replicates, "overrides every replicate count")->check(CLI::PositiveNumber);
  x->add_option("--out-dir", ex_plan.out_dir, "overrides the plan output directory");

  PlanOverrides sw_plan;
  std::vector<std::size_t> k_values = {2, 4, 8, 16, 32};
  auto* s = app.add_subcommand("sweep", "Indicator-set size sensitivity sweep");
  s->add_option("--plan", sw_plan.plan, "plan JSON or 'default'");
  s->add_option("--k-values", k_values, "indicator set sizes")->delimiter(',');
  s->add_option("--seed", sw_plan.seed, "overrides the plan seed");
  s->add_option("--jobs", sw_plan.jobs, "parallel replicates")->check(CLI::PositiveNumber);
  s->add_option("--replicates", sw_plan.replicates, "overrides the replicate count")->check(CLI::PositiveNumber);
  s->add_option("--out-dir", sw_plan.out_dir, "overrides the plan output directory");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Summarize an epoch log");
  r->add_option("--epochs", rep.epochs, "epoch log CSV")->required();
  r->add_option("--out-dir", rep.out_dir, "defaults to the log's directory");
  r->add_option("--threshold", rep.threshold, "convergence threshold in MRR* points");
  r->add_option("--cap", rep.cap, "epoch cap for runs that never converge");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? ok : usage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*i) return cmd_insert(ins);
    if (*e) return cmd_evaluate(ev);
    if (*x) return cmd_experiment(ex_plan, which);
    if (*s) return cmd_sweep(sw_plan, k_values);
    if (*r) return cmd_report(rep);
  } catch (const UsageError& err) {
    spdlog::error("{}", err.what());
    return usage;
  } catch (const NumericalError& err) {
    spdlog::error("{}", err.what());
    return numerical;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return data_error;
  }
  return usage;
}
