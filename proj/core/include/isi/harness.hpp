#pragma once

// Two-session incremental protocol and the experiment drivers built on it.
//
// A replicate withholds a set of entities from a knowledge graph, trains the
// initial embedding on what remains, and then, per initialization method,
// inserts the withheld entities and fine-tunes on the full graph while
// logging MRR* per epoch. A model trained from scratch on the full graph
// ("joint") provides the convergence reference.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "isi/analogy.hpp"
#include "isi/eval.hpp"
#include "isi/init.hpp"
#include "isi/kg.hpp"
#include "isi/synth.hpp"
#include "isi/wordvec.hpp"

namespace isi {

struct SessionConfig {
  BlockLayout layout = BlockLayout::balanced(100);
  TrainConfig initial{};                  // initial and joint models
  TrainConfig fine_tune{2e-3, {}, 9, 150, 128, 0};
  SplitRatios ratios{};
  QueryWeighting weighting = QueryWeighting::count;
  double convergence_threshold = 8.0;     // MRR* points
  bool stop_at_convergence = true;

  void validate() const;
};

struct SessionState {
  std::size_t n = 0;
  DatasetSplit dataset;
  EmbeddingModel model;
  std::vector<EntityId> ookb;
  CountedTripleSet insert_triples;
};

// MRR* in percent; nullopt when the subset has no test queries.
struct EpochMetrics {
  std::size_t epoch = 0;
  std::optional<double> mrr_star;
  std::optional<double> old_entities;
  std::optional<double> new_entities;
};

struct SessionLog {
  std::string method;
  std::vector<EpochMetrics> epochs;  // epochs[0] is measured before any update
};

// Inputs every method of one replicate shares.
struct PreparedSession {
  SessionState initial;            // session 0 with the trained model
  SessionSplit split;
  std::vector<std::string> ookb_names;
  CountedTripleSet insert_train;   // insert triples visible at insertion time
  std::vector<bool> old_mask;      // extended-vocabulary ids known in session 0
  double initial_mrr_star = 0.0;   // initial model on the session-0 test set
};

// Splits `kg` around `ookb` and trains the session-0 model, unless
// `trained_initial` (matching the session-0 vocabulary) is supplied.
PreparedSession prepare_session(const KnowledgeGraph& kg, std::span<const EntityId> ookb,
                                const SessionConfig& cfg, std::uint64_t seed,
                                const EmbeddingModel* trained_initial = nullptr);

// An initialization method plus its indicator sizes; no method means joint
// learning from scratch on the session-1 data.
struct Variant {
  std::string label;
  std::optional<InitMethod> method;
  InitConfig init{};

  static Variant joint() { return {"joint", std::nullopt, {}}; }
  static Variant of(InitMethod m, const InitConfig& base = {});
};

std::optional<Variant> parse_variant(std::string_view name, const InitConfig& base = {});

EpochMetrics evaluate_session(const EmbeddingModel& model, const PreparedSession& session,
                              QueryWeighting weighting, std::size_t epoch);

// Builds the session-1 model for `variant`, measures epoch 0, then trains for
// up to `max_epochs` (fine-tuning, or joint learning at the initial learning
// rate) and logs every epoch. With a joint reference and stop_at_convergence,
// training stops at the first converged epoch.
SessionLog run_incremental_session(const PreparedSession& session, const Variant& variant,
                                   const WordVectorTable* words, const SessionConfig& cfg,
                                   std::uint64_t seed, std::size_t max_epochs,
                                   std::optional<double> joint_reference = std::nullopt);

// First epoch with MRR* >= reference - threshold, nullopt if none within
// `cap` epochs.
std::optional<std::size_t> epochs_to_convergence(const SessionLog& log, double joint_reference,
                                                 double threshold = 8.0, std::size_t cap = 150);

// Entities with at least `min_observations` observations (counts included).
std::vector<EntityId> eligible_ookb(const KnowledgeGraph& kg, std::uint64_t min_observations);
// `count` entities drawn uniformly without replacement, sorted by id.
std::vector<EntityId> select_ookb(std::span<const EntityId> eligible, std::size_t count, std::mt19937_64& rng);

struct DatasetSource {
  std::optional<SyntheticKGSpec> generator;  // used when set
  std::uint64_t generator_seed = 1;
  std::filesystem::path triples;
  std::filesystem::path word_vectors;
};

struct ExperimentData {
  KnowledgeGraph kg;
  std::optional<WordVectorTable> words;
};

ExperimentData load_dataset(const DatasetSource& source);

struct ExperimentPlan {
  DatasetSource dataset{SyntheticKGSpec::household(), 1, {}, {}};
  std::vector<std::string> methods = {"xavier", "iu", "es", "rs", "ers"};
  std::vector<std::size_t> ookb_sizes = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t replicates = 30;
  std::uint64_t seed = 0;
  std::uint64_t min_observations = 6;
  SessionConfig session{};
  InitConfig init{};

  // Corruption experiment: entities of a second graph inserted into a model
  // trained on the whole first graph.
  DatasetSource deployment{SyntheticKGSpec::deployment(), 2, {}, {}};
  std::size_t corruption_inserted = 10;
  std::size_t corruption_replicates = 30;
  std::size_t corruption_epochs = 150;

  std::vector<std::size_t> sweep_k = {2, 4, 8, 16, 32};
  std::size_t sweep_ookb_size = 5;
  std::size_t sweep_replicates = 10;

  std::filesystem::path output_dir = "results";
  std::size_t jobs = 1;

  void validate() const;
};

// JSON plan; absent keys keep their defaults. Relative paths resolve against
// `base_dir`.
ExperimentPlan parse_plan(std::istream& in, const std::filesystem::path& base_dir = {},
                          const std::string& source = "<stream>");
ExperimentPlan load_plan(const std::filesystem::path& path);

// JSON object with any SyntheticKGSpec field; absent keys keep defaults.
SyntheticKGSpec parse_synthetic_spec(std::istream& in, const std::string& source = "<stream>");
SyntheticKGSpec load_synthetic_spec(const std::filesystem::path& path);

struct ReplicateRecord {
  std::size_t ookb_size = 0;
  std::size_t replicate = 0;
  std::vector<std::string> ookb_names;
  double initial_mrr_star = 0.0;
  std::optional<double> joint_reference;
  std::vector<SessionLog> logs;  // plan method order
  bool failed = false;
  std::string error;
};

struct ImmediateRow {
  std::string method;
  std::size_t ookb_size = 0;
  std::size_t replicates = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct ConvergenceRow {
  std::string method;
  std::size_t replicates = 0;
  double mean_epochs = 0.0;
  double stddev_epochs = 0.0;
  std::size_t not_converged = 0;
};

struct CorruptionRow {
  std::string method;
  std::size_t replicates = 0;
  double pre_insertion = 0.0;     // old-entity MRR* before insertion
  double epoch0 = 0.0;            // old-entity MRR* right after insertion
  double drop = 0.0;              // pre_insertion - epoch0
  std::optional<double> epoch0_new;
};

struct SweepRow {
  std::string method;
  std::size_t k = 0;
  std::size_t replicates = 0;
  double mean_mrr_star = 0.0;
  double mean_epochs = 0.0;
  double stddev_epochs = 0.0;
  std::size_t not_converged = 0;
};

struct ImmediateResult {
  std::vector<ReplicateRecord> records;
  std::vector<ImmediateRow> rows;
};

struct ConvergenceResult {
  std::vector<ReplicateRecord> records;
  std::vector<ConvergenceRow> rows;
};

struct CorruptionResult {
  std::vector<ReplicateRecord> records;
  std::vector<CorruptionRow> rows;
};

struct SweepResult {
  std::vector<ReplicateRecord> records;
  std::vector<SweepRow> rows;
};

ImmediateResult experiment_immediate(const ExperimentPlan& plan, const ExperimentData& data);
ConvergenceResult experiment_convergence(const ExperimentPlan& plan, const ExperimentData& data);
CorruptionResult experiment_corruption(const ExperimentPlan& plan, const ExperimentData& original,
                                       const ExperimentData& deployment);
SweepResult sensitivity_sweep(const ExperimentPlan& plan, const ExperimentData& data,
                              std::span<const std::size_t> k_values);

// Per-epoch metric log: epoch,method,ookb_size,replicate,mrr_star,
// mrr_star_old_entities,mrr_star_new_entities.
void write_epoch_log(std::ostream& out, std::span<const ReplicateRecord> records);
void write_immediate_table(std::ostream& out, std::span<const ImmediateRow> rows);
void write_convergence_table(std::ostream& out, std::span<const ConvergenceRow> rows);
void write_corruption_table(std::ostream& out, std::span<const CorruptionRow> rows);
void write_sweep_table(std::ostream& out, std::span<const SweepRow> rows);
// Whitespace-separated mean MRR* per epoch, one column per method.
void write_learning_curves(std::ostream& out, std::span<const ReplicateRecord> records,
                           std::span<const std::string> methods);

// Inverse of write_epoch_log; the joint reference of a replicate is the last
// logged MRR* of its "joint" method when present.
std::vector<ReplicateRecord> read_epoch_log(std::istream& in, const std::string& source = "<stream>");

// Summaries over records, methods in order of first appearance.
std::vector<ImmediateRow> summarize_immediate(std::span<const ReplicateRecord> records);
// Only replicates with a joint reference contribute.
std::vector<ConvergenceRow> summarize_convergence(std::span<const ReplicateRecord> records, double threshold = 8.0,
                                                  std::size_t cap = 150);
std::vector<std::string> logged_methods(std::span<const ReplicateRecord> records);

enum class Experiment { immediate, convergence, corruption };

// Runs the selected experiments and writes their tables under
// plan.output_dir. Returns the written paths.
std::vector<std::filesystem::path> run_plan(const ExperimentPlan& plan, std::span<const Experiment> experiments);
std::vector<std::filesystem::path> run_sweep(const ExperimentPlan& plan, std::span<const std::size_t> k_values);

}  // namespace isi
