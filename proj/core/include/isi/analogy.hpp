#pragma once

// ANALOGY multi-relational embedding.
//
// Entities are vectors in R^d. Each relation is a block-diagonal normal map:
// `scalars` leading 1x1 blocks followed by (d - scalars) / 2 blocks of the
// form [[a, -c], [c, a]] acting on adjacent coordinate pairs. A relation is
// stored as d numbers: the scalar diagonal, then (a, c) per 2x2 block, each
// pair at the coordinates the block acts on. The score of (h, r, t) is
// v_h^T W_r v_t.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isi/kg.hpp"

namespace isi {

struct BlockLayout {
  std::size_t dim = 0;
  std::size_t scalars = 0;

  std::size_t pairs() const noexcept { return (dim - scalars) / 2; }
  // Half scalar, half 2x2 blocks (rounded so the pair part is even).
  static BlockLayout balanced(std::size_t dim);
  void validate() const;

  friend bool operator==(const BlockLayout&, const BlockLayout&) = default;
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(Vocabulary entities, Vocabulary relations, BlockLayout layout);

  const Vocabulary& entity_names() const noexcept { return entity_names_; }
  const Vocabulary& relation_names() const noexcept { return relation_names_; }
  const BlockLayout& layout() const noexcept { return layout_; }
  std::size_t dim() const noexcept { return layout_.dim; }
  std::size_t entity_count() const noexcept { return entity_names_.size(); }
  std::size_t relation_count() const noexcept { return relation_names_.size(); }

  std::span<double> entity(EntityId e);
  std::span<const double> entity(EntityId e) const;
  std::span<double> relation(RelationId r);
  std::span<const double> relation(RelationId r) const;

  const std::vector<double>& entity_data() const noexcept { return entities_; }
  const std::vector<double>& relation_data() const noexcept { return relations_; }

  // Appends a new entity row; returns its id.
  EntityId append_entity(std::string_view name, std::span<const double> vec);

  double score(EntityId h, RelationId r, EntityId t) const;
  double score(const Triple& t) const { return score(t.head, t.relation, t.tail); }

  // (v_h^T W_r), the row vector whose inner product with v_t is the score.
  void forward(std::span<const double> head, RelationId r, std::span<double> out) const;
  // (W_r v_t), whose inner product with v_h is the score.
  void backward(RelationId r, std::span<const double> tail, std::span<double> out) const;
  // v_t^T W_r^{-1}. Returns false if some block has |det| or |scalar| below
  // `tolerance`; `out` is then unspecified.
  bool forward_inverse(std::span<const double> tail, RelationId r, std::span<double> out,
                       double tolerance = 1e-9) const;

  // Row-major d x d matrix of W_r.
  std::vector<double> dense_relation(RelationId r) const;

  friend bool operator==(const EmbeddingModel&, const EmbeddingModel&) = default;

 private:
  Vocabulary entity_names_;
  Vocabulary relation_names_;
  BlockLayout layout_;
  std::vector<double> entities_;
  std::vector<double> relations_;
};

// Uniform(-6/sqrt(d), 6/sqrt(d)) entity rows; relation blocks at identity plus
// Uniform(-0.01, 0.01) noise.
void initialize_parameters(EmbeddingModel& model, std::mt19937_64& rng);

struct RegularizationConfig {
  double weight_decay = 1e-3;
  bool decay_entities = true;
  bool decay_relations = false;  // decaying relation maps collapses unused coordinates to zero
};

// data_weight times the sum over the batch of -log sigmoid(y * score), plus
// weight_decay / 2 times the squared norm of each distinct entity row and
// relation map the batch touches.
double loss(const EmbeddingModel& model, std::span<const LabeledExample> batch,
            const RegularizationConfig& reg = {}, double data_weight = 1.0);

// Gradient of `loss` restricted to the parameters the batch touches.
// Reusable across batches: clear() only zeroes touched rows.
class Gradients {
 public:
  explicit Gradients(const EmbeddingModel& model);

  void clear();
  void accumulate(const EmbeddingModel& model, std::span<const LabeledExample> batch,
                  const RegularizationConfig& reg, double data_weight = 1.0);

  std::span<const double> entity(EntityId e) const;
  std::span<const double> relation(RelationId r) const;
  const std::vector<EntityId>& touched_entities() const noexcept { return touched_entities_; }
  const std::vector<RelationId>& touched_relations() const noexcept { return touched_relations_; }
  bool entity_touched(EntityId e) const { return entity_mark_.at(e) != 0; }
  bool relation_touched(RelationId r) const { return relation_mark_.at(r) != 0; }

  // model -= step * gradient over touched parameters.
  void apply(EmbeddingModel& model, double step) const;

 private:
  std::size_t dim_;
  std::vector<double> entity_grad_;
  std::vector<double> relation_grad_;
  std::vector<char> entity_mark_;
  std::vector<char> relation_mark_;
  std::vector<EntityId> touched_entities_;
  std::vector<RelationId> touched_relations_;
};

Gradients gradients(const EmbeddingModel& model, std::span<const LabeledExample> batch,
                    const RegularizationConfig& reg = {}, double data_weight = 1.0);

// Per-coordinate AdaGrad: acc += g^2, p -= rate * g / (sqrt(acc) + eps).
// Accumulators start at zero for every parameter of the model.
class AdaGrad {
 public:
  explicit AdaGrad(const EmbeddingModel& model, double eps = 1e-10);

  void apply(EmbeddingModel& model, const Gradients& grad, double rate);

 private:
  std::size_t dim_;
  double eps_;
  std::vector<double> entity_acc_;
  std::vector<double> relation_acc_;
};

enum class Optimizer { sgd, adagrad };
// sum: data term summed over the batch; mean: divided by the batch size
// (negatives included), so weight decay keeps its per-step strength.
enum class BatchReduction { sum, mean };

std::string_view to_string(Optimizer o);
std::optional<Optimizer> parse_optimizer(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-1;
  RegularizationConfig regularization;
  int negative_ratio = 9;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adagrad;
  BatchReduction reduction = BatchReduction::mean;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean per example
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
};

// Called after each epoch; return false to stop training.
using EpochCallback = std::function<bool(std::size_t epoch, const EmbeddingModel& model)>;

// Mini-batch training over the observations of split.train (a triple with
// count c is visited c times per epoch), each with `negative_ratio` filtered
// negatives. Optimizer state starts fresh on every call.
TrainLog train(EmbeddingModel& model, const DatasetSplit& split, const TrainConfig& cfg,
               const EpochCallback& on_epoch = {});

// Versioned text checkpoint; doubles written in shortest round-trip form.
void save_model(std::ostream& out, const EmbeddingModel& model);
void save_model(const std::filesystem::path& path, const EmbeddingModel& model);
EmbeddingModel load_model(std::istream& in, const std::string& source = "<stream>");
EmbeddingModel load_model(const std::filesystem::path& path);

}  // namespace isi
