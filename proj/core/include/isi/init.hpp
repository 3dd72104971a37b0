#pragma once

// Initializers for out-of-knowledge-base (OOKB) entities.
//
// Every semantic initializer picks a set of indicator entities among the
// previously known entities and places the new entity at their centroid:
//   es  - nearest known entities by word-vector cosine similarity
//   rs  - known entities best aligned with the resultant vectors obtained by
//         pushing insert-triple neighbours through each relation map
//   ers - es preliminary set re-ranked by the rs score
// The baselines draw coordinates uniformly: xavier within +-6/sqrt(d),
// informed_uniform within the per-dimension range of known entities.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isi/analogy.hpp"
#include "isi/kg.hpp"
#include "isi/wordvec.hpp"

namespace isi {

enum class InitMethod { xavier, informed_uniform, es, rs, ers };

std::string_view to_string(InitMethod m);
// Accepts the names above plus "iu" for informed_uniform.
std::optional<InitMethod> parse_init_method(std::string_view name);

struct Indicator {
  EntityId entity = 0;
  double score = 0.0;
};
using IndicatorSet = std::vector<Indicator>;

struct InitConfig {
  InitMethod method = InitMethod::es;
  std::size_t k_es = 8;
  std::size_t k_rs = 18;
  std::size_t k_ers = 9;
  std::size_t k_ers_preliminary = 30;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ResultantCentroid {
  std::vector<double> mean;
  double support = 0.0;  // count-weighted number of contributing triples
};

struct Resultants {
  std::map<RelationId, ResultantCentroid> centroids;
  std::size_t skipped = 0;  // triples dropped for a singular block
};

// Mean of the indicated rows of `model`.
std::vector<double> centroid_init(const IndicatorSet& indicators, const EmbeddingModel& model);

// Top-k entities of `known` by cosine between word vectors; ties go to the
// lower id. nullopt when `ookb_name` has no word vector.
std::optional<IndicatorSet> es_indicators(std::string_view ookb_name, const Vocabulary& known,
                                          const WordVectorTable& table, std::size_t k);

// Per relation, the count-weighted mean of v_h^T W_r (new entity is the tail)
// or v_t^T W_r^{-1} (new entity is the head) over insert triples linking
// `ookb` to an entity of `model`.
Resultants rs_resultants(const EmbeddingModel& model, const CountedTripleSet& insert, EntityId ookb,
                         double singular_tolerance = 1e-9);

// Top-k candidates by the sum over relations of cosine(v_e, centroid_r).
IndicatorSet rs_indicators(const EmbeddingModel& model, const Resultants& resultants,
                           std::span<const EntityId> candidates, std::size_t k);

std::vector<double> xavier_init(std::size_t dim, std::mt19937_64& rng);
// Uniform within the per-dimension [min, max] of every row of `model`.
std::vector<double> iu_init(const EmbeddingModel& model, std::mt19937_64& rng);

struct InitRecord {
  std::string entity;
  InitMethod requested = InitMethod::xavier;
  InitMethod used = InitMethod::xavier;
  IndicatorSet indicators;
  std::vector<std::string> notes;
};

struct InitReport {
  std::vector<InitRecord> records;
};

// TSV: entity, requested, used, indicators (name:score;...), notes.
void write_init_report(std::ostream& out, const InitReport& report, const Vocabulary& names);

struct InitResult {
  EmbeddingModel model;
  InitReport report;
};

// Builds the next-session model: every row and relation map of `previous`
// copied unchanged, then one row per name in `ookb_names`, appended in order.
// `insert` is expressed in the extended vocabulary (known ids, then the new
// ids in `ookb_names` order). Each new entity is initialized only from the
// entities of `previous`. `words` may be null.
InitResult initialize_ookb(const EmbeddingModel& previous, std::span<const std::string> ookb_names,
                           const CountedTripleSet& insert, const WordVectorTable* words,
                           const InitConfig& cfg);

}  // namespace isi
