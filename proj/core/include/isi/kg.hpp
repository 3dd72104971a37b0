#pragma once

// Knowledge-graph data model: vocabularies, counted triples, dataset splits
// for two-session incremental learning, and filtered negative sampling.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace isi {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Dense name <-> index mapping. Indices are assigned in insertion order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  // Returns the index of `name`, adding it if absent.
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Multiset of triples: unique triple -> positive observation count.
// Iteration order is the lexicographic (head, relation, tail) order.
class CountedTripleSet {
 public:
  using Map = std::map<Triple, std::uint64_t>;

  void add(const Triple& t, std::uint64_t count = 1);
  std::uint64_t count(const Triple& t) const;
  bool contains(const Triple& t) const { return counts_.contains(t); }

  std::size_t unique_count() const noexcept { return counts_.size(); }
  std::uint64_t total_count() const noexcept { return total_; }
  bool empty() const noexcept { return counts_.empty(); }

  Map::const_iterator begin() const { return counts_.begin(); }
  Map::const_iterator end() const { return counts_.end(); }

  // Adds every triple of `other` with its count.
  void merge(const CountedTripleSet& other);

  friend bool operator==(const CountedTripleSet&, const CountedTripleSet&) = default;

 private:
  Map counts_;
  std::uint64_t total_ = 0;
};

struct KnowledgeGraph {
  Vocabulary entities;
  Vocabulary relations;
  CountedTripleSet triples;
};

// Triple TSV: `head<TAB>relation<TAB>tail[<TAB>count]`, '#' comments.
KnowledgeGraph parse_triples(std::istream& in, const std::string& source = "<stream>");
KnowledgeGraph load_triples(const std::filesystem::path& path);

// Parses triples against fixed vocabularies; unknown names are an error.
CountedTripleSet parse_triples_with(std::istream& in, const Vocabulary& entities,
                                    const Vocabulary& relations,
                                    const std::string& source = "<stream>");

void write_triples(std::ostream& out, const Vocabulary& entities, const Vocabulary& relations,
                   const CountedTripleSet& triples);
void save_triples(const std::filesystem::path& path, const KnowledgeGraph& kg);

// Labels follow the logistic-loss sign convention: +1 holds, -1 does not.
struct LabeledExample {
  Triple triple;
  int label = 1;
};

struct DatasetSplit {
  Vocabulary entities;
  Vocabulary relations;
  CountedTripleSet train;
  CountedTripleSet valid;
  CountedTripleSet test;

  CountedTripleSet all() const;
  // Unique triples of train and valid, the ranking filter.
  CountedTripleSet known_positives() const;
};

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
};

// Splits unique triples of `triples` into train/valid/test; counts follow the
// unique triple. Deterministic in (triples, seed).
void split_unique(const CountedTripleSet& triples, std::uint64_t seed, const SplitRatios& ratios,
                  DatasetSplit& out);

// The two datasets of an incremental session.
//
// `initial` uses a vocabulary without the withheld entities; `extended` uses
// the initial vocabulary with the withheld entities appended, so known
// entities keep their indices across sessions. All triples in `insert` and in
// `extended` are expressed in the extended vocabulary.
struct SessionSplit {
  DatasetSplit initial;
  DatasetSplit extended;
  CountedTripleSet insert;
  std::vector<EntityId> ookb;  // extended-vocabulary ids of withheld entities
  std::vector<EntityId> to_extended;  // original kg id -> extended id
};

SessionSplit split_for_session(const KnowledgeGraph& kg, std::span<const EntityId> ookb,
                               std::uint64_t seed, const SplitRatios& ratios = {});

// Corrupts one endpoint of positives, rejecting known positives of the
// split's train set.
class NegativeSampler {
 public:
  NegativeSampler(std::size_t entity_count, const CountedTripleSet& train);

  std::vector<LabeledExample> sample(const Triple& positive, int ratio, std::mt19937_64& rng) const;
  void sample_into(const Triple& positive, int ratio, std::mt19937_64& rng,
                   std::vector<LabeledExample>& out) const;

 private:
  bool head_corruptible(const Triple& t) const;
  bool tail_corruptible(const Triple& t) const;

  bool is_positive(const Triple& t) const;

  std::size_t entity_count_;
  std::unordered_set<std::uint64_t> positives_;
  std::map<std::pair<RelationId, EntityId>, std::size_t> heads_per_rt_;
  std::map<std::pair<EntityId, RelationId>, std::size_t> tails_per_hr_;
};

std::vector<LabeledExample> sample_negatives(const Triple& positive, int ratio,
                                             const DatasetSplit& split, std::mt19937_64& rng);

}  // namespace isi
