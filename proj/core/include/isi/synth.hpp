#pragma once

// Synthetic household knowledge graphs with per-environment triple counts.
//
// A fixed catalog of rooms, receptacles, objects (in eight semantic
// categories), materials and affordances stands in for a mined simulator.
// Each object gets a latent profile (room affinity, preferred receptacles,
// materials, affordances) derived from its category and the world seed.
// Environments are sampled per room type and every placed object contributes
// atLocation, madeOf and hasAffordance observations; counts aggregate across
// environments. A companion word-vector table places same-category names
// close together.

#include <cstdint>
#include <string>
#include <vector>

#include "isi/kg.hpp"
#include "isi/wordvec.hpp"

namespace isi {

struct SyntheticKGSpec {
  std::size_t rooms = 4;
  std::size_t receptacles = 20;
  std::size_t objects = 58;
  std::size_t materials = 7;
  std::size_t affordances = 17;
  // Skips this many catalog objects (in catalog order) before taking
  // `objects`; a deployment graph uses objects the default graph lacks.
  std::size_t object_offset = 0;

  std::size_t environments_per_room = 30;
  std::size_t objects_per_environment = 22;
  double receptacle_presence = 0.8;
  double extra_instance_probability = 0.6;
  double material_observation_probability = 0.9;

  std::uint64_t world_seed = 7;
  std::size_t word_dim = 50;
  double word_noise = 0.6;

  void validate() const;

  static SyntheticKGSpec household() { return {}; }
  // Objects absent from the default household graph.
  static SyntheticKGSpec deployment();
};

std::size_t catalog_object_count();

KnowledgeGraph generate_synthetic_kg(const SyntheticKGSpec& spec, std::uint64_t seed);

// Word vectors for every catalog name `spec` can produce, including
// objects outside the selected range.
WordVectorTable synthesize_word_vectors(const SyntheticKGSpec& spec);

struct KGSummary {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t unique_triples = 0;
  std::uint64_t total_observations = 0;
};

KGSummary summarize(const KnowledgeGraph& kg);

}  // namespace isi
