#include "isi/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string_view>

#include "isi/errors.hpp"

namespace isi {

namespace {

constexpr std::array<std::string_view, 4> kRooms = {"kitchen", "bathroom", "bedroom", "living_room"};
enum Room { K = 1, Ba = 2, Be = 4, L = 8 };

constexpr std::array<std::string_view, 7> kMaterials = {"wood",   "metal",   "glass", "plastic",
                                                         "fabric", "ceramic", "paper"};

constexpr std::array<std::string_view, 17> kAffordances = {
    "pick_up", "put",   "open",  "close", "turn_on", "turn_off", "fill",   "empty", "slice",
    "cook",    "clean", "break", "sit_on", "lie_on", "read",     "wear",   "throw"};

struct ReceptacleDef {
  std::string_view name;
  int rooms;
  std::vector<std::string_view> materials;
  std::vector<std::string_view> affordances;
};

const std::vector<ReceptacleDef>& receptacle_catalog() {
  static const std::vector<ReceptacleDef> defs = {
      {"cabinet", K | Ba, {"wood", "metal"}, {"open", "close", "put"}},
      {"countertop", K | Ba, {"wood", "ceramic"}, {"put", "clean"}},
      {"sink", K | Ba, {"ceramic", "metal"}, {"put", "fill", "clean", "turn_on"}},
      {"fridge", K, {"metal", "plastic"}, {"open", "close", "put"}},
      {"drawer", K | Be | Ba, {"wood", "plastic"}, {"open", "close", "put"}},
      {"shelf", L | Be | K, {"wood", "metal"}, {"put"}},
      {"dining_table", K | L, {"wood", "glass"}, {"put", "clean"}},
      {"coffee_table", L, {"wood", "glass"}, {"put"}},
      {"side_table", L | Be, {"wood"}, {"put"}},
      {"desk", Be, {"wood", "metal"}, {"put"}},
      {"sofa", L, {"fabric"}, {"sit_on", "lie_on"}},
      {"armchair", L | Be, {"fabric", "wood"}, {"sit_on"}},
      {"bed", Be, {"fabric", "wood"}, {"lie_on", "sit_on"}},
      {"dresser", Be, {"wood"}, {"open", "close", "put"}},
      {"bathtub", Ba, {"ceramic"}, {"fill", "empty", "clean"}},
      {"toilet", Ba, {"ceramic"}, {"clean", "open", "close"}},
      {"garbage_can", K | Ba | L | Be, {"plastic", "metal"}, {"put", "empty"}},
      {"tv_stand", L, {"wood", "glass"}, {"put"}},
      {"nightstand", Be, {"wood"}, {"open", "close", "put"}},
      {"stove_burner", K, {"metal"}, {"turn_on", "turn_off", "cook"}},
  };
  return defs;
}

struct CategoryDef {
  std::string_view name;
  std::array<double, 4> room_affinity;  // kitchen, bathroom, bedroom, living_room
  std::vector<std::string_view> receptacles;
  std::vector<std::string_view> materials;
  std::vector<std::string_view> affordances;
  std::array<std::string_view, 10> objects;
};

const std::vector<CategoryDef>& category_catalog() {
  static const std::vector<CategoryDef> defs = {
      {"kitchenware",
       {0.85, 0.0, 0.0, 0.15},
       {"cabinet", "countertop", "sink", "shelf", "dining_table", "drawer"},
       {"ceramic", "metal", "glass", "plastic"},
       {"pick_up", "put", "fill", "empty", "clean", "break"},
       {"bowl", "cup", "plate", "pot", "pan", "mug", "kettle", "bottle", "jar", "tray"}},
      {"utensil",
       {1.0, 0.0, 0.0, 0.0},
       {"drawer", "countertop", "sink", "dining_table"},
       {"metal", "plastic", "wood"},
       {"slice", "pick_up", "put", "clean"},
       {"knife", "fork", "spoon", "spatula", "ladle", "butter_knife", "peeler", "whisk", "tongs", "scissors"}},
      {"food",
       {0.9, 0.0, 0.0, 0.1},
       {"fridge", "countertop", "dining_table"},
       {},
       {"throw", "pick_up", "put", "slice", "cook"},
       {"apple", "bread", "tomato", "potato", "lettuce", "egg", "banana", "orange", "cheese", "onion"}},
      {"appliance",
       {1.0, 0.0, 0.0, 0.0},
       {"countertop", "cabinet", "shelf"},
       {"metal", "plastic", "glass"},
       {"open", "close", "turn_on", "turn_off", "cook", "fill"},
       {"microwave", "toaster", "coffee_machine", "blender", "dishwasher", "oven", "rice_cooker",
        "electric_kettle", "food_processor", "stove"}},
      {"toiletry",
       {0.0, 1.0, 0.0, 0.0},
       {"sink", "countertop", "bathtub", "toilet", "cabinet", "shelf", "drawer"},
       {"plastic", "fabric", "paper"},
       {"pick_up", "put", "clean", "throw", "empty"},
       {"soap_bar", "towel", "toilet_paper", "toothbrush", "spray_bottle", "plunger", "shampoo", "sponge",
        "razor", "hair_dryer"}},
      {"electronics",
       {0.1, 0.0, 0.45, 0.45},
       {"desk", "tv_stand", "side_table", "nightstand", "coffee_table", "sofa"},
       {"metal", "plastic", "glass"},
       {"break", "turn_on", "turn_off", "pick_up", "put", "open", "close"},
       {"laptop", "television", "remote_control", "cell_phone", "desk_lamp", "floor_lamp", "alarm_clock", "fan",
        "speaker", "tablet"}},
      {"textile",
       {0.0, 0.0, 0.7, 0.3},
       {"bed", "sofa", "armchair", "dresser", "drawer", "nightstand"},
       {"fabric", "plastic"},
       {"wear", "pick_up", "put", "throw", "clean"},
       {"pillow", "blanket", "teddy_bear", "cloth", "shirt", "shoes", "hat", "curtain", "rug", "slippers"}},
      {"decor",
       {0.0, 0.0, 0.45, 0.55},
       {"shelf", "coffee_table", "side_table", "desk", "nightstand", "tv_stand", "dining_table"},
       {"paper", "glass", "ceramic", "wood"},
       {"read", "pick_up", "put", "break", "open", "close"},
       {"book", "newspaper", "vase", "statue", "painting", "candle", "houseplant", "picture_frame", "magazine",
        "clock"}},
  };
  return defs;
}

struct CatalogObject {
  std::string_view name;
  std::size_t category;
  std::size_t index;  // position in catalog order
};

// Round-robin over categories, so any prefix spans every category.
const std::vector<CatalogObject>& object_catalog() {
  static const std::vector<CatalogObject> objects = [] {
    std::vector<CatalogObject> out;
    const auto& cats = category_catalog();
    for (std::size_t j = 0; j < 10; ++j)
      for (std::size_t c = 0; c < cats.size(); ++c) out.push_back({cats[c].objects[j], c, out.size()});
    return out;
  }();
  return objects;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::mt19937_64 keyed_rng(std::uint64_t seed, std::string_view key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a(key)), static_cast<std::uint32_t>(fnv1a(key) >> 32)};
  return std::mt19937_64(seq);
}

// Discrete distribution over named options.
struct Weighted {
  std::vector<std::string_view> names;
  std::vector<double> weights;

  bool empty() const { return names.empty(); }
};

// A random subset of `pool` of size in [lo, hi] with exponential weights.
// The first entry of the pool is always included.
Weighted pick_weighted(const std::vector<std::string_view>& pool, std::size_t lo, std::size_t hi,
                       std::mt19937_64& rng) {
  Weighted out;
  if (pool.empty()) return out;
  std::vector<std::string_view> shuffled = pool;
  std::shuffle(shuffled.begin() + 1, shuffled.end(), rng);
  hi = std::min(hi, pool.size());
  lo = std::min(lo, hi);
  const auto n = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  std::exponential_distribution<double> ex(1.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.names.push_back(shuffled[i]);
    out.weights.push_back(0.05 + ex(rng));
  }
  return out;
}

struct Affordance {
  std::string_view name;
  double probability;
};

struct ObjectProfile {
  std::string_view name;
  std::array<double, 4> rooms{};
  Weighted receptacles;
  Weighted materials;
  std::vector<Affordance> affordances;
};

// Objects of a category share a profile; each object keeps most of it with
// jittered weights and occasionally adds one more option from the category.
Weighted perturb(const Weighted& base, const std::vector<std::string_view>& pool, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.5);
  Weighted out;
  for (std::size_t i = 0; i < base.names.size(); ++i) {
    if (u(rng) < 0.15) continue;
    out.names.push_back(base.names[i]);
    out.weights.push_back(base.weights[i] * std::exp(jitter(rng)));
  }
  if (out.empty() && !base.empty()) {
    out.names.push_back(base.names.front());
    out.weights.push_back(base.weights.front());
  }
  if (!pool.empty() && u(rng) < 0.3) {
    const auto extra = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    if (std::find(out.names.begin(), out.names.end(), extra) == out.names.end()) {
      out.names.push_back(extra);
      out.weights.push_back(0.15 * u(rng));
    }
  }
  return out;
}

ObjectProfile category_profile(const CategoryDef& cat, std::uint64_t world_seed) {
  auto rng = keyed_rng(world_seed, "category:" + std::string(cat.name));
  ObjectProfile p;
  p.rooms = cat.room_affinity;
  p.receptacles = pick_weighted(cat.receptacles, 2, 3, rng);
  p.materials = pick_weighted(cat.materials, 1, 2, rng);
  auto aff = pick_weighted(cat.affordances, 2, 4, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto name : aff.names) p.affordances.push_back({name, 0.5 + 0.5 * u(rng)});
  return p;
}

ObjectProfile object_profile(const CatalogObject& obj, std::uint64_t world_seed) {
  const auto& cat = category_catalog()[obj.category];
  const auto base = category_profile(cat, world_seed);
  auto rng = keyed_rng(world_seed, obj.name);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ObjectProfile p;
  p.name = obj.name;
  for (std::size_t r = 0; r < 4; ++r) p.rooms[r] = base.rooms[r] * (0.5 + u(rng));
  p.receptacles = perturb(base.receptacles, cat.receptacles, rng);
  p.materials = perturb(base.materials, cat.materials, rng);
  for (const auto& a : base.affordances)
    if (u(rng) >= 0.15) p.affordances.push_back({a.name, std::min(1.0, a.probability * (0.8 + 0.4 * u(rng)))});
  return p;
}

struct ReceptacleProfile {
  const ReceptacleDef* def;
  std::vector<double> material_weights;
};

std::size_t sample_index(const std::vector<double>& weights, std::mt19937_64& rng) {
  return std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng);
}

}  // namespace

void SyntheticKGSpec::validate() const {
  if (rooms == 0 || rooms > kRooms.size()) throw ConfigError("rooms must be in [1, 4]");
  if (receptacles > receptacle_catalog().size()) throw ConfigError("at most 20 receptacles are available");
  if (materials > kMaterials.size()) throw ConfigError("at most 7 materials are available");
  if (affordances > kAffordances.size()) throw ConfigError("at most 17 affordances are available");
  if (object_offset + objects > object_catalog().size())
    throw ConfigError("object_offset + objects exceeds the catalog (" + std::to_string(object_catalog().size()) +
                      " objects)");
  if (objects == 0) throw ConfigError("objects must be positive");
  if (environments_per_room == 0) throw ConfigError("environments_per_room must be positive");
  if (objects_per_environment == 0) throw ConfigError("objects_per_environment must be positive");
  for (double p : {receptacle_presence, extra_instance_probability, material_observation_probability})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("probabilities must be in [0, 1]");
  if (word_dim == 0) throw ConfigError("word_dim must be positive");
  if (!(word_noise >= 0.0)) throw ConfigError("word_noise must be non-negative");
}

SyntheticKGSpec SyntheticKGSpec::deployment() {
  SyntheticKGSpec s;
  s.object_offset = 58;
  s.objects = 22;
  s.environments_per_room = 12;
  s.objects_per_environment = 10;
  return s;
}

std::size_t catalog_object_count() { return object_catalog().size(); }

KnowledgeGraph generate_synthetic_kg(const SyntheticKGSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto& rec_defs = receptacle_catalog();
  const auto& objects = object_catalog();

  // Only the first `materials` / `affordances` names exist in this world.
  auto allowed = [](auto& names, std::size_t n, std::string_view x) {
    return std::find(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(n), x) !=
           names.begin() + static_cast<std::ptrdiff_t>(n);
  };
  auto material_ok = [&](std::string_view m) { return allowed(kMaterials, spec.materials, m); };
  auto affordance_ok = [&](std::string_view a) { return allowed(kAffordances, spec.affordances, a); };

  std::vector<ReceptacleProfile> receptacles;
  for (std::size_t i = 0; i < spec.receptacles; ++i) {
    auto rng = keyed_rng(spec.world_seed, rec_defs[i].name);
    std::vector<double> w;
    for (std::size_t j = 0; j < rec_defs[i].materials.size(); ++j)
      w.push_back(0.2 + std::exponential_distribution<double>(1.0)(rng));
    receptacles.push_back({&rec_defs[i], std::move(w)});
  }
  std::vector<ObjectProfile> profiles;
  for (std::size_t i = 0; i < spec.objects; ++i)
    profiles.push_back(object_profile(objects[spec.object_offset + i], spec.world_seed));

  KnowledgeGraph kg;
  const auto at = kg.relations.intern("atLocation");
  const auto made_of = kg.relations.intern("madeOf");
  const auto has_aff = kg.relations.intern("hasAffordance");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto add = [&](std::string_view h, RelationId r, std::string_view t) {
    kg.triples.add({kg.entities.intern(h), r, kg.entities.intern(t)});
  };
  auto add_material = [&](std::string_view who, const std::vector<std::string_view>& names,
                          const std::vector<double>& weights) {
    if (names.empty() || u(rng) >= spec.material_observation_probability) return;
    const auto m = names[sample_index(weights, rng)];
    if (material_ok(m)) add(who, made_of, m);
  };

  for (std::size_t room = 0; room < spec.rooms; ++room) {
    const auto room_name = kRooms[room];
    const int room_bit = 1 << room;
    for (std::size_t env = 0; env < spec.environments_per_room; ++env) {
      std::vector<std::string_view> present;
      for (const auto& rec : receptacles) {
        if (!(rec.def->rooms & room_bit) || u(rng) >= spec.receptacle_presence) continue;
        present.push_back(rec.def->name);
        add(rec.def->name, at, room_name);
        add_material(rec.def->name, rec.def->materials, rec.material_weights);
        for (auto a : rec.def->affordances)
          if (affordance_ok(a) && u(rng) < 0.7) add(rec.def->name, has_aff, a);
      }

      // Weighted sampling without replacement (exponential keys).
      std::vector<std::pair<double, std::size_t>> keys;
      for (std::size_t i = 0; i < profiles.size(); ++i) {
        const double w = profiles[i].rooms[room];
        if (w <= 0.0) continue;
        keys.emplace_back(std::exponential_distribution<double>(w)(rng), i);
      }
      std::sort(keys.begin(), keys.end());
      if (keys.size() > spec.objects_per_environment) keys.resize(spec.objects_per_environment);

      for (const auto& [key, i] : keys) {
        const auto& p = profiles[i];
        const int instances = u(rng) < spec.extra_instance_probability ? 2 : 1;
        for (int k = 0; k < instances; ++k) {
          std::vector<double> w;
          std::vector<std::string_view> here;
          for (std::size_t j = 0; j < p.receptacles.names.size(); ++j) {
            if (std::find(present.begin(), present.end(), p.receptacles.names[j]) == present.end()) continue;
            here.push_back(p.receptacles.names[j]);
            w.push_back(p.receptacles.weights[j]);
          }
          add(p.name, at, here.empty() ? room_name : here[sample_index(w, rng)]);
        }
        add_material(p.name, p.materials.names, p.materials.weights);
        for (const auto& a : p.affordances)
          if (affordance_ok(a.name) && u(rng) < a.probability) add(p.name, has_aff, a.name);
      }
    }
  }
  return kg;
}

WordVectorTable synthesize_word_vectors(const SyntheticKGSpec& spec) {
  spec.validate();
  const auto d = spec.word_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto gaussian = [&](std::mt19937_64& rng, double sd) {
    std::normal_distribution<double> n(0.0, sd * scale);
    std::vector<double> v(d);
    for (auto& x : v) x = n(rng);
    return v;
  };
  std::map<std::string, std::vector<double>> prototypes;
  auto prototype = [&](const std::string& group) -> const std::vector<double>& {
    auto it = prototypes.find(group);
    if (it == prototypes.end()) {
      auto rng = keyed_rng(spec.world_seed, "group:" + group);
      it = prototypes.emplace(group, gaussian(rng, 1.0)).first;
    }
    return it->second;
  };

  WordVectorTable table(d);
  auto emit = [&](std::string_view name, const std::string& group) {
    const auto& proto = prototype(group);
    auto rng = keyed_rng(spec.world_seed, "word:" + std::string(name));
    auto v = gaussian(rng, spec.word_noise);
    for (std::size_t i = 0; i < d; ++i) v[i] += proto[i];
    table.insert(name, v);
  };
  for (auto r : kRooms) emit(r, "room");
  for (const auto& r : receptacle_catalog()) emit(r.name, "furniture");
  for (auto m : kMaterials) emit(m, "material");
  for (auto a : kAffordances) emit(a, "action");
  for (const auto& o : object_catalog()) emit(o.name, std::string(category_catalog()[o.category].name));
  return table;
}

KGSummary summarize(const KnowledgeGraph& kg) {
  return {kg.entities.size(), kg.relations.size(), kg.triples.unique_count(), kg.triples.total_count()};
}

}  // namespace isi
