#include "isi/kg.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "isi/errors.hpp"

namespace isi {

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (const auto& n : names) {
    if (index_.contains(n)) throw InvalidArgument("duplicate vocabulary name: " + n);
    intern(n);
  }
}

std::uint32_t Vocabulary::intern(std::string_view name) {
  std::string key(name);
  if (auto it = index_.find(key); it != index_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(names_.size());
  names_.push_back(key);
  index_.emplace(std::move(key), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void CountedTripleSet::add(const Triple& t, std::uint64_t count) {
  if (count == 0) throw InvalidArgument("triple count must be positive");
  counts_[t] += count;
  total_ += count;
}

std::uint64_t CountedTripleSet::count(const Triple& t) const {
  auto it = counts_.find(t);
  return it == counts_.end() ? 0 : it->second;
}

void CountedTripleSet::merge(const CountedTripleSet& other) {
  for (const auto& [t, c] : other) add(t, c);
}

namespace {

struct Row {
  std::string_view head, relation, tail;
  std::uint64_t count = 1;
};

// Returns nullopt for blank and comment lines.
std::optional<Row> parse_row(std::string_view line, const std::string& source, std::size_t lineno) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.empty() || line.front() == '#') return std::nullopt;

  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 3 && cols.size() != 4)
    throw ParseError(source, lineno,
                     "expected 3 or 4 tab-separated columns, got " + std::to_string(cols.size()));
  for (std::size_t i = 0; i < 3; ++i)
    if (cols[i].empty()) throw ParseError(source, lineno, "empty name in column " + std::to_string(i + 1));

  Row row{cols[0], cols[1], cols[2], 1};
  if (cols.size() == 4) {
    auto c = cols[3];
    long long value = 0;
    auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), value);
    if (ec != std::errc{} || ptr != c.data() + c.size())
      throw ParseError(source, lineno, "count is not an integer: '" + std::string(c) + "'");
    if (value <= 0) throw ParseError(source, lineno, "count must be positive");
    row.count = static_cast<std::uint64_t>(value);
  }
  return row;
}

}  // namespace

KnowledgeGraph parse_triples(std::istream& in, const std::string& source) {
  KnowledgeGraph kg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto row = parse_row(line, source, lineno);
    if (!row) continue;
    Triple t{kg.entities.intern(row->head), kg.relations.intern(row->relation),
             kg.entities.intern(row->tail)};
    kg.triples.add(t, row->count);
  }
  return kg;
}

KnowledgeGraph load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return parse_triples(in, path.string());
}

CountedTripleSet parse_triples_with(std::istream& in, const Vocabulary& entities,
                                    const Vocabulary& relations, const std::string& source) {
  CountedTripleSet out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto row = parse_row(line, source, lineno);
    if (!row) continue;
    auto h = entities.find(row->head);
    auto r = relations.find(row->relation);
    auto t = entities.find(row->tail);
    if (!h || !t)
      throw ParseError(source, lineno,
                       "unknown entity '" + std::string(!h ? row->head : row->tail) + "'");
    if (!r) throw ParseError(source, lineno, "unknown relation '" + std::string(row->relation) + "'");
    out.add({*h, *r, *t}, row->count);
  }
  return out;
}

void write_triples(std::ostream& out, const Vocabulary& entities, const Vocabulary& relations,
                   const CountedTripleSet& triples) {
  for (const auto& [t, c] : triples)
    out << entities.name(t.head) << '\t' << relations.name(t.relation) << '\t'
        << entities.name(t.tail) << '\t' << c << '\n';
}

void save_triples(const std::filesystem::path& path, const KnowledgeGraph& kg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_triples(out, kg.entities, kg.relations, kg.triples);
  if (!out) throw ConfigError("write failed: " + path.string());
}

CountedTripleSet DatasetSplit::all() const {
  CountedTripleSet out = train;
  out.merge(valid);
  out.merge(test);
  return out;
}

CountedTripleSet DatasetSplit::known_positives() const {
  CountedTripleSet out = train;
  out.merge(valid);
  return out;
}

void split_unique(const CountedTripleSet& triples, std::uint64_t seed, const SplitRatios& ratios,
                  DatasetSplit& out) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.train + ratios.valid > 1.0)
    throw InvalidArgument("split ratios must be non-negative and sum to at most 1");

  std::vector<std::pair<Triple, std::uint64_t>> items(triples.begin(), triples.end());
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);

  const auto n = items.size();
  const auto n_valid = static_cast<std::size_t>(static_cast<double>(n) * ratios.valid);
  const auto n_test =
      static_cast<std::size_t>(static_cast<double>(n) * (1.0 - ratios.train - ratios.valid) + 1e-9);
  const auto n_train = n - n_valid - n_test;

  for (std::size_t i = 0; i < n; ++i) {
    auto& dest = i < n_train ? out.train : (i < n_train + n_valid ? out.valid : out.test);
    dest.add(items[i].first, items[i].second);
  }
}

SessionSplit split_for_session(const KnowledgeGraph& kg, std::span<const EntityId> ookb,
                               std::uint64_t seed, const SplitRatios& ratios) {
  const auto n_entities = kg.entities.size();
  std::vector<bool> withheld(n_entities, false);
  std::vector<EntityId> ookb_order;
  for (auto e : ookb) {
    if (e >= n_entities) throw InvalidArgument("OOKB entity id out of range: " + std::to_string(e));
    if (!withheld[e]) ookb_order.push_back(e);
    withheld[e] = true;
  }
  if (ookb_order.size() >= n_entities)
    throw InvalidArgument("OOKB set covers every entity; initial dataset would be empty");

  SessionSplit s;
  s.to_extended.assign(n_entities, 0);
  for (EntityId e = 0; e < n_entities; ++e) {
    if (withheld[e]) continue;
    s.to_extended[e] = s.initial.entities.intern(kg.entities.name(e));
  }
  s.extended.entities = s.initial.entities;
  for (auto e : ookb_order) {
    s.to_extended[e] = s.extended.entities.intern(kg.entities.name(e));
    s.ookb.push_back(s.to_extended[e]);
  }
  s.initial.relations = kg.relations;
  s.extended.relations = kg.relations;

  CountedTripleSet known, held;
  for (const auto& [t, c] : kg.triples) {
    Triple mapped{s.to_extended[t.head], t.relation, s.to_extended[t.tail]};
    bool h = withheld[t.head], tl = withheld[t.tail];
    if (!h && !tl) {
      known.add(mapped, c);
    } else {
      held.add(mapped, c);
      if (h != tl) s.insert.add(mapped, c);
    }
  }
  if (known.empty()) throw InvalidArgument("no triple remains among known entities");

  split_unique(known, seed, ratios, s.initial);
  s.extended.train = s.initial.train;
  s.extended.valid = s.initial.valid;
  s.extended.test = s.initial.test;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
  std::uint64_t held_seed = 0;
  {
    std::mt19937_64 mix(seq);
    held_seed = mix();
  }
  split_unique(held, held_seed, ratios, s.extended);
  return s;
}

namespace {

std::uint64_t pack(const Triple& t) {
  return (static_cast<std::uint64_t>(t.head) << 40) | (static_cast<std::uint64_t>(t.relation) << 20) |
         static_cast<std::uint64_t>(t.tail);
}

}  // namespace

NegativeSampler::NegativeSampler(std::size_t entity_count, const CountedTripleSet& train)
    : entity_count_(entity_count) {
  if (entity_count >= (1u << 20)) throw InvalidArgument("entity vocabulary too large for sampler");
  for (const auto& [t, c] : train) {
    positives_.insert(pack(t));
    ++heads_per_rt_[{t.relation, t.tail}];
    ++tails_per_hr_[{t.head, t.relation}];
  }
}

bool NegativeSampler::is_positive(const Triple& t) const { return positives_.contains(pack(t)); }

bool NegativeSampler::head_corruptible(const Triple& t) const {
  auto it = heads_per_rt_.find({t.relation, t.tail});
  std::size_t taken = (it == heads_per_rt_.end() ? 0 : it->second) + (is_positive(t) ? 0 : 1);
  return taken < entity_count_;
}

bool NegativeSampler::tail_corruptible(const Triple& t) const {
  auto it = tails_per_hr_.find({t.head, t.relation});
  std::size_t taken = (it == tails_per_hr_.end() ? 0 : it->second) + (is_positive(t) ? 0 : 1);
  return taken < entity_count_;
}

void NegativeSampler::sample_into(const Triple& positive, int ratio, std::mt19937_64& rng,
                                  std::vector<LabeledExample>& out) const {
  if (ratio < 0) throw InvalidArgument("negative ratio must be >= 0");
  if (ratio == 0) return;
  if (positive.head >= entity_count_ || positive.tail >= entity_count_)
    throw InvalidArgument("positive triple outside the sampler's entity range");

  const bool can_head = head_corruptible(positive);
  const bool can_tail = tail_corruptible(positive);
  if (!can_head && !can_tail)
    throw SamplingError("no valid corruption exists for the given positive triple");

  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(entity_count_ - 1));
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < ratio; ++i) {
    bool corrupt_head = coin(rng);
    if (corrupt_head && !can_head) corrupt_head = false;
    if (!corrupt_head && !can_tail) corrupt_head = true;
    Triple neg = positive;
    do {
      (corrupt_head ? neg.head : neg.tail) = pick(rng);
    } while (neg == positive || is_positive(neg));
    out.push_back({neg, -1});
  }
}

std::vector<LabeledExample> NegativeSampler::sample(const Triple& positive, int ratio,
                                                    std::mt19937_64& rng) const {
  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(std::max(ratio, 0)));
  sample_into(positive, ratio, rng, out);
  return out;
}

std::vector<LabeledExample> sample_negatives(const Triple& positive, int ratio,
                                             const DatasetSplit& split, std::mt19937_64& rng) {
  NegativeSampler sampler(split.entities.size(), split.train);
  return sampler.sample(positive, ratio, rng);
}

}  // namespace isi
