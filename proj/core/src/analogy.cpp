#include "isi/analogy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "isi/errors.hpp"

namespace isi {

namespace {

// -log sigmoid(x), stable for large |x|.
double neg_log_sigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

BlockLayout BlockLayout::balanced(std::size_t dim) {
  const std::size_t pair_dims = (dim / 2) & ~std::size_t{1};
  return {dim, dim - pair_dims};
}

void BlockLayout::validate() const {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  if (scalars > dim || (dim - scalars) % 2 != 0)
    throw InvalidArgument("block layout needs dim - scalars to be even and non-negative");
}

EmbeddingModel::EmbeddingModel(Vocabulary entities, Vocabulary relations, BlockLayout layout)
    : entity_names_(std::move(entities)),
      relation_names_(std::move(relations)),
      layout_(layout),
      entities_(entity_names_.size() * layout.dim, 0.0),
      relations_(relation_names_.size() * layout.dim, 0.0) {
  layout_.validate();
  // Identity maps: scalars 1, blocks a = 1, c = 0.
  for (RelationId r = 0; r < relation_names_.size(); ++r) {
    auto w = relation(r);
    for (std::size_t i = 0; i < layout_.scalars; ++i) w[i] = 1.0;
    for (std::size_t i = layout_.scalars; i < layout_.dim; i += 2) w[i] = 1.0;
  }
}

std::span<double> EmbeddingModel::entity(EntityId e) {
  if (e >= entity_count()) throw InvalidArgument("entity id out of range");
  return {entities_.data() + e * layout_.dim, layout_.dim};
}

std::span<const double> EmbeddingModel::entity(EntityId e) const {
  if (e >= entity_count()) throw InvalidArgument("entity id out of range");
  return {entities_.data() + e * layout_.dim, layout_.dim};
}

std::span<double> EmbeddingModel::relation(RelationId r) {
  if (r >= relation_count()) throw InvalidArgument("relation id out of range");
  return {relations_.data() + r * layout_.dim, layout_.dim};
}

std::span<const double> EmbeddingModel::relation(RelationId r) const {
  if (r >= relation_count()) throw InvalidArgument("relation id out of range");
  return {relations_.data() + r * layout_.dim, layout_.dim};
}

EntityId EmbeddingModel::append_entity(std::string_view name, std::span<const double> vec) {
  if (vec.size() != layout_.dim) throw InvalidArgument("appended entity has wrong dimension");
  if (entity_names_.find(name)) throw InvalidArgument("entity already present: " + std::string(name));
  auto id = entity_names_.intern(name);
  entities_.insert(entities_.end(), vec.begin(), vec.end());
  return id;
}

double EmbeddingModel::score(EntityId h, RelationId r, EntityId t) const {
  auto vh = entity(h);
  auto vt = entity(t);
  auto w = relation(r);
  const std::size_t s = layout_.scalars;
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) total += vh[i] * w[i] * vt[i];
  for (std::size_t i = s; i < layout_.dim; i += 2) {
    const double a = w[i], c = w[i + 1];
    total += a * (vh[i] * vt[i] + vh[i + 1] * vt[i + 1]) + c * (vh[i + 1] * vt[i] - vh[i] * vt[i + 1]);
  }
  return total;
}

void EmbeddingModel::forward(std::span<const double> head, RelationId r, std::span<double> out) const {
  auto w = relation(r);
  const std::size_t s = layout_.scalars;
  for (std::size_t i = 0; i < s; ++i) out[i] = head[i] * w[i];
  for (std::size_t i = s; i < layout_.dim; i += 2) {
    const double a = w[i], c = w[i + 1];
    const double h1 = head[i], h2 = head[i + 1];
    out[i] = a * h1 + c * h2;
    out[i + 1] = a * h2 - c * h1;
  }
}

void EmbeddingModel::backward(RelationId r, std::span<const double> tail, std::span<double> out) const {
  auto w = relation(r);
  const std::size_t s = layout_.scalars;
  for (std::size_t i = 0; i < s; ++i) out[i] = w[i] * tail[i];
  for (std::size_t i = s; i < layout_.dim; i += 2) {
    const double a = w[i], c = w[i + 1];
    const double t1 = tail[i], t2 = tail[i + 1];
    out[i] = a * t1 - c * t2;
    out[i + 1] = c * t1 + a * t2;
  }
}

bool EmbeddingModel::forward_inverse(std::span<const double> tail, RelationId r, std::span<double> out,
                                     double tolerance) const {
  auto w = relation(r);
  const std::size_t s = layout_.scalars;
  for (std::size_t i = 0; i < s; ++i) {
    if (std::abs(w[i]) < tolerance) return false;
    out[i] = tail[i] / w[i];
  }
  for (std::size_t i = s; i < layout_.dim; i += 2) {
    const double a = w[i], c = w[i + 1];
    const double det = a * a + c * c;
    if (det < tolerance) return false;
    const double t1 = tail[i], t2 = tail[i + 1];
    out[i] = (a * t1 - c * t2) / det;
    out[i + 1] = (c * t1 + a * t2) / det;
  }
  return true;
}

std::vector<double> EmbeddingModel::dense_relation(RelationId r) const {
  auto w = relation(r);
  const std::size_t d = layout_.dim;
  std::vector<double> m(d * d, 0.0);
  for (std::size_t i = 0; i < layout_.scalars; ++i) m[i * d + i] = w[i];
  for (std::size_t i = layout_.scalars; i < d; i += 2) {
    m[i * d + i] = w[i];
    m[i * d + i + 1] = -w[i + 1];
    m[(i + 1) * d + i] = w[i + 1];
    m[(i + 1) * d + i + 1] = w[i];
  }
  return m;
}

void initialize_parameters(EmbeddingModel& model, std::mt19937_64& rng) {
  const double bound = 6.0 / std::sqrt(static_cast<double>(model.dim()));
  std::uniform_real_distribution<double> ent(-bound, bound);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  for (EntityId e = 0; e < model.entity_count(); ++e)
    for (auto& x : model.entity(e)) x = ent(rng);
  const auto& layout = model.layout();
  for (RelationId r = 0; r < model.relation_count(); ++r) {
    auto w = model.relation(r);
    for (std::size_t i = 0; i < layout.scalars; ++i) w[i] = 1.0 + noise(rng);
    for (std::size_t i = layout.scalars; i < layout.dim; i += 2) {
      w[i] = 1.0 + noise(rng);
      w[i + 1] = noise(rng);
    }
  }
}

double loss(const EmbeddingModel& model, std::span<const LabeledExample> batch,
            const RegularizationConfig& reg, double data_weight) {
  if (batch.empty()) throw InvalidArgument("loss of an empty batch");
  double total = 0.0;
  std::vector<char> seen_e(model.entity_count(), 0), seen_r(model.relation_count(), 0);
  double penalty = 0.0;
  auto sq = [](std::span<const double> v) {
    return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
  };
  for (const auto& ex : batch) {
    total += neg_log_sigmoid(ex.label * model.score(ex.triple));
    for (EntityId e : {ex.triple.head, ex.triple.tail}) {
      if (reg.decay_entities && !seen_e[e]) penalty += sq(model.entity(e));
      seen_e[e] = 1;
    }
    if (reg.decay_relations && !seen_r[ex.triple.relation]) penalty += sq(model.relation(ex.triple.relation));
    seen_r[ex.triple.relation] = 1;
  }
  return data_weight * total + 0.5 * reg.weight_decay * penalty;
}

Gradients::Gradients(const EmbeddingModel& model)
    : dim_(model.dim()),
      entity_grad_(model.entity_count() * model.dim(), 0.0),
      relation_grad_(model.relation_count() * model.dim(), 0.0),
      entity_mark_(model.entity_count(), 0),
      relation_mark_(model.relation_count(), 0) {}

void Gradients::clear() {
  for (auto e : touched_entities_) {
    std::fill_n(entity_grad_.begin() + static_cast<std::ptrdiff_t>(e * dim_), dim_, 0.0);
    entity_mark_[e] = 0;
  }
  for (auto r : touched_relations_) {
    std::fill_n(relation_grad_.begin() + static_cast<std::ptrdiff_t>(r * dim_), dim_, 0.0);
    relation_mark_[r] = 0;
  }
  touched_entities_.clear();
  touched_relations_.clear();
}

std::span<const double> Gradients::entity(EntityId e) const {
  return {entity_grad_.data() + e * dim_, dim_};
}

std::span<const double> Gradients::relation(RelationId r) const {
  return {relation_grad_.data() + r * dim_, dim_};
}

void Gradients::accumulate(const EmbeddingModel& model, std::span<const LabeledExample> batch,
                           const RegularizationConfig& reg, double data_weight) {
  if (model.entity_count() * dim_ != entity_grad_.size() ||
      model.relation_count() * dim_ != relation_grad_.size())
    throw InvalidArgument("gradient buffer does not match model shape");
  const std::size_t s = model.layout().scalars;
  const std::size_t d = dim_;

  auto touch_entity = [&](EntityId e) {
    if (entity_mark_[e]) return;
    entity_mark_[e] = 1;
    touched_entities_.push_back(e);
    if (reg.decay_entities) {
      auto v = model.entity(e);
      double* g = entity_grad_.data() + e * d;
      for (std::size_t i = 0; i < d; ++i) g[i] += reg.weight_decay * v[i];
    }
  };
  auto touch_relation = [&](RelationId r) {
    if (relation_mark_[r]) return;
    relation_mark_[r] = 1;
    touched_relations_.push_back(r);
    if (reg.decay_relations) {
      auto w = model.relation(r);
      double* g = relation_grad_.data() + r * d;
      for (std::size_t i = 0; i < d; ++i) g[i] += reg.weight_decay * w[i];
    }
  };

  for (const auto& ex : batch) {
    const auto& t = ex.triple;
    touch_entity(t.head);
    touch_entity(t.tail);
    touch_relation(t.relation);

    const double y = ex.label;
    const double dscore = -y * data_weight * sigmoid(-y * model.score(t));
    auto vh = model.entity(t.head);
    auto vt = model.entity(t.tail);
    auto w = model.relation(t.relation);
    double* gh = entity_grad_.data() + t.head * d;
    double* gt = entity_grad_.data() + t.tail * d;
    double* gw = relation_grad_.data() + t.relation * d;

    for (std::size_t i = 0; i < s; ++i) {
      gh[i] += dscore * w[i] * vt[i];
      gt[i] += dscore * w[i] * vh[i];
      gw[i] += dscore * vh[i] * vt[i];
    }
    for (std::size_t i = s; i < d; i += 2) {
      const double a = w[i], c = w[i + 1];
      const double h1 = vh[i], h2 = vh[i + 1], t1 = vt[i], t2 = vt[i + 1];
      gh[i] += dscore * (a * t1 - c * t2);
      gh[i + 1] += dscore * (c * t1 + a * t2);
      gt[i] += dscore * (a * h1 + c * h2);
      gt[i + 1] += dscore * (a * h2 - c * h1);
      gw[i] += dscore * (h1 * t1 + h2 * t2);
      gw[i + 1] += dscore * (h2 * t1 - h1 * t2);
    }
  }
}

void Gradients::apply(EmbeddingModel& model, double step) const {
  for (auto e : touched_entities_) {
    auto v = model.entity(e);
    const double* g = entity_grad_.data() + e * dim_;
    for (std::size_t i = 0; i < dim_; ++i) v[i] -= step * g[i];
  }
  for (auto r : touched_relations_) {
    auto w = model.relation(r);
    const double* g = relation_grad_.data() + r * dim_;
    for (std::size_t i = 0; i < dim_; ++i) w[i] -= step * g[i];
  }
}

Gradients gradients(const EmbeddingModel& model, std::span<const LabeledExample> batch,
                    const RegularizationConfig& reg, double data_weight) {
  Gradients g(model);
  g.accumulate(model, batch, reg, data_weight);
  return g;
}

AdaGrad::AdaGrad(const EmbeddingModel& model, double eps)
    : dim_(model.dim()),
      eps_(eps),
      entity_acc_(model.entity_count() * model.dim(), 0.0),
      relation_acc_(model.relation_count() * model.dim(), 0.0) {}

void AdaGrad::apply(EmbeddingModel& model, const Gradients& grad, double rate) {
  if (entity_acc_.size() != model.entity_count() * dim_ || relation_acc_.size() != model.relation_count() * dim_)
    throw InvalidArgument("AdaGrad state does not match the model");
  auto step = [&](std::span<double> p, std::span<const double> g, double* acc) {
    for (std::size_t i = 0; i < dim_; ++i) {
      acc[i] += g[i] * g[i];
      p[i] -= rate * g[i] / (std::sqrt(acc[i]) + eps_);
    }
  };
  for (auto e : grad.touched_entities()) step(model.entity(e), grad.entity(e), entity_acc_.data() + e * dim_);
  for (auto r : grad.touched_relations())
    step(model.relation(r), grad.relation(r), relation_acc_.data() + r * dim_);
}

std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adagrad"; }

std::optional<Optimizer> parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adagrad") return Optimizer::adagrad;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(regularization.weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
  if (negative_ratio < 0) throw ConfigError("negative_ratio must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
}

TrainLog train(EmbeddingModel& model, const DatasetSplit& split, const TrainConfig& cfg,
               const EpochCallback& on_epoch) {
  cfg.validate();
  if (!(split.entities == model.entity_names()) || !(split.relations == model.relation_names()))
    throw InvalidArgument("model vocabulary does not match the dataset vocabulary");

  TrainLog log;
  if (cfg.max_epochs == 0) return log;

  std::vector<Triple> observations;
  observations.reserve(split.train.total_count());
  for (const auto& [t, c] : split.train) observations.insert(observations.end(), c, t);
  if (observations.empty()) return log;

  NegativeSampler sampler(model.entity_count(), split.train);
  std::mt19937_64 rng(cfg.seed);
  Gradients grad(model);
  std::optional<AdaGrad> adagrad;
  if (cfg.optimizer == Optimizer::adagrad) adagrad.emplace(model);
  std::vector<LabeledExample> batch;
  batch.reserve(cfg.batch_size * static_cast<std::size_t>(cfg.negative_ratio + 1));

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(observations.begin(), observations.end(), rng);
    double epoch_loss = 0.0;
    std::size_t examples = 0;
    for (std::size_t start = 0, b = 0; start < observations.size(); start += cfg.batch_size, ++b) {
      const auto stop = std::min(observations.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back({observations[i], 1});
        sampler.sample_into(observations[i], cfg.negative_ratio, rng, batch);
      }
      double batch_loss = 0.0;
      for (const auto& ex : batch) batch_loss += neg_log_sigmoid(ex.label * model.score(ex.triple));
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss in epoch " << epoch << ", batch " << b << " (first triple "
            << model.entity_names().name(batch.front().triple.head) << ' '
            << model.relation_names().name(batch.front().triple.relation) << ' '
            << model.entity_names().name(batch.front().triple.tail) << ')';
        throw NumericalError(msg.str());
      }
      epoch_loss += batch_loss;
      examples += batch.size();

      grad.clear();
      const double weight =
          cfg.reduction == BatchReduction::mean ? 1.0 / static_cast<double>(batch.size()) : 1.0;
      grad.accumulate(model, batch, cfg.regularization, weight);
      if (adagrad)
        adagrad->apply(model, grad, cfg.learning_rate);
      else
        grad.apply(model, cfg.learning_rate);
    }
    log.epochs.push_back({epoch, epoch_loss / static_cast<double>(examples)});
    if (on_epoch && !on_epoch(epoch, model)) {
      log.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  return log;
}

namespace {

constexpr std::string_view kMagic = "isi-analogy-checkpoint";
constexpr int kVersion = 1;

void write_values(std::ostream& out, std::span<const double> values) {
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, values[i]);
    if (i) out << ' ';
    out.write(buf, ptr - buf);
  }
}

std::vector<double> read_values(std::string_view text, std::size_t n, const std::string& source,
                                std::size_t lineno) {
  std::vector<double> out;
  out.reserve(n);
  const char* p = text.data();
  const char* end = text.data() + text.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p == end) break;
    double v = 0;
    auto [ptr, ec] = std::from_chars(p, end, v);
    if (ec != std::errc{}) throw ParseError(source, lineno, "bad number");
    out.push_back(v);
    p = ptr;
  }
  if (out.size() != n)
    throw ParseError(source, lineno,
                     "expected " + std::to_string(n) + " values, got " + std::to_string(out.size()));
  return out;
}

}  // namespace

void save_model(std::ostream& out, const EmbeddingModel& model) {
  const auto& layout = model.layout();
  out << kMagic << ' ' << kVersion << '\n';
  out << "dim " << layout.dim << " scalars " << layout.scalars << '\n';
  out << "entities " << model.entity_count() << '\n';
  for (EntityId e = 0; e < model.entity_count(); ++e) {
    out << model.entity_names().name(e) << '\t';
    write_values(out, model.entity(e));
    out << '\n';
  }
  out << "relations " << model.relation_count() << '\n';
  for (RelationId r = 0; r < model.relation_count(); ++r) {
    out << model.relation_names().name(r) << '\t';
    write_values(out, model.relation(r));
    out << '\n';
  }
}

void save_model(const std::filesystem::path& path, const EmbeddingModel& model) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  save_model(out, model);
  if (!out) throw ConfigError("write failed: " + path.string());
}

EmbeddingModel load_model(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(source, lineno, "unexpected end of checkpoint");
    ++lineno;
    return line;
  };

  {
    std::istringstream head(next());
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic) throw ParseError(source, lineno, "not a model checkpoint");
    if (version != kVersion)
      throw ParseError(source, lineno, "unsupported checkpoint version " + std::to_string(version));
  }
  BlockLayout layout;
  {
    std::istringstream head(next());
    std::string k1, k2;
    head >> k1 >> layout.dim >> k2 >> layout.scalars;
    if (!head || k1 != "dim" || k2 != "scalars") throw ParseError(source, lineno, "bad layout line");
    try {
      layout.validate();
    } catch (const InvalidArgument& e) {
      throw ParseError(source, lineno, e.what());
    }
  }

  auto read_section = [&](std::string_view key, Vocabulary& names, std::vector<double>& data) {
    std::istringstream head(next());
    std::string k;
    std::size_t n = 0;
    head >> k >> n;
    if (!head || k != key) throw ParseError(source, lineno, "expected '" + std::string(key) + "' header");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& l = next();
      auto tab = l.find('\t');
      if (tab == std::string::npos) throw ParseError(source, lineno, "missing tab after name");
      std::string name = l.substr(0, tab);
      if (names.find(name)) throw ParseError(source, lineno, "duplicate name " + name);
      names.intern(name);
      auto values = read_values(std::string_view(l).substr(tab + 1), layout.dim, source, lineno);
      data.insert(data.end(), values.begin(), values.end());
    }
  };

  Vocabulary entities, relations;
  std::vector<double> entity_data, relation_data;
  read_section("entities", entities, entity_data);
  read_section("relations", relations, relation_data);

  EmbeddingModel model(std::move(entities), std::move(relations), layout);
  for (EntityId e = 0; e < model.entity_count(); ++e)
    std::copy_n(entity_data.begin() + static_cast<std::ptrdiff_t>(e * layout.dim), layout.dim,
                model.entity(e).begin());
  for (RelationId r = 0; r < model.relation_count(); ++r)
    std::copy_n(relation_data.begin() + static_cast<std::ptrdiff_t>(r * layout.dim), layout.dim,
                model.relation(r).begin());
  return model;
}

EmbeddingModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return load_model(in, path.string());
}

}  // namespace isi
