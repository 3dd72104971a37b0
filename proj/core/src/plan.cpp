#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "isi/errors.hpp"
#include "isi/harness.hpp"

namespace isi {

namespace {

using nlohmann::json;

// Rejects keys outside `allowed` so typos surface before any work starts.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

SyntheticKGSpec spec_from_json(const json& j) {
  check_keys(j,
             {"rooms", "receptacles", "objects", "materials", "affordances", "object_offset",
              "environments_per_room", "objects_per_environment", "receptacle_presence",
              "extra_instance_probability", "material_observation_probability", "world_seed", "word_dim",
              "word_noise", "preset"},
             "generator spec");
  SyntheticKGSpec s;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "household")
      s = SyntheticKGSpec::household();
    else if (preset == "deployment")
      s = SyntheticKGSpec::deployment();
    else
      throw ConfigError("unknown generator preset '" + preset + "'");
  }
  read(j, "rooms", s.rooms);
  read(j, "receptacles", s.receptacles);
  read(j, "objects", s.objects);
  read(j, "materials", s.materials);
  read(j, "affordances", s.affordances);
  read(j, "object_offset", s.object_offset);
  read(j, "environments_per_room", s.environments_per_room);
  read(j, "objects_per_environment", s.objects_per_environment);
  read(j, "receptacle_presence", s.receptacle_presence);
  read(j, "extra_instance_probability", s.extra_instance_probability);
  read(j, "material_observation_probability", s.material_observation_probability);
  read(j, "world_seed", s.world_seed);
  read(j, "word_dim", s.word_dim);
  read(j, "word_noise", s.word_noise);
  s.validate();
  return s;
}

void read_source(const json& j, DatasetSource& src, const std::filesystem::path& base, const std::string& where) {
  check_keys(j, {"generator", "seed", "triples", "word_vectors"}, where);
  if (j.contains("triples")) {
    src.triples = resolve(base, j.at("triples").get<std::string>());
    src.generator.reset();
  }
  if (j.contains("generator")) src.generator = spec_from_json(j.at("generator"));
  read(j, "seed", src.generator_seed);
  if (j.contains("word_vectors")) src.word_vectors = resolve(base, j.at("word_vectors").get<std::string>());
}

void read_training(const json& j, ExperimentPlan& plan) {
  check_keys(j,
             {"dim", "scalars", "learning_rate", "weight_decay", "negative_ratio", "batch_size", "initial_epochs",
              "fine_tune_learning_rate", "max_epochs", "convergence_threshold", "stop_at_convergence",
              "weighting", "train_ratio", "valid_ratio", "optimizer", "reduction"},
             "training");
  auto& s = plan.session;
  if (j.contains("dim")) s.layout = BlockLayout::balanced(j.at("dim").get<std::size_t>());
  read(j, "scalars", s.layout.scalars);
  double lr = s.initial.learning_rate, wd = s.initial.regularization.weight_decay;
  read(j, "learning_rate", lr);
  read(j, "weight_decay", wd);
  int ratio = s.initial.negative_ratio;
  read(j, "negative_ratio", ratio);
  std::size_t batch = s.initial.batch_size;
  read(j, "batch_size", batch);
  s.initial.learning_rate = lr;
  for (auto* tc : {&s.initial, &s.fine_tune}) {
    tc->regularization.weight_decay = wd;
    tc->negative_ratio = ratio;
    tc->batch_size = batch;
  }
  read(j, "initial_epochs", s.initial.max_epochs);
  read(j, "fine_tune_learning_rate", s.fine_tune.learning_rate);
  read(j, "max_epochs", s.fine_tune.max_epochs);
  read(j, "convergence_threshold", s.convergence_threshold);
  read(j, "stop_at_convergence", s.stop_at_convergence);
  if (j.contains("weighting")) {
    const auto w = j.at("weighting").get<std::string>();
    if (w == "count")
      s.weighting = QueryWeighting::count;
    else if (w == "uniform")
      s.weighting = QueryWeighting::uniform;
    else
      throw ConfigError("weighting must be 'count' or 'uniform'");
  }
  if (j.contains("optimizer")) {
    const auto name = j.at("optimizer").get<std::string>();
    const auto o = parse_optimizer(name);
    if (!o) throw ConfigError("optimizer must be 'sgd' or 'adagrad'");
    s.initial.optimizer = s.fine_tune.optimizer = *o;
  }
  if (j.contains("reduction")) {
    const auto r = j.at("reduction").get<std::string>();
    if (r != "sum" && r != "mean") throw ConfigError("reduction must be 'sum' or 'mean'");
    s.initial.reduction = s.fine_tune.reduction = r == "sum" ? BatchReduction::sum : BatchReduction::mean;
  }
  read(j, "train_ratio", s.ratios.train);
  read(j, "valid_ratio", s.ratios.valid);
}

}  // namespace

ExperimentPlan parse_plan(std::istream& in, const std::filesystem::path& base_dir, const std::string& source) {
  ExperimentPlan plan;
  try {
    const json j = json::parse(in);
    check_keys(j,
               {"dataset", "deployment", "methods", "ookb_sizes", "replicates", "seed", "min_observations",
                "training", "init", "corruption", "sweep", "output_dir", "jobs"},
               "plan");
    if (j.contains("dataset")) read_source(j.at("dataset"), plan.dataset, base_dir, "dataset");
    if (j.contains("deployment")) read_source(j.at("deployment"), plan.deployment, base_dir, "deployment");
    read(j, "methods", plan.methods);
    read(j, "ookb_sizes", plan.ookb_sizes);
    read(j, "replicates", plan.replicates);
    read(j, "seed", plan.seed);
    read(j, "min_observations", plan.min_observations);
    if (j.contains("training")) read_training(j.at("training"), plan);
    if (j.contains("init")) {
      const auto& ji = j.at("init");
      check_keys(ji, {"k_es", "k_rs", "k_ers", "k_ers_preliminary"}, "init");
      read(ji, "k_es", plan.init.k_es);
      read(ji, "k_rs", plan.init.k_rs);
      read(ji, "k_ers", plan.init.k_ers);
      read(ji, "k_ers_preliminary", plan.init.k_ers_preliminary);
    }
    if (j.contains("corruption")) {
      const auto& jc = j.at("corruption");
      check_keys(jc, {"inserted", "replicates", "epochs"}, "corruption");
      read(jc, "inserted", plan.corruption_inserted);
      read(jc, "replicates", plan.corruption_replicates);
      read(jc, "epochs", plan.corruption_epochs);
    }
    if (j.contains("sweep")) {
      const auto& js = j.at("sweep");
      check_keys(js, {"k_values", "ookb_size", "replicates"}, "sweep");
      read(js, "k_values", plan.sweep_k);
      read(js, "ookb_size", plan.sweep_ookb_size);
      read(js, "replicates", plan.sweep_replicates);
    }
    if (j.contains("output_dir")) plan.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    read(j, "jobs", plan.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  plan.validate();
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan " + path.string());
  return parse_plan(in, path.parent_path(), path.string());
}

SyntheticKGSpec parse_synthetic_spec(std::istream& in, const std::string& source) {
  try {
    return spec_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

SyntheticKGSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec " + path.string());
  return parse_synthetic_spec(in, path.string());
}

}  // namespace isi
