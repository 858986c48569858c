#include "cds/config.hpp"

#include <set>

#include "cds/error.hpp"
#include "cds/io.hpp"
#include "json.hpp"

namespace cds {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
  throw Error(ErrorCode::InvalidConfig, where + ": " + msg);
}

// Strict view of one JSON object: every key must be consumed or listed.
class Section {
 public:
  Section(const json& j, std::string where, std::set<std::string> allowed) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) bad(where_, "expected an object");
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.count(key)) bad(where_, "unknown key '" + key + "'");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      bad(path(key), "wrong type");
    }
  }

  void get_size(const std::string& key, std::size_t& out) const {
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) bad(path(key), "expected a non-negative integer");
    out = v.get<std::size_t>();
  }

  void get_seed(const std::string& key, std::uint64_t& out) const {
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) bad(path(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void get_double(const std::string& key, double& out) const {
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) bad(path(key), "expected a number");
    out = v.get<double>();
  }

 private:
  const json& j_;
  std::string where_;
};

GeneratorConfig parse_generator(const json& j) {
  Section s(j, "data.generator",
            {"num_classes", "per_class_count", "input_dim", "cluster_sigma", "shift", "seed"});
  GeneratorConfig g;
  s.get("num_classes", g.num_classes);
  s.get("per_class_count", g.per_class_count);
  s.get_size("input_dim", g.input_dim);
  s.get_double("cluster_sigma", g.cluster_sigma);
  s.get_seed("seed", g.seed);
  if (s.has("shift")) {
    Section sh(s.raw("shift"), "data.generator.shift", {"rotation_angle", "translation", "scale", "noise_sigma"});
    sh.get_double("rotation_angle", g.shift.rotation_angle);
    sh.get("translation", g.shift.translation);
    sh.get_double("scale", g.shift.scale);
    sh.get_double("noise_sigma", g.shift.noise_sigma);
  }
  return g;
}

void parse_train(const Section& s, TrainConfig& t) {
  s.get_double("tau", t.tau);
  s.get_double("eta", t.eta);
  s.get_double("lr", t.lr);
  s.get_double("momentum", t.momentum);
  s.get_double("weight_decay", t.weight_decay);
  s.get_size("batch_source", t.batch_source);
  s.get_size("batch_target", t.batch_target);
  s.get("epochs", t.epochs);
  s.get_seed("seed", t.seed);
  s.get_size("feature_dim", t.feature_dim);
  s.get("hidden", t.hidden);
  if (s.has("objective")) {
    std::string o;
    s.get("objective", o);
    t.objective = objective_from_string(o);
  }
  s.get("renormalize_bank", t.renormalize_bank);
}

void parse_adapt(const Section& s, AdaptConfig& a) {
  s.get_double("lambda", a.lambda);
  if (s.has("da_mode")) {
    std::string m;
    s.get("da_mode", m);
    a.da_mode = da_mode_from_string(m);
  }
  s.get_double("target_entropy_weight", a.target_entropy_weight);
  s.get_double("lr", a.lr);
  s.get_double("momentum", a.momentum);
  s.get_double("weight_decay", a.weight_decay);
  s.get("epochs", a.epochs);
  s.get_size("batch", a.batch);
  s.get_seed("seed", a.seed);
  s.get("freeze_encoder", a.freeze_encoder);
  s.get_size("validation_per_class", a.validation_per_class);
}

std::optional<std::filesystem::path> opt_path(const Section& s, const std::string& key) {
  if (!s.has(key)) return std::nullopt;
  std::string p;
  s.get(key, p);
  return std::filesystem::path(p);
}

}  // namespace

void ExperimentConfig::apply_seed(std::uint64_t s) {
  if (data.generator) data.generator->seed = s;
  split.seed = s;
  pretrain.train.seed = s;
  adapt.adapt.seed = s;
  eval.eval.probe.seed = s;
}

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
  Section root(doc, "config", {"data", "split", "pretrain", "adapt", "eval", "output_dir", "seeds"});
  ExperimentConfig cfg;

  if (root.has("data")) {
    Section d(root.raw("data"), "data", {"generator", "source_csv", "target_csv", "split_json"});
    if (d.has("generator")) cfg.data.generator = parse_generator(d.raw("generator"));
    const bool any_csv = d.has("source_csv") || d.has("target_csv") || d.has("split_json");
    if (any_csv && cfg.data.generator) bad("data", "give either a generator or CSV paths, not both");
    if (any_csv) {
      if (!(d.has("source_csv") && d.has("target_csv") && d.has("split_json"))) {
        bad("data", "source_csv, target_csv and split_json are required together");
      }
      cfg.data.source_csv = *opt_path(d, "source_csv");
      cfg.data.target_csv = *opt_path(d, "target_csv");
      cfg.data.split_json = *opt_path(d, "split_json");
    }
  }
  if (!cfg.data.generator && cfg.data.source_csv.empty()) cfg.data.generator = GeneratorConfig{};

  if (root.has("split")) {
    Section s(root.raw("split"), "split", {"shots_per_class", "label_fraction", "seed"});
    if (s.has("shots_per_class")) {
      int shots = 0;
      s.get("shots_per_class", shots);
      cfg.split.shots_per_class = shots;
    }
    if (s.has("label_fraction")) {
      double f = 0.0;
      s.get_double("label_fraction", f);
      cfg.split.label_fraction = f;
    }
    s.get_seed("seed", cfg.split.seed);
  }
  if (!cfg.split.shots_per_class && !cfg.split.label_fraction) cfg.split.shots_per_class = 1;
  if (cfg.split.shots_per_class && cfg.split.label_fraction) {
    bad("split", "shots_per_class and label_fraction are mutually exclusive");
  }

  if (root.has("pretrain")) {
    Section s(root.raw("pretrain"), "pretrain",
              {"tau", "eta", "lr", "momentum", "weight_decay", "batch_source", "batch_target", "epochs", "seed",
               "feature_dim", "hidden", "objective", "renormalize_bank", "resume_from", "log_knn"});
    parse_train(s, cfg.pretrain.train);
    cfg.pretrain.resume_from = opt_path(s, "resume_from");
    s.get("log_knn", cfg.pretrain.log_knn);
  }
  cfg.pretrain.train.validate();

  if (root.has("adapt")) {
    Section s(root.raw("adapt"), "adapt",
              {"lambda", "da_mode", "target_entropy_weight", "lr", "momentum", "weight_decay", "epochs", "batch",
               "seed", "freeze_encoder", "validation_per_class", "model"});
    parse_adapt(s, cfg.adapt.adapt);
    cfg.adapt.model = opt_path(s, "model");
  }
  cfg.adapt.adapt.validate();

  if (root.has("eval")) {
    Section s(root.raw("eval"), "eval",
              {"k", "tau_knn", "retrieval_k", "probe", "model", "source_features", "target_features",
               "dump_retrieval"});
    s.get_size("k", cfg.eval.eval.k);
    s.get_double("tau_knn", cfg.eval.eval.tau_knn);
    s.get_size("retrieval_k", cfg.eval.eval.retrieval_k);
    if (s.has("probe")) {
      Section p(s.raw("probe"), "eval.probe", {"lr", "max_iterations", "tolerance", "l2", "seed"});
      p.get_double("lr", cfg.eval.eval.probe.lr);
      p.get("max_iterations", cfg.eval.eval.probe.max_iterations);
      p.get_double("tolerance", cfg.eval.eval.probe.tolerance);
      p.get_double("l2", cfg.eval.eval.probe.l2);
      p.get_seed("seed", cfg.eval.eval.probe.seed);
    }
    cfg.eval.model = opt_path(s, "model");
    cfg.eval.source_features = opt_path(s, "source_features");
    cfg.eval.target_features = opt_path(s, "target_features");
    s.get("dump_retrieval", cfg.eval.dump_retrieval);
    if (cfg.eval.source_features.has_value() != cfg.eval.target_features.has_value()) {
      bad("eval", "source_features and target_features go together");
    }
  }
  if (cfg.eval.eval.k == 0 || cfg.eval.eval.retrieval_k == 0) bad("eval", "k and retrieval_k must be >= 1");
  if (!(cfg.eval.eval.tau_knn > 0.0)) bad("eval.tau_knn", "must be positive");

  if (root.has("output_dir")) {
    std::string o;
    root.get("output_dir", o);
    cfg.output_dir = o;
  }
  if (root.has("seeds")) {
    const auto& arr = root.raw("seeds");
    if (!arr.is_array() || arr.empty()) bad("config.seeds", "expected a non-empty array");
    cfg.seeds.clear();
    for (const auto& v : arr) {
      if (!v.is_number_integer() || v.get<long long>() < 0) bad("config.seeds", "expected non-negative integers");
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_file(path)); }

std::string config_to_json(const ExperimentConfig& cfg) {
  json data = json::object();
  if (cfg.data.generator) {
    const auto& g = *cfg.data.generator;
    data["generator"] = {{"num_classes", g.num_classes},
                         {"per_class_count", g.per_class_count},
                         {"input_dim", g.input_dim},
                         {"cluster_sigma", g.cluster_sigma},
                         {"seed", g.seed},
                         {"shift",
                          {{"rotation_angle", g.shift.rotation_angle},
                           {"translation", g.shift.translation},
                           {"scale", g.shift.scale},
                           {"noise_sigma", g.shift.noise_sigma}}}};
  } else {
    data["source_csv"] = cfg.data.source_csv.string();
    data["target_csv"] = cfg.data.target_csv.string();
    data["split_json"] = cfg.data.split_json.string();
  }
  json split = {{"seed", cfg.split.seed}};
  if (cfg.split.shots_per_class) split["shots_per_class"] = *cfg.split.shots_per_class;
  if (cfg.split.label_fraction) split["label_fraction"] = *cfg.split.label_fraction;

  const auto& t = cfg.pretrain.train;
  json pretrain = {{"tau", t.tau},
                   {"eta", t.eta},
                   {"lr", t.lr},
                   {"momentum", t.momentum},
                   {"weight_decay", t.weight_decay},
                   {"batch_source", t.batch_source},
                   {"batch_target", t.batch_target},
                   {"epochs", t.epochs},
                   {"seed", t.seed},
                   {"feature_dim", t.feature_dim},
                   {"hidden", t.hidden},
                   {"objective", std::string(to_string(t.objective))},
                   {"renormalize_bank", t.renormalize_bank},
                   {"log_knn", cfg.pretrain.log_knn}};
  if (cfg.pretrain.resume_from) pretrain["resume_from"] = cfg.pretrain.resume_from->string();

  const auto& a = cfg.adapt.adapt;
  json adapt = {{"lambda", a.lambda},
                {"da_mode", std::string(to_string(a.da_mode))},
                {"target_entropy_weight", a.target_entropy_weight},
                {"lr", a.lr},
                {"momentum", a.momentum},
                {"weight_decay", a.weight_decay},
                {"epochs", a.epochs},
                {"batch", a.batch},
                {"seed", a.seed},
                {"freeze_encoder", a.freeze_encoder},
                {"validation_per_class", a.validation_per_class}};
  if (cfg.adapt.model) adapt["model"] = cfg.adapt.model->string();

  const auto& e = cfg.eval.eval;
  json ev = {{"k", e.k},
             {"tau_knn", e.tau_knn},
             {"retrieval_k", e.retrieval_k},
             {"dump_retrieval", cfg.eval.dump_retrieval},
             {"probe",
              {{"lr", e.probe.lr},
               {"max_iterations", e.probe.max_iterations},
               {"tolerance", e.probe.tolerance},
               {"l2", e.probe.l2},
               {"seed", e.probe.seed}}}};
  if (cfg.eval.model) ev["model"] = cfg.eval.model->string();
  if (cfg.eval.source_features) ev["source_features"] = cfg.eval.source_features->string();
  if (cfg.eval.target_features) ev["target_features"] = cfg.eval.target_features->string();

  json doc = {{"data", data},   {"split", split}, {"pretrain", pretrain},
              {"adapt", adapt}, {"eval", ev},     {"output_dir", cfg.output_dir.string()},
              {"seeds", cfg.seeds}};
  return doc.dump(1) + "\n";
}

}  // namespace cds
