#include "mnode/run_config.hpp"

#include "mnode/error.hpp"

#include <fstream>
#include <set>

namespace mnode {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and remembers which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& doc, std::string path) : path_(std::move(path)) {
    if (!doc.is_object()) throw ConfigError(where() + " must be an object");
    doc_ = &doc;
  }

  bool has(const std::string& key) const { return doc_->contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!doc_->contains(key)) return;
    seen_.insert(key);
    const json& v = (*doc_)[key];
    try {
      check_type<T>(v);
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key) + " has the wrong type (got " + v.dump() + ")");
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    if (!doc_->contains(key)) return;
    if ((*doc_)[key].is_null()) {
      seen_.insert(key);
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section((*doc_)[key], name(key));
  }

  const json* child_doc(const std::string& key) {
    if (!doc_->contains(key)) return nullptr;
    seen_.insert(key);
    return &(*doc_)[key];
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = doc_->begin(); it != doc_->end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError("unknown config key '" + name(it.key()) + "'");
  }

 private:
  template <typename T>
  static void check_type(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw json::type_error::create(302, "bool", nullptr);
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw json::type_error::create(302, "int", nullptr);
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && v.get<std::int64_t>() < 0)
          throw json::type_error::create(302, "unsigned", nullptr);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw json::type_error::create(302, "number", nullptr);
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw json::type_error::create(302, "string", nullptr);
    }
  }

  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json* doc_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void get_enum(Section& s, const std::string& key, Enum& out, Parse parse) {
  std::string name;
  if (!s.has(key)) return;
  s.get(key, name);
  try {
    out = parse(name);
  } catch (const ConfigError& e) {
    throw ConfigError(s.name(key) + ": " + e.what());
  }
}

void read_dataset(Section s, DatasetSpec& d) {
  s.get("kind", d.kind);
  if (d.kind != "idx" && d.kind != "series" && d.kind != "blobs" && d.kind != "circles")
    throw ConfigError("dataset.kind must be idx, series, blobs or circles (got '" + d.kind + "')");
  s.get("train_images", d.train_images);
  s.get("train_labels", d.train_labels);
  s.get("test_images", d.test_images);
  s.get("test_labels", d.test_labels);
  s.get_optional("train_limit", d.train_limit);
  s.get_optional("test_limit", d.test_limit);
  s.get("train_path", d.train_path);
  s.get("test_path", d.test_path);
  s.get("delimiter", d.delimiter);
  s.get("n", d.n);
  s.get("d", d.d);
  s.get("classes", d.classes);
  s.get("spread", d.spread);
  s.get("noise", d.noise);
  s.get("seed", d.seed);
  s.get("train_fraction", d.train_fraction);
  s.finish();
}

void read_graph(Section s, TrainConfig& t, double& threshold) {
  s.get("k", t.graph.k);
  get_enum(s, "sigma_mode", t.graph.sigma_mode, parse_sigma_mode);
  s.get("normalize", t.graph.normalize);
  s.get("threshold", threshold);
  s.finish();
}

void read_solver(Section s, SolverConfig& c) {
  get_enum(s, "method", c.method, parse_method);
  s.get("rtol", c.rtol);
  s.get("atol", c.atol);
  s.get("t0", c.t0);
  s.get("t1", c.t1);
  s.get("initial_step", c.initial_step);
  s.get("max_steps", c.max_steps);
  s.get("safety", c.safety);
  s.get("min_factor", c.min_factor);
  s.get("max_factor", c.max_factor);
  s.get("fixed_steps", c.fixed_steps);
  s.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
}

void read_trainer(Section s, TrainConfig& t) {
  get_enum(s, "variant", t.variant, parse_variant);
  s.get("latent_dim", t.latent_dim);
  s.get("encoder_hidden", t.encoder_hidden);
  s.get("field_hidden", t.field_hidden);
  get_enum(s, "field_activation", t.field_activation, parse_activation);
  s.get("time_dependent_field", t.time_dependent_field);
  s.get("augment_dims", t.augment_dims);
  s.get("a", t.a);
  s.get("b", t.b);
  s.get("lr", t.lr);
  s.get("batch_size", t.batch_size);
  s.get("epochs", t.epochs);
  s.get("lambda", t.lambda);
  s.get("normalize_l1", t.normalize_l1);
  s.get("freeze_encoder", t.freeze_encoder);
  s.get("recompute_graph_each_epoch", t.recompute_graph_each_epoch);
  s.get("pretrain_encoder_epochs", t.pretrain_encoder_epochs);
  s.get("nfe_budget", t.nfe_budget);
  s.get("seed", t.seed);
  s.finish();
}

void read_sphere(Section s, SphereConfig& c) {
  s.get("seed", c.seed);
  get_enum(s, "field", c.field, parse_sphere_field);
  s.get("n_train", c.n_train);
  s.get("n_test", c.n_test);
  s.get("horizon", c.horizon);
  s.get("waypoints", c.waypoints);
  s.get("hidden", c.hidden);
  s.get("epochs", c.epochs);
  s.get("lr", c.lr);
  s.get("tol", c.tol);
  s.get("truth_steps", c.truth_steps);
  s.get("sample_u_margin", c.sample_u_margin);
  s.get("radius", c.chart.radius);
  s.get("u_min", c.chart.u_min);
  s.get("u_max", c.chart.u_max);
  s.finish();
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  RunConfig cfg;
  Section root(doc, "");
  if (root.has("dataset")) read_dataset(root.child("dataset"), cfg.dataset);
  cfg.trainer = cfg.dataset.kind == "series" ? TrainConfig::for_series() : TrainConfig::for_images();
  if (root.has("trainer")) read_trainer(root.child("trainer"), cfg.trainer);
  if (root.has("graph")) read_graph(root.child("graph"), cfg.trainer, cfg.graph_threshold);
  if (root.has("solver")) read_solver(root.child("solver"), cfg.trainer.solver);
  if (root.has("sphere")) read_sphere(root.child("sphere"), cfg.sphere);
  if (root.has("sensitivity")) {
    Section s = root.child("sensitivity");
    s.get("dims", cfg.sensitivity_dims);
    s.finish();
  }
  root.get("seeds", cfg.seeds);
  root.get("output_dir", cfg.output_dir);
  root.finish();
  try {
    cfg.trainer.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("trainer: ") + e.what());
  }
  return cfg;
}

json to_json(const RunConfig& c) {
  const DatasetSpec& d = c.dataset;
  const TrainConfig& t = c.trainer;
  const SolverConfig& s = t.solver;
  const SphereConfig& sp = c.sphere;
  auto opt = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
  return {
      {"dataset",
       {{"kind", d.kind},
        {"train_images", d.train_images},
        {"train_labels", d.train_labels},
        {"test_images", d.test_images},
        {"test_labels", d.test_labels},
        {"train_limit", opt(d.train_limit)},
        {"test_limit", opt(d.test_limit)},
        {"train_path", d.train_path},
        {"test_path", d.test_path},
        {"delimiter", d.delimiter},
        {"n", d.n},
        {"d", d.d},
        {"classes", d.classes},
        {"spread", d.spread},
        {"noise", d.noise},
        {"seed", d.seed},
        {"train_fraction", d.train_fraction}}},
      {"trainer",
       {{"variant", std::string(to_string(t.variant))},
        {"latent_dim", t.latent_dim},
        {"encoder_hidden", t.encoder_hidden},
        {"field_hidden", t.field_hidden},
        {"field_activation", std::string(to_string(t.field_activation))},
        {"time_dependent_field", t.time_dependent_field},
        {"augment_dims", t.augment_dims},
        {"a", t.a},
        {"b", t.b},
        {"lr", t.lr},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"lambda", t.lambda},
        {"normalize_l1", t.normalize_l1},
        {"freeze_encoder", t.freeze_encoder},
        {"recompute_graph_each_epoch", t.recompute_graph_each_epoch},
        {"pretrain_encoder_epochs", t.pretrain_encoder_epochs},
        {"nfe_budget", t.nfe_budget},
        {"seed", t.seed}}},
      {"graph",
       {{"k", t.graph.k},
        {"sigma_mode", std::string(to_string(t.graph.sigma_mode))},
        {"normalize", t.graph.normalize},
        {"threshold", c.graph_threshold}}},
      {"solver",
       {{"method", std::string(to_string(s.method))},
        {"rtol", s.rtol},
        {"atol", s.atol},
        {"t0", s.t0},
        {"t1", s.t1},
        {"initial_step", s.initial_step},
        {"max_steps", s.max_steps},
        {"safety", s.safety},
        {"min_factor", s.min_factor},
        {"max_factor", s.max_factor},
        {"fixed_steps", s.fixed_steps}}},
      {"sphere",
       {{"seed", sp.seed},
        {"field", std::string(to_string(sp.field))},
        {"n_train", sp.n_train},
        {"n_test", sp.n_test},
        {"horizon", sp.horizon},
        {"waypoints", sp.waypoints},
        {"hidden", sp.hidden},
        {"epochs", sp.epochs},
        {"lr", sp.lr},
        {"tol", sp.tol},
        {"truth_steps", sp.truth_steps},
        {"sample_u_margin", sp.sample_u_margin},
        {"radius", sp.chart.radius},
        {"u_min", sp.chart.u_min},
        {"u_max", sp.chart.u_max}}},
      {"sensitivity", {{"dims", c.sensitivity_dims}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir}};
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override '" + std::string(assignment) + "' must look like key.path=value");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override key '" + key + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

std::filesystem::path required_file(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("missing required key " + key);
  const auto p = resolve_data_path(value);
  if (!std::filesystem::exists(p)) throw ConfigError(key + ": file not found: " + p.string());
  return p;
}

char delimiter_char(const std::string& d) {
  if (d == "auto") return 0;
  if (d == "tab") return '\t';
  if (d == "comma") return ',';
  if (d == "space") return ' ';
  if (d.size() == 1) return d[0];
  throw ConfigError("dataset.delimiter must be auto, tab, comma, space or one character");
}

}  // namespace

std::pair<Dataset, Dataset> load_datasets(const DatasetSpec& spec) {
  if (spec.kind == "idx") {
    Dataset tr = load_idx(required_file(spec.train_images, "dataset.train_images"),
                          required_file(spec.train_labels, "dataset.train_labels"), spec.train_limit);
    Dataset te = load_idx(required_file(spec.test_images, "dataset.test_images"),
                          required_file(spec.test_labels, "dataset.test_labels"), spec.test_limit);
    const int classes = std::max(tr.num_classes, te.num_classes);
    for (Dataset* d : {&tr, &te}) {
      d->num_classes = classes;
      d->class_names.clear();
      for (int c = 0; c < classes; ++c) d->class_names.push_back(std::to_string(c));
    }
    MinMaxScaler::apply(tr, te);
    return {std::move(tr), std::move(te)};
  }
  if (spec.kind == "series") {
    const char delim = delimiter_char(spec.delimiter);
    const auto train = required_file(spec.train_path, "dataset.train_path");
    if (spec.test_path.empty()) {
      const Dataset all = load_delimited_series(train, delim);
      return split(all, spec.train_fraction, spec.seed);
    }
    return load_series_pair(train, required_file(spec.test_path, "dataset.test_path"), delim);
  }
  const Dataset all = spec.kind == "blobs"
                          ? synth_blobs(spec.n, spec.d, spec.classes, spec.spread, spec.seed)
                          : synth_circles(spec.n, spec.noise, spec.seed, spec.d);
  return split(all, spec.train_fraction, spec.seed);
}

}  // namespace mnode
