#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gnfeat/error.hpp"
#include "gnfeat/experiments.hpp"
#include "gnfeat/serialize.hpp"

namespace gnfeat {

using nlohmann::json;

namespace {

// Reads fields of one JSON object, remembering which keys were consumed so
// that leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const std::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(field(key) + ": required field is missing");
    return get<T>(key, T{});
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& sub(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) throw ConfigError(field(item.key()) + ": unknown field");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "" : path_ + ": "; }
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename Fn>
void checked(const std::string& field, Fn&& fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

Activation parse_activation_json(const json& j, const std::string& path) {
  if (j.is_string()) {
    Activation a;
    checked(path, [&] { a.kind = parse_activation_kind(j.get<std::string>()); });
    return a;
  }
  ObjectReader r(j, path);
  Activation a;
  checked(r.field("kind"), [&] { a.kind = parse_activation_kind(r.get<std::string>("kind", "relu")); });
  a.beta = r.get<double>("beta", 1.0);
  r.finish();
  checked(path, [&] { a.validate(); });
  return a;
}

TeacherSpec parse_teacher(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  TeacherSpec t;
  t.d = r.get<Eigen::Index>("d", t.d);
  t.M_star = r.get<Eigen::Index>("M_star", t.M_star);
  if (r.has("activation")) t.act = parse_activation_json(r.sub("activation"), r.field("activation"));
  checked(r.field("scaling"), [&] { t.scaling = parse_scaling(r.get<std::string>("scaling", "mean_field")); });
  t.seed = r.get<std::uint64_t>("seed", 0);
  r.finish();
  checked(path, [&] { t.validate(); });
  return t;
}

DampingConfig parse_damping(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  DampingConfig d;
  d.alpha = r.get<double>("alpha", d.alpha);
  d.floor = r.get<double>("floor", d.floor);
  d.recompute_every = r.get<int>("recompute_every", d.recompute_every);
  r.finish();
  checked(path, [&] { d.validate(); });
  return d;
}

TrainConfig parse_train(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  TrainConfig c;
  c.step_size = r.get<double>("step_size", c.step_size);
  c.max_iters = r.get<std::int64_t>("max_iters", c.max_iters);
  c.target_loss = r.get<double>("target_loss", c.target_loss);
  c.stop_loss = r.get<double>("stop_loss", c.stop_loss);
  c.log_every = r.get<std::int64_t>("log_every", 0);
  checked(r.field("hessian"), [&] { c.hessian = parse_hessian_mode(r.get<std::string>("hessian", "identity")); });
  if (r.has("damping")) c.damping = parse_damping(r.sub("damping"), r.field("damping"));
  r.finish();
  return c;
}

json activation_json(const Activation& a) { return json{{"kind", to_string(a.kind)}, {"beta", a.beta}}; }

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace

void to_json(json& j, const Activation& a) { j = activation_json(a); }
void from_json(const json& j, Activation& a) { a = parse_activation_json(j, "activation"); }

void to_json(json& j, const TeacherSpec& t) {
  j = json{{"d", t.d}, {"M_star", t.M_star}, {"activation", t.act}, {"scaling", to_string(t.scaling)}, {"seed", t.seed}};
}
void from_json(const json& j, TeacherSpec& t) { t = parse_teacher(j, "teacher"); }

void to_json(json& j, const DatasetManifest& m) {
  j = json{{"teacher", m.teacher},
           {"data_seed", m.data_seed},
           {"N", m.N},
           {"N_test", m.N_test},
           {"train_attempt", m.train_attempt}};
}
void from_json(const json& j, DatasetManifest& m) {
  m.teacher = j.at("teacher").get<TeacherSpec>();
  m.data_seed = j.at("data_seed").get<std::uint64_t>();
  m.N = j.at("N").get<Eigen::Index>();
  m.N_test = j.at("N_test").get<Eigen::Index>();
  m.train_attempt = j.at("train_attempt").get<int>();
}

void to_json(json& j, const DampingConfig& d) {
  j = json{{"alpha", d.alpha}, {"floor", d.floor}, {"recompute_every", d.recompute_every}};
}
void from_json(const json& j, DampingConfig& d) { d = parse_damping(j, "damping"); }

void to_json(json& j, const TrainConfig& c) {
  j = json{{"step_size", c.step_size},   {"max_iters", c.max_iters}, {"target_loss", c.target_loss},
           {"stop_loss", c.stop_loss},   {"log_every", c.log_every}, {"hessian", to_string(c.hessian)},
           {"damping", c.damping}};
}
void from_json(const json& j, TrainConfig& c) { c = parse_train(j, "train"); }

void RunConfig::resolve_defaults() {
  train.method = method == Method::RF ? Method::GN : method;
  if (train.log_every <= 0) train.log_every = std::max<std::int64_t>(1, train.max_iters / 500);
}

void RunConfig::validate() const {
  if (name.empty()) throw ConfigError("name: must not be empty");
  if (name.find_first_of("/\\") != std::string::npos) throw ConfigError("name: must not contain path separators");
  if (!data.dataset_path) {
    checked("data.teacher", [&] { data.teacher.validate(); });
    if (data.N < 1) throw ConfigError("data.N: must be >= 1");
    if (data.N_test < 0) throw ConfigError("data.N_test: must be >= 0");
    if (student.M < 1) throw ConfigError("student.M: must be >= 1");
  }
  if (student.M < 1) throw ConfigError("student.M: must be >= 1");
  if (!(student.tau0 >= 0.0)) throw ConfigError("student.tau0: must be >= 0");
  checked("student.activation", [&] { student.act.validate(); });
  if (method != Method::RF) {
    TrainConfig t = train;
    t.method = method;
    if (t.log_every <= 0) t.log_every = 1;
    checked("train", [&] { t.validate(); });
  }
}

json to_json(const RunConfig& cfg) {
  json data{{"N", cfg.data.N}, {"N_test", cfg.data.N_test}, {"data_seed", cfg.data.data_seed},
            {"teacher", cfg.data.teacher}};
  if (cfg.data.dataset_path) data["dataset"] = *cfg.data.dataset_path;
  return json{{"name", cfg.name},
              {"method", to_string(cfg.method)},
              {"data", data},
              {"student",
               {{"M", cfg.student.M},
                {"tau0", cfg.student.tau0},
                {"activation", cfg.student.act},
                {"scaling", to_string(cfg.student.scaling)},
                {"init_seed", cfg.student.init_seed}}},
              {"train", cfg.train},
              {"metrics", {{"test_lrfit", cfg.metrics.test_lrfit}, {"sigma_star", cfg.metrics.sigma_star}}}};
}

RunConfig run_config_from_json(const json& j) {
  ObjectReader r(j, "");
  RunConfig cfg;
  cfg.name = r.get<std::string>("name", cfg.name);
  checked("method", [&] { cfg.method = parse_method(r.get<std::string>("method", "GN")); });
  if (r.has("data")) {
    ObjectReader d(r.sub("data"), "data");
    if (d.has("teacher")) cfg.data.teacher = parse_teacher(d.sub("teacher"), "data.teacher");
    cfg.data.N = d.get<Eigen::Index>("N", cfg.data.N);
    cfg.data.N_test = d.get<Eigen::Index>("N_test", cfg.data.N_test);
    cfg.data.data_seed = d.get<std::uint64_t>("data_seed", 0);
    if (d.has("dataset")) cfg.data.dataset_path = d.get<std::string>("dataset", "");
    d.finish();
  }
  if (r.has("student")) {
    ObjectReader s(r.sub("student"), "student");
    cfg.student.M = s.get<Eigen::Index>("M", cfg.student.M);
    cfg.student.tau0 = s.get<double>("tau0", cfg.student.tau0);
    if (s.has("activation")) cfg.student.act = parse_activation_json(s.sub("activation"), "student.activation");
    checked("student.scaling",
            [&] { cfg.student.scaling = parse_scaling(s.get<std::string>("scaling", "mean_field")); });
    cfg.student.init_seed = s.get<std::uint64_t>("init_seed", 0);
    s.finish();
  }
  if (r.has("train")) cfg.train = parse_train(r.sub("train"), "train");
  if (r.has("metrics")) {
    ObjectReader m(r.sub("metrics"), "metrics");
    cfg.metrics.test_lrfit = m.get<bool>("test_lrfit", true);
    cfg.metrics.sigma_star = m.get<bool>("sigma_star", true);
    m.finish();
  }
  r.finish();
  cfg.resolve_defaults();
  cfg.validate();
  return cfg;
}

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not of the form key=value");
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    json* node = &j;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      json& next = (*node)[parts[i]];
      if (next.is_null()) next = json::object();
      if (!next.is_object()) throw ConfigError("override '" + key + "': " + parts[i] + " is not an object");
      node = &next;
    }
    (*node)[parts.back()] = value;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json j = read_json_file(path);
  apply_overrides(j, overrides);
  return run_config_from_json(j);
}

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "runs";
}

void SweepSpec::validate() const {
  if (methods.empty()) throw ConfigError("methods: must not be empty");
  if (tau0_grid.empty()) throw ConfigError("tau0_grid: must not be empty");
  if (N_grid.empty()) throw ConfigError("N_grid: must not be empty");
  if (M_grid.empty()) throw ConfigError("M_grid: must not be empty");
  if (seeds.empty()) throw ConfigError("seeds: must not be empty");
  for (Method m : methods) {
    if (m != Method::RF && step_grid.empty()) throw ConfigError("step_grid: required for GN/GD");
  }
  for (double s : step_grid)
    if (!(s > 0.0)) throw ConfigError("step_grid: steps must be > 0");
  for (double t : tau0_grid)
    if (!(t >= 0.0)) throw ConfigError("tau0_grid: values must be >= 0");
  if (budget_gn < 0 || budget_gd < 0) throw ConfigError("budgets: must be >= 0");
}

SweepSpec sweep_spec_from_json(const json& j) {
  ObjectReader r(j, "");
  SweepSpec s;
  s.name = r.get<std::string>("name", s.name);
  if (r.has("methods")) {
    s.methods.clear();
    for (const auto& m : r.sub("methods")) {
      checked("methods", [&] { s.methods.push_back(parse_method(m.get<std::string>())); });
    }
  }
  s.tau0_grid = r.get<std::vector<double>>("tau0_grid", {});
  s.step_grid = r.get<std::vector<double>>("step_grid", {});
  s.N_grid = r.get<std::vector<Eigen::Index>>("N_grid", {});
  s.M_grid = r.get<std::vector<Eigen::Index>>("M_grid", {});
  s.seeds = r.get<std::vector<std::uint64_t>>("seeds", {0});
  if (r.has("activations")) {
    for (const auto& a : r.sub("activations")) s.activations.push_back(parse_activation_json(a, "activations"));
  }
  if (r.has("budgets")) {
    ObjectReader b(r.sub("budgets"), "budgets");
    s.budget_gn = b.get<std::int64_t>("GN", s.budget_gn);
    s.budget_gd = b.get<std::int64_t>("GD", s.budget_gd);
    b.finish();
  }
  json base = r.has("base") ? r.sub("base") : json::object();
  r.finish();
  s.base = run_config_from_json(base);
  if (s.N_grid.empty()) s.N_grid = {s.base.data.N};
  if (s.M_grid.empty()) s.M_grid = {s.base.student.M};
  if (s.tau0_grid.empty()) s.tau0_grid = {s.base.student.tau0};
  s.validate();
  return s;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json j = read_json_file(path);
  apply_overrides(j, overrides);
  return sweep_spec_from_json(j);
}

}  // namespace gnfeat
