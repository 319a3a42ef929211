#include "eftr/config.hpp"

#include <cctype>
#include <set>
#include <sstream>

#include "eftr/errors.hpp"
#include "eftr/io.hpp"

namespace eftr {

namespace {

// ---- TOML subset -----------------------------------------------------------

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

std::vector<std::string> split_key(const std::string& key, int line_no) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(key);
  while (std::getline(ss, cur, '.')) {
    cur = trim(cur);
    if (cur.size() >= 2 && cur.front() == '"' && cur.back() == '"') cur = cur.substr(1, cur.size() - 2);
    if (cur.empty()) throw ConfigError("empty key segment on line " + std::to_string(line_no));
    parts.push_back(cur);
  }
  if (parts.empty()) throw ConfigError("missing key on line " + std::to_string(line_no));
  return parts;
}

Json toml_scalar(const std::string& raw, int line_no) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError("missing value on line " + std::to_string(line_no));
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw ConfigError("unterminated string on line " + std::to_string(line_no));
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        const char c = v[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else {
        out += v[i];
      }
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '[') {
    if (v.back() != ']') throw ConfigError("arrays must close on the same line (line " + std::to_string(line_no) + ")");
    Json arr = Json::array();
    std::string cur;
    bool in_str = false;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      const char c = v[i];
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        if (!trim(cur).empty()) arr.push_back(toml_scalar(cur, line_no));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) arr.push_back(toml_scalar(cur, line_no));
    return arr;
  }
  std::string num;
  for (char c : v)
    if (c != '_') num += c;
  const bool integral = num.find_first_of(".eEn") == std::string::npos;
  if (integral) {
    try {
      std::size_t used = 0;
      const long long x = std::stoll(num, &used);
      if (used == num.size()) return x;
    } catch (const std::exception&) {
    }
  }
  double d = 0.0;
  if (parse_double(num, d)) return d;
  throw ConfigError("cannot parse value '" + v + "' on line " + std::to_string(line_no));
}

Json& descend(Json& root, const std::vector<std::string>& path, std::size_t count, int line_no) {
  Json* node = &root;
  for (std::size_t i = 0; i < count; ++i) {
    Json& next = (*node)[path[i]];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) throw ConfigError("key '" + path[i] + "' redefined as a table on line " + std::to_string(line_no));
    node = &next;
  }
  return *node;
}

// ---- typed field reader ----------------------------------------------------

class Fields {
 public:
  Fields(const Json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError("'" + name("") + "' must be a table");
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const Json& v = at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_unsigned()) {
            out = v.get<T>();
          } else {
            const long long x = v.get<long long>();
            if (x < 0) throw ConfigError("");
            out = static_cast<T>(x);
          }
        } else {
          out = v.get<T>();
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
        out = v.get<std::string>();
      } else {
        out = v.get<T>();
      }
    } catch (const std::exception&) {
      throw ConfigError("config field '" + name(key) + "' has the wrong type");
    }
  }

  void get_int_list(const std::string& key, std::vector<int>& out) {
    if (!has(key)) return;
    const Json& v = at(key);
    if (!v.is_array()) throw ConfigError("config field '" + name(key) + "' must be an array of integers");
    out.clear();
    for (const Json& e : v) {
      if (!e.is_number_integer()) throw ConfigError("config field '" + name(key) + "' must be an array of integers");
      out.push_back(e.get<int>());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config field '" + name(it.key()) + "'");
  }

 private:
  const Json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <class F>
auto named(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError("config field '" + field + "': " + e.what());
  } catch (const DomainError& e) {
    throw ConfigError("config field '" + field + "': " + e.what());
  }
}

Json basis_to_json(const BasisConfig& b) {
  if (b.kind == BasisConfig::Kind::Poly) return {{"kind", "poly"}, {"size", b.poly_size}};
  return {{"kind", "spline"}, {"degree", b.degree}, {"interior_knots", b.interior_knots}};
}

BasisConfig basis_from_json(const Json& j, const std::string& prefix, BasisConfig b) {
  Fields f(j, prefix);
  std::string kind = b.kind == BasisConfig::Kind::Poly ? "poly" : "spline";
  f.get("kind", kind);
  if (kind == "spline")
    b.kind = BasisConfig::Kind::Spline;
  else if (kind == "poly")
    b.kind = BasisConfig::Kind::Poly;
  else
    throw ConfigError("config field '" + prefix + ".kind' must be 'spline' or 'poly'");
  f.get("degree", b.degree);
  f.get("interior_knots", b.interior_knots);
  f.get("size", b.poly_size);
  f.finish();
  if (b.degree < 0 || b.interior_knots < 0 || b.poly_size < 1)
    throw ConfigError("config field '" + prefix + "' has a negative degree/knot count or empty size");
  return b;
}

}  // namespace

Json parse_toml(const std::string& text) {
  Json root = Json::object();
  std::vector<std::string> table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw ConfigError("malformed table header on line " + std::to_string(line_no));
      table = split_key(s.substr(1, s.size() - 2), line_no);
      descend(root, table, table.size(), line_no);
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value' on line " + std::to_string(line_no));
    std::vector<std::string> path = table;
    const std::vector<std::string> key = split_key(s.substr(0, eq), line_no);
    path.insert(path.end(), key.begin(), key.end());
    Json& parent = descend(root, path, path.size() - 1, line_no);
    if (parent.contains(path.back())) throw ConfigError("duplicate key '" + path.back() + "' on line " + std::to_string(line_no));
    parent[path.back()] = toml_scalar(s.substr(eq + 1), line_no);
  }
  return root;
}

Json load_config_file(const std::string& path) {
  const std::string text = read_file(path);
  const bool toml = path.size() >= 5 && path.compare(path.size() - 5, 5, ".toml") == 0;
  if (toml) return parse_toml(text);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

void apply_override(Json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::vector<std::string> path = split_key(assignment.substr(0, eq), 0);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json& parent = descend(doc, path, path.size() - 1, 0);
  parent[path.back()] = value;
}

Json to_json(const DGPSpec& s) {
  Json j = {{"scenario", to_string(s.scenario)},
            {"treatment", to_string(s.treatment)},
            {"family", to_string(s.family.kind)},
            {"dispersion", s.family.dispersion},
            {"noise_mean", s.noise_mean},
            {"noise_sd", s.noise_sd}};
  if (s.scenario == Scenario::SemiSynthetic) {
    j["preset"] = to_string(s.semi.preset);
    j["w"] = s.semi.w;
    j["alpha"] = s.semi.alpha;
    j["beta"] = s.semi.beta;
    j["gamma"] = s.semi.gamma;
    j["projection_seed"] = s.semi.projection_seed;
    j["strict_poisson_cap"] = s.semi.strict_poisson_cap;
  }
  return j;
}

DGPSpec dgp_from_json(const Json& doc) {
  Fields f(doc, "dgp");
  std::string scenario = "synthetic", treatment = "binary", family = "bernoulli", preset = "news";
  f.get("scenario", scenario);
  f.get("treatment", treatment);
  f.get("family", family);
  f.get("preset", preset);
  DGPSpec s;
  s.scenario = named("dgp.scenario", [&] { return scenario_from_string(scenario); });
  s.treatment = named("dgp.treatment", [&] { return treatment_kind_from_string(treatment); });
  s.family.kind = named("dgp.family", [&] { return family_kind_from_string(family); });
  f.get("dispersion", s.family.dispersion);
  named("dgp.dispersion", [&] {
    s.family.validate();
    return 0;
  });
  f.get("noise_mean", s.noise_mean);
  f.get("noise_sd", s.noise_sd);
  if (!(s.noise_sd > 0.0)) throw ConfigError("config field 'dgp.noise_sd' must be positive");
  s.semi = SemiSyntheticParams::for_preset(named("dgp.preset", [&] { return preset_from_string(preset); }),
                                           s.treatment);
  f.get("w", s.semi.w);
  f.get("alpha", s.semi.alpha);
  f.get("beta", s.semi.beta);
  f.get("gamma", s.semi.gamma);
  f.get("projection_seed", s.semi.projection_seed);
  f.get("strict_poisson_cap", s.semi.strict_poisson_cap);
  f.finish();
  return s;
}

Json to_json(const ModelConfig& c) {
  return {{"treatment", to_string(c.treatment)},
          {"family", to_string(c.family.kind)},
          {"dispersion", c.family.dispersion},
          {"input_dim", c.input_dim},
          {"rep_dims", c.rep_dims},
          {"outcome_dims", c.outcome_dims},
          {"density_dims", c.density_dims},
          {"density_grid", c.density_grid},
          {"outcome_basis", basis_to_json(c.outcome_basis)},
          {"eps_basis", basis_to_json(c.eps_basis)},
          {"hidden_activation", to_string(c.hidden_activation)},
          {"outcome_activation", to_string(c.outcome_activation)},
          {"density_stop_gradient", c.density_stop_gradient}};
}

namespace {

// Architecture fields shared by run configs and checkpoints.
void read_architecture(Fields& f, ModelConfig& c, const std::string& prefix, bool* activation_set) {
  f.get_int_list("rep_dims", c.rep_dims);
  f.get_int_list("outcome_dims", c.outcome_dims);
  f.get_int_list("density_dims", c.density_dims);
  f.get("density_grid", c.density_grid);
  if (f.has("outcome_basis")) c.outcome_basis = basis_from_json(f.at("outcome_basis"), prefix + ".outcome_basis", c.outcome_basis);
  if (f.has("eps_basis")) c.eps_basis = basis_from_json(f.at("eps_basis"), prefix + ".eps_basis", c.eps_basis);
  std::string act;
  if (f.has("hidden_activation")) {
    f.get("hidden_activation", act);
    c.hidden_activation = named(prefix + ".hidden_activation", [&] { return activation_from_string(act); });
  }
  if (f.has("outcome_activation")) {
    f.get("outcome_activation", act);
    c.outcome_activation = named(prefix + ".outcome_activation", [&] { return activation_from_string(act); });
    if (activation_set) *activation_set = true;
  }
  f.get("density_stop_gradient", c.density_stop_gradient);
}

}  // namespace

ModelConfig model_config_from_json(const Json& doc) {
  Fields f(doc, "model");
  ModelConfig c;
  std::string s;
  f.get("treatment", s);
  c.treatment = named("model.treatment", [&] { return treatment_kind_from_string(s); });
  f.get("family", s);
  c.family.kind = named("model.family", [&] { return family_kind_from_string(s); });
  f.get("dispersion", c.family.dispersion);
  f.get("input_dim", c.input_dim);
  c.outcome_activation = ModelConfig::default_outcome_activation(c.family);
  read_architecture(f, c, "model", nullptr);
  f.finish();
  named("model", [&] {
    c.validate();
    return 0;
  });
  return c;
}

Json to_json(const RunConfig& r) {
  Json model = to_json(r.model);
  for (const char* k : {"treatment", "family", "dispersion", "input_dim"}) model.erase(k);
  model["eps_kn_auto"] = r.eps_kn_auto;
  Json dgp = to_json(r.dgp);
  if (!r.covariates_path.empty()) dgp["covariates"] = r.covariates_path;
  return {{"schema_version", RunConfig::kSchemaVersion},
          {"seed", r.seed},
          {"n", r.n},
          {"replications", r.replications},
          {"fractions", r.fractions},
          {"dgp", dgp},
          {"model", model},
          {"loss",
           {{"beta", r.loss.beta},
            {"treg_enabled", r.loss.treg_enabled},
            {"detach_nuisances_in_treg", r.loss.detach_nuisances_in_treg}}},
          {"train",
           {{"epochs", r.train.epochs},
            {"patience", r.train.patience},
            {"lr", r.train.lr},
            {"batch_size", r.train.batch_size},
            {"full_batch_max", r.train.full_batch_max},
            {"optimizer", to_string(r.train.optimizer)},
            {"polish_tol", r.train.polish_tol}}},
          {"eval", {{"dose_grid_points", r.dose_grid_points}}}};
}

RunConfig run_config_from_json(const Json& doc) {
  Fields top(doc, "");
  int version = RunConfig::kSchemaVersion;
  top.get("schema_version", version);
  if (version != RunConfig::kSchemaVersion)
    throw ConfigError("config field 'schema_version' must be " + std::to_string(RunConfig::kSchemaVersion));

  Json dgp_doc = top.has("dgp") ? top.at("dgp") : Json::object();
  if (!dgp_doc.is_object()) throw ConfigError("'dgp' must be a table");
  std::string covariates;
  if (dgp_doc.contains("covariates")) {
    if (!dgp_doc["covariates"].is_string()) throw ConfigError("config field 'dgp.covariates' has the wrong type");
    covariates = dgp_doc["covariates"].get<std::string>();
    dgp_doc.erase("covariates");
  }
  RunConfig r = RunConfig::for_dgp(dgp_from_json(dgp_doc));
  r.covariates_path = covariates;

  top.get("seed", r.seed);
  top.get("n", r.n);
  top.get("replications", r.replications);
  if (top.has("fractions")) {
    const Json& fr = top.at("fractions");
    if (!fr.is_array() || fr.size() != 3) throw ConfigError("config field 'fractions' must be an array of 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!fr[i].is_number()) throw ConfigError("config field 'fractions' must be an array of 3 numbers");
      r.fractions[i] = fr[i].get<double>();
    }
  }
  if (top.has("model")) {
    Json m = top.at("model");
    if (!m.is_object()) throw ConfigError("'model' must be a table");
    if (m.contains("eps_kn_auto")) {
      if (!m["eps_kn_auto"].is_boolean()) throw ConfigError("config field 'model.eps_kn_auto' has the wrong type");
      r.eps_kn_auto = m["eps_kn_auto"].get<bool>();
      m.erase("eps_kn_auto");
    }
    Fields f(m, "model");
    read_architecture(f, r.model, "model", nullptr);
    f.finish();
  }
  if (top.has("loss")) {
    Fields f(top.at("loss"), "loss");
    f.get("beta", r.loss.beta);
    f.get("treg_enabled", r.loss.treg_enabled);
    f.get("detach_nuisances_in_treg", r.loss.detach_nuisances_in_treg);
    f.finish();
  }
  if (top.has("train")) {
    Fields f(top.at("train"), "train");
    f.get("epochs", r.train.epochs);
    f.get("patience", r.train.patience);
    f.get("lr", r.train.lr);
    f.get("batch_size", r.train.batch_size);
    f.get("full_batch_max", r.train.full_batch_max);
    std::string opt = to_string(r.train.optimizer);
    f.get("optimizer", opt);
    r.train.optimizer = named("train.optimizer", [&] { return optimizer_from_string(opt); });
    f.get("polish_tol", r.train.polish_tol);
    f.finish();
  }
  if (top.has("eval")) {
    Fields f(top.at("eval"), "eval");
    f.get("dose_grid_points", r.dose_grid_points);
    f.finish();
  }
  top.finish();
  r.validate();
  return r;
}

std::string config_hash(const RunConfig& run) { return hex64(fnv1a64(to_json(run).dump())); }

Json checkpoint_to_json(const TrainedModel& tm, const std::string& hash) {
  const Eigen::VectorXd& p = tm.model.params().values();
  Json j = {{"schema_version", 1},
            {"kind", "eftr-checkpoint"},
            {"model_config", to_json(tm.model.config())},
            {"params", std::vector<double>(p.data(), p.data() + p.size())},
            {"meta",
             {{"epochs", tm.meta.epochs},
              {"best_epoch", tm.meta.best_epoch},
              {"final_train_loss", tm.meta.final_train_loss},
              {"best_val_loss", tm.meta.best_val_loss},
              {"seed", tm.meta.seed},
              {"eps_stationarity", tm.meta.eps_stationarity}}}};
  if (!hash.empty()) j["config_hash"] = hash;
  return j;
}

TrainedModel checkpoint_from_json(const Json& doc) {
  if (!doc.is_object() || doc.value("kind", "") != "eftr-checkpoint") throw ConfigError("not a model checkpoint");
  if (!doc.contains("model_config") || !doc.contains("params")) throw ConfigError("checkpoint lacks model_config/params");
  TrainedModel tm{Model(model_config_from_json(doc.at("model_config"))), {}};
  const Json& p = doc.at("params");
  if (!p.is_array() || static_cast<Eigen::Index>(p.size()) != tm.model.params().size())
    throw ConfigError("checkpoint parameter count does not match its architecture");
  Eigen::VectorXd& v = tm.model.params().values();
  for (std::size_t i = 0; i < p.size(); ++i) v(static_cast<Eigen::Index>(i)) = p[i].get<double>();
  if (doc.contains("meta")) {
    const Json& m = doc.at("meta");
    tm.meta.epochs = m.value("epochs", 0L);
    tm.meta.best_epoch = m.value("best_epoch", 0L);
    tm.meta.final_train_loss = m.value("final_train_loss", 0.0);
    tm.meta.best_val_loss = m.value("best_val_loss", 0.0);
    tm.meta.seed = m.value("seed", std::uint64_t{0});
    tm.meta.eps_stationarity = m.value("eps_stationarity", 0.0);
  }
  return tm;
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

}  // namespace eftr
