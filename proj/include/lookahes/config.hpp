#ifndef LOOKAHES_CONFIG_HPP
#define LOOKAHES_CONFIG_HPP

// Experiment configuration: a strict TOML subset (flat tables, bare keys,
// strings / numbers / booleans / flat arrays, '#' comments) parsed into a
// fully resolved ExperimentConfig.  Unknown tables or keys are rejected with
// the offending name so typos fail loudly instead of silently using defaults.
// The resolved config serializes back to TOML, which makes every run output
// self-describing and rerunnable.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lookahes/acquisition.hpp"
#include "lookahes/costs.hpp"
#include "lookahes/kernels.hpp"
#include "lookahes/surrogate.hpp"

namespace lookahes {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// TOML subset parser.

struct TomlValue {
  enum class Kind { string, number, boolean, number_array, string_array };
  Kind kind = Kind::number;
  std::string str;
  double num = 0.0;
  bool flag = false;
  std::vector<double> nums;
  std::vector<std::string> strs;
};

using TomlTable = std::map<std::string, TomlValue>;
using TomlDoc = std::map<std::string, TomlTable>;

namespace config_detail {

inline std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Remove a trailing '#' comment, respecting double-quoted strings.
inline std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

inline bool valid_bare_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      return false;
  return true;
}

inline TomlValue parse_scalar(const std::string& raw, int line) {
  TomlValue v;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.kind = TomlValue::Kind::string;
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size() &&
          (raw[i + 1] == '"' || raw[i + 1] == '\\')) {
        out += raw[i + 1];
        ++i;
      } else {
        out += raw[i];
      }
    }
    v.str = out;
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.flag = (raw == "true");
    return v;
  }
  std::size_t used = 0;
  try {
    v.num = std::stod(raw, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != raw.size() || raw.empty())
    throw ConfigError("line " + std::to_string(line) + ": bad value '" + raw + "'");
  v.kind = TomlValue::Kind::number;
  return v;
}

inline std::vector<std::string> split_array_items(const std::string& inner,
                                                  int line) {
  std::vector<std::string> items;
  std::string cur;
  bool in_str = false;
  for (std::size_t i = 0; i < inner.size(); ++i) {
    char c = inner[i];
    if (c == '"' && (i == 0 || inner[i - 1] != '\\')) in_str = !in_str;
    if (c == ',' && !in_str) {
      items.push_back(strip(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_str)
    throw ConfigError("line " + std::to_string(line) + ": unterminated string");
  std::string last = strip(cur);
  if (!last.empty()) items.push_back(last);
  for (const std::string& it : items)
    if (it.empty())
      throw ConfigError("line " + std::to_string(line) + ": empty array element");
  return items;
}

inline TomlValue parse_value(const std::string& raw, int line) {
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']')
      throw ConfigError("line " + std::to_string(line) + ": unterminated array");
    TomlValue v;
    auto items = split_array_items(raw.substr(1, raw.size() - 2), line);
    if (items.empty()) {
      v.kind = TomlValue::Kind::number_array;
      return v;
    }
    TomlValue first = parse_scalar(items.front(), line);
    if (first.kind == TomlValue::Kind::string) {
      v.kind = TomlValue::Kind::string_array;
      for (const std::string& it : items) {
        TomlValue e = parse_scalar(it, line);
        if (e.kind != TomlValue::Kind::string)
          throw ConfigError("line " + std::to_string(line) + ": mixed array types");
        v.strs.push_back(e.str);
      }
    } else if (first.kind == TomlValue::Kind::number) {
      v.kind = TomlValue::Kind::number_array;
      for (const std::string& it : items) {
        TomlValue e = parse_scalar(it, line);
        if (e.kind != TomlValue::Kind::number)
          throw ConfigError("line " + std::to_string(line) + ": mixed array types");
        v.nums.push_back(e.num);
      }
    } else {
      throw ConfigError("line " + std::to_string(line) + ": arrays hold numbers or strings");
    }
    return v;
  }
  return parse_scalar(raw, line);
}

}  // namespace config_detail

inline TomlDoc parse_toml(const std::string& text) {
  TomlDoc doc;
  std::istringstream in(text);
  std::string raw_line, table;
  int line = 0;
  while (std::getline(in, raw_line)) {
    ++line;
    std::string s = config_detail::strip(config_detail::strip_comment(raw_line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("line " + std::to_string(line) + ": bad table header '" + s + "'");
      table = config_detail::strip(s.substr(1, s.size() - 2));
      if (!config_detail::valid_bare_key(table))
        throw ConfigError("line " + std::to_string(line) + ": bad table name '" + table + "'");
      doc[table];  // tables may be empty
      continue;
    }
    std::size_t eq = std::string::npos;
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') in_str = !in_str;
      if (s[i] == '=' && !in_str) {
        eq = i;
        break;
      }
    }
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    std::string key = config_detail::strip(s.substr(0, eq));
    std::string val = config_detail::strip(s.substr(eq + 1));
    if (!config_detail::valid_bare_key(key))
      throw ConfigError("line " + std::to_string(line) + ": bad key '" + key + "'");
    if (table.empty())
      throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                        "' outside any table");
    if (doc[table].count(key))
      throw ConfigError("line " + std::to_string(line) + ": duplicate key '" +
                        table + "." + key + "'");
    doc[table][key] = config_detail::parse_value(val, line);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Resolved experiment configuration.

struct EnvConfig {
  std::string name = "syngp";  // ackley{2,4,20,50} alpine holdertable levy
                               // styblinskitang cosine8 hartmann6 syngp
                               // syngp_discrete image
  double noise_sigma = 0.01;
  std::string image_path;
  int blur_radius = 50;
  int categories = 20;     // syngp_discrete lattice resolution
  double lengthscale = 0.5;
  double signal_var = 1.0;
  int calib_n = 0;         // 0 = default calibration budget
};

struct PolicyConfig {
  int hidden = 64;
  double lr = 1e-3;
  double vmf_kappa = 0.0;
  double perturb_magnitude = 0.05;
  int warmup_steps = 50;
};

struct RunConfig {
  int n_init = 10;
  int steps = 50;
  std::vector<std::uint64_t> seeds = {0};
  std::vector<double> start_point;  // empty: lowest-valued initial point
  int threads = 0;                  // 0: resolve from env var / hardware
};

struct ExperimentConfig {
  EnvConfig env;
  CostModel cost;
  AcqConfig acq;
  KernelKind kernel = KernelKind::rbf;
  FitConfig fit;
  int rff_features = 1024;
  PolicyConfig policy;
  RunConfig run;
};

namespace config_detail {

inline double want_number(const TomlValue& v, const std::string& where) {
  if (v.kind != TomlValue::Kind::number)
    throw ConfigError("key '" + where + "' must be a number");
  return v.num;
}

inline int want_int(const TomlValue& v, const std::string& where) {
  const double d = want_number(v, where);
  const double r = std::nearbyint(d);
  if (std::abs(d - r) > 1e-9 || std::abs(d) > 2147483646.0)
    throw ConfigError("key '" + where + "' must be an integer");
  return static_cast<int>(r);
}

inline bool want_bool(const TomlValue& v, const std::string& where) {
  if (v.kind != TomlValue::Kind::boolean)
    throw ConfigError("key '" + where + "' must be true or false");
  return v.flag;
}

inline std::string want_string(const TomlValue& v, const std::string& where) {
  if (v.kind != TomlValue::Kind::string)
    throw ConfigError("key '" + where + "' must be a quoted string");
  return v.str;
}

inline std::vector<double> want_num_array(const TomlValue& v,
                                          const std::string& where) {
  if (v.kind != TomlValue::Kind::number_array)
    throw ConfigError("key '" + where + "' must be an array of numbers");
  return v.nums;
}

// Apply a table through a key->handler map, rejecting unknown keys.
struct TableReader {
  const TomlTable* table;
  std::string name;
  std::map<std::string, bool> seen;

  bool has(const std::string& key) {
    seen[key] = true;
    return table != nullptr && table->count(key) > 0;
  }
  const TomlValue& get(const std::string& key) { return table->at(key); }
  std::string where(const std::string& key) const { return name + "." + key; }

  void finish() const {
    if (table == nullptr) return;
    for (const auto& kv : *table)
      if (!seen.count(kv.first))
        throw ConfigError("unknown key '" + name + "." + kv.first + "'");
  }
};

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// TOML-friendly number: guarantee a float marker so round-trips stay typed.
inline std::string fmt_number(double v) {
  std::string s = fmt_double(v);
  return s;
}

}  // namespace config_detail

inline ExperimentConfig config_from_toml(const TomlDoc& doc) {
  using namespace config_detail;
  for (const auto& kv : doc) {
    const std::string& t = kv.first;
    if (t != "env" && t != "cost" && t != "acquisition" && t != "surrogate" &&
        t != "policy" && t != "run")
      throw ConfigError("unknown table '[" + t + "]'");
  }
  ExperimentConfig cfg;

  TableReader env{doc.count("env") ? &doc.at("env") : nullptr, "env", {}};
  if (env.has("name")) cfg.env.name = want_string(env.get("name"), env.where("name"));
  if (env.has("noise_sigma"))
    cfg.env.noise_sigma = want_number(env.get("noise_sigma"), env.where("noise_sigma"));
  if (env.has("image_path"))
    cfg.env.image_path = want_string(env.get("image_path"), env.where("image_path"));
  if (env.has("blur_radius"))
    cfg.env.blur_radius = want_int(env.get("blur_radius"), env.where("blur_radius"));
  if (env.has("categories"))
    cfg.env.categories = want_int(env.get("categories"), env.where("categories"));
  if (env.has("lengthscale"))
    cfg.env.lengthscale = want_number(env.get("lengthscale"), env.where("lengthscale"));
  if (env.has("signal_var"))
    cfg.env.signal_var = want_number(env.get("signal_var"), env.where("signal_var"));
  if (env.has("calib_n"))
    cfg.env.calib_n = want_int(env.get("calib_n"), env.where("calib_n"));
  env.finish();
  if (cfg.env.noise_sigma < 0)
    throw ConfigError("key 'env.noise_sigma' must be >= 0");

  TableReader cost{doc.count("cost") ? &doc.at("cost") : nullptr, "cost", {}};
  if (cost.has("kind")) {
    const std::string k = want_string(cost.get("kind"), cost.where("kind"));
    if (k == "euclidean") cfg.cost = make_cost_model(CostKind::euclidean);
    else if (k == "manhattan") cfg.cost = make_cost_model(CostKind::manhattan);
    else if (k == "spotlight") cfg.cost = make_cost_model(CostKind::spotlight);
    else if (k == "nonmarkov_euclidean")
      cfg.cost = make_cost_model(CostKind::nonmarkov_euclidean);
    else
      throw ConfigError("key 'cost.kind': unknown cost kind '" + k + "'");
  }
  if (cost.has("k")) cfg.cost.k = want_number(cost.get("k"), cost.where("k"));
  if (cost.has("p")) cfg.cost.p = want_int(cost.get("p"), cost.where("p"));
  if (cost.has("r")) cfg.cost.r = want_number(cost.get("r"), cost.where("r"));
  if (cost.has("d")) cfg.cost.d = want_number(cost.get("d"), cost.where("d"));
  if (cost.has("m")) cfg.cost.m = want_number(cost.get("m"), cost.where("m"));
  if (cost.has("noise_sigma"))
    cfg.cost.cost_noise_sigma =
        want_number(cost.get("noise_sigma"), cost.where("noise_sigma"));
  if (cost.has("lambda"))
    cfg.cost.lambda = want_number(cost.get("lambda"), cost.where("lambda"));
  cost.finish();
  if (cfg.cost.p != 1 && cfg.cost.p != 2)
    throw ConfigError("key 'cost.p' must be 1 or 2");
  if (cfg.cost.r < 0) throw ConfigError("key 'cost.r' must be >= 0");

  TableReader acq{doc.count("acquisition") ? &doc.at("acquisition") : nullptr,
                  "acquisition", {}};
  if (acq.has("kind")) {
    const std::string k = want_string(acq.get("kind"), acq.where("kind"));
    try {
      cfg.acq.kind = acq_kind_from_name(k);
    } catch (const std::exception&) {
      throw ConfigError("key 'acquisition.kind': unknown acquisition '" + k + "'");
    }
  }
  if (acq.has("horizon"))
    cfg.acq.horizon = want_int(acq.get("horizon"), acq.where("horizon"));
  if (acq.has("restarts"))
    cfg.acq.restarts = want_int(acq.get("restarts"), acq.where("restarts"));
  if (acq.has("mc_samples"))
    cfg.acq.mc_samples = want_int(acq.get("mc_samples"), acq.where("mc_samples"));
  if (acq.has("beta")) cfg.acq.beta = want_number(acq.get("beta"), acq.where("beta"));
  if (acq.has("tau")) cfg.acq.tau = want_number(acq.get("tau"), acq.where("tau"));
  if (acq.has("grad_steps"))
    cfg.acq.grad_steps = want_int(acq.get("grad_steps"), acq.where("grad_steps"));
  if (acq.has("free_actions"))
    cfg.acq.free_actions = want_bool(acq.get("free_actions"), acq.where("free_actions"));
  if (acq.has("msl_lr"))
    cfg.acq.msl_lr = want_number(acq.get("msl_lr"), acq.where("msl_lr"));
  if (acq.has("baseline_lr"))
    cfg.acq.baseline_lr =
        want_number(acq.get("baseline_lr"), acq.where("baseline_lr"));
  acq.finish();
  if (cfg.acq.horizon < 0) throw ConfigError("key 'acquisition.horizon' must be >= 0");
  if (cfg.acq.restarts < 1) throw ConfigError("key 'acquisition.restarts' must be >= 1");
  if (cfg.acq.grad_steps < 0)
    throw ConfigError("key 'acquisition.grad_steps' must be >= 0");

  TableReader sur{doc.count("surrogate") ? &doc.at("surrogate") : nullptr,
                  "surrogate", {}};
  if (sur.has("kernel")) {
    const std::string k = want_string(sur.get("kernel"), sur.where("kernel"));
    try {
      cfg.kernel = kernel_kind_from_name(k);
    } catch (const std::exception&) {
      throw ConfigError("key 'surrogate.kernel': unknown kernel '" + k + "'");
    }
  }
  if (sur.has("mll_steps"))
    cfg.fit.adam_steps = want_int(sur.get("mll_steps"), sur.where("mll_steps"));
  if (sur.has("mll_lr"))
    cfg.fit.lr = want_number(sur.get("mll_lr"), sur.where("mll_lr"));
  if (sur.has("features"))
    cfg.rff_features = want_int(sur.get("features"), sur.where("features"));
  sur.finish();
  if (cfg.rff_features < 1)
    throw ConfigError("key 'surrogate.features' must be >= 1");

  TableReader pol{doc.count("policy") ? &doc.at("policy") : nullptr, "policy", {}};
  if (pol.has("hidden"))
    cfg.policy.hidden = want_int(pol.get("hidden"), pol.where("hidden"));
  if (pol.has("lr")) cfg.policy.lr = want_number(pol.get("lr"), pol.where("lr"));
  if (pol.has("vmf_kappa"))
    cfg.policy.vmf_kappa = want_number(pol.get("vmf_kappa"), pol.where("vmf_kappa"));
  if (pol.has("perturb_magnitude"))
    cfg.policy.perturb_magnitude =
        want_number(pol.get("perturb_magnitude"), pol.where("perturb_magnitude"));
  if (pol.has("warmup_steps"))
    cfg.policy.warmup_steps =
        want_int(pol.get("warmup_steps"), pol.where("warmup_steps"));
  pol.finish();
  if (cfg.policy.hidden < 1) throw ConfigError("key 'policy.hidden' must be >= 1");

  TableReader run{doc.count("run") ? &doc.at("run") : nullptr, "run", {}};
  if (run.has("n_init")) cfg.run.n_init = want_int(run.get("n_init"), run.where("n_init"));
  if (run.has("steps")) cfg.run.steps = want_int(run.get("steps"), run.where("steps"));
  if (run.has("seeds")) {
    cfg.run.seeds.clear();
    for (double s : want_num_array(run.get("seeds"), run.where("seeds"))) {
      const double r = std::nearbyint(s);
      if (std::abs(s - r) > 1e-9 || r < 0)
        throw ConfigError("key 'run.seeds' must hold nonnegative integers");
      cfg.run.seeds.push_back(static_cast<std::uint64_t>(r));
    }
    if (cfg.run.seeds.empty())
      throw ConfigError("key 'run.seeds' must not be empty");
  }
  if (run.has("start_point"))
    cfg.run.start_point =
        want_num_array(run.get("start_point"), run.where("start_point"));
  if (run.has("threads"))
    cfg.run.threads = want_int(run.get("threads"), run.where("threads"));
  run.finish();
  if (cfg.run.n_init < 1) throw ConfigError("key 'run.n_init' must be >= 1");
  if (cfg.run.steps < 0) throw ConfigError("key 'run.steps' must be >= 0");
  for (double v : cfg.run.start_point)
    if (!(v >= 0.0 && v <= 1.0))
      throw ConfigError("key 'run.start_point' coordinates must lie in [0,1]");

  // Cross-table resolution.
  if (cfg.env.name == "syngp_discrete") {
    if (cfg.env.categories < 2)
      throw ConfigError("key 'env.categories' must be >= 2");
    cfg.acq.discrete_categories = cfg.env.categories;
  }
  if (cfg.env.name == "image" && cfg.env.image_path.empty())
    throw ConfigError("key 'env.image_path' is required for the image environment");
  cfg.acq.lambda = cfg.cost.lambda;
  cfg.acq.vmf_kappa = cfg.policy.vmf_kappa;
  cfg.acq.perturb_magnitude = cfg.policy.perturb_magnitude;
  cfg.acq.policy_lr = cfg.policy.lr;
  cfg.acq.threads = cfg.run.threads;
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& toml_text) {
  return config_from_toml(parse_toml(toml_text));
}

// Serialize the fully resolved config (every key explicit).
inline std::string config_to_toml(const ExperimentConfig& cfg) {
  using config_detail::fmt_number;
  std::ostringstream out;
  out << "[env]\n";
  out << "name = \"" << cfg.env.name << "\"\n";
  out << "noise_sigma = " << fmt_number(cfg.env.noise_sigma) << "\n";
  out << "image_path = \"" << cfg.env.image_path << "\"\n";
  out << "blur_radius = " << cfg.env.blur_radius << "\n";
  out << "categories = " << cfg.env.categories << "\n";
  out << "lengthscale = " << fmt_number(cfg.env.lengthscale) << "\n";
  out << "signal_var = " << fmt_number(cfg.env.signal_var) << "\n";
  out << "calib_n = " << cfg.env.calib_n << "\n";
  out << "\n[cost]\n";
  out << "kind = \"" << cost_kind_name(cfg.cost.kind) << "\"\n";
  out << "k = " << fmt_number(cfg.cost.k) << "\n";
  out << "p = " << cfg.cost.p << "\n";
  out << "r = " << fmt_number(cfg.cost.r) << "\n";
  out << "d = " << fmt_number(cfg.cost.d) << "\n";
  out << "m = " << fmt_number(cfg.cost.m) << "\n";
  out << "noise_sigma = " << fmt_number(cfg.cost.cost_noise_sigma) << "\n";
  out << "lambda = " << fmt_number(cfg.cost.lambda) << "\n";
  out << "\n[acquisition]\n";
  out << "kind = \"" << acq_kind_name(cfg.acq.kind) << "\"\n";
  out << "horizon = " << cfg.acq.horizon << "\n";
  out << "restarts = " << cfg.acq.restarts << "\n";
  out << "mc_samples = " << cfg.acq.mc_samples << "\n";
  out << "beta = " << fmt_number(cfg.acq.beta) << "\n";
  out << "tau = " << fmt_number(cfg.acq.tau) << "\n";
  out << "grad_steps = " << cfg.acq.grad_steps << "\n";
  out << "free_actions = " << (cfg.acq.free_actions ? "true" : "false") << "\n";
  out << "msl_lr = " << fmt_number(cfg.acq.msl_lr) << "\n";
  out << "baseline_lr = " << fmt_number(cfg.acq.baseline_lr) << "\n";
  out << "\n[surrogate]\n";
  out << "kernel = \"" << kernel_kind_name(cfg.kernel) << "\"\n";
  out << "mll_steps = " << cfg.fit.adam_steps << "\n";
  out << "mll_lr = " << fmt_number(cfg.fit.lr) << "\n";
  out << "features = " << cfg.rff_features << "\n";
  out << "\n[policy]\n";
  out << "hidden = " << cfg.policy.hidden << "\n";
  out << "lr = " << fmt_number(cfg.policy.lr) << "\n";
  out << "vmf_kappa = " << fmt_number(cfg.policy.vmf_kappa) << "\n";
  out << "perturb_magnitude = " << fmt_number(cfg.policy.perturb_magnitude) << "\n";
  out << "warmup_steps = " << cfg.policy.warmup_steps << "\n";
  out << "\n[run]\n";
  out << "n_init = " << cfg.run.n_init << "\n";
  out << "steps = " << cfg.run.steps << "\n";
  out << "seeds = [";
  for (std::size_t i = 0; i < cfg.run.seeds.size(); ++i)
    out << (i ? ", " : "") << cfg.run.seeds[i];
  out << "]\n";
  out << "start_point = [";
  for (std::size_t i = 0; i < cfg.run.start_point.size(); ++i)
    out << (i ? ", " : "") << fmt_number(cfg.run.start_point[i]);
  out << "]\n";
  out << "threads = " << cfg.run.threads << "\n";
  return out.str();
}

// Grid overrides for sweeps: "table.key" plus a raw TOML scalar.
inline void apply_override(TomlDoc& doc, const std::string& dotted,
                           const std::string& raw_value) {
  const std::size_t dot = dotted.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= dotted.size())
    throw ConfigError("override key '" + dotted + "' must look like table.key");
  const std::string table = dotted.substr(0, dot);
  const std::string key = dotted.substr(dot + 1);
  const std::string raw = config_detail::strip(raw_value);
  TomlValue v;
  try {
    v = config_detail::parse_value(raw, 0);
  } catch (const ConfigError&) {  // bare word: treat as a string
    v.kind = TomlValue::Kind::string;
    v.str = raw;
  }
  doc[table][key] = v;
}

}  // namespace lookahes

#endif  // LOOKAHES_CONFIG_HPP
