#include "rht/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rht/errors.hpp"

namespace rht {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

// Environment overrides: RHT_ + uppercased path with '.' -> '_'.
void apply_env_overrides(json& j, const std::string& path) {
  if (j.is_object()) {
    for (auto& [key, value] : j.items()) {
      apply_env_overrides(value, path.empty() ? key : path + "." + key);
    }
    return;
  }
  std::string name = "RHT_";
  for (const char c : path) {
    name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  const char* env = std::getenv(name.c_str());
  if (!env) return;
  const std::string text(env);
  try {
    if (j.is_string()) {
      j = text;
    } else if (j.is_boolean()) {
      if (text == "true" || text == "1") j = true;
      else if (text == "false" || text == "0") j = false;
      else bad(path, "environment override '" + text + "' is not a boolean");
    } else if (j.is_number_unsigned()) {
      j = std::stoull(text);
    } else if (j.is_number_integer()) {
      j = std::stoll(text);
    } else if (j.is_number_float()) {
      j = std::stod(text);
    } else if (j.is_array()) {
      j = json::parse(text);
      if (!j.is_array()) bad(path, "environment override must be a JSON array");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    bad(path, "environment override '" + text + "' has the wrong type");
  }
}

// Typed extraction with unknown-key rejection.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_, "must be an object");
  }

  ~Section() = default;

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        bad(path_.empty() ? key : path_ + "." + key,
            "unknown key (check docs/formats.md for the accepted set)");
      }
      (void)value;
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const std::string& key) { return j_.at(key); }

  std::string child_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      bad(child_path(key), std::string("wrong type (") + e.what() + ")");
    }
  }

  void get_positive(const std::string& key, double& out) {
    get(key, out);
    if (!(out > 0.0)) bad(child_path(key), "must be positive");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_pair(Section& sec, const std::string& key, std::array<double, 2>& out) {
  if (!sec.has(key)) return;
  const json& v = sec.at(key);
  if (v.is_number()) {
    out[0] = out[1] = v.get<double>();
  } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    out[0] = v[0].get<double>();
    out[1] = v[1].get<double>();
  } else {
    bad(sec.child_path(key), "must be a number or a two-element array");
  }
}

void parse_dataset(const json& j, const std::string& path, DatasetSpec& spec) {
  Section sec(j, path);
  if (sec.has("kind")) {
    try {
      spec.kind = dataset_kind_from_string(sec.at("kind").get<std::string>());
    } catch (const std::exception& e) {
      bad(sec.child_path("kind"), e.what());
    }
  }
  sec.get("n_train", spec.n_train);
  sec.get("n_test", spec.n_test);
  sec.get("dim", spec.dim);
  sec.get("noise", spec.noise);
  sec.get("mean_scale", spec.mean_scale);
  sec.get("cov_scale", spec.cov_scale);
  sec.get("mean_shift", spec.mean_shift);
  sec.get("means", spec.means);
  sec.get("weights", spec.weights);
  sec.get("seed", spec.seed);
  sec.get("path1", spec.path1);
  sec.get("path2", spec.path2);
  sec.finish();
}

void parse_feature_map(const json& j, const std::string& path, FeatureMapSpec& spec) {
  Section sec(j, path);
  if (sec.has("kind")) {
    try {
      spec.kind = feature_kind_from_string(sec.at("kind").get<std::string>());
    } catch (const std::exception& e) {
      bad(sec.child_path("kind"), e.what());
    }
  }
  sec.get("num_features", spec.num_features);
  sec.get("bandwidth", spec.bandwidth);
  if (sec.has("scaling")) {
    try {
      spec.scaling = feature_scaling_from_string(sec.at("scaling").get<std::string>());
    } catch (const std::exception& e) {
      bad(sec.child_path("scaling"), e.what());
    }
  }
  sec.get("seed", spec.seed);
  sec.finish();
}

void parse_exact(const json& j, const std::string& path, ExactParams& p) {
  Section sec(j, path);
  sec.get("tol", p.tol);
  sec.get("delta_relax", p.delta_relax);
  sec.get("relax_iters", p.relax_iters);
  sec.get("max_nodes", p.max_nodes);
  sec.get("max_secs", p.max_secs);
  sec.get("workers", p.workers);
  sec.get("root_probes", p.root_probes);
  sec.finish();
  if (!(p.tol > 0.0)) bad(path + ".tol", "must be positive");
  if (p.workers < 1) bad(path + ".workers", "must be at least 1");
  if (p.max_nodes < 1) bad(path + ".max_nodes", "must be at least 1");
  if (!(p.max_secs > 0.0)) bad(path + ".max_secs", "must be positive");
}

void parse_cvar(const json& j, const std::string& path, CvarParams& p) {
  Section sec(j, path);
  sec.get("s_lb", p.s_lb);
  sec.get("s_ub", p.s_ub);
  sec.get("upsilon", p.upsilon);
  sec.get("iterations", p.iterations);
  sec.get("batch_centers", p.batch_centers);
  sec.get("step_c", p.step_c);
  sec.get("lambda_min", p.lambda_min);
  sec.get("lambda_max", p.lambda_max);
  sec.get("b_multiplier", p.b_multiplier);
  sec.get("averaging_fraction", p.averaging_fraction);
  sec.get("tol_feas", p.tol_feas);
  sec.finish();
}

void parse_cv(const json& j, const std::string& path, CrossValidation& cv) {
  Section sec(j, path);
  sec.get("enabled", cv.enabled);
  sec.get("epsilon", cv.epsilons);
  sec.get("rho_bar", cv.rho_bars);
  sec.get("threads", cv.threads);
  sec.finish();
  if (cv.enabled) {
    if (cv.epsilons.empty() || cv.rho_bars.empty()) {
      bad(path, "cross-validation grid must be non-empty");
    }
    for (const double e : cv.epsilons) {
      if (!(e > 0.0)) bad(path + ".epsilon", "entries must be positive");
    }
    for (const double r : cv.rho_bars) {
      if (r < 0.0) bad(path + ".rho_bar", "entries must be nonnegative");
    }
    if (cv.threads < 1) bad(path + ".threads", "must be at least 1");
  }
}

}  // namespace

BnbOptions ExactParams::to_options(std::uint64_t seed) const {
  BnbOptions opt;
  opt.delta_relax = delta_relax;
  opt.relax_iters = relax_iters;
  opt.max_nodes = max_nodes;
  opt.max_secs = max_secs;
  opt.workers = workers;
  opt.root_probes = root_probes;
  opt.seed = seed;
  return opt;
}

std::array<SinkhornBall, 2> RunConfig::balls(int dim) const {
  std::array<SinkhornBall, 2> out;
  for (int k = 0; k < 2; ++k) {
    out[k].epsilon = epsilon[k];
    out[k].rho_bar = rho_bar[k];
    out[k].dim = dim;
  }
  return out;
}

void RunConfig::validate() const {
  dataset.validate();
  feature_map.validate();
  for (int k = 0; k < 2; ++k) {
    if (!(epsilon[k] > 0.0)) throw ConfigError("config key 'uncertainty.epsilon': must be positive");
    if (rho_bar[k] < 0.0) throw ConfigError("config key 'uncertainty.rho_bar': must be nonnegative");
  }
  if (method != "exact" && method != "cvar" && method != "genfun") {
    throw ConfigError("config key 'method': must be one of exact|cvar|genfun");
  }
  if (m < 1) throw ConfigError("config key 'saa.m': must be at least 1");
  if (samples_per_center < 1) {
    throw ConfigError("config key 'worst_case.samples_per_center': must be at least 1");
  }
  if (diag_which != "prop1" && diag_which != "prop4" && diag_which != "prop5" &&
      diag_which != "consistency") {
    throw ConfigError(
        "config key 'diag.which': must be one of prop1|prop4|prop5|consistency");
  }
  if (out_dir.empty()) throw ConfigError("config key 'out_dir': must not be empty");
  cvar.validate();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  apply_env_overrides(j, "");

  RunConfig cfg;
  cfg.feature_map.num_features = 16;
  Section root(j, "");
  if (root.has("dataset")) parse_dataset(root.at("dataset"), "dataset", cfg.dataset);
  if (root.has("feature_map")) {
    parse_feature_map(root.at("feature_map"), "feature_map", cfg.feature_map);
  }
  if (root.has("uncertainty")) {
    Section sec(root.at("uncertainty"), "uncertainty");
    parse_pair(sec, "epsilon", cfg.epsilon);
    parse_pair(sec, "rho_bar", cfg.rho_bar);
    sec.finish();
  }
  root.get("method", cfg.method);
  if (root.has("saa")) {
    Section sec(root.at("saa"), "saa");
    sec.get("m", cfg.m);
    sec.get("seed", cfg.saa_seed);
    sec.finish();
  }
  root.get("standardize", cfg.standardize);
  if (root.has("exact")) parse_exact(root.at("exact"), "exact", cfg.exact);
  if (root.has("cvar")) parse_cvar(root.at("cvar"), "cvar", cfg.cvar);
  if (root.has("cross_validation")) {
    parse_cv(root.at("cross_validation"), "cross_validation", cfg.cv);
  }
  if (root.has("worst_case")) {
    Section sec(root.at("worst_case"), "worst_case");
    sec.get("samples_per_center", cfg.samples_per_center);
    sec.finish();
  }
  if (root.has("diag")) {
    Section sec(root.at("diag"), "diag");
    sec.get("which", cfg.diag_which);
    sec.finish();
  }
  root.get("seed", cfg.seed);
  root.get("out_dir", cfg.out_dir);
  root.finish();

  // default the feature-map input dimension from the dataset
  if (cfg.feature_map.input_dim == 0) cfg.feature_map.input_dim = cfg.dataset.dim;

  // canonical hash: the parsed JSON re-serialized with sorted keys, plus
  // the master seed (which may arrive via --seed rather than the file)
  cfg.config_hash = fnv1a_hex(j.dump() + "#" + std::to_string(cfg.seed));
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace rht
