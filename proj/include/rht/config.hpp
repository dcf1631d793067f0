#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rht/cvar_solver.hpp"
#include "rht/datagen.hpp"
#include "rht/exact_solver.hpp"
#include "rht/features.hpp"
#include "rht/sinkhorn.hpp"

namespace rht {

/// Exact-solver knobs exposed through the config file (flattened from
/// BnbOptions plus the target optimality tolerance).
struct ExactParams {
  double tol = 1e-6;
  double delta_relax = 1e-3;
  int relax_iters = 500;
  long max_nodes = 200000;
  double max_secs = 600.0;
  int workers = 1;
  int root_probes = 64;

  BnbOptions to_options(std::uint64_t seed) const;
};

struct CrossValidation {
  bool enabled = false;
  std::vector<double> epsilons{1e-2, 5e-2, 1e-1};
  std::vector<double> rho_bars{1e-1, 5e-1, 1.0};
  int threads = 1;
};

/// Full run configuration (JSON file; every key validated, unknown keys
/// rejected with their path).  docs/formats.md documents the key set.
/// After loading, any leaf can be overridden by an environment variable
/// named RHT_ + the uppercased underscore-joined path (RHT_SAA_M,
/// RHT_EXACT_MAX_SECS, ...).
struct RunConfig {
  DatasetSpec dataset;
  FeatureMapSpec feature_map;
  std::array<double, 2> epsilon{1e-1, 1e-1};
  std::array<double, 2> rho_bar{1e-1, 1e-1};
  std::string method = "exact";  // exact | cvar | genfun
  int m = 16;                    // SAA kernel draws per center
  std::uint64_t saa_seed = 0;
  bool standardize = false;
  ExactParams exact;
  CvarParams cvar;
  CrossValidation cv;
  int samples_per_center = 64;   // worst-case cloud size per center
  std::string diag_which = "prop1";
  std::uint64_t seed = 0;        // master seed
  std::string out_dir = "out";

  std::string config_hash;  // FNV-1a of the canonical form, set on load

  std::array<SinkhornBall, 2> balls(int dim) const;
  void validate() const;  // throws ConfigError
};

/// Parses a JSON config from text; applies environment overrides; computes
/// the canonical hash; validates.  Throws ConfigError on any problem.
RunConfig parse_run_config(const std::string& json_text);

/// load + parse; throws IoError if the file cannot be read.
RunConfig load_run_config(const std::string& path);

/// FNV-1a hash (16 hex digits) of a string, used for config identity.
std::string fnv1a_hex(const std::string& text);

}  // namespace rht
