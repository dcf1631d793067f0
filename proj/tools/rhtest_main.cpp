// rhtest: batch CLI for robust hypothesis testing over Sinkhorn balls.
//
// Subcommands: gen | train | eval | worst-case | diag.  Every command is a
// pure function of (config file, master seed): flag overrides are folded
// into the config JSON before hashing, so the config hash printed on every
// output file identifies the effective run.  Precedence: RHT_* environment
// overrides > command-line flags > config file.
//
// Exit codes: 0 success, 2 config error, 3 solver budget exhausted or
// solver degeneracy, 4 I/O error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rht/config.hpp"
#include "rht/cvar_solver.hpp"
#include "rht/datagen.hpp"
#include "rht/errors.hpp"
#include "rht/exact_solver.hpp"
#include "rht/features.hpp"
#include "rht/math_util.hpp"
#include "rht/rng.hpp"
#include "rht/saa.hpp"
#include "rht/serialize.hpp"
#include "rht/sinkhorn.hpp"

namespace {

using json = nlohmann::json;
using rht::derive_seed;

// Documented seed streams off the master seed.  A sub-seed given explicit,
// nonzero in the config wins over the derived stream, so experiments can pin
// one stage while sweeping another.
constexpr std::uint64_t kStreamDataset = 1;
constexpr std::uint64_t kStreamFeatureMap = 2;
constexpr std::uint64_t kStreamSaa = 3;
constexpr std::uint64_t kStreamCvSplit = 4;
constexpr std::uint64_t kStreamExact = 5;
constexpr std::uint64_t kStreamCvar = 6;
constexpr std::uint64_t kStreamDiag = 7;
constexpr std::uint64_t kStreamWorstCaseBase = 20;  // + hypothesis index
constexpr std::uint64_t kStreamCvCellBase = 1000;   // + cell index

std::uint64_t pick_seed(std::uint64_t explicit_seed, std::uint64_t master,
                        std::uint64_t stream) {
  return explicit_seed != 0 ? explicit_seed : derive_seed(master, stream);
}

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// record plumbing

void append_record(const std::string& out_dir, const json& record) {
  const std::string path = out_dir + "/results.jsonl";
  std::ofstream os(path, std::ios::app);
  if (!os) throw rht::IoError("cannot open " + path + " for appending");
  os << record.dump() << "\n";
  if (!os.flush()) throw rht::IoError("failed writing " + path);
  std::cout << record.dump() << "\n";
}

void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw rht::IoError("cannot create output directory " + out_dir + ": " +
                       ec.message());
  }
}

void write_jsonl_file(const std::string& path, const std::vector<json>& lines) {
  std::ofstream os(path);
  if (!os) throw rht::IoError("cannot open " + path + " for writing");
  for (const json& line : lines) os << line.dump() << "\n";
  if (!os.flush()) throw rht::IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// shared pipeline stages

rht::TwoSampleSplit build_data(const rht::RunConfig& cfg) {
  rht::DatasetSpec spec = cfg.dataset;
  spec.seed = pick_seed(spec.seed, cfg.seed, kStreamDataset);
  return rht::generate_dataset(spec);
}

std::shared_ptr<const rht::FeatureMap> build_map(const rht::RunConfig& cfg,
                                                 const rht::TwoSampleSplit& data) {
  rht::FeatureMapSpec spec = cfg.feature_map;
  spec.seed = pick_seed(spec.seed, cfg.seed, kStreamFeatureMap);
  rht::FeatureMap map = rht::build_feature_map(spec);
  if (cfg.standardize) {
    Eigen::MatrixXd all(data.train1.rows() + data.train2.rows(),
                        data.train1.cols());
    all << data.train1, data.train2;
    map.standardizer = rht::fit_standardizer(all);
  }
  return std::make_shared<const rht::FeatureMap>(std::move(map));
}

rht::SaaInstance make_instance(const rht::RunConfig& cfg,
                               const Eigen::MatrixXd& train1,
                               const Eigen::MatrixXd& train2,
                               std::shared_ptr<const rht::FeatureMap> map,
                               const std::array<double, 2>& epsilon,
                               const std::array<double, 2>& rho_bar,
                               std::uint64_t saa_seed) {
  const int dim = static_cast<int>(train1.cols());
  std::array<rht::SinkhornBall, 2> balls{
      rht::SinkhornBall{epsilon[0], rho_bar[0], dim},
      rht::SinkhornBall{epsilon[1], rho_bar[1], dim}};
  return rht::build_instance(train1, train2, std::move(map), balls, cfg.m,
                             saa_seed);
}

struct TrainOutcome {
  Eigen::VectorXd theta;
  double s = 1.0;
  double gap = 0.0;
  bool partial = false;
  std::array<double, 2> lambda{0.0, 0.0};
  std::array<double, 2> beta{0.0, 0.0};
  long node_count = 0;
  std::vector<rht::BisectionRecord> trace;
};

TrainOutcome train_with_method(const rht::RunConfig& cfg,
                               const rht::SaaInstance& inst,
                               const std::string& method,
                               std::uint64_t master) {
  TrainOutcome out;
  if (method == "exact") {
    rht::BnbOptions opt = cfg.exact.to_options(derive_seed(master, kStreamExact));
    rht::ExactSolution sol = rht::solve_bnb(inst, cfg.exact.tol, opt);
    out.theta = sol.theta;
    out.s = sol.s_star;
    out.gap = sol.gap;
    out.partial = sol.partial;
    out.lambda = {sol.lambda[0].lambda, sol.lambda[1].lambda};
    out.node_count = sol.node_count;
    return out;
  }
  rht::CvarParams params = cfg.cvar;
  params.seed = pick_seed(params.seed, master, kStreamCvar);
  rht::CvarSolution sol = method == "cvar" ? rht::bisection_solve(inst, params)
                                           : rht::genfun_solve(inst, params);
  out.theta = sol.iterate.theta;
  out.s = sol.s;
  out.gap = 0.0;
  out.partial = false;
  out.lambda = sol.iterate.lambda;
  out.beta = sol.iterate.beta;
  out.trace = std::move(sol.trace);
  return out;
}

// ---------------------------------------------------------------------------
// gen

int cmd_gen(const rht::RunConfig& cfg) {
  const double t0 = now_seconds();
  ensure_out_dir(cfg.out_dir);
  const std::uint64_t data_seed =
      pick_seed(cfg.dataset.seed, cfg.seed, kStreamDataset);
  rht::TwoSampleSplit data = build_data(cfg);

  const std::vector<std::pair<std::string, const Eigen::MatrixXd*>> files = {
      {"train1.csv", &data.train1},
      {"train2.csv", &data.train2},
      {"test1.csv", &data.test1},
      {"test2.csv", &data.test2}};
  for (const auto& [name, rows] : files) {
    rht::save_csv(cfg.out_dir + "/" + name, *rows,
                  {"config " + cfg.config_hash,
                   "rows " + std::to_string(rows->rows()) + " cols " +
                       std::to_string(rows->cols())});
  }

  // The manifest pins the generation inputs: the dataset spec hash changes
  // iff a field that affects the drawn samples changes.
  std::ostringstream spec_text;
  spec_text << rht::to_string(cfg.dataset.kind) << " " << cfg.dataset.n_train
            << " " << cfg.dataset.n_test << " " << cfg.dataset.dim << " "
            << cfg.dataset.noise << " " << cfg.dataset.mean_scale << " "
            << cfg.dataset.cov_scale << " " << cfg.dataset.mean_shift << " "
            << data_seed;
  const std::string spec_hash = rht::fnv1a_hex(spec_text.str());
  {
    std::ofstream os(cfg.out_dir + "/manifest.txt");
    if (!os) throw rht::IoError("cannot write " + cfg.out_dir + "/manifest.txt");
    os << "config " << cfg.config_hash << "\n";
    os << "dataset-spec-hash " << spec_hash << "\n";
    os << "dataset " << rht::to_string(cfg.dataset.kind) << "\n";
    os << "seed " << data_seed << "\n";
    for (const auto& [name, rows] : files) {
      os << name << " rows " << rows->rows() << " cols " << rows->cols() << "\n";
    }
    if (!os.flush()) throw rht::IoError("failed writing manifest.txt");
  }

  json record = {{"cmd", "gen"},
                 {"config", cfg.config_hash},
                 {"dataset_spec_hash", spec_hash},
                 {"out_dir", cfg.out_dir},
                 {"train1_rows", data.train1.rows()},
                 {"train2_rows", data.train2.rows()},
                 {"test1_rows", data.test1.rows()},
                 {"test2_rows", data.test2.rows()},
                 {"wall_time", now_seconds() - t0}};
  append_record(cfg.out_dir, record);
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct CvCell {
  int index = 0;
  double epsilon = 0.0;
  double rho_bar = 0.0;
  double val_err = 1.0;
  bool done = false;
  std::string error;
};

// 50-50 per-hypothesis split shared by every grid cell (one random
// partition, as in standard cross-validation).
void split_half(const Eigen::MatrixXd& rows, rht::Rng& rng,
                Eigen::MatrixXd* fit, Eigen::MatrixXd* val) {
  const int n = static_cast<int>(rows.rows());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  const int n_fit = n / 2;
  fit->resize(n_fit, rows.cols());
  val->resize(n - n_fit, rows.cols());
  for (int i = 0; i < n_fit; ++i) fit->row(i) = rows.row(order[i]);
  for (int i = n_fit; i < n; ++i) val->row(i - n_fit) = rows.row(order[i]);
}

void run_cv_cell(const rht::RunConfig& cfg, CvCell& cell,
                 const Eigen::MatrixXd& fit1, const Eigen::MatrixXd& fit2,
                 const Eigen::MatrixXd& val1, const Eigen::MatrixXd& val2,
                 std::shared_ptr<const rht::FeatureMap> map) {
  const std::uint64_t cell_master =
      derive_seed(cfg.seed, kStreamCvCellBase + static_cast<std::uint64_t>(cell.index));
  const std::array<double, 2> eps{cell.epsilon, cell.epsilon};
  const std::array<double, 2> rho{cell.rho_bar, cell.rho_bar};
  rht::SaaInstance inst =
      make_instance(cfg, fit1, fit2, map, eps, rho,
                    pick_seed(cfg.saa_seed, cell_master, kStreamSaa));
  TrainOutcome out = train_with_method(cfg, inst, cfg.method, cell_master);
  rht::Detector det{map, out.theta};
  cell.val_err = rht::empirical_risk(det, val1, val2).max_err;
  cell.done = true;
}

int cmd_train(const rht::RunConfig& cfg) {
  const double t0 = now_seconds();
  ensure_out_dir(cfg.out_dir);
  rht::TwoSampleSplit data = build_data(cfg);
  std::shared_ptr<const rht::FeatureMap> map = build_map(cfg, data);

  std::array<double, 2> eps = cfg.epsilon;
  std::array<double, 2> rho = cfg.rho_bar;
  std::vector<json> cv_lines;
  if (cfg.cv.enabled) {
    Eigen::MatrixXd fit1, val1, fit2, val2;
    rht::Rng split_rng(derive_seed(cfg.seed, kStreamCvSplit));
    split_half(data.train1, split_rng, &fit1, &val1);
    split_half(data.train2, split_rng, &fit2, &val2);

    std::vector<CvCell> cells;
    int index = 0;
    for (double e : cfg.cv.epsilons) {
      for (double r : cfg.cv.rho_bars) {
        cells.push_back(CvCell{index++, e, r, 1.0, false, ""});
      }
    }

    // Cells are fully independent (own seed streams); run them on a small
    // pool when the config asks for it.
    const int threads = std::max(1, cfg.cv.threads);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        try {
          run_cv_cell(cfg, cells[i], fit1, fit2, val1, val2, map);
        } catch (const std::exception& ex) {
          cells[i].error = ex.what();
        }
      }
    };
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (std::thread& th : pool) th.join();
    }

    const CvCell* best = nullptr;
    for (const CvCell& cell : cells) {
      cv_lines.push_back(json{{"cmd", "cv-cell"},
                              {"config", cfg.config_hash},
                              {"cell", cell.index},
                              {"epsilon", cell.epsilon},
                              {"rho_bar", cell.rho_bar},
                              {"val_max_err", cell.val_err},
                              {"done", cell.done},
                              {"error", cell.error}});
      if (!cell.done) continue;
      // Deterministic tie-break: smaller validation error, then smaller
      // epsilon, then smaller rho_bar.
      if (best == nullptr || cell.val_err < best->val_err ||
          (cell.val_err == best->val_err &&
           (cell.epsilon < best->epsilon ||
            (cell.epsilon == best->epsilon && cell.rho_bar < best->rho_bar)))) {
        best = &cell;
      }
    }
    if (best == nullptr) {
      throw rht::SolverError("cross-validation: every grid cell failed");
    }
    eps = {best->epsilon, best->epsilon};
    rho = {best->rho_bar, best->rho_bar};
  }

  const std::uint64_t saa_seed = pick_seed(cfg.saa_seed, cfg.seed, kStreamSaa);
  rht::SaaInstance inst =
      make_instance(cfg, data.train1, data.train2, map, eps, rho, saa_seed);
  TrainOutcome out = train_with_method(cfg, inst, cfg.method, cfg.seed);

  rht::DetectorRecord record;
  record.detector = rht::Detector{map, out.theta};
  record.method = cfg.method;
  record.s = out.s;
  record.gap = out.gap;
  record.partial = out.partial;
  record.lambda = out.lambda;
  record.beta = out.beta;
  record.balls = {inst.ball(1), inst.ball(2)};
  record.m = cfg.m;
  record.seed = saa_seed;
  record.config_hash = cfg.config_hash;
  rht::save_detector_file(cfg.out_dir + "/detector.txt", record);

  if (!out.trace.empty()) {
    std::vector<json> lines;
    for (const rht::BisectionRecord& r : out.trace) {
      lines.push_back(json{{"config", cfg.config_hash},
                           {"iteration", r.iteration},
                           {"s_lb", r.s_lb},
                           {"s_ub", r.s_ub},
                           {"t_value", r.t_value},
                           {"wall_time", r.wall_time}});
    }
    write_jsonl_file(cfg.out_dir + "/cvar_trace.jsonl", lines);
  }
  for (const json& line : cv_lines) append_record(cfg.out_dir, line);

  json rec = {{"cmd", "train"},
              {"config", cfg.config_hash},
              {"method", cfg.method},
              {"s", out.s},
              {"gap", out.gap},
              {"partial", out.partial},
              {"epsilon", eps},
              {"rho_bar", rho},
              {"m", cfg.m},
              {"lambda", out.lambda},
              {"beta", out.beta},
              {"node_count", out.node_count},
              {"cv_enabled", cfg.cv.enabled},
              {"detector_file", cfg.out_dir + "/detector.txt"},
              {"wall_time", now_seconds() - t0}};
  append_record(cfg.out_dir, rec);
  if (out.partial) {
    std::cerr << "rhtest: solver budget exhausted; detector saved with "
                 "partial certificate (gap "
              << out.gap << ")\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const rht::RunConfig& cfg) {
  const double t0 = now_seconds();
  ensure_out_dir(cfg.out_dir);
  rht::DetectorRecord det = rht::load_detector_file(cfg.out_dir + "/detector.txt");
  rht::TwoSampleSplit data = build_data(cfg);
  if (det.detector.map->input_dim() != data.test1.cols()) {
    throw rht::ConfigError(
        "eval: detector expects input dimension " +
        std::to_string(det.detector.map->input_dim()) + " but test data has " +
        std::to_string(data.test1.cols()) + " columns");
  }
  rht::EmpiricalRisk risk =
      rht::empirical_risk(det.detector, data.test1, data.test2);

  // Robust upper bound: rebuild the SAA around the *test* samples with the
  // training-time balls and evaluate the stored detector's dual risk.
  rht::SaaInstance test_inst = rht::build_instance(
      data.test1, data.test2, det.detector.map, det.balls, det.m,
      derive_seed(cfg.seed, kStreamSaa));
  rht::SaaObjective robust = rht::saa_objective(test_inst, det.detector.theta);

  json rec = {{"cmd", "eval"},
              {"config", cfg.config_hash},
              {"detector_config", det.config_hash},
              {"method", det.method},
              {"type1", risk.type1},
              {"type2", risk.type2},
              {"max_err", risk.max_err},
              {"robust_bound", robust.s_hat},
              {"train_s", det.s},
              {"wall_time", now_seconds() - t0}};
  append_record(cfg.out_dir, rec);
  return 0;
}

// ---------------------------------------------------------------------------
// worst-case

int cmd_worst_case(const rht::RunConfig& cfg) {
  const double t0 = now_seconds();
  ensure_out_dir(cfg.out_dir);
  rht::DetectorRecord det = rht::load_detector_file(cfg.out_dir + "/detector.txt");
  rht::TwoSampleSplit data = build_data(cfg);

  // The recovery needs the SAA dual multipliers at the stored detector, not
  // whatever certificate the training method produced: recompute them on the
  // stored instance (balls, m, seed all come from the detector record).
  rht::SaaInstance inst =
      rht::build_instance(data.train1, data.train2, det.detector.map,
                          det.balls, det.m, det.seed);
  rht::SaaObjective obj = rht::saa_objective(inst, det.detector.theta);

  json rec = {{"cmd", "worst-case"},
              {"config", cfg.config_hash},
              {"detector_config", det.config_hash},
              {"s_hat", obj.s_hat},
              {"samples_per_center", cfg.samples_per_center}};
  for (int k = 1; k <= 2; ++k) {
    if (obj.lambda[k - 1].at_zero_limit) {
      throw rht::SolverError(
          "worst-case: the hypothesis-" + std::to_string(k) +
          " dual multiplier degenerated to the lambda -> 0 limit; the "
          "worst-case distribution is a point-mass selection and the "
          "density-ratio recovery does not apply");
    }
    const Eigen::MatrixXd& centers = k == 1 ? data.train1 : data.train2;
    rht::WorstCaseCloud cloud = rht::worst_case_cloud(
        inst.ball(k), centers, det.detector, k, obj.lambda[k - 1].lambda,
        cfg.samples_per_center,
        derive_seed(cfg.seed, kStreamWorstCaseBase + static_cast<std::uint64_t>(k)));
    const std::string path =
        cfg.out_dir + "/worst_case_h" + std::to_string(k) + ".csv";
    std::ofstream os(path);
    if (!os) throw rht::IoError("cannot write " + path);
    rht::save_cloud_csv(os, cloud, cfg.config_hash);
    if (!os.flush()) throw rht::IoError("failed writing " + path);

    rht::CloudError err = rht::cloud_misclassification(cloud, det.detector, k);
    rec["h" + std::to_string(k)] = json{{"file", path},
                                        {"lambda", obj.lambda[k - 1].lambda},
                                        {"weighted_err", err.weighted},
                                        {"unweighted_err", err.unweighted}};
  }
  rec["wall_time"] = now_seconds() - t0;
  append_record(cfg.out_dir, rec);
  return 0;
}

// ---------------------------------------------------------------------------
// diag

// Exact kernel mass of a 1-D interval union around center x.
double kernel_mass_1d(double x, double epsilon, const rht::IntervalUnion& event) {
  const double sd = std::sqrt(epsilon);
  double mass = 0.0;
  for (const rht::Interval& p : event.parts()) {
    const double hi = std::isinf(p.hi) ? 1.0 : rht::normal_cdf((p.hi - x) / sd);
    const double lo = std::isinf(p.lo) ? 0.0 : rht::normal_cdf((p.lo - x) / sd);
    mass += hi - lo;
  }
  return mass;
}

json diag_prop1(const rht::RunConfig& cfg, std::vector<json>& lines) {
  const std::uint64_t seed = derive_seed(cfg.seed, kStreamDiag);
  const rht::FeatureBank bank =
      rht::make_feature_bank(1 << 14, cfg.feature_map.bandwidth, seed);
  std::vector<int> d_list;
  for (int d = 16; d <= 1024; d *= 2) d_list.push_back(d);
  const auto errors = rht::rff_l2_error(bank, d_list, 20, seed + 1);
  for (const auto& [d, err] : errors) {
    lines.push_back(json{{"config", cfg.config_hash}, {"d", d}, {"l2_error", err}});
  }
  const double slope = rht::log_log_slope(errors);
  const bool pass = slope >= -0.65 && slope <= -0.35;
  return json{{"which", "prop1"}, {"slope", slope}, {"pass", pass}};
}

// Small-radius expansion check: the worst-case probability minus
// (mean kernel mass + sqrt(2 rho_bar / eps) * sigma) should vanish faster
// than sqrt(rho_bar / eps).
json diag_prop4(const rht::RunConfig& cfg, std::vector<json>& lines) {
  const double epsilon = cfg.epsilon[0];
  Eigen::VectorXd samples(1);
  samples << 0.0;
  const rht::IntervalUnion event({{0.0, rht::kInf}});

  double qbar = 0.0;
  double var = 0.0;
  for (int i = 0; i < samples.size(); ++i) {
    const double q = kernel_mass_1d(samples[i], epsilon, event);
    qbar += q;
    var += q * (1.0 - q);
  }
  qbar /= static_cast<double>(samples.size());
  var /= static_cast<double>(samples.size());
  const double sigma = std::sqrt(var);

  const std::vector<double> ratios = {1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<double> normalized;
  for (double r : ratios) {
    const rht::SinkhornBall ball{epsilon, r * epsilon, 1};
    const double sup = rht::sinkhorn_worst_prob_1d(ball, samples, event);
    const double approx = qbar + std::sqrt(2.0 * r) * sigma;
    const double norm_resid = std::abs(sup - approx) / std::sqrt(r);
    normalized.push_back(norm_resid);
    lines.push_back(json{{"config", cfg.config_hash},
                         {"ratio", r},
                         {"sup", sup},
                         {"approx", approx},
                         {"normalized_residual", norm_resid}});
  }
  const bool pass = normalized.back() <= 0.5 * normalized.front();
  return json{{"which", "prop4"},
              {"residual_first", normalized.front()},
              {"residual_last", normalized.back()},
              {"pass", pass}};
}

// Sinkhorn-to-Wasserstein convergence: as eps/rho_bar shrinks the two
// worst-case probabilities approach each other.
json diag_prop5(const rht::RunConfig& cfg, std::vector<json>& lines) {
  Eigen::VectorXd samples(2);
  samples << -1.0, 2.0;
  const rht::IntervalUnion event({{0.0, rht::kInf}});
  const double rho_bar = 0.25;
  const double wass = rht::wasserstein_worst_prob_1d(rho_bar, samples, event);

  std::vector<double> gaps;
  for (double ratio : {1.0, 0.1, 0.01}) {
    const rht::SinkhornBall ball{ratio * rho_bar, rho_bar, 1};
    const double sink = rht::sinkhorn_worst_prob_1d(ball, samples, event);
    gaps.push_back(std::abs(sink - wass));
    lines.push_back(json{{"config", cfg.config_hash},
                         {"eps_over_rho", ratio},
                         {"sinkhorn", sink},
                         {"wasserstein", wass},
                         {"gap", gaps.back()}});
  }
  bool pass = true;
  for (std::size_t i = 1; i < gaps.size(); ++i) {
    if (!(gaps[i] < gaps[i - 1])) pass = false;
  }
  return json{{"which", "prop5"}, {"gaps", gaps}, {"pass", pass}};
}

// SAA consistency: the optimal value stabilizes as the kernel sample count
// m grows (std over kernel seeds shrinks, means converge).
json diag_consistency(const rht::RunConfig& cfg, std::vector<json>& lines) {
  rht::DatasetSpec dspec;
  dspec.kind = rht::DatasetKind::kHdgm;
  dspec.n_train = 3;
  dspec.n_test = 2;
  dspec.dim = 2;
  dspec.mean_scale = 1.0;
  dspec.cov_scale = 0.5;
  dspec.mean_shift = 1.0;
  dspec.seed = derive_seed(cfg.seed, kStreamDiag);
  rht::TwoSampleSplit data = rht::gen_hdgm(dspec);

  rht::FeatureMapSpec fspec;
  fspec.kind = rht::FeatureKind::kGaussianRff;
  fspec.input_dim = 2;
  fspec.num_features = 1;  // output dim 2: one cosine pair
  fspec.bandwidth = 1.0;
  fspec.seed = derive_seed(cfg.seed, kStreamDiag + 1);
  auto map = std::make_shared<const rht::FeatureMap>(rht::build_feature_map(fspec));

  std::array<rht::SinkhornBall, 2> balls{rht::SinkhornBall{0.1, 0.1, 2},
                                         rht::SinkhornBall{0.1, 0.1, 2}};
  const std::vector<int> m_list = {10, 40, 160};
  std::vector<double> stds, means;
  for (int m : m_list) {
    std::vector<double> values;
    for (int rep = 0; rep < 10; ++rep) {
      rht::SaaInstance inst = rht::build_instance(
          data.train1, data.train2, map, balls, m,
          derive_seed(cfg.seed, kStreamDiag + 100 + static_cast<std::uint64_t>(rep)));
      rht::BnbOptions opt = cfg.exact.to_options(derive_seed(cfg.seed, kStreamExact));
      rht::ExactSolution sol = rht::solve_bnb(inst, cfg.exact.tol, opt);
      values.push_back(sol.s_star);
    }
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (values.size() - 1));
    means.push_back(mean);
    stds.push_back(sd);
    lines.push_back(json{{"config", cfg.config_hash},
                         {"m", m},
                         {"mean_s", mean},
                         {"std_s", sd}});
  }
  const bool pass = stds.back() < stds.front() &&
                    std::abs(means[2] - means[1]) <= std::abs(means[1] - means[0]);
  return json{{"which", "consistency"},
              {"stds", stds},
              {"means", means},
              {"pass", pass}};
}

int cmd_diag(const rht::RunConfig& cfg) {
  const double t0 = now_seconds();
  ensure_out_dir(cfg.out_dir);
  std::vector<json> lines;
  json summary;
  if (cfg.diag_which == "prop1") {
    summary = diag_prop1(cfg, lines);
  } else if (cfg.diag_which == "prop4") {
    summary = diag_prop4(cfg, lines);
  } else if (cfg.diag_which == "prop5") {
    summary = diag_prop5(cfg, lines);
  } else {
    summary = diag_consistency(cfg, lines);
  }
  write_jsonl_file(cfg.out_dir + "/diag_" + cfg.diag_which + ".jsonl", lines);
  summary["cmd"] = "diag";
  summary["config"] = cfg.config_hash;
  summary["wall_time"] = now_seconds() - t0;
  append_record(cfg.out_dir, summary);
  return 0;
}

// ---------------------------------------------------------------------------
// entry point

struct FlagOverrides {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::string method;
  long budget_nodes = 0;
  bool budget_nodes_set = false;
  double budget_secs = 0.0;
  bool budget_secs_set = false;
  std::string diag_which;
};

rht::RunConfig effective_config(const FlagOverrides& flags) {
  std::ifstream is(flags.config_path);
  if (!is) throw rht::IoError("cannot open config file " + flags.config_path);
  std::stringstream buffer;
  buffer << is.rdbuf();

  json j;
  try {
    j = json::parse(buffer.str());
  } catch (const json::exception& ex) {
    throw rht::ConfigError(std::string("config is not valid JSON: ") + ex.what());
  }
  if (!j.is_object()) throw rht::ConfigError("config root must be a JSON object");
  if (flags.seed_set) j["seed"] = flags.seed;
  if (!flags.out_dir.empty()) j["out_dir"] = flags.out_dir;
  if (!flags.method.empty()) j["method"] = flags.method;
  if (flags.budget_nodes_set) j["exact"]["max_nodes"] = flags.budget_nodes;
  if (flags.budget_secs_set) j["exact"]["max_secs"] = flags.budget_secs;
  if (!flags.diag_which.empty()) j["diag"]["which"] = flags.diag_which;
  return rht::parse_run_config(j.dump());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust hypothesis testing over Sinkhorn uncertainty sets"};
  app.require_subcommand(1);
  app.fallthrough();

  FlagOverrides flags;
  app.add_option("--config", flags.config_path, "path to the JSON run config")
      ->required();
  app.add_option("--seed", flags.seed, "master seed override")
      ->each([&](const std::string&) { flags.seed_set = true; });
  app.add_option("--out", flags.out_dir, "output directory override");
  app.add_option("--method", flags.method, "training method override")
      ->check(CLI::IsMember({"exact", "cvar", "genfun"}));
  app.add_option("--budget-nodes", flags.budget_nodes,
                 "exact-solver node budget override")
      ->each([&](const std::string&) { flags.budget_nodes_set = true; });
  app.add_option("--budget-secs", flags.budget_secs,
                 "exact-solver wall-clock budget override")
      ->each([&](const std::string&) { flags.budget_secs_set = true; });

  CLI::App* gen = app.add_subcommand("gen", "generate dataset CSVs and a manifest");
  CLI::App* train = app.add_subcommand("train", "fit a detector and save it");
  CLI::App* eval = app.add_subcommand("eval", "evaluate the saved detector on test data");
  CLI::App* worst = app.add_subcommand("worst-case", "emit adversarial cloud CSVs");
  CLI::App* diag = app.add_subcommand("diag", "run a property sweep");
  diag->add_option("--which", flags.diag_which,
                   "sweep selector (overrides diag_which in the config)")
      ->check(CLI::IsMember({"prop1", "prop4", "prop5", "consistency"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const rht::RunConfig cfg = effective_config(flags);
    if (gen->parsed()) return cmd_gen(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (worst->parsed()) return cmd_worst_case(cfg);
    if (diag->parsed()) return cmd_diag(cfg);
    return 2;  // unreachable: require_subcommand(1)
  } catch (const rht::ConfigError& ex) {
    std::cerr << "rhtest: config error: " << ex.what() << "\n";
    return 2;
  } catch (const rht::SolverError& ex) {
    std::cerr << "rhtest: solver error: " << ex.what() << "\n";
    return 3;
  } catch (const rht::IoError& ex) {
    std::cerr << "rhtest: i/o error: " << ex.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "rhtest: config error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "rhtest: unexpected error: " << ex.what() << "\n";
    return 1;
  }
}
