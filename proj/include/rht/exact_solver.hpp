#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rht/saa.hpp"

namespace rht {

/// Mixed-integer exponential-cone model of the SAA risk minimization.
/// Variables: theta in the unit ball, s in [0,1], multipliers lambda_k >= 0,
/// per-center auxiliaries t_i^k, cone auxiliaries a_ij^k >= 0 and binary
/// indicators z_ij^k with
///   (-1)^k <theta, F_ij^k>  <=  M_ij^k z_ij^k          (k = 1)
///   (-1)^k <theta, F_ij^k>  <=  M_ij^k ((1+margin) z_ij^k - margin)  (k = 2)
///   lambda_k rho_bar_k + (1/n_k) sum_i t_i^k <= s
///   lambda_k eps_k >= (1/m) sum_j a_ij^k
///   (lambda_k eps_k, a_ij^k, z_ij^k - t_i^k) in K_exp = {(nu,mu,delta):
///       e^{delta/nu} <= mu/nu}.
/// The binary z upper-bounds the misclassification indicator so that
/// minimization drives it down onto the indicator.  The tiny margin on the
/// hypothesis-2 link encodes the boundary convention that a zero score
/// counts as a hypothesis-2 error: z_ij^2 = 0 forces the score strictly
/// negative, and in particular theta = 0 forces all z^2 to 1.
struct MiecpModel {
  std::array<SinkhornBall, 2> balls;
  std::array<Eigen::MatrixXd, 2> features;  // (n_k * m) x D'
  std::array<Eigen::MatrixXd, 2> big_m;     // n_k x m
  int m = 0;
  int feature_dim = 0;
  double margin = 1e-9;

  int n(int k) const { return static_cast<int>(big_m[k - 1].rows()); }
  auto feature(int k, int i, int j) const {
    return features[k - 1].row(static_cast<Eigen::Index>(i) * m + j);
  }
  double big(int k, int i, int j) const { return big_m[k - 1](i, j); }
  int num_binaries() const { return (n(1) + n(2)) * m; }
  int num_cones() const { return num_binaries(); }
  int num_aux() const { return n(1) + n(2); }
};

MiecpModel build_miecp(const SaaInstance& inst);

/// Generic conic listing of the model, materialized for export and
/// round-trip checks.  Auxiliary variables u_k = lambda_k eps_k and
/// w_ij^k = z_ij^k - t_i^k make every cone a plain variable triple.
struct ConicVariable {
  std::string name;
  char kind;  // 'C' continuous, 'B' binary
  double lb;
  double ub;
};

struct ConicRow {
  char sense;  // 'L': <= rhs, 'E': == rhs
  double rhs;
  std::vector<std::pair<int, double>> terms;
};

struct ConicModel {
  std::vector<ConicVariable> vars;
  std::vector<ConicRow> rows;
  std::vector<std::array<int, 3>> exp_cones;  // (nu, mu, delta) variable ids
  std::vector<int> ball_vars;                 // ||(vars)||_2 <= 1
  int objective_var = -1;                     // minimized
};

ConicModel conic_view(const MiecpModel& model);

enum class ExportFormat { kNativeText, kCbfLike };

std::string export_model(const MiecpModel& model, ExportFormat format);

/// Parses the native-text format back into the generic listing.
ConicModel parse_native_model(const std::string& text);

/// Structural and coefficient-level equality (tolerance on numerals).
bool conic_models_equal(const ConicModel& a, const ConicModel& b, double tol = 1e-15);

/// Branch-and-bound node: per-binary fixing state (-1 free, 0, 1).
struct BnbNode {
  std::array<Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic>, 2> fixed;
  double lower_bound = 0.0;
  int depth = 0;
  Eigen::VectorXd theta_hint;  // relaxation iterate saved for branching

  Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic>& operator[](int k) {
    return fixed[k - 1];
  }
  const Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic>& operator[](int k) const {
    return fixed[k - 1];
  }
};

BnbNode root_node(const MiecpModel& model);

struct RelaxationResult {
  double bound = 0.0;        // certified lower bound for the node subtree
  bool infeasible = false;   // fixed zeros admit no detector: node pruned
  Eigen::VectorXd theta;     // relaxation iterate (rounding / branching)
  Eigen::VectorXd theta_feasible;  // a point satisfying the fixed zeros, if found
  std::array<Eigen::MatrixXd, 2> z_relax;
};

struct BnbOptions {
  double delta_relax = 1e-3;  // certified suboptimality slack of the inner solver
  int relax_iters = 500;
  long max_nodes = 200000;
  double max_secs = 600.0;
  int workers = 1;
  int root_probes = 64;  // random unit directions tried as incumbents
  std::uint64_t seed = 0;
  std::function<void(double wall, long nodes, double lower, double upper,
                     double gap)>
      progress;
  long progress_every = 256;
};

/// Node bound computation.  In feature dimension 2 the node is solved
/// exactly: the free-indicator pattern is piecewise constant in the
/// detector angle, so sweeping one candidate per arrangement cell plus the
/// cell boundaries and the fixed-zero arc endpoints visits every achievable
/// pattern, and the bound equals the exact node optimum.  In higher
/// dimension the free binaries are relaxed to
/// z = clamp((-1)^k score / M, 0, 1), (t, a) eliminated analytically,
/// minimized over (theta in the ball, lambda in a box) by projected
/// subgradient with fixed-zero constraints handled by exact penalty; the
/// returned bound is then the maximum of the exact fixed-ones dual value
/// (valid unconditionally, since the dual value is monotone in the pattern)
/// and the best penalized relaxation value minus delta_relax.
RelaxationResult node_relaxation(const MiecpModel& model, const BnbNode& node,
                                 const BnbOptions& opt = {});

struct ExactSolution {
  Eigen::VectorXd theta;
  double s_star = 1.0;
  std::array<LambdaOpt, 2> lambda;
  BitsPattern bits;
  double gap = 0.0;
  double lower_bound = 0.0;
  long node_count = 0;
  double wall_time = 0.0;
  bool partial = false;
};

/// Certified best-first branch-and-bound over the binary indicators.
/// Deterministic in single-worker mode (best bound first, ties by creation
/// index); with workers > 1 node processing order is scheduling-dependent,
/// bounds and incumbents stay valid.  On budget exhaustion the incumbent is
/// returned with partial = true and the honest remaining gap.  In feature
/// dimension 2 the root bound is already exact, so the search certifies at
/// the root on generic instances.
ExactSolution solve_bnb(const SaaInstance& inst, double tol,
                        const BnbOptions& opt = {});

struct OracleResult {
  double s = 1.0;
  Eigen::VectorXd theta;
};

/// Brute-force reference for feature dimension exactly 2: sweeps unit
/// detectors over angle_count uniform angles and evaluates saa_objective.
/// The objective is piecewise constant with at most 2(n1+n2)m breakpoints,
/// so a dense sweep samples every cell.
OracleResult oracle_grid_search(const SaaInstance& inst, int angle_count);

}  // namespace rht
