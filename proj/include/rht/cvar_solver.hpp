#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "rht/saa.hpp"

namespace rht {

/// Convex approximation path.  The chance constraints are replaced by their
/// conditional-value-at-risk majorant: for each hypothesis
///   G_k(s, beta_k, lambda_k) = s beta_k + lambda_k rho_bar_k
///     + (lambda_k eps_k / n) sum_i log (1/m) sum_j
///         e^{[(-1)^k <theta, F_ij>) - beta_k]_+ / (lambda_k eps_k)},
/// and a level s is accepted when T(s) = min over (theta in the unit ball,
/// beta_k <= 0, lambda_k in a box) of max_k G_k is nonpositive.  Bisection
/// over s then finds the smallest certifiable level.
///
/// G is jointly positively homogeneous in (theta, beta, lambda), so the raw
/// infimum degenerates along theta -> 0 (value -> lambda_min rho_bar for
/// any s).  Feasibility decisions therefore normalize candidate detectors
/// to unit norm before the exact re-evaluation, which makes the tolerance
/// scale-meaningful; s = 1 is feasible unconditionally (every probability
/// is at most one).
struct CvarParams {
  double s_lb = 0.0;
  double s_ub = 1.0;
  double upsilon = 1e-2;      // bisection precision
  int iterations = 4000;      // SGD steps per subproblem
  int batch_centers = 1;      // centers sampled per hypothesis per step
  double step_c = 0.2;        // base step constant, scaled per block
  double lambda_min = 1e-6;
  double lambda_max = 1e4;
  double b_multiplier = 10.0;  // beta floor = -b_multiplier * max ||feature||
  double averaging_fraction = 0.5;  // trailing fraction of iterates averaged
  double tol_feas = 1e-3;     // acceptance threshold for re-validated T(s)
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct CvarIterate {
  Eigen::VectorXd theta;           // inside the unit ball
  std::array<double, 2> beta{0.0, 0.0};    // each in [-B, 0]
  std::array<double, 2> lambda{1.0, 1.0};  // each in [lambda_min, lambda_max]
  std::array<double, 2> tau{0.5, 0.5};     // 2-simplex weights

  double beta_k(int k) const { return beta[k - 1]; }
  double lambda_k(int k) const { return lambda[k - 1]; }
};

/// Projection cases used by the SGD updates.
enum class CvarConstraint {
  kUnitBall,
  kNonpositiveWithFloor,  // clamp to [lo, 0]
  kLambdaBox,             // clamp to [lo, hi]
  kSimplexTwo,            // Euclidean projection onto {(t, 1-t), t in [0,1]}
};

/// Euclidean projection of an iterate part.  `lo`/`hi` give the interval
/// for the scalar cases and are ignored for the ball and simplex.
Eigen::VectorXd project_part(CvarConstraint constraint, const Eigen::VectorXd& v,
                             double lo = 0.0, double hi = 0.0);

/// Exact minimum of G_k over (beta_k, lambda_k) at a fixed detector: the
/// finite-sum G_k is jointly convex in (beta, lambda) (perspective of a
/// convex function), so nested scalar searches are exact.  Freezing beta
/// (generating-function baseline) is the beta_lo == beta_hi case.
struct InnerMin {
  double value = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
};
InnerMin cvar_inner_min(const SaaInstance& inst, int k, const Eigen::VectorXd& theta,
                        double s, double beta_lo, double beta_hi,
                        double lambda_min, double lambda_max);

/// Exact T(s) restricted to one detector direction: max_k of the per-k
/// inner minima (the (beta_k, lambda_k) blocks separate across k).
double cvar_value_at(const SaaInstance& inst, const Eigen::VectorXd& theta,
                     double s, const CvarParams& params, bool freeze_beta,
                     CvarIterate* argmin = nullptr);

struct CvarValue {
  double t_value = 0.0;
  CvarIterate iterate;
};

/// Subproblem T(s): projected stochastic subgradient on the weighted saddle
/// form sum_k tau_k G_k (ascent in tau on the 2-simplex, descent in
/// (theta, beta, lambda)), followed by the exact inner minimization at the
/// unit-normalized averaged/best iterates.  Deterministic per seed.
/// Throws SolverError on non-finite iterate values (step constant too
/// large).
CvarValue subproblem_value_T(double s, const SaaInstance& inst,
                             const CvarParams& params, bool freeze_beta = false);

struct BisectionRecord {
  int iteration = 0;
  double s_lb = 0.0;
  double s_ub = 1.0;
  double t_value = 0.0;  // T at the tested midpoint
  double wall_time = 0.0;
};

struct CvarSolution {
  double s = 1.0;
  CvarIterate iterate;       // certificate for the returned level
  double t_at_s = 0.0;       // re-validated T at the returned level
  std::vector<BisectionRecord> trace;
};

/// Bisection over s to precision upsilon.  Requires T(s_ub) feasible at the
/// start (trivially true for s_ub = 1); accepted upper bounds re-validate
/// T(s) <= tol_feas with the exact finite-sum evaluation.  Validity rests
/// on T nonincreasing in s (beta_k <= 0).  Throws SolverError when the
/// initial interval is invalid.
CvarSolution bisection_solve(const SaaInstance& inst, const CvarParams& params);

/// Generating-function baseline: identical machinery with beta_k frozen at
/// -1, i.e. the hinge loss ell(x) = (x+1)_+.
CvarSolution genfun_solve(const SaaInstance& inst, const CvarParams& params);

}  // namespace rht
