#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "rht/features.hpp"
#include "rht/math_util.hpp"

namespace rht {

using BitsMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Entropy-regularized optimal-transport ball around an empirical
/// distribution: quadratic cost ||x - z||^2 / 2, regularization epsilon,
/// adjusted radius rho_bar.  The smoothing kernel of the ball at a center x
/// is N(x, epsilon I_dim).
struct SinkhornBall {
  double epsilon = 0.1;
  double rho_bar = 0.1;
  int dim = 1;

  void validate() const;
};

/// Adjusted radius absorbing the normalization entropy of the Gaussian
/// smoothing kernel: rho + epsilon * (dim / 2) * log(2 pi epsilon).
double rho_bar_from_rho(double rho, double epsilon, int dim);

/// `count` draws from the smoothing kernel N(center, epsilon I), one row per
/// draw.  Deterministic in `seed`.
Eigen::MatrixXd sample_kernel(const SinkhornBall& ball,
                              const Eigen::VectorXd& center, int count,
                              std::uint64_t seed);

/// (scale) * log((1/m) * sum_j exp(v_j / scale)), max-shifted; the exact
/// limit max_j v_j is returned when scale underflows.
double scaled_log_mean_exp(double scale, const Eigen::VectorXd& v);

/// Regularized dual objective at multiplier lambda for a binary
/// misclassification pattern (rows: centers, columns: kernel draws):
///   lambda * rho_bar
///     + (lambda * eps / n) * sum_i log((1/m) sum_j exp(bits_ij / (lambda*eps))).
double dual_objective_bits(const SinkhornBall& ball, double lambda,
                           const BitsMatrix& bits);

/// Same dual objective for a real-valued payoff matrix.
double dual_objective_values(const SinkhornBall& ball, double lambda,
                             const Eigen::MatrixXd& values);

struct LambdaOpt {
  double lambda = 0.0;  // 0 encodes the lambda -> 0 limit
  double value = 0.0;
  bool at_zero_limit = false;
};

/// Infimum of dual_objective_bits over the multiplier.  The objective is
/// convex in lambda (perspective of a log-sum-exp), so a log grid plus
/// golden refinement over [lambda_min, lambda_max] is exact to tolerance;
/// the analytic lambda -> 0 limit (mean of row maxima) is always included
/// as a candidate, and the lambda -> infinity limit (plain mean) when
/// rho_bar == 0.
LambdaOpt optimize_lambda(const SinkhornBall& ball, const BitsMatrix& bits,
                          double lambda_min = 1e-6, double lambda_max = 1e4);

/// optimize_lambda with the pattern given as per-row counts of ones out of
/// m columns (the dual depends on the pattern only through these counts).
LambdaOpt optimize_lambda_counts(const SinkhornBall& ball,
                                 const Eigen::VectorXi& counts, int m,
                                 double lambda_min = 1e-6, double lambda_max = 1e4);

/// Weighted sample approximation of the distribution attaining the
/// worst-case error.  Each center contributes samples_per_center kernel
/// draws reweighted by exp(misclassified / (lambda * eps)) and normalized
/// within the center.
struct WorstCasePoint {
  int center_index;
  Eigen::VectorXd z;
  double weight;
};

struct WorstCaseCloud {
  std::vector<WorstCasePoint> points;
  int num_centers = 0;
  int samples_per_center = 0;
  double lambda = 0.0;
};

/// `hypothesis` selects the error convention: 1 counts score < 0 as an
/// error, 2 counts score >= 0.  Requires lambda > 0.
WorstCaseCloud worst_case_cloud(const SinkhornBall& ball,
                                const Eigen::MatrixXd& centers,
                                const Detector& detector, int hypothesis,
                                double lambda, int samples_per_center,
                                std::uint64_t seed);

struct CloudError {
  double weighted = 0.0;
  double unweighted = 0.0;
};

/// Misclassification mass of the cloud under the detector, both with the
/// adversarial weights and with uniform weights over the same draws.
CloudError cloud_misclassification(const WorstCaseCloud& cloud,
                                   const Detector& detector, int hypothesis);

/// Monte Carlo estimate of mean_i q_i (1 - q_i) where q_i is the kernel
/// mass of the event around center i; the small-radius expansion of the
/// worst-case probability grows like sqrt(2 rho_bar / eps) times the square
/// root of this quantity.
double variance_regularizer(const SinkhornBall& ball,
                            const Eigen::MatrixXd& centers,
                            const std::function<bool(const Eigen::VectorXd&)>& event,
                            int mc_count, std::uint64_t seed);

/// Worst-case (supremum) probability of a 1-D interval-union event over the
/// Sinkhorn ball.  Kernel masses q_i come from the exact normal CDF by
/// default; mc_count > 0 switches to Monte Carlo estimation (seeded per
/// center), for cross-checking only.
double sinkhorn_worst_prob_1d(const SinkhornBall& ball,
                              const Eigen::VectorXd& samples,
                              const IntervalUnion& event, int mc_count = 0,
                              std::uint64_t seed = 0,
                              double lambda_min = 1e-6, double lambda_max = 1e4);

/// Worst-case (supremum) probability of the event over the quadratic-cost
/// Wasserstein ball of radius rho_bar.  The dual is piecewise linear in the
/// multiplier, so the value is computed exactly from its breakpoints.
double wasserstein_worst_prob_1d(double rho_bar, const Eigen::VectorXd& samples,
                                 const IntervalUnion& event);

}  // namespace rht
