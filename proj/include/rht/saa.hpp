#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include <Eigen/Core>

#include "rht/features.hpp"
#include "rht/sinkhorn.hpp"

namespace rht {

/// Sample-average approximation shared by the solvers.  For each hypothesis
/// k (array index k-1) it holds the data centers, m kernel draws per center
/// (row i*m + j of `draws`), their feature vectors, and the big-M constants
/// M_ij = ||phi(y_ij)||_2 bounding |<theta, phi(y_ij)>| over the unit ball.
/// Immutable after build; evaluations are pure.
struct SaaInstance {
  std::shared_ptr<const FeatureMap> map;
  std::array<SinkhornBall, 2> balls;
  std::array<Eigen::MatrixXd, 2> centers;   // n_k x d
  std::array<Eigen::MatrixXd, 2> draws;     // (n_k * m) x d
  std::array<Eigen::MatrixXd, 2> features;  // (n_k * m) x D'
  std::array<Eigen::MatrixXd, 2> big_m;     // n_k x m
  int m = 0;
  std::uint64_t seed = 0;

  int n(int k) const { return static_cast<int>(centers[k - 1].rows()); }
  int feature_dim() const { return static_cast<int>(features[0].cols()); }
  const SinkhornBall& ball(int k) const { return balls[k - 1]; }

  /// Feature row of kernel draw j around center i of hypothesis k.
  auto feature(int k, int i, int j) const {
    return features[k - 1].row(static_cast<Eigen::Index>(i) * m + j);
  }
  double big(int k, int i, int j) const { return big_m[k - 1](i, j); }
};

/// Draws y_ij ~ N(x_i, eps_k I) for every center (stream k * 2^32 + i of the
/// master seed), featurizes them, and precomputes the norms.
SaaInstance build_instance(const Eigen::MatrixXd& data1,
                           const Eigen::MatrixXd& data2,
                           std::shared_ptr<const FeatureMap> map,
                           const std::array<SinkhornBall, 2>& balls, int m,
                           std::uint64_t seed);

struct BitsPattern {
  std::array<BitsMatrix, 2> bits;  // n_k x m each

  BitsMatrix& operator[](int k) { return bits[k - 1]; }
  const BitsMatrix& operator[](int k) const { return bits[k - 1]; }
};

/// Misclassification indicators of the kernel draws under the linear
/// detector theta.  Zero scores count as correct under hypothesis 1 and as
/// errors under hypothesis 2 (the boundary is assigned to hypothesis 1):
/// bits^1 = 1{score < 0}, bits^2 = 1{score >= 0}.
BitsPattern indicator_pattern(const SaaInstance& inst, const Eigen::VectorXd& theta);

struct SaaObjective {
  double s_hat = 0.0;
  std::array<LambdaOpt, 2> lambda;  // per hypothesis dual multiplier result
};

/// Exact objective value at fixed theta: max_k inf_lambda of the dual risk
/// at the indicator pattern of theta.  Scale-free in theta (only signs of
/// scores matter).
SaaObjective saa_objective(const SaaInstance& inst, const Eigen::VectorXd& theta);

struct EmpiricalRisk {
  double type1 = 0.0;
  double type2 = 0.0;
  double max_err = 0.0;
};

/// Plain (non-robust) empirical misclassification rates on test sets.
EmpiricalRisk empirical_risk(const Detector& detector,
                             const Eigen::MatrixXd& test1,
                             const Eigen::MatrixXd& test2);

}  // namespace rht
