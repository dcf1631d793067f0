#include "rht/saa.hpp"

#include <stdexcept>

#include "rht/rng.hpp"

namespace rht {

SaaInstance build_instance(const Eigen::MatrixXd& data1,
                           const Eigen::MatrixXd& data2,
                           std::shared_ptr<const FeatureMap> map,
                           const std::array<SinkhornBall, 2>& balls, int m,
                           std::uint64_t seed) {
  if (!map) throw std::invalid_argument("build_instance: null feature map");
  if (data1.rows() < 1 || data2.rows() < 1) {
    throw std::invalid_argument("build_instance: each hypothesis needs at least one sample");
  }
  if (m < 1) throw std::invalid_argument("build_instance: m must be >= 1");
  if (data1.cols() != data2.cols()) {
    throw std::invalid_argument("build_instance: data dimension mismatch between hypotheses");
  }
  const int d = static_cast<int>(data1.cols());
  if (map->input_dim() != d) {
    throw std::invalid_argument("build_instance: feature map expects dimension " +
                                std::to_string(map->input_dim()) + ", data has " +
                                std::to_string(d));
  }

  SaaInstance inst;
  inst.map = std::move(map);
  inst.balls = balls;
  inst.centers = {data1, data2};
  inst.m = m;
  inst.seed = seed;
  for (int k = 1; k <= 2; ++k) {
    SinkhornBall& ball = inst.balls[k - 1];
    ball.dim = d;
    ball.validate();
    const Eigen::MatrixXd& centers = inst.centers[k - 1];
    const int n = static_cast<int>(centers.rows());
    Eigen::MatrixXd draws(static_cast<Eigen::Index>(n) * m, d);
    for (int i = 0; i < n; ++i) {
      const std::uint64_t stream =
          (static_cast<std::uint64_t>(k) << 32) + static_cast<std::uint64_t>(i);
      draws.middleRows(static_cast<Eigen::Index>(i) * m, m) =
          sample_kernel(ball, centers.row(i).transpose(), m, derive_seed(seed, stream));
    }
    inst.draws[k - 1] = draws;
    inst.features[k - 1] = featurize_rows(*inst.map, draws);
    Eigen::MatrixXd big(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        big(i, j) = inst.features[k - 1].row(static_cast<Eigen::Index>(i) * m + j).norm();
      }
    }
    inst.big_m[k - 1] = big;
  }
  return inst;
}

BitsPattern indicator_pattern(const SaaInstance& inst, const Eigen::VectorXd& theta) {
  if (theta.size() != inst.feature_dim()) {
    throw std::invalid_argument("indicator_pattern: theta has dimension " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(inst.feature_dim()));
  }
  BitsPattern pattern;
  for (int k = 1; k <= 2; ++k) {
    const Eigen::VectorXd scores = inst.features[k - 1] * theta;
    const int n = inst.n(k);
    BitsMatrix bits(n, inst.m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < inst.m; ++j) {
        const double s = scores(static_cast<Eigen::Index>(i) * inst.m + j);
        bits(i, j) = (k == 1 ? s < 0.0 : s >= 0.0) ? 1 : 0;
      }
    }
    pattern[k] = std::move(bits);
  }
  return pattern;
}

SaaObjective saa_objective(const SaaInstance& inst, const Eigen::VectorXd& theta) {
  const BitsPattern pattern = indicator_pattern(inst, theta);
  SaaObjective out;
  for (int k = 1; k <= 2; ++k) {
    out.lambda[k - 1] = optimize_lambda(inst.ball(k), pattern[k]);
    out.s_hat = std::max(out.s_hat, out.lambda[k - 1].value);
  }
  return out;
}

EmpiricalRisk empirical_risk(const Detector& detector,
                             const Eigen::MatrixXd& test1,
                             const Eigen::MatrixXd& test2) {
  if (test1.rows() < 1 || test2.rows() < 1) {
    throw std::invalid_argument("empirical_risk: empty test set");
  }
  EmpiricalRisk out;
  for (int i = 0; i < test1.rows(); ++i) {
    if (detector.score(test1.row(i).transpose()) < 0.0) out.type1 += 1.0;
  }
  for (int i = 0; i < test2.rows(); ++i) {
    if (detector.score(test2.row(i).transpose()) >= 0.0) out.type2 += 1.0;
  }
  out.type1 /= static_cast<double>(test1.rows());
  out.type2 /= static_cast<double>(test2.rows());
  out.max_err = std::max(out.type1, out.type2);
  return out;
}

}  // namespace rht
