#include "rht/sinkhorn.hpp"

#include <cmath>
#include <stdexcept>

#include "rht/errors.hpp"
#include "rht/rng.hpp"

namespace rht {

void SinkhornBall::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("sinkhorn ball: epsilon must be positive and finite");
  }
  if (!(rho_bar >= 0.0) || !std::isfinite(rho_bar)) {
    throw std::invalid_argument("sinkhorn ball: rho_bar must be nonnegative and finite");
  }
  if (dim <= 0) throw std::invalid_argument("sinkhorn ball: dim must be positive");
}

double rho_bar_from_rho(double rho, double epsilon, int dim) {
  return rho + epsilon * (dim / 2.0) * std::log(2.0 * M_PI * epsilon);
}

Eigen::MatrixXd sample_kernel(const SinkhornBall& ball,
                              const Eigen::VectorXd& center, int count,
                              std::uint64_t seed) {
  ball.validate();
  if (center.size() != ball.dim) {
    throw std::invalid_argument("sample_kernel: center dimension mismatch");
  }
  const double sd = std::sqrt(ball.epsilon);
  Eigen::MatrixXd out(count, ball.dim);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < ball.dim; ++j) out(i, j) = center(j) + sd * rng.normal();
  }
  return out;
}

double scaled_log_mean_exp(double scale, const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!(scale > 0.0) || mx / scale == kInf) return mx;
  double s = 0.0;
  for (int j = 0; j < v.size(); ++j) s += std::exp((v(j) - mx) / scale);
  return mx + scale * std::log(s / static_cast<double>(v.size()));
}

namespace {

// Row counts of ones; the binary dual reduces to a two-point mixture per row.
Eigen::VectorXi row_counts(const BitsMatrix& bits) {
  Eigen::VectorXi c(bits.rows());
  for (int i = 0; i < bits.rows(); ++i) {
    int s = 0;
    for (int j = 0; j < bits.cols(); ++j) s += bits(i, j);
    c(i) = s;
  }
  return c;
}

double dual_from_counts(const SinkhornBall& ball, double lambda,
                        const Eigen::VectorXi& counts, int m) {
  const double le = lambda * ball.epsilon;
  const int n = static_cast<int>(counts.size());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = static_cast<double>(counts(i)) / m;
    if (le > 0.0 && std::isfinite(1.0 / le)) {
      acc += le * log_mix_exp(w, 1.0 / le);
    } else {
      acc += counts(i) > 0 ? 1.0 : 0.0;
    }
  }
  return lambda * ball.rho_bar + acc / n;
}

}  // namespace

double dual_objective_bits(const SinkhornBall& ball, double lambda,
                           const BitsMatrix& bits) {
  ball.validate();
  if (bits.rows() == 0 || bits.cols() == 0) {
    throw std::invalid_argument("dual_objective_bits: empty pattern");
  }
  return dual_from_counts(ball, lambda, row_counts(bits), static_cast<int>(bits.cols()));
}

double dual_objective_values(const SinkhornBall& ball, double lambda,
                             const Eigen::MatrixXd& values) {
  ball.validate();
  if (values.rows() == 0 || values.cols() == 0) {
    throw std::invalid_argument("dual_objective_values: empty payoff matrix");
  }
  const double le = lambda * ball.epsilon;
  double acc = 0.0;
  for (int i = 0; i < values.rows(); ++i) {
    acc += scaled_log_mean_exp(le, values.row(i).transpose());
  }
  return lambda * ball.rho_bar + acc / static_cast<double>(values.rows());
}

LambdaOpt optimize_lambda(const SinkhornBall& ball, const BitsMatrix& bits,
                          double lambda_min, double lambda_max) {
  if (bits.rows() == 0 || bits.cols() == 0) {
    throw std::invalid_argument("optimize_lambda: empty pattern");
  }
  return optimize_lambda_counts(ball, row_counts(bits), static_cast<int>(bits.cols()),
                                lambda_min, lambda_max);
}

LambdaOpt optimize_lambda_counts(const SinkhornBall& ball,
                                 const Eigen::VectorXi& counts, int m,
                                 double lambda_min, double lambda_max) {
  ball.validate();
  if (counts.size() == 0 || m < 1) {
    throw std::invalid_argument("optimize_lambda_counts: empty pattern");
  }
  const int n = static_cast<int>(counts.size());

  LambdaOpt best;
  // lambda -> 0 limit: mean of row maxima.
  double zero_limit = 0.0;
  for (int i = 0; i < n; ++i) zero_limit += counts(i) > 0 ? 1.0 : 0.0;
  zero_limit /= n;
  best.lambda = 0.0;
  best.value = zero_limit;
  best.at_zero_limit = true;

  const auto f = [&](double lam) { return dual_from_counts(ball, lam, counts, m); };
  const ScalarMin interior = minimize_log_grid(f, lambda_min, lambda_max);
  if (interior.value < best.value) {
    best = {interior.x, interior.value, false};
  }
  if (ball.rho_bar == 0.0) {
    // lambda -> infinity limit: plain mean of the pattern.
    const double mean = counts.cast<double>().sum() / (static_cast<double>(n) * m);
    if (mean <= best.value) best = {lambda_max, mean, false};
  }
  return best;
}

WorstCaseCloud worst_case_cloud(const SinkhornBall& ball,
                                const Eigen::MatrixXd& centers,
                                const Detector& detector, int hypothesis,
                                double lambda, int samples_per_center,
                                std::uint64_t seed) {
  ball.validate();
  if (hypothesis != 1 && hypothesis != 2) {
    throw std::invalid_argument("worst_case_cloud: hypothesis must be 1 or 2");
  }
  if (!(lambda > 0.0)) {
    throw SolverError(
        "worst_case_cloud: requires a strictly positive multiplier; the dual "
        "optimum degenerated to the lambda -> 0 limit for this detector");
  }
  if (samples_per_center <= 0) {
    throw std::invalid_argument("worst_case_cloud: samples_per_center must be positive");
  }
  const int n = static_cast<int>(centers.rows());
  const double le = lambda * ball.epsilon;
  WorstCaseCloud cloud;
  cloud.num_centers = n;
  cloud.samples_per_center = samples_per_center;
  cloud.lambda = lambda;
  cloud.points.reserve(static_cast<std::size_t>(n) * samples_per_center);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd draws =
        sample_kernel(ball, centers.row(i).transpose(), samples_per_center,
                      derive_seed(seed, static_cast<std::uint64_t>(i)));
    Eigen::VectorXd bit(samples_per_center);
    for (int l = 0; l < samples_per_center; ++l) {
      const double sc = detector.score(draws.row(l).transpose());
      const bool err = hypothesis == 1 ? sc < 0.0 : sc >= 0.0;
      bit(l) = err ? 1.0 : 0.0;
    }
    // Normalized exp(bit / (lambda*eps)); max-shifted so the unnormalized
    // weights never overflow even for tiny multipliers.
    const double mx = bit.maxCoeff();
    Eigen::VectorXd w(samples_per_center);
    double tot = 0.0;
    for (int l = 0; l < samples_per_center; ++l) {
      w(l) = std::exp((bit(l) - mx) / le);
      tot += w(l);
    }
    for (int l = 0; l < samples_per_center; ++l) {
      cloud.points.push_back({i, draws.row(l).transpose(), w(l) / tot});
    }
  }
  return cloud;
}

CloudError cloud_misclassification(const WorstCaseCloud& cloud,
                                   const Detector& detector, int hypothesis) {
  CloudError out;
  if (cloud.points.empty()) return out;
  for (const WorstCasePoint& p : cloud.points) {
    const double sc = detector.score(p.z);
    const bool err = hypothesis == 1 ? sc < 0.0 : sc >= 0.0;
    if (err) {
      out.weighted += p.weight;
      out.unweighted += 1.0;
    }
  }
  out.weighted /= cloud.num_centers;
  out.unweighted /= static_cast<double>(cloud.points.size());
  return out;
}

double variance_regularizer(const SinkhornBall& ball,
                            const Eigen::MatrixXd& centers,
                            const std::function<bool(const Eigen::VectorXd&)>& event,
                            int mc_count, std::uint64_t seed) {
  ball.validate();
  if (mc_count <= 0) throw std::invalid_argument("variance_regularizer: mc_count must be positive");
  const int n = static_cast<int>(centers.rows());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd draws =
        sample_kernel(ball, centers.row(i).transpose(), mc_count,
                      derive_seed(seed, static_cast<std::uint64_t>(i)));
    int hits = 0;
    for (int l = 0; l < mc_count; ++l) {
      if (event(draws.row(l).transpose())) ++hits;
    }
    const double q = static_cast<double>(hits) / mc_count;
    acc += q * (1.0 - q);
  }
  return acc / n;
}

double sinkhorn_worst_prob_1d(const SinkhornBall& ball,
                              const Eigen::VectorXd& samples,
                              const IntervalUnion& event, int mc_count,
                              std::uint64_t seed,
                              double lambda_min, double lambda_max) {
  ball.validate();
  if (ball.dim != 1) throw std::invalid_argument("sinkhorn_worst_prob_1d: ball.dim must be 1");
  const int n = static_cast<int>(samples.size());
  if (n == 0) throw std::invalid_argument("sinkhorn_worst_prob_1d: no samples");
  const double sd = std::sqrt(ball.epsilon);
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) {
    if (mc_count > 0) {
      Eigen::VectorXd c(1);
      c(0) = samples(i);
      const Eigen::MatrixXd draws =
          sample_kernel(ball, c, mc_count, derive_seed(seed, static_cast<std::uint64_t>(i)));
      int hits = 0;
      for (int l = 0; l < mc_count; ++l) hits += event.contains(draws(l, 0)) ? 1 : 0;
      q(i) = static_cast<double>(hits) / mc_count;
    } else {
      q(i) = event.gaussian_measure(samples(i), sd);
    }
  }

  const auto f = [&](double lam) {
    const double le = lam * ball.epsilon;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += le * log1p_q_expm1(q(i), 1.0 / le);
    return lam * ball.rho_bar + acc / n;
  };
  // lambda -> 0 limit: fraction of centers giving the event positive mass.
  double best = 0.0;
  for (int i = 0; i < n; ++i) best += q(i) > 0.0 ? 1.0 : 0.0;
  best /= n;
  best = std::min(best, minimize_log_grid(f, lambda_min, lambda_max).value);
  if (ball.rho_bar == 0.0) best = std::min(best, q.mean());
  return best;
}

double wasserstein_worst_prob_1d(double rho_bar, const Eigen::VectorXd& samples,
                                 const IntervalUnion& event) {
  if (!(rho_bar >= 0.0)) throw std::invalid_argument("wasserstein_worst_prob_1d: rho_bar must be nonnegative");
  const int n = static_cast<int>(samples.size());
  if (n == 0) throw std::invalid_argument("wasserstein_worst_prob_1d: no samples");
  if (event.empty()) return 0.0;

  // sup P(E) = inf_{lam >= 0} lam*rho_bar + mean_i max(0, 1 - lam d_E(x_i)^2/2):
  // piecewise linear and convex in lam, so scan the breakpoints.
  Eigen::VectorXd d2(n);
  for (int i = 0; i < n; ++i) {
    const double d = event.distance_to_set(samples(i));
    d2(i) = d * d;
  }
  const auto value = [&](double lam) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += std::max(0.0, 1.0 - lam * d2(i) / 2.0);
    return lam * rho_bar + acc / n;
  };
  // The largest breakpoint saturates every positive-distance term, so it
  // also covers the rho_bar == 0 plateau at lam -> infinity.
  double best = value(0.0);
  for (int i = 0; i < n; ++i) {
    if (d2(i) > 0.0) best = std::min(best, value(2.0 / d2(i)));
  }
  return best;
}

}  // namespace rht
