#include "rht/cvar_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "rht/errors.hpp"
#include "rht/math_util.hpp"
#include "rht/rng.hpp"

namespace rht {
namespace {

// beta floor used by the SGD box and the exact inner search
double beta_floor(const SaaInstance& inst, const CvarParams& params) {
  double mx = 0.0;
  for (int k = 1; k <= 2; ++k) mx = std::max(mx, inst.big_m[k - 1].maxCoeff());
  return -std::max(1.0, params.b_multiplier * mx);
}

// Signed hinge inputs u_ij = (-1)^k <theta, F_ij> for one hypothesis.
Eigen::MatrixXd hinge_inputs(const SaaInstance& inst, int k,
                             const Eigen::VectorXd& theta) {
  const double sign = k == 1 ? -1.0 : 1.0;
  Eigen::VectorXd scores = inst.features[k - 1] * theta;
  Eigen::MatrixXd u(inst.n(k), inst.m);
  for (int i = 0; i < inst.n(k); ++i) {
    for (int j = 0; j < inst.m; ++j) {
      u(i, j) = sign * scores(static_cast<Eigen::Index>(i) * inst.m + j);
    }
  }
  return u;
}

// G_k at fixed (beta, lambda) given precomputed hinge inputs.
double g_value(const SinkhornBall& ball, const Eigen::MatrixXd& u, double s,
               double beta, double lambda) {
  const double le = lambda * ball.epsilon;
  const int n = static_cast<int>(u.rows());
  double acc = 0.0;
  Eigen::VectorXd h(u.cols());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < u.cols(); ++j) h(j) = std::max(u(i, j) - beta, 0.0);
    acc += scaled_log_mean_exp(le, h);
  }
  return s * beta + lambda * ball.rho_bar + acc / n;
}

}  // namespace

void CvarParams::validate() const {
  if (!(0.0 <= s_lb && s_lb < s_ub && s_ub <= 1.0)) {
    throw ConfigError("cvar: bisection interval must satisfy 0 <= s_lb < s_ub <= 1");
  }
  if (!(upsilon > 0.0)) throw ConfigError("cvar: upsilon must be positive");
  if (iterations < 0) throw ConfigError("cvar: iterations must be nonnegative");
  if (batch_centers < 1) throw ConfigError("cvar: batch_centers must be at least 1");
  if (!(step_c > 0.0)) throw ConfigError("cvar: step_c must be positive");
  if (!(lambda_min > 0.0 && lambda_min < lambda_max)) {
    throw ConfigError("cvar: lambda box must satisfy 0 < lambda_min < lambda_max");
  }
  if (!(b_multiplier > 0.0)) throw ConfigError("cvar: b_multiplier must be positive");
  if (!(averaging_fraction > 0.0 && averaging_fraction <= 1.0)) {
    throw ConfigError("cvar: averaging_fraction must lie in (0, 1]");
  }
  if (!(tol_feas >= 0.0)) throw ConfigError("cvar: tol_feas must be nonnegative");
}

Eigen::VectorXd project_part(CvarConstraint constraint, const Eigen::VectorXd& v,
                             double lo, double hi) {
  switch (constraint) {
    case CvarConstraint::kUnitBall:
      return project_to_unit_ball(v);
    case CvarConstraint::kNonpositiveWithFloor: {
      Eigen::VectorXd out = v;
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        out(i) = std::clamp(out(i), lo, 0.0);
      }
      return out;
    }
    case CvarConstraint::kLambdaBox: {
      Eigen::VectorXd out = v;
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        out(i) = std::clamp(out(i), lo, hi);
      }
      return out;
    }
    case CvarConstraint::kSimplexTwo: {
      // Euclidean projection of (a, b) onto {(t, 1-t) : t in [0, 1]}
      const double t = std::clamp((v(0) - v(1) + 1.0) / 2.0, 0.0, 1.0);
      Eigen::VectorXd out(2);
      out << t, 1.0 - t;
      return out;
    }
  }
  return v;
}

InnerMin cvar_inner_min(const SaaInstance& inst, int k, const Eigen::VectorXd& theta,
                        double s, double beta_lo, double beta_hi,
                        double lambda_min, double lambda_max) {
  const SinkhornBall& ball = inst.ball(k);
  const Eigen::MatrixXd u = hinge_inputs(inst, k, theta);
  const auto value_at_beta = [&](double beta) {
    return minimize_log_grid(
        [&](double lam) { return g_value(ball, u, s, beta, lam); }, lambda_min,
        lambda_max);
  };
  InnerMin out;
  if (beta_hi - beta_lo < 1e-15) {
    out.beta = beta_lo;
  } else {
    // G is jointly convex in (beta, lambda); the partial minimum over
    // lambda is convex in beta, so golden section is exact.
    out.beta = golden_section_min(
        [&](double beta) { return value_at_beta(beta).value; }, beta_lo, beta_hi);
  }
  const ScalarMin lam = value_at_beta(out.beta);
  out.lambda = lam.x;
  out.value = lam.value;
  return out;
}

double cvar_value_at(const SaaInstance& inst, const Eigen::VectorXd& theta,
                     double s, const CvarParams& params, bool freeze_beta,
                     CvarIterate* argmin) {
  const double floor = beta_floor(inst, params);
  double worst = -kInf;
  CvarIterate it;
  it.theta = theta;
  for (int k = 1; k <= 2; ++k) {
    const InnerMin inner =
        freeze_beta
            ? cvar_inner_min(inst, k, theta, s, -1.0, -1.0, params.lambda_min,
                             params.lambda_max)
            : cvar_inner_min(inst, k, theta, s, floor, 0.0, params.lambda_min,
                             params.lambda_max);
    it.beta[k - 1] = inner.beta;
    it.lambda[k - 1] = inner.lambda;
    if (inner.value > worst) {
      worst = inner.value;
      it.tau = k == 1 ? std::array<double, 2>{1.0, 0.0}
                      : std::array<double, 2>{0.0, 1.0};
    }
  }
  if (argmin) *argmin = it;
  return worst;
}

CvarValue subproblem_value_T(double s, const SaaInstance& inst,
                             const CvarParams& params, bool freeze_beta) {
  params.validate();
  const double floor = beta_floor(inst, params);
  const int dfeat = inst.feature_dim();
  Rng rng(derive_seed(params.seed, 0x5add1e));

  // initial point: the feature-mean discriminant direction when available
  Eigen::VectorXd disc =
      inst.features[0].colwise().mean().transpose() -
      inst.features[1].colwise().mean().transpose();
  if (disc.norm() > 1e-12) {
    disc /= disc.norm();
  } else {
    disc = Eigen::VectorXd::Zero(dfeat);
  }

  Eigen::VectorXd theta = disc;
  std::array<double, 2> beta{-1.0, -1.0};
  std::array<double, 2> lambda{1.0, 1.0};
  double tau1 = 0.5;

  Eigen::VectorXd theta_avg = Eigen::VectorXd::Zero(dfeat);
  long avg_count = 0;
  const int avg_start =
      params.iterations -
      static_cast<int>(params.iterations * params.averaging_fraction);

  // periodic exact polling of the running iterate (small instances only)
  const bool poll = inst.n(1) * inst.m + inst.n(2) * inst.m <= 512;
  const int poll_every = std::max(50, params.iterations / 64);
  double best_polled = kInf;
  Eigen::VectorXd best_theta = disc;

  for (int t = 1; t <= params.iterations; ++t) {
    const double step = params.step_c / std::sqrt(static_cast<double>(t));
    Eigen::VectorXd g_theta = Eigen::VectorXd::Zero(dfeat);
    std::array<double, 2> g_hat{0.0, 0.0};
    std::array<double, 2> g_beta{0.0, 0.0};
    std::array<double, 2> g_loglam{0.0, 0.0};
    for (int k = 1; k <= 2; ++k) {
      const SinkhornBall& ball = inst.ball(k);
      const double le = lambda[k - 1] * ball.epsilon;
      const double sign = k == 1 ? -1.0 : 1.0;
      for (int b = 0; b < params.batch_centers; ++b) {
        const int i = static_cast<int>(rng.next_below(
            static_cast<std::uint64_t>(inst.n(k))));
        Eigen::VectorXd h(inst.m);
        Eigen::VectorXd active(inst.m);
        for (int j = 0; j < inst.m; ++j) {
          const double u = sign * inst.feature(k, i, j).dot(theta);
          active(j) = u > beta[k - 1] ? 1.0 : 0.0;  // subgradient 0 at the kink
          h(j) = active(j) > 0.0 ? u - beta[k - 1] : 0.0;
        }
        const double lse = scaled_log_mean_exp(le, h);
        // max-shifted softmax weights of the row
        const double mx = h.maxCoeff();
        Eigen::VectorXd w(inst.m);
        if (le > 1e-300) {
          for (int j = 0; j < inst.m; ++j) w(j) = std::exp((h(j) - mx) / le);
        } else {
          for (int j = 0; j < inst.m; ++j) w(j) = h(j) >= mx ? 1.0 : 0.0;
        }
        w /= w.sum();
        const double bw = 1.0 / params.batch_centers;
        g_hat[k - 1] += bw * (s * beta[k - 1] + lambda[k - 1] * ball.rho_bar + lse);
        const double tau_k = k == 1 ? tau1 : 1.0 - tau1;
        double wh = 0.0;
        for (int j = 0; j < inst.m; ++j) {
          wh += w(j) * h(j);
          if (active(j) > 0.0) {
            g_theta += bw * tau_k * w(j) * sign *
                       inst.feature(k, i, j).transpose();
          }
        }
        g_beta[k - 1] += bw * (s - active.dot(w));
        g_loglam[k - 1] +=
            bw * (lambda[k - 1] * ball.rho_bar + lse - wh);
      }
    }
    if (!std::isfinite(g_hat[0]) || !std::isfinite(g_hat[1]) ||
        !g_theta.allFinite()) {
      throw SolverError("cvar subproblem diverged (non-finite iterate); "
                        "reduce the step constant");
    }
    theta = project_to_unit_ball(theta - (step * 2.0) * g_theta);
    for (int k = 0; k < 2; ++k) {
      const double tau_k = k == 0 ? tau1 : 1.0 - tau1;
      if (!freeze_beta) {
        beta[k] = std::clamp(beta[k] - step * tau_k * g_beta[k], floor, 0.0);
      }
      // lambda moves in log space (multiplicative) and is clamped to its box
      const double lu = std::log(lambda[k]) - step * tau_k * g_loglam[k];
      lambda[k] = std::clamp(std::exp(lu), params.lambda_min, params.lambda_max);
    }
    tau1 = std::clamp(tau1 + step * (g_hat[0] - g_hat[1]), 0.0, 1.0);
    if (t > avg_start) {
      theta_avg += theta;
      ++avg_count;
    }
    if (poll && t % poll_every == 0 && theta.norm() > 1e-12) {
      const Eigen::VectorXd cand = theta / theta.norm();
      const double v = cvar_value_at(inst, cand, s, params, freeze_beta);
      if (v < best_polled) {
        best_polled = v;
        best_theta = cand;
      }
    }
  }
  if (avg_count > 0) theta_avg /= static_cast<double>(avg_count);

  // exact evaluation at unit-normalized candidates (scale-meaningful; see
  // header notes on the homogeneity degeneracy)
  std::vector<Eigen::VectorXd> candidates;
  const auto add_candidate = [&](const Eigen::VectorXd& v) {
    if (v.size() == dfeat && v.norm() > 1e-12) candidates.push_back(v / v.norm());
  };
  add_candidate(theta_avg);
  add_candidate(theta);
  add_candidate(disc);
  if (best_polled < kInf) candidates.push_back(best_theta);

  CvarValue out;
  out.t_value = kInf;
  for (const Eigen::VectorXd& cand : candidates) {
    CvarIterate it;
    const double v = cvar_value_at(inst, cand, s, params, freeze_beta, &it);
    if (v < out.t_value) {
      out.t_value = v;
      out.iterate = it;
    }
  }
  if (candidates.empty()) {
    // degenerate instance (all features zero): report the zero detector
    CvarIterate it;
    it.theta = Eigen::VectorXd::Zero(dfeat);
    const double v = cvar_value_at(inst, it.theta, s, params, freeze_beta, &it);
    out.t_value = v;
    out.iterate = it;
  }
  return out;
}

namespace {

CvarSolution bisect_impl(const SaaInstance& inst, const CvarParams& params,
                         bool freeze_beta) {
  params.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  double lb = params.s_lb;
  double ub = params.s_ub;

  CvarSolution sol;
  // Upper endpoint feasibility.  s = 1 needs no certificate (probabilities
  // never exceed one); a user-restricted upper endpoint is checked.
  if (ub >= 1.0 - 1e-12) {
    sol.iterate.theta = Eigen::VectorXd::Zero(inst.feature_dim());
    sol.iterate.beta = {-1.0, -1.0};
    sol.iterate.lambda = {params.lambda_min, params.lambda_min};
    sol.t_at_s = cvar_value_at(inst, sol.iterate.theta, ub, params, freeze_beta);
  } else {
    CvarParams sub = params;
    sub.seed = derive_seed(params.seed, 0);
    const CvarValue v = subproblem_value_T(ub, inst, sub, freeze_beta);
    if (v.t_value > params.tol_feas) {
      throw SolverError("cvar bisection: T(s_ub) above tolerance; the interval "
                        "upper endpoint is not feasible");
    }
    sol.iterate = v.iterate;
    sol.t_at_s = v.t_value;
  }

  int iteration = 0;
  while (ub - lb > params.upsilon) {
    ++iteration;
    const double mid = 0.5 * (lb + ub);
    CvarParams sub = params;
    sub.seed = derive_seed(params.seed, static_cast<std::uint64_t>(iteration));
    const CvarValue v = subproblem_value_T(mid, inst, sub, freeze_beta);
    // The returned value is already the exact finite-sum evaluation at the
    // certifying unit detector, so it is its own re-validation.
    if (v.t_value <= params.tol_feas) {
      ub = mid;
      sol.iterate = v.iterate;
      sol.t_at_s = v.t_value;
    } else {
      lb = mid;
    }
    sol.trace.push_back({iteration, lb, ub, v.t_value, wall()});
  }
  sol.s = ub;
  return sol;
}

}  // namespace

CvarSolution bisection_solve(const SaaInstance& inst, const CvarParams& params) {
  return bisect_impl(inst, params, /*freeze_beta=*/false);
}

CvarSolution genfun_solve(const SaaInstance& inst, const CvarParams& params) {
  return bisect_impl(inst, params, /*freeze_beta=*/true);
}

}  // namespace rht
