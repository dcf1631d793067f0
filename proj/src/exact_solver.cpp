#include "rht/exact_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <iomanip>
#include <map>
#include <mutex>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "rht/errors.hpp"
#include "rht/rng.hpp"

namespace rht {
namespace {

constexpr double kLambdaMin = 1e-6;
constexpr double kLambdaMax = 1e4;
constexpr double kDegenerateNorm = 1e-300;

using FixedMatrix = Eigen::Matrix<signed char, Eigen::Dynamic, Eigen::Dynamic>;

// Exact value of the dual at the pattern of currently fixed ones.  Valid
// lower bound for the whole subtree: the dual value is nondecreasing in the
// pattern and every completion contains the fixed ones.
double fixed_ones_bound(const MiecpModel& model, const BnbNode& node,
                        std::array<LambdaOpt, 2>* lambda = nullptr) {
  double bound = 0.0;
  for (int k = 1; k <= 2; ++k) {
    const FixedMatrix& fixed = node[k];
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(fixed.rows());
    for (int i = 0; i < fixed.rows(); ++i) {
      for (int j = 0; j < fixed.cols(); ++j) {
        if (fixed(i, j) == 1) ++counts(i);
      }
    }
    const LambdaOpt opt = optimize_lambda_counts(model.balls[k - 1], counts, model.m,
                                                 kLambdaMin, kLambdaMax);
    if (lambda) (*lambda)[k - 1] = opt;
    bound = std::max(bound, opt.value);
  }
  return bound;
}

// Halfspace implied by a binary fixed to zero, normalized to a unit
// direction:  dir'theta + eta <= 0.  Hypothesis 1 (score >= 0) is weak;
// hypothesis 2 (score < 0) carries the model margin.
struct ZeroConstraint {
  Eigen::VectorXd dir;
  double eta;
};

std::vector<ZeroConstraint> zero_constraints(const MiecpModel& model,
                                             const BnbNode& node) {
  std::vector<ZeroConstraint> cs;
  for (int k = 1; k <= 2; ++k) {
    const FixedMatrix& fixed = node[k];
    for (int i = 0; i < fixed.rows(); ++i) {
      for (int j = 0; j < model.m; ++j) {
        if (fixed(i, j) != 0) continue;
        const double big = model.big(k, i, j);
        if (big <= kDegenerateNorm) continue;  // zero feature rows are pre-fixed
        const Eigen::VectorXd f = model.feature(k, i, j).transpose() / big;
        if (k == 1) {
          cs.push_back({-f, 0.0});
        } else {
          cs.push_back({f, model.margin});
        }
      }
    }
  }
  return cs;
}

struct Feasibility {
  bool infeasible = false;      // certified empty
  Eigen::VectorXd witness;      // satisfies every constraint when !infeasible
  bool witness_valid = false;
};

bool satisfies_all(const std::vector<ZeroConstraint>& cs, const Eigen::VectorXd& theta,
                   double slack = 1e-12) {
  for (const ZeroConstraint& c : cs) {
    if (c.dir.dot(theta) + c.eta > slack) return false;
  }
  return true;
}

// Exact circle geometry for two-dimensional feature spaces: the feasible
// set on the unit circle is an intersection of closed arcs, so if nonempty
// it contains an arc endpoint (or an arc center when only one constraint
// binds).
Feasibility check_feasible_2d(const std::vector<ZeroConstraint>& cs) {
  Feasibility out;
  std::vector<double> candidates;
  candidates.reserve(cs.size() * 3 + 2);
  for (const ZeroConstraint& c : cs) {
    const double center = std::atan2(-c.dir(1), -c.dir(0));
    const double half = M_PI / 2.0 - std::asin(std::min(1.0, c.eta));
    candidates.push_back(center);
    candidates.push_back(center + half);
    candidates.push_back(center - half);
  }
  candidates.push_back(0.0);
  for (const double a : candidates) {
    const Eigen::Vector2d theta(std::cos(a), std::sin(a));
    if (satisfies_all(cs, theta)) {
      out.witness = theta;
      out.witness_valid = true;
      return out;
    }
  }
  out.infeasible = true;
  return out;
}

// General dimension: Gilbert iteration for the minimum-norm point of the
// convex hull of the constraint directions.  A hull direction separated
// from zero certifies feasibility (theta = -g/|g| clears every halfspace by
// the separation amount); a hull combination with norm below its weighted
// margin sum certifies emptiness (Farkas).  The narrow undecided band is
// treated as feasible: never wrong, only potentially weaker pruning.
Feasibility check_feasible_general(const std::vector<ZeroConstraint>& cs, int dim) {
  Feasibility out;
  Eigen::VectorXd g = cs.front().dir;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cs.size()));
  w(0) = 1.0;
  double eta_w = cs.front().eta;
  for (int it = 0; it < 400; ++it) {
    int best = 0;
    double bestdot = kInf;
    for (std::size_t c = 0; c < cs.size(); ++c) {
      const double d = g.dot(cs[c].dir);
      if (d < bestdot) {
        bestdot = d;
        best = static_cast<int>(c);
      }
    }
    const double gn = g.norm();
    if (gn > 1e-14 && bestdot / gn > 1e-9) {
      // Hull is separated from the origin: -g/|g| satisfies every
      // constraint with margin bestdot/gn > eta (etas are ~1e-9 or 0).
      const Eigen::VectorXd theta = -g / gn;
      if (satisfies_all(cs, theta)) {
        out.witness = theta;
        out.witness_valid = true;
        return out;
      }
    }
    if (gn < eta_w - 1e-15) {
      out.infeasible = true;  // Farkas certificate with weights w
      return out;
    }
    const Eigen::VectorXd& u = cs[best].dir;
    const Eigen::VectorXd diff = g - u;
    const double denom = diff.squaredNorm();
    if (denom < 1e-30) break;
    const double t = std::clamp(g.dot(diff) / denom, 0.0, 1.0);
    g = (1.0 - t) * g + t * u;
    w *= (1.0 - t);
    w(best) += t;
    eta_w = 0.0;
    for (std::size_t c = 0; c < cs.size(); ++c) eta_w += w(c) * cs[c].eta;
  }
  // Undecided: report feasible without a witness.
  (void)dim;
  return out;
}

Feasibility check_feasible(const std::vector<ZeroConstraint>& cs, int dim) {
  Feasibility out;
  if (cs.empty()) {
    out.witness = Eigen::VectorXd::Zero(dim);
    out.witness_valid = true;
    return out;
  }
  bool any_eta = false;
  for (const ZeroConstraint& c : cs) any_eta = any_eta || c.eta > 0.0;
  if (!any_eta) {
    // Every halfspace is weak and homogeneous: the zero detector satisfies
    // all of them.
    out.witness = Eigen::VectorXd::Zero(dim);
    out.witness_valid = true;
    return out;
  }
  if (dim == 2) return check_feasible_2d(cs);
  return check_feasible_general(cs, dim);
}

struct ArcMinimum {
  bool found = false;
  double value = kInf;
  Eigen::VectorXd theta;
};

// Exact node optimum for two-dimensional feature spaces.  On the unit
// circle the free-indicator pattern is constant between consecutive
// breakpoints: the angles where a free feature score changes sign (a pair
// pi/2 off each feature's own angle) together with the endpoints of the
// fixed-zero arcs.  Evaluating one angle inside every gap plus every
// breakpoint itself therefore visits every pattern a feasible detector can
// realize, and the minimum over those candidates is the exact minimum of
// the node objective -- a tight subtree bound.  Candidate angles exactly on
// a score boundary inherit the boundary convention of the indicator (a zero
// score is correct under hypothesis 1 and an error under hypothesis 2).
ArcMinimum exact_minimum_2d(const MiecpModel& model, const BnbNode& node,
                            const std::vector<ZeroConstraint>& cs,
                            const Eigen::VectorXd& witness) {
  const auto wrap = [](double a) {
    a = std::fmod(a, 2.0 * M_PI);
    return a < 0.0 ? a + 2.0 * M_PI : a;
  };
  std::vector<double> breaks;
  breaks.reserve(static_cast<std::size_t>(model.num_binaries()) * 2 + cs.size() * 2 + 2);
  for (int k = 1; k <= 2; ++k) {
    const FixedMatrix& fixed = node[k];
    for (int i = 0; i < fixed.rows(); ++i) {
      for (int j = 0; j < model.m; ++j) {
        if (fixed(i, j) >= 0) continue;
        if (model.big(k, i, j) <= kDegenerateNorm) continue;
        const auto f = model.feature(k, i, j);
        const double alpha = std::atan2(f(1), f(0));
        breaks.push_back(wrap(alpha + M_PI / 2.0));
        breaks.push_back(wrap(alpha - M_PI / 2.0));
      }
    }
  }
  for (const ZeroConstraint& c : cs) {
    const double a = std::atan2(c.dir(1), c.dir(0));
    const double off = M_PI / 2.0 + std::asin(std::clamp(c.eta, 0.0, 1.0));
    breaks.push_back(wrap(a + off));
    breaks.push_back(wrap(a - off));
  }
  // The feasibility witness doubles as a candidate so the sweep never comes
  // back empty on a node the feasibility check accepted.
  if (witness.size() == 2 && witness.norm() > 0.0) {
    breaks.push_back(wrap(std::atan2(witness(1), witness(0))));
  }
  if (breaks.empty()) breaks.push_back(0.0);
  std::sort(breaks.begin(), breaks.end());

  ArcMinimum out;
  // The lambda search depends on the pattern only through per-row counts;
  // opposite arcs and revisited patterns share the cached value.
  std::array<std::map<std::vector<int>, double>, 2> memo;
  const auto eval_angle = [&](double ang) {
    Eigen::VectorXd theta(2);
    theta << std::cos(ang), std::sin(ang);
    if (!satisfies_all(cs, theta)) return;
    double v = 0.0;
    for (int k = 1; k <= 2; ++k) {
      const FixedMatrix& fixed = node[k];
      const int n = static_cast<int>(fixed.rows());
      Eigen::VectorXi counts(n);
      for (int i = 0; i < n; ++i) {
        int c = 0;
        for (int j = 0; j < model.m; ++j) {
          const signed char f = fixed(i, j);
          if (f >= 0) {
            c += f;
            continue;
          }
          const double score = model.feature(k, i, j).dot(theta);
          if (k == 1 ? score < 0.0 : score >= 0.0) ++c;
        }
        counts(i) = c;
      }
      std::vector<int> key(counts.data(), counts.data() + n);
      const auto [it, inserted] = memo[k - 1].try_emplace(std::move(key), 0.0);
      if (inserted) {
        it->second = optimize_lambda_counts(model.balls[k - 1], counts, model.m,
                                            kLambdaMin, kLambdaMax)
                         .value;
      }
      v = std::max(v, it->second);
    }
    if (v < out.value) {
      out.value = v;
      out.theta = theta;
      out.found = true;
    }
  };
  for (std::size_t b = 0; b < breaks.size(); ++b) {
    eval_angle(breaks[b]);
    const double next = b + 1 < breaks.size() ? breaks[b + 1] : breaks.front() + 2.0 * M_PI;
    eval_angle(0.5 * (breaks[b] + next));
  }
  return out;
}

// Relaxed indicator value of a free binary at the current detector.
double relaxed_z(const MiecpModel& model, int k, int i, int j,
                 const Eigen::VectorXd& theta) {
  const double big = model.big(k, i, j);
  if (big <= kDegenerateNorm) return k == 1 ? 0.0 : 1.0;
  const double score = model.feature(k, i, j).dot(theta);
  const double v = (k == 1 ? -score : score) / big;
  return std::clamp(v, 0.0, 1.0);
}

struct RelaxEval {
  double value = 0.0;       // max_k G_k plus penalty
  int active_k = 1;
  Eigen::VectorXd grad_theta;
  double grad_log_lambda = 0.0;  // for the active k
};

RelaxEval eval_relaxation(const MiecpModel& model, const BnbNode& node,
                          const std::vector<ZeroConstraint>& cs,
                          const Eigen::VectorXd& theta,
                          const std::array<double, 2>& lambda, double kappa) {
  RelaxEval out;
  out.grad_theta = Eigen::VectorXd::Zero(model.feature_dim);
  std::array<double, 2> g{0.0, 0.0};
  std::array<Eigen::VectorXd, 2> gtheta;
  std::array<double, 2> glog{0.0, 0.0};
  for (int k = 1; k <= 2; ++k) {
    const SinkhornBall& ball = model.balls[k - 1];
    const double lam = lambda[k - 1];
    const double le = lam * ball.epsilon;
    const FixedMatrix& fixed = node[k];
    const int n = static_cast<int>(fixed.rows());
    gtheta[k - 1] = Eigen::VectorXd::Zero(model.feature_dim);
    double acc = 0.0;
    double dlam_acc = 0.0;
    Eigen::VectorXd zrow(model.m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < model.m; ++j) {
        const signed char f = fixed(i, j);
        zrow(j) = f < 0 ? relaxed_z(model, k, i, j, theta) : static_cast<double>(f);
      }
      const double li = scaled_log_mean_exp(le, zrow) / std::max(le, 1e-300);
      // softmax weights within the row, max-shifted
      const double mx = zrow.maxCoeff();
      double tot = 0.0;
      Eigen::VectorXd wrow(model.m);
      for (int j = 0; j < model.m; ++j) {
        wrow(j) = std::exp((zrow(j) - mx) / std::max(le, 1e-300));
        tot += wrow(j);
      }
      wrow /= tot;
      double wz = 0.0;
      for (int j = 0; j < model.m; ++j) {
        wz += wrow(j) * zrow(j);
        if (fixed(i, j) < 0) {
          const double big = model.big(k, i, j);
          if (big <= kDegenerateNorm) continue;
          const double score = model.feature(k, i, j).dot(theta);
          const double v = (k == 1 ? -score : score) / big;
          if (v > 0.0 && v < 1.0) {
            const double sgn = k == 1 ? -1.0 : 1.0;
            gtheta[k - 1] += (wrow(j) / n) * sgn * model.feature(k, i, j).transpose() / big;
          }
        }
      }
      acc += le * li;
      dlam_acc += ball.epsilon * li - wz / lam;
    }
    g[k - 1] = lam * ball.rho_bar + acc / n;
    glog[k - 1] = lam * (ball.rho_bar + dlam_acc / n);
  }
  out.active_k = g[0] >= g[1] ? 1 : 2;
  out.value = g[out.active_k - 1];
  out.grad_theta = gtheta[out.active_k - 1];
  out.grad_log_lambda = glog[out.active_k - 1];
  // exact penalty for violated fixed-zero halfspaces
  for (const ZeroConstraint& c : cs) {
    const double viol = c.dir.dot(theta) + c.eta;
    if (viol > 0.0) {
      out.value += kappa * viol;
      out.grad_theta += kappa * c.dir;
    }
  }
  return out;
}

int count_free(const BnbNode& node) {
  int free_vars = 0;
  for (int k = 1; k <= 2; ++k) {
    const FixedMatrix& fixed = node[k];
    for (int i = 0; i < fixed.rows(); ++i) {
      for (int j = 0; j < fixed.cols(); ++j) {
        if (fixed(i, j) < 0) ++free_vars;
      }
    }
  }
  return free_vars;
}

}  // namespace

MiecpModel build_miecp(const SaaInstance& inst) {
  MiecpModel model;
  model.balls = inst.balls;
  model.features = inst.features;
  model.big_m = inst.big_m;
  model.m = inst.m;
  model.feature_dim = inst.feature_dim();
  return model;
}

BnbNode root_node(const MiecpModel& model) {
  BnbNode node;
  for (int k = 1; k <= 2; ++k) {
    node[k] = FixedMatrix::Constant(model.n(k), model.m, -1);
    // Zero feature rows have identically zero score: their indicator is
    // constant by the boundary convention, so pin them.
    for (int i = 0; i < model.n(k); ++i) {
      for (int j = 0; j < model.m; ++j) {
        if (model.big(k, i, j) <= kDegenerateNorm) node[k](i, j) = k == 1 ? 0 : 1;
      }
    }
  }
  return node;
}

RelaxationResult node_relaxation(const MiecpModel& model, const BnbNode& node,
                                 const BnbOptions& opt) {
  RelaxationResult out;
  out.theta = Eigen::VectorXd::Zero(model.feature_dim);
  const double value_bound = fixed_ones_bound(model, node);
  out.bound = value_bound;

  const std::vector<ZeroConstraint> cs = zero_constraints(model, node);
  const Feasibility feas = check_feasible(cs, model.feature_dim);
  if (feas.infeasible) {
    out.infeasible = true;
    out.bound = kInf;
    return out;
  }
  if (feas.witness_valid) out.theta_feasible = feas.witness;

  const int free_vars = count_free(node);
  Eigen::VectorXd theta = feas.witness_valid
                              ? feas.witness
                              : Eigen::VectorXd::Zero(model.feature_dim);
  bool solved_exact = false;
  if (model.feature_dim == 2 && free_vars > 0) {
    const ArcMinimum arc = exact_minimum_2d(
        model, node, cs, feas.witness_valid ? feas.witness : Eigen::VectorXd());
    if (arc.found) {
      solved_exact = true;
      out.bound = std::max(value_bound, arc.value);
      theta = arc.theta;
      out.theta_feasible = arc.theta;
    }
  }
  double best_value = kInf;
  if (!solved_exact && free_vars > 0 && opt.relax_iters > 0) {
    std::array<double, 2> lambda{1.0, 1.0};
    const double kappa = 2.0;
    Eigen::VectorXd theta_avg = Eigen::VectorXd::Zero(model.feature_dim);
    int avg_count = 0;
    Eigen::VectorXd cur = theta;
    for (int t = 1; t <= opt.relax_iters; ++t) {
      const RelaxEval ev = eval_relaxation(model, node, cs, cur, lambda, kappa);
      best_value = std::min(best_value, ev.value);
      const double step = 0.3 / std::sqrt(static_cast<double>(t));
      cur = project_to_unit_ball(cur - step * ev.grad_theta);
      const int ak = ev.active_k - 1;
      double lu = std::log(lambda[ak]) - step * ev.grad_log_lambda;
      lu = std::clamp(lu, std::log(kLambdaMin), std::log(kLambdaMax));
      lambda[ak] = std::exp(lu);
      if (t > opt.relax_iters / 2) {
        theta_avg += cur;
        ++avg_count;
      }
    }
    if (avg_count > 0) theta_avg /= static_cast<double>(avg_count);
    const RelaxEval at_avg = eval_relaxation(model, node, cs, theta_avg, lambda, kappa);
    best_value = std::min(best_value, at_avg.value);
    theta = theta_avg;
    out.bound = std::max(value_bound, best_value - opt.delta_relax);
  }
  out.theta = theta;
  for (int k = 1; k <= 2; ++k) {
    const FixedMatrix& fixed = node[k];
    Eigen::MatrixXd z(fixed.rows(), fixed.cols());
    for (int i = 0; i < fixed.rows(); ++i) {
      for (int j = 0; j < fixed.cols(); ++j) {
        z(i, j) = fixed(i, j) < 0 ? relaxed_z(model, k, i, j, theta)
                                  : static_cast<double>(fixed(i, j));
      }
    }
    out.z_relax[k - 1] = std::move(z);
  }
  return out;
}

namespace {

struct Incumbent {
  double value = kInf;
  Eigen::VectorXd theta;
  SaaObjective objective;
  BitsPattern bits;
};

struct SharedSearch {
  std::mutex mu;
  std::condition_variable cv;
  // keyed by (bound, creation index) for deterministic best-first order
  std::priority_queue<std::pair<double, long>, std::vector<std::pair<double, long>>,
                      std::greater<>>
      open;
  std::deque<BnbNode> nodes;
  std::multiset<double> inflight;
  Incumbent incumbent;
  long processed = 0;
  bool stop = false;
  // Smallest bound among nodes dropped without expansion (pruned against a
  // then-current incumbent, or resolved leaves without a feasibility
  // witness).  Folded into the certified lower bound at the end.
  double min_dropped = kInf;
};

}  // namespace

ExactSolution solve_bnb(const SaaInstance& inst, double tol, const BnbOptions& opt) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_bnb: tol must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  const auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const MiecpModel model = build_miecp(inst);
  SharedSearch st;

  const auto try_incumbent = [&](const Eigen::VectorXd& theta) {
    if (theta.size() != model.feature_dim || !theta.allFinite()) return;
    const SaaObjective obj = saa_objective(inst, theta);
    std::lock_guard<std::mutex> lock(st.mu);
    if (obj.s_hat < st.incumbent.value) {
      st.incumbent.value = obj.s_hat;
      st.incumbent.theta = theta;
      st.incumbent.objective = obj;
      st.incumbent.bits = indicator_pattern(inst, theta);
    }
  };

  // Baseline and probe incumbents: the zero detector (value 1 by the
  // boundary convention), the feature-mean discriminant, random unit
  // directions.
  try_incumbent(Eigen::VectorXd::Zero(model.feature_dim));
  {
    const Eigen::VectorXd d1 = inst.features[0].colwise().mean().transpose();
    const Eigen::VectorXd d2 = inst.features[1].colwise().mean().transpose();
    Eigen::VectorXd disc = d1 - d2;
    if (disc.norm() > 0.0) try_incumbent(Eigen::VectorXd(disc / disc.norm()));
    Rng rng(derive_seed(opt.seed, 0xb0b));
    for (int p = 0; p < opt.root_probes; ++p) {
      Eigen::VectorXd v = rng.normal_vector(model.feature_dim);
      const double nn = v.norm();
      if (nn > 0.0) try_incumbent(Eigen::VectorXd(v / nn));
    }
  }

  long created = 0;
  // Creates a node: relaxation bound, feasibility check, incumbent
  // candidates.  Pushes the node unless infeasible or already prunable.
  // Called without st.mu held.
  const auto create_node = [&](BnbNode&& node) {
    const RelaxationResult relax = node_relaxation(model, node, opt);
    if (relax.infeasible) return;
    const bool leaf = count_free(node) == 0;
    const bool has_witness = relax.theta_feasible.size() > 0;
    if (has_witness) try_incumbent(relax.theta_feasible);
    if (relax.theta.size() > 0 && relax.theta.norm() > 1e-12) {
      try_incumbent(Eigen::VectorXd(relax.theta / relax.theta.norm()));
    }
    std::lock_guard<std::mutex> lock(st.mu);
    if (leaf) {
      // A leaf with a witness self-closes: the witness pattern is contained
      // in the leaf pattern, so the incumbent update above already reached
      // a value <= this leaf's exact value.  Without a witness the leaf may
      // or may not be attainable; keep its bound in the gap accounting.
      if (!has_witness) st.min_dropped = std::min(st.min_dropped, relax.bound);
      return;
    }
    if (relax.bound >= st.incumbent.value - tol) {
      st.min_dropped = std::min(st.min_dropped, relax.bound);
      return;
    }
    node.lower_bound = relax.bound;
    node.theta_hint = relax.theta;
    st.nodes.push_back(std::move(node));
    st.open.emplace(relax.bound, created++);
    st.cv.notify_one();
  };

  create_node(root_node(model));

  bool budget_hit = false;
  const auto report = [&](double lower) {
    if (!opt.progress) return;
    const double upper = st.incumbent.value;
    opt.progress(wall(), st.processed, lower, upper, std::max(0.0, upper - lower));
  };

  const auto worker = [&] {
    std::unique_lock<std::mutex> lock(st.mu);
    for (;;) {
      st.cv.wait(lock, [&] {
        return st.stop || !st.open.empty() || st.inflight.empty();
      });
      if (st.stop) return;
      if (st.open.empty()) {
        // nothing queued and nothing in flight: search exhausted
        st.cv.notify_all();
        return;
      }
      if (st.processed >= opt.max_nodes || wall() >= opt.max_secs) {
        budget_hit = true;
        st.stop = true;
        st.cv.notify_all();
        return;
      }
      const auto [bound, idx] = st.open.top();
      if (bound >= st.incumbent.value - tol) {
        st.open.pop();
        st.min_dropped = std::min(st.min_dropped, bound);
        if (opt.workers <= 1) {
          // single-worker pops are monotone in bound: all remaining nodes
          // are prunable too
          st.stop = true;
          st.cv.notify_all();
          return;
        }
        continue;
      }
      st.open.pop();
      const BnbNode node = st.nodes[static_cast<std::size_t>(idx)];
      const auto flight = st.inflight.insert(bound);
      ++st.processed;
      if (opt.progress && st.processed % opt.progress_every == 0) report(bound);
      lock.unlock();

      // branch: most fractional relaxed z at the saved iterate, ties by
      // largest feature norm, then lexicographic order
      int bk = 0, bi = 0, bj = 0;
      double best_frac = -1.0, best_m = -1.0;
      for (int k = 1; k <= 2; ++k) {
        for (int i = 0; i < model.n(k); ++i) {
          for (int j = 0; j < model.m; ++j) {
            if (node[k](i, j) >= 0) continue;
            const double z = relaxed_z(model, k, i, j, node.theta_hint);
            const double frac = std::min(z, 1.0 - z);
            const double big = model.big(k, i, j);
            if (frac > best_frac + 1e-12 ||
                (frac > best_frac - 1e-12 && big > best_m)) {
              best_frac = frac;
              best_m = big;
              bk = k;
              bi = i;
              bj = j;
            }
          }
        }
      }
      if (bk != 0) {
        for (const signed char v :
             {static_cast<signed char>(0), static_cast<signed char>(1)}) {
          BnbNode child = node;
          child[bk](bi, bj) = v;
          child.depth = node.depth + 1;
          create_node(std::move(child));
        }
      }

      lock.lock();
      st.inflight.erase(flight);
      if (st.open.empty() && st.inflight.empty()) st.cv.notify_all();
    }
  };

  if (opt.workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(opt.workers));
    for (int w = 0; w < opt.workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExactSolution sol;
  sol.node_count = st.processed;
  sol.wall_time = wall();
  sol.theta = st.incumbent.theta;
  sol.s_star = st.incumbent.value;
  sol.lambda = st.incumbent.objective.lambda;
  sol.bits = st.incumbent.bits;
  double lower = st.incumbent.value;
  lower = std::min(lower, st.min_dropped);
  if (!st.open.empty()) lower = std::min(lower, st.open.top().first);
  if (!st.inflight.empty()) lower = std::min(lower, *st.inflight.begin());
  sol.lower_bound = lower;
  sol.gap = std::max(0.0, st.incumbent.value - sol.lower_bound);
  sol.partial = budget_hit && sol.gap > tol;
  if (opt.progress) report(sol.lower_bound);
  return sol;
}

OracleResult oracle_grid_search(const SaaInstance& inst, int angle_count) {
  if (inst.feature_dim() != 2) {
    throw std::invalid_argument("oracle_grid_search: requires feature dimension 2");
  }
  if (angle_count < 4) throw std::invalid_argument("oracle_grid_search: angle_count too small");
  OracleResult out;
  out.theta = Eigen::VectorXd::Zero(2);
  out.s = saa_objective(inst, out.theta).s_hat;
  for (int a = 0; a < angle_count; ++a) {
    const double ang = 2.0 * M_PI * a / angle_count;
    Eigen::VectorXd theta(2);
    theta << std::cos(ang), std::sin(ang);
    const double s = saa_objective(inst, theta).s_hat;
    if (s < out.s) {
      out.s = s;
      out.theta = theta;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

ConicModel conic_view(const MiecpModel& model) {
  ConicModel cm;
  const int dfeat = model.feature_dim;
  const auto add_var = [&](const std::string& name, char kind, double lb, double ub) {
    cm.vars.push_back({name, kind, lb, ub});
    return static_cast<int>(cm.vars.size()) - 1;
  };
  std::vector<int> theta_ids(dfeat);
  for (int jj = 0; jj < dfeat; ++jj) {
    theta_ids[jj] = add_var("theta[" + std::to_string(jj) + "]", 'C', -1.0, 1.0);
  }
  cm.ball_vars = theta_ids;
  const int s_id = add_var("s", 'C', 0.0, 1.0);
  cm.objective_var = s_id;
  std::array<int, 2> u_ids;
  for (int k = 1; k <= 2; ++k) {
    u_ids[k - 1] = add_var("u" + std::to_string(k), 'C', 0.0, kInf);
  }
  std::array<std::vector<int>, 2> t_ids, a_ids, z_ids, w_ids;
  for (int k = 1; k <= 2; ++k) {
    const int n = model.n(k);
    const std::string ks = std::to_string(k);
    for (int i = 0; i < n; ++i) {
      t_ids[k - 1].push_back(add_var("t" + ks + "[" + std::to_string(i) + "]", 'C', -kInf, kInf));
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < model.m; ++j) {
        const std::string sfx = ks + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        a_ids[k - 1].push_back(add_var("a" + sfx, 'C', 0.0, kInf));
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < model.m; ++j) {
        const std::string sfx = ks + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        z_ids[k - 1].push_back(add_var("z" + sfx, 'B', 0.0, 1.0));
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < model.m; ++j) {
        const std::string sfx = ks + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        w_ids[k - 1].push_back(add_var("w" + sfx, 'C', -kInf, kInf));
      }
    }
  }

  for (int k = 1; k <= 2; ++k) {
    const int n = model.n(k);
    const SinkhornBall& ball = model.balls[k - 1];
    // big-M links
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < model.m; ++j) {
        const int idx = i * model.m + j;
        ConicRow row;
        row.sense = 'L';
        const double big = model.big(k, i, j);
        const auto f = model.feature(k, i, j);
        for (int jj = 0; jj < dfeat; ++jj) {
          const double c = (k == 1 ? -1.0 : 1.0) * f(jj);
          if (c != 0.0) row.terms.emplace_back(theta_ids[jj], c);
        }
        if (k == 1) {
          row.terms.emplace_back(z_ids[0][idx], -big);
          row.rhs = 0.0;
        } else {
          row.terms.emplace_back(z_ids[1][idx], -big * (1.0 + model.margin));
          row.rhs = -big * model.margin;
        }
        cm.rows.push_back(std::move(row));
      }
    }
    // budget: (rho_bar/eps) u_k + (1/n) sum_i t_i - s <= 0
    {
      ConicRow row;
      row.sense = 'L';
      row.rhs = 0.0;
      row.terms.emplace_back(u_ids[k - 1], ball.rho_bar / ball.epsilon);
      for (int i = 0; i < n; ++i) row.terms.emplace_back(t_ids[k - 1][i], 1.0 / n);
      row.terms.emplace_back(s_id, -1.0);
      cm.rows.push_back(std::move(row));
    }
    // cone means: (1/m) sum_j a_ij - u_k <= 0
    for (int i = 0; i < n; ++i) {
      ConicRow row;
      row.sense = 'L';
      row.rhs = 0.0;
      for (int j = 0; j < model.m; ++j) {
        row.terms.emplace_back(a_ids[k - 1][i * model.m + j], 1.0 / model.m);
      }
      row.terms.emplace_back(u_ids[k - 1], -1.0);
      cm.rows.push_back(std::move(row));
    }
    // w definitions and cones: w = z - t, (u, a, w) in K_exp
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < model.m; ++j) {
        const int idx = i * model.m + j;
        ConicRow row;
        row.sense = 'E';
        row.rhs = 0.0;
        row.terms.emplace_back(w_ids[k - 1][idx], 1.0);
        row.terms.emplace_back(z_ids[k - 1][idx], -1.0);
        row.terms.emplace_back(t_ids[k - 1][i], 1.0);
        cm.rows.push_back(std::move(row));
        cm.exp_cones.push_back({u_ids[k - 1], a_ids[k - 1][idx], w_ids[k - 1][idx]});
      }
    }
  }
  return cm;
}

namespace {

void write_bound(std::ostream& os, double v) {
  if (v == kInf) {
    os << "inf";
  } else if (v == -kInf) {
    os << "-inf";
  } else {
    os << v;
  }
}

double read_bound(const std::string& tok) {
  if (tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  return std::stod(tok);
}

std::string native_text(const MiecpModel& model, const ConicModel& cm) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "MIECP-NATIVE v1\n";
  os << "# minimize the objective variable subject to linear rows, EXP cones\n";
  os << "# EXP nu mu delta means exp(delta/nu) <= mu/nu\n";
  os << "dims n1 " << model.n(1) << " n2 " << model.n(2) << " m " << model.m
     << " dfeat " << model.feature_dim << "\n";
  for (int k = 1; k <= 2; ++k) {
    os << "ball " << k << " epsilon " << model.balls[k - 1].epsilon << " rho_bar "
       << model.balls[k - 1].rho_bar << "\n";
  }
  os << "margin " << model.margin << "\n";
  os << "vars " << cm.vars.size() << "\n";
  for (std::size_t v = 0; v < cm.vars.size(); ++v) {
    const ConicVariable& var = cm.vars[v];
    os << "var " << v << " " << var.name << " " << var.kind << " ";
    write_bound(os, var.lb);
    os << " ";
    write_bound(os, var.ub);
    os << "\n";
  }
  os << "objective min " << cm.objective_var << "\n";
  os << "qball " << cm.ball_vars.size();
  for (int id : cm.ball_vars) os << " " << id;
  os << "\n";
  for (const ConicRow& row : cm.rows) {
    os << "row " << row.sense << " " << row.rhs << " " << row.terms.size();
    for (const auto& [id, c] : row.terms) os << " " << id << " " << c;
    os << "\n";
  }
  for (const auto& cone : cm.exp_cones) {
    os << "EXP " << cone[0] << " " << cone[1] << " " << cone[2] << "\n";
  }
  os << "end\n";
  return os.str();
}

std::string cbf_text(const MiecpModel& model, const ConicModel& cm) {
  // Conic-benchmark-style layout.  Scalar variables are declared free;
  // variable bounds, linear rows, exponential cones, and the detector ball
  // are all written as affine-map rows grouped by cone type.  External
  // solvers ingest this with a thin adapter; docs/formats.md has details.
  (void)model;
  std::ostringstream os;
  os << std::setprecision(17);
  os << "VER 3\n\n";
  os << "OBJSENSE\nMIN\n\n";
  os << "VAR " << cm.vars.size() << " 1\nF " << cm.vars.size() << "\n\n";
  std::vector<int> ints;
  for (std::size_t v = 0; v < cm.vars.size(); ++v) {
    if (cm.vars[v].kind == 'B') ints.push_back(static_cast<int>(v));
  }
  os << "INT " << ints.size() << "\n";
  for (int id : ints) os << id << "\n";
  os << "\n";
  os << "OBJACOORD 1\n" << cm.objective_var << " 1\n\n";

  // bounds become rows (binaries keep their 0/1 box here too; integrality
  // is carried by the INT section)
  std::vector<ConicRow> les, eqs, ges;
  for (const ConicRow& row : cm.rows) (row.sense == 'L' ? les : eqs).push_back(row);
  for (std::size_t v = 0; v < cm.vars.size(); ++v) {
    const ConicVariable& var = cm.vars[v];
    if (var.lb != -kInf) {
      ConicRow r;
      r.sense = 'G';
      r.rhs = var.lb;
      r.terms.emplace_back(static_cast<int>(v), 1.0);
      ges.push_back(std::move(r));
    }
    if (var.ub != kInf) {
      ConicRow r;
      r.sense = 'L';
      r.rhs = var.ub;
      r.terms.emplace_back(static_cast<int>(v), 1.0);
      les.push_back(std::move(r));
    }
  }

  std::ostringstream acoord, bcoord;
  long row_id = 0;
  long acount = 0, bcount = 0;
  const auto emit_row = [&](const ConicRow& row) {
    // group semantics put (A x - b) in the cone, so b = rhs with the row
    // written as a x - rhs
    for (const auto& [id, c] : row.terms) {
      acoord << row_id << " " << id << " " << c << "\n";
      ++acount;
    }
    if (row.rhs != 0.0) {
      bcoord << row_id << " " << -row.rhs << "\n";
      ++bcount;
    }
    ++row_id;
  };

  const long total_rows = static_cast<long>(les.size() + eqs.size() + ges.size() +
                                            3 * cm.exp_cones.size() +
                                            cm.ball_vars.size() + 1);
  os << "CON " << total_rows << " " << (3 + cm.exp_cones.size() + 1) << "\n";
  os << "L- " << les.size() << "\n";
  os << "L= " << eqs.size() << "\n";
  os << "L+ " << ges.size() << "\n";
  for (std::size_t c = 0; c < cm.exp_cones.size(); ++c) os << "EXP 3\n";
  os << "Q " << (cm.ball_vars.size() + 1) << "\n\n";
  for (const ConicRow& row : les) emit_row(row);
  for (const ConicRow& row : eqs) emit_row(row);
  for (const ConicRow& row : ges) emit_row(row);
  // EXP member order: the benchmark cone is (x1, x2, x3) with
  // x1 >= x2 exp(x3/x2); ours is (nu, mu, delta) with mu >= nu e^{delta/nu},
  // so members are written (mu, nu, delta).
  for (const auto& cone : cm.exp_cones) {
    for (const int id : {cone[1], cone[0], cone[2]}) {
      acoord << row_id << " " << id << " 1\n";
      ++acount;
      ++row_id;
    }
  }
  // unit ball as a quadratic cone (1, theta)
  bcoord << row_id << " 1\n";
  ++bcount;
  ++row_id;
  for (const int id : cm.ball_vars) {
    acoord << row_id << " " << id << " 1\n";
    ++acount;
    ++row_id;
  }
  os << "ACOORD " << acount << "\n" << acoord.str() << "\n";
  os << "BCOORD " << bcount << "\n" << bcoord.str() << "\n";
  return os.str();
}

}  // namespace

std::string export_model(const MiecpModel& model, ExportFormat format) {
  const ConicModel cm = conic_view(model);
  return format == ExportFormat::kNativeText ? native_text(model, cm)
                                             : cbf_text(model, cm);
}

ConicModel parse_native_model(const std::string& text) {
  ConicModel cm;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "MIECP-NATIVE v1") {
    throw IoError("native model: bad or missing header line");
  }
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    const auto fail = [&](const std::string& what) {
      throw IoError("native model line " + std::to_string(line_no) + ": " + what);
    };
    if (tag == "dims" || tag == "ball" || tag == "margin" || tag == "vars") {
      continue;  // informational header, re-derivable from the listing
    } else if (tag == "var") {
      long idx;
      ConicVariable v;
      std::string lb, ub;
      if (!(ls >> idx >> v.name >> v.kind >> lb >> ub)) fail("malformed var");
      if (idx != static_cast<long>(cm.vars.size())) fail("variable index out of order");
      v.lb = read_bound(lb);
      v.ub = read_bound(ub);
      cm.vars.push_back(std::move(v));
    } else if (tag == "objective") {
      std::string dir;
      if (!(ls >> dir >> cm.objective_var) || dir != "min") fail("malformed objective");
    } else if (tag == "qball") {
      std::size_t count;
      if (!(ls >> count)) fail("malformed qball");
      cm.ball_vars.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (!(ls >> cm.ball_vars[i])) fail("truncated qball");
      }
    } else if (tag == "row") {
      ConicRow row;
      std::size_t nterms;
      if (!(ls >> row.sense >> row.rhs >> nterms)) fail("malformed row");
      row.terms.resize(nterms);
      for (std::size_t i = 0; i < nterms; ++i) {
        if (!(ls >> row.terms[i].first >> row.terms[i].second)) fail("truncated row");
      }
      cm.rows.push_back(std::move(row));
    } else if (tag == "EXP") {
      std::array<int, 3> cone;
      if (!(ls >> cone[0] >> cone[1] >> cone[2])) fail("malformed EXP cone");
      cm.exp_cones.push_back(cone);
    } else if (tag == "end") {
      return cm;
    } else {
      fail("unknown tag '" + tag + "'");
    }
  }
  throw IoError("native model: missing end marker");
}

bool conic_models_equal(const ConicModel& a, const ConicModel& b, double tol) {
  if (a.vars.size() != b.vars.size() || a.rows.size() != b.rows.size() ||
      a.exp_cones.size() != b.exp_cones.size() || a.ball_vars != b.ball_vars ||
      a.objective_var != b.objective_var) {
    return false;
  }
  const auto close = [&](double x, double y) {
    if (x == y) return true;  // covers infinities
    return std::abs(x - y) <= tol * std::max(1.0, std::max(std::abs(x), std::abs(y)));
  };
  for (std::size_t v = 0; v < a.vars.size(); ++v) {
    if (a.vars[v].name != b.vars[v].name || a.vars[v].kind != b.vars[v].kind ||
        !close(a.vars[v].lb, b.vars[v].lb) || !close(a.vars[v].ub, b.vars[v].ub)) {
      return false;
    }
  }
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    const ConicRow& ra = a.rows[r];
    const ConicRow& rb = b.rows[r];
    if (ra.sense != rb.sense || !close(ra.rhs, rb.rhs) || ra.terms.size() != rb.terms.size()) {
      return false;
    }
    for (std::size_t t = 0; t < ra.terms.size(); ++t) {
      if (ra.terms[t].first != rb.terms[t].first ||
          !close(ra.terms[t].second, rb.terms[t].second)) {
        return false;
      }
    }
  }
  return a.exp_cones == b.exp_cones;
}

}  // namespace rht
