#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace rht {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Max-shifted log(sum(exp(x))).
inline double log_sum_exp(std::span<const double> xs) {
  double mx = -kInf;
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// log((1-w) + w*exp(x)) for w in [0,1], stable for arbitrarily large x.
inline double log_mix_exp(double w, double x) {
  if (w <= 0.0) return 0.0;
  if (w >= 1.0) return x;
  const double a = std::log1p(-w);          // log(1-w)
  const double b = std::log(w) + x;
  const double mx = std::max(a, b);
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

/// log(1 + q*(exp(x)-1)) = log((1-q) + q*exp(x)); alias kept for readability
/// where the argument is a probability of an event under the kernel.
inline double log1p_q_expm1(double q, double x) { return log_mix_exp(q, x); }

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

/// Golden-section minimization of a unimodal function on [lo, hi].
/// Returns the argmin; `iters` of 80 gives interval reduction ~1e-16.
inline double golden_section_min(const std::function<double(double)>& f,
                                 double lo, double hi, int iters = 80) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

struct ScalarMin {
  double x = 0.0;
  double value = kInf;
};

/// Coarse log-spaced grid scan over [lo, hi] followed by golden-section
/// refinement around the best grid cell.  Intended for positive scalars
/// (multipliers); the function must be unimodal on the interval for the
/// refinement to be exact, otherwise the result is the best sampled cell.
inline ScalarMin minimize_log_grid(const std::function<double(double)>& f,
                                   double lo, double hi, int grid_points = 256) {
  ScalarMin best;
  const double llo = std::log(lo), lhi = std::log(hi);
  std::vector<double> xs(grid_points);
  int best_i = 0;
  for (int i = 0; i < grid_points; ++i) {
    const double t = static_cast<double>(i) / (grid_points - 1);
    xs[i] = std::exp(llo + t * (lhi - llo));
    const double v = f(xs[i]);
    if (v < best.value) {
      best.value = v;
      best.x = xs[i];
      best_i = i;
    }
  }
  const double a = xs[std::max(0, best_i - 1)];
  const double b = xs[std::min(grid_points - 1, best_i + 1)];
  const auto fl = [&](double u) { return f(std::exp(u)); };
  const double xr = std::exp(golden_section_min(fl, std::log(a), std::log(b)));
  const double vr = f(xr);
  if (vr < best.value) {
    best.value = vr;
    best.x = xr;
  }
  return best;
}

inline Eigen::VectorXd project_to_unit_ball(const Eigen::VectorXd& v) {
  const double n = v.norm();
  return n > 1.0 ? Eigen::VectorXd(v / n) : v;
}

/// Closed interval [lo, hi] on the real line; lo may be -inf, hi +inf.
struct Interval {
  double lo;
  double hi;
};

/// A 1-D event given as a finite union of closed intervals.  Membership at
/// endpoints follows the closed convention; interval unions are normalized
/// (sorted, disjoint) on construction.
class IntervalUnion {
 public:
  IntervalUnion() = default;
  explicit IntervalUnion(std::vector<Interval> parts) {
    std::sort(parts.begin(), parts.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    for (const Interval& p : parts) {
      if (p.hi < p.lo) continue;
      if (!parts_.empty() && p.lo <= parts_.back().hi) {
        parts_.back().hi = std::max(parts_.back().hi, p.hi);
      } else {
        parts_.push_back(p);
      }
    }
  }

  const std::vector<Interval>& parts() const { return parts_; }
  bool empty() const { return parts_.empty(); }

  bool contains(double x) const {
    for (const Interval& p : parts_) {
      if (x >= p.lo && x <= p.hi) return true;
    }
    return false;
  }

  /// Distance from x to the complement of the union (0 if x is outside).
  double distance_to_complement(double x) const {
    for (const Interval& p : parts_) {
      if (x >= p.lo && x <= p.hi) {
        const double dl = std::isinf(p.lo) ? kInf : x - p.lo;
        const double dr = std::isinf(p.hi) ? kInf : p.hi - x;
        return std::min(dl, dr);
      }
    }
    return 0.0;
  }

  /// Distance from x to the union itself (0 if inside).
  double distance_to_set(double x) const {
    if (parts_.empty()) return kInf;
    double d = kInf;
    for (const Interval& p : parts_) {
      if (x >= p.lo && x <= p.hi) return 0.0;
      if (x < p.lo) d = std::min(d, p.lo - x);
      if (x > p.hi) d = std::min(d, x - p.hi);
    }
    return d;
  }

  /// N(mu, sigma^2) measure of the union.  Each interval is evaluated on
  /// the side of the mean it lies on, as a difference of same-side tails:
  /// a naive cdf(hi) - cdf(lo) rounds far-tail masses below ~1e-16 to zero,
  /// and those tails are exactly what the entropic duals trade against
  /// exp(1/(lambda*eps)).
  double gaussian_measure(double mu, double sigma) const {
    const auto upper_tail = [](double x) { return 0.5 * std::erfc(x * M_SQRT1_2); };
    double q = 0.0;
    for (const Interval& p : parts_) {
      const double a = (p.lo - mu) / sigma;
      const double b = (p.hi - mu) / sigma;
      if (a >= 0.0) {
        q += upper_tail(a) - upper_tail(b);
      } else if (b <= 0.0) {
        q += normal_cdf(b) - normal_cdf(a);
      } else {
        q += 1.0 - upper_tail(b) - normal_cdf(a);
      }
    }
    return std::clamp(q, 0.0, 1.0);
  }

 private:
  std::vector<Interval> parts_;
};

}  // namespace rht
