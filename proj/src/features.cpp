#include "rht/features.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

#include "rht/math_util.hpp"
#include "rht/rng.hpp"

namespace rht {
namespace {

double softplus(double u) {
  if (u > 30.0) return u;
  if (u < -30.0) return std::exp(u);
  return std::log1p(std::exp(u));
}

double sigmoid(double u) {
  if (u >= 0.0) {
    return 1.0 / (1.0 + std::exp(-u));
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kGaussianRff: return "gaussian-rff";
    case FeatureKind::kNtk2Softplus: return "ntk2-softplus";
  }
  throw std::logic_error("unknown feature kind");
}

std::string to_string(FeatureScaling scaling) {
  switch (scaling) {
    case FeatureScaling::kInvD: return "inv-d";
    case FeatureScaling::kInvSqrtD: return "inv-sqrt-d";
  }
  throw std::logic_error("unknown feature scaling");
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "gaussian-rff") return FeatureKind::kGaussianRff;
  if (s == "ntk2-softplus") return FeatureKind::kNtk2Softplus;
  throw std::invalid_argument("unknown feature kind '" + s +
                              "' (expected gaussian-rff or ntk2-softplus)");
}

FeatureScaling feature_scaling_from_string(const std::string& s) {
  if (s == "inv-d") return FeatureScaling::kInvD;
  if (s == "inv-sqrt-d") return FeatureScaling::kInvSqrtD;
  throw std::invalid_argument("unknown feature scaling '" + s +
                              "' (expected inv-d or inv-sqrt-d)");
}

int FeatureMapSpec::output_dim() const {
  return kind == FeatureKind::kGaussianRff ? num_features
                                           : num_features * (input_dim + 2);
}

void FeatureMapSpec::validate() const {
  if (input_dim <= 0) throw std::invalid_argument("feature map: input_dim must be positive");
  if (num_features <= 0) throw std::invalid_argument("feature map: num_features must be positive");
  if (kind == FeatureKind::kGaussianRff &&
      !(bandwidth > 0.0 && std::isfinite(bandwidth))) {
    throw std::invalid_argument("feature map: bandwidth must be positive and finite");
  }
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (identity()) return x;
  return (x - shift).cwiseQuotient(scale);
}

Standardizer fit_standardizer(const Eigen::MatrixXd& rows) {
  Standardizer st;
  const int d = static_cast<int>(rows.cols());
  st.shift = rows.colwise().mean();
  st.scale = Eigen::VectorXd::Ones(d);
  if (rows.rows() > 1) {
    for (int j = 0; j < d; ++j) {
      const double var =
          (rows.col(j).array() - st.shift(j)).square().sum() / (rows.rows() - 1);
      if (var > 0.0) st.scale(j) = std::sqrt(var);
    }
  }
  return st;
}

double FeatureMap::feature_scale() const {
  const double d = static_cast<double>(spec.num_features);
  return spec.scaling == FeatureScaling::kInvD ? 1.0 / d : 1.0 / std::sqrt(d);
}

double FeatureMap::norm_bound() const {
  if (spec.kind == FeatureKind::kGaussianRff) {
    return feature_scale() * std::sqrt(static_cast<double>(spec.num_features));
  }
  return kInf;
}

Eigen::VectorXd FeatureMap::operator()(const Eigen::VectorXd& x) const {
  if (x.size() != spec.input_dim) {
    throw std::invalid_argument("featurize: input has dimension " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(spec.input_dim));
  }
  const Eigen::VectorXd xs = standardizer.apply(x);
  const double scale = feature_scale();
  if (spec.kind == FeatureKind::kGaussianRff) {
    Eigen::VectorXd u = directions * xs + phases;
    return scale * u.array().cos().matrix();
  }
  const int d = spec.input_dim;
  Eigen::VectorXd xa(d + 1);
  xa.head(d) = xs;
  xa(d) = 1.0;
  const Eigen::VectorXd u = directions * xa;
  Eigen::VectorXd out(output_dim());
  for (int i = 0; i < spec.num_features; ++i) {
    const int base = i * (d + 2);
    out(base) = scale * softplus(u(i));
    const double g = scale * sigmoid(u(i));
    out.segment(base + 1, d + 1) = g * xa;
  }
  return out;
}

FeatureMap build_feature_map(const FeatureMapSpec& spec) {
  spec.validate();
  FeatureMap map;
  map.spec = spec;
  Rng rng(spec.seed);
  const int d = spec.input_dim;
  if (spec.kind == FeatureKind::kGaussianRff) {
    map.directions.resize(spec.num_features, d);
    map.phases.resize(spec.num_features);
    for (int i = 0; i < spec.num_features; ++i) {
      for (int j = 0; j < d; ++j) map.directions(i, j) = rng.normal() / spec.bandwidth;
      map.phases(i) = rng.uniform(0.0, 2.0 * M_PI);
    }
  } else {
    map.directions.resize(spec.num_features, d + 1);
    for (int i = 0; i < spec.num_features; ++i) {
      for (int j = 0; j <= d; ++j) map.directions(i, j) = rng.normal();
    }
  }
  return map;
}

Eigen::MatrixXd featurize_rows(const FeatureMap& map, const Eigen::MatrixXd& X,
                               int threads) {
  const int n = static_cast<int>(X.rows());
  Eigen::MatrixXd out(n, map.output_dim());
  const auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) out.row(i) = map(X.row(i).transpose()).transpose();
  };
  if (threads <= 1 || n < 2) {
    work(0, n);
    return out;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(work, begin, end);
  }
  for (auto& t : pool) t.join();
  return out;
}

FeatureBank make_feature_bank(int size, double bandwidth, std::uint64_t seed) {
  FeatureBank bank;
  bank.z.resize(size);
  bank.b.resize(size);
  bank.theta.resize(size);
  Rng rng(seed);
  for (int i = 0; i < size; ++i) {
    bank.z(i) = rng.normal() / bandwidth;
    bank.b(i) = rng.uniform(0.0, 2.0 * M_PI);
    bank.theta(i) = rng.normal();
  }
  return bank;
}

std::vector<std::pair<int, double>> rff_l2_error(
    const FeatureBank& bank, const std::vector<int>& d_list, int num_seeds,
    std::uint64_t seed, double grid_lo, double grid_hi, int grid_points) {
  const int bank_size = static_cast<int>(bank.z.size());
  Eigen::VectorXd grid(grid_points);
  for (int g = 0; g < grid_points; ++g) {
    grid(g) = grid_lo + (grid_hi - grid_lo) * g / (grid_points - 1);
  }
  // target(g, f) = theta_f cos(z_f x_g + b_f); the target is the row mean.
  Eigen::MatrixXd terms(grid_points, bank_size);
  for (int f = 0; f < bank_size; ++f) {
    terms.col(f) =
        bank.theta(f) * (bank.z(f) * grid.array() + bank.b(f)).cos().matrix();
  }
  const Eigen::VectorXd target = terms.rowwise().mean();

  std::vector<std::pair<int, double>> out;
  out.reserve(d_list.size());
  for (const int d : d_list) {
    if (d <= 0 || d > bank_size) {
      throw std::invalid_argument("rff_l2_error: D must be in [1, bank size]");
    }
    double err_sum = 0.0;
    for (int s = 0; s < num_seeds; ++s) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
      const std::vector<int> perm = rng.permutation(bank_size);
      Eigen::VectorXd approx = Eigen::VectorXd::Zero(grid_points);
      for (int i = 0; i < d; ++i) approx += terms.col(perm[i]);
      approx /= static_cast<double>(d);
      err_sum += std::sqrt((approx - target).squaredNorm() / grid_points);
    }
    out.emplace_back(d, err_sum / num_seeds);
  }
  return out;
}

double log_log_slope(const std::vector<std::pair<int, double>>& points) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(points.size());
  for (const auto& [d, e] : points) {
    const double x = std::log(static_cast<double>(d));
    const double y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace rht
