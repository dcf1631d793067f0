#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace rht {

/// Random feature family.
///  - kGaussianRff: phi_i(x) = cos(z_i'x + b_i), z_i ~ N(0, bandwidth^-2 I),
///    b_i ~ U[0, 2pi); Monte Carlo features of the Gaussian kernel.
///  - kNtk2Softplus: per draw w_i ~ N(0, I_{d+1}) and augmented input
///    xa = (x, 1), the block [softplus(w_i'xa), sigmoid(w_i'xa) * xa].
///    Gradient features of a two-layer softplus network at initialization.
enum class FeatureKind { kGaussianRff, kNtk2Softplus };

/// Multiplier applied to the raw feature block: 1/D or 1/sqrt(D) in the
/// number of parameter draws D.
enum class FeatureScaling { kInvD, kInvSqrtD };

std::string to_string(FeatureKind kind);
std::string to_string(FeatureScaling scaling);
FeatureKind feature_kind_from_string(const std::string& s);
FeatureScaling feature_scaling_from_string(const std::string& s);

struct FeatureMapSpec {
  FeatureKind kind = FeatureKind::kGaussianRff;
  int input_dim = 0;
  int num_features = 0;
  double bandwidth = 1.0;
  FeatureScaling scaling = FeatureScaling::kInvSqrtD;
  std::uint64_t seed = 0;

  int output_dim() const;
  void validate() const;
};

/// Optional per-coordinate affine normalization applied before the random
/// features: x -> (x - shift) / scale.
struct Standardizer {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;

  bool identity() const { return shift.size() == 0; }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

/// Mean / standard deviation standardizer fitted on data rows; coordinates
/// with zero variance get unit scale.
Standardizer fit_standardizer(const Eigen::MatrixXd& rows);

/// Sampled feature map.  Parameters are drawn once in build_feature_map and
/// treated as frozen afterwards; evaluation is deterministic.
struct FeatureMap {
  FeatureMapSpec spec;
  Eigen::MatrixXd directions;  // kGaussianRff: D x d; kNtk2Softplus: D x (d+1)
  Eigen::VectorXd phases;      // kGaussianRff only
  Standardizer standardizer;

  int input_dim() const { return spec.input_dim; }
  int output_dim() const { return spec.output_dim(); }
  double feature_scale() const;

  /// Upper bound on ||phi(x)||_2 over all x (infinite for kNtk2Softplus,
  /// whose softplus component grows linearly).
  double norm_bound() const;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const;
};

FeatureMap build_feature_map(const FeatureMapSpec& spec);

/// Featurize each row of X; rows are independent and processed in `threads`
/// chunks when threads > 1 (identical output regardless of thread count).
Eigen::MatrixXd featurize_rows(const FeatureMap& map, const Eigen::MatrixXd& X,
                               int threads = 1);

/// Linear detector on top of a feature map.  classify() maps score >= 0 to
/// hypothesis 1 and score < 0 to hypothesis 2; the tie at exactly zero is
/// deliberately assigned to hypothesis 1 so that the zero detector has
/// one-sided errors.
struct Detector {
  std::shared_ptr<const FeatureMap> map;
  Eigen::VectorXd theta;

  double score(const Eigen::VectorXd& x) const { return theta.dot((*map)(x)); }
  int classify(const Eigen::VectorXd& x) const { return score(x) >= 0.0 ? 1 : 2; }
};

/// Explicit finite bank of scalar cosine features defining the target
/// T*(x) = mean_f theta(f) cos(z(f) x + b(f)) of the approximation study.
struct FeatureBank {
  Eigen::VectorXd z;
  Eigen::VectorXd b;
  Eigen::VectorXd theta;
};

FeatureBank make_feature_bank(int size, double bandwidth, std::uint64_t seed);

/// For each D in d_list, the grid-L2 error of a D-feature subsample of the
/// bank against the full-bank target, averaged over num_seeds subsampling
/// seeds.  Subsampling is without replacement, so D == bank size recovers
/// the target exactly.
std::vector<std::pair<int, double>> rff_l2_error(
    const FeatureBank& bank, const std::vector<int>& d_list, int num_seeds,
    std::uint64_t seed, double grid_lo = -3.0, double grid_hi = 3.0,
    int grid_points = 201);

/// Least-squares slope of log(error) against log(D).
double log_log_slope(const std::vector<std::pair<int, double>>& points);

}  // namespace rht
