#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "rht/errors.hpp"
#include "rht/features.hpp"
#include "rht/rng.hpp"

using namespace rht;

namespace {

FeatureMapSpec rff_spec(int input_dim, int num_features, std::uint64_t seed) {
  FeatureMapSpec spec;
  spec.kind = FeatureKind::kGaussianRff;
  spec.input_dim = input_dim;
  spec.num_features = num_features;
  spec.bandwidth = 1.0;
  spec.scaling = FeatureScaling::kInvSqrtD;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("spec validation rejects bad fields") {
  FeatureMapSpec spec = rff_spec(2, 8, 1);
  CHECK_NOTHROW(spec.validate());
  spec.input_dim = 0;
  CHECK_THROWS(spec.validate());
  spec = rff_spec(2, 0, 1);
  CHECK_THROWS(spec.validate());
  spec = rff_spec(2, 8, 1);
  spec.bandwidth = 0.0;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("string round trips for the enums") {
  CHECK(feature_kind_from_string(to_string(FeatureKind::kGaussianRff)) ==
        FeatureKind::kGaussianRff);
  CHECK(feature_kind_from_string(to_string(FeatureKind::kNtk2Softplus)) ==
        FeatureKind::kNtk2Softplus);
  CHECK(feature_scaling_from_string(to_string(FeatureScaling::kInvD)) ==
        FeatureScaling::kInvD);
  CHECK(feature_scaling_from_string(to_string(FeatureScaling::kInvSqrtD)) ==
        FeatureScaling::kInvSqrtD);
  CHECK_THROWS(feature_kind_from_string("nope"));
  CHECK_THROWS(feature_scaling_from_string(""));
}

TEST_CASE("rff map evaluates its own formula") {
  const FeatureMap map = build_feature_map(rff_spec(3, 5, 99));
  REQUIRE(map.directions.rows() == 5);
  REQUIRE(map.directions.cols() == 3);
  REQUIRE(map.phases.size() == 5);
  Eigen::VectorXd x(3);
  x << 0.4, -1.1, 2.0;
  const Eigen::VectorXd phi = map(x);
  REQUIRE(phi.size() == map.output_dim());
  const double scale = map.feature_scale();
  for (int i = 0; i < 5; ++i) {
    const double expected =
        scale * std::cos(map.directions.row(i).dot(x) + map.phases(i));
    CHECK(phi(i) == doctest::Approx(expected).epsilon(1e-14));
  }
  // Norm bound holds at arbitrary inputs.
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd y = 10.0 * rng.normal_vector(3);
    CHECK(map(y).norm() <= map.norm_bound() + 1e-12);
  }
}

TEST_CASE("rff bandwidth scales the direction draws") {
  FeatureMapSpec narrow = rff_spec(2, 4000, 7);
  FeatureMapSpec wide = rff_spec(2, 4000, 7);
  wide.bandwidth = 10.0;
  const FeatureMap a = build_feature_map(narrow);
  const FeatureMap b = build_feature_map(wide);
  // Same seed: directions differ exactly by the 1/bandwidth factor.
  CHECK((a.directions - 10.0 * b.directions).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("feature map determinism in the seed") {
  const FeatureMap a = build_feature_map(rff_spec(2, 16, 5));
  const FeatureMap b = build_feature_map(rff_spec(2, 16, 5));
  const FeatureMap c = build_feature_map(rff_spec(2, 16, 6));
  CHECK((a.directions - b.directions).norm() == 0.0);
  CHECK((a.phases - b.phases).norm() == 0.0);
  CHECK((a.directions - c.directions).norm() > 0.0);
}

TEST_CASE("ntk softplus map dimensions and formula") {
  FeatureMapSpec spec = rff_spec(2, 3, 11);
  spec.kind = FeatureKind::kNtk2Softplus;
  const FeatureMap map = build_feature_map(spec);
  REQUIRE(map.directions.rows() == 3);
  REQUIRE(map.directions.cols() == 3);  // augmented input (x, 1)
  Eigen::VectorXd x(2);
  x << 0.7, -0.2;
  const Eigen::VectorXd phi = map(x);
  REQUIRE(phi.size() == map.output_dim());
  Eigen::VectorXd xa(3);
  xa << 0.7, -0.2, 1.0;
  const double scale = map.feature_scale();
  // Check the second draw's block: [softplus(u), sigmoid(u) * xa].
  const double u = map.directions.row(1).dot(xa);
  const double softplus = std::log1p(std::exp(-std::abs(u))) + std::max(u, 0.0);
  const double sigmoid = 1.0 / (1.0 + std::exp(-u));
  const int base = 1 * (2 + 2);
  CHECK(phi(base) == doctest::Approx(scale * softplus).epsilon(1e-12));
  CHECK(phi(base + 1) == doctest::Approx(scale * sigmoid * xa(0)).epsilon(1e-12));
  CHECK(phi(base + 3) == doctest::Approx(scale * sigmoid).epsilon(1e-12));
  CHECK(!std::isfinite(map.norm_bound()));
}

TEST_CASE("standardizer centers and scales the training rows") {
  Rng rng(3);
  Eigen::MatrixXd rows(200, 2);
  for (int i = 0; i < rows.rows(); ++i) {
    rows(i, 0) = 5.0 + 2.0 * rng.normal();
    rows(i, 1) = -1.0 + 0.5 * rng.normal();
  }
  const Standardizer st = fit_standardizer(rows);
  CHECK(!st.identity());
  double mean0 = 0.0, sq0 = 0.0;
  for (int i = 0; i < rows.rows(); ++i) {
    const Eigen::VectorXd z = st.apply(rows.row(i).transpose());
    mean0 += z(0);
    sq0 += z(0) * z(0);
  }
  mean0 /= rows.rows();
  CHECK(mean0 == doctest::Approx(0.0).epsilon(1e-10));
  // The scale is the unbiased sample standard deviation, so standardized
  // rows have sum of squares n - 1 exactly (the mean term vanishes).
  CHECK(sq0 / (rows.rows() - 1) == doctest::Approx(1.0).epsilon(1e-9));

  // Zero-variance coordinates get unit scale rather than a division by zero.
  Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(10, 1, 3.0);
  const Standardizer sf = fit_standardizer(flat);
  const Eigen::VectorXd z = sf.apply(Eigen::VectorXd::Constant(1, 4.0));
  CHECK(z(0) == doctest::Approx(1.0));
}

TEST_CASE("featurize_rows is thread-count invariant") {
  const FeatureMap map = build_feature_map(rff_spec(3, 12, 21));
  Rng rng(8);
  Eigen::MatrixXd X(37, 3);
  for (int i = 0; i < X.rows(); ++i) X.row(i) = rng.normal_vector(3).transpose();
  const Eigen::MatrixXd f1 = featurize_rows(map, X, 1);
  const Eigen::MatrixXd f4 = featurize_rows(map, X, 4);
  REQUIRE(f1.rows() == 37);
  REQUIRE(f1.cols() == map.output_dim());
  CHECK((f1 - f4).norm() == 0.0);
}

TEST_CASE("detector assigns the zero-score boundary to hypothesis 1") {
  auto map = std::make_shared<const FeatureMap>(build_feature_map(rff_spec(2, 4, 2)));
  Detector det{map, Eigen::VectorXd::Zero(map->output_dim())};
  Eigen::VectorXd x(2);
  x << 1.0, 1.0;
  CHECK(det.score(x) == 0.0);
  CHECK(det.classify(x) == 1);
}

TEST_CASE("feature bank subsampling error shrinks and vanishes at full size") {
  const FeatureBank bank = make_feature_bank(512, 1.0, 13);
  REQUIRE(bank.z.size() == 512);
  const auto errors = rff_l2_error(bank, {16, 64, 256, 512}, 8, 17);
  REQUIRE(errors.size() == 4);
  CHECK(errors[0].second > errors[2].second);
  CHECK(errors[3].second == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("log_log_slope recovers a planted power law") {
  std::vector<std::pair<int, double>> pts;
  for (int d = 16; d <= 1024; d *= 2) {
    pts.emplace_back(d, 3.0 * std::pow(static_cast<double>(d), -0.5));
  }
  CHECK(log_log_slope(pts) == doctest::Approx(-0.5).epsilon(1e-12));
}
