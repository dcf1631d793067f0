#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "rht/features.hpp"
#include "rht/rng.hpp"
#include "rht/saa.hpp"
#include "rht/sinkhorn.hpp"

using namespace rht;

namespace {

std::shared_ptr<const FeatureMap> map_2f(int input_dim, std::uint64_t seed) {
  FeatureMapSpec spec;
  spec.kind = FeatureKind::kGaussianRff;
  spec.input_dim = input_dim;
  spec.num_features = 2;
  spec.bandwidth = 1.0;
  spec.seed = seed;
  return std::make_shared<const FeatureMap>(build_feature_map(spec));
}

SaaInstance tiny_instance(std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd d1(3, 2), d2(2, 2);
  for (int i = 0; i < 3; ++i) d1.row(i) = rng.normal_vector(2).transpose();
  for (int i = 0; i < 2; ++i)
    d2.row(i) = (rng.normal_vector(2) + Eigen::VectorXd::Constant(2, 1.0)).transpose();
  std::array<SinkhornBall, 2> balls{SinkhornBall{0.1, 0.1, 2},
                                    SinkhornBall{0.2, 0.05, 2}};
  return build_instance(d1, d2, map_2f(2, seed + 1), balls, 4, seed + 2);
}

}  // namespace

TEST_CASE("build_instance shapes and big-M norms") {
  const SaaInstance inst = tiny_instance(50);
  CHECK(inst.n(1) == 3);
  CHECK(inst.n(2) == 2);
  CHECK(inst.m == 4);
  CHECK(inst.feature_dim() == 2);
  REQUIRE(inst.draws[0].rows() == 12);
  REQUIRE(inst.features[0].rows() == 12);
  REQUIRE(inst.features[1].rows() == 8);
  REQUIRE(inst.big_m[0].rows() == 3);
  REQUIRE(inst.big_m[0].cols() == 4);
  for (int k = 1; k <= 2; ++k) {
    for (int i = 0; i < inst.n(k); ++i) {
      for (int j = 0; j < inst.m; ++j) {
        CHECK(inst.big(k, i, j) ==
              doctest::Approx(inst.feature(k, i, j).norm()).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("kernel draws are centered streams, independent per center") {
  Rng rng(4);
  Eigen::MatrixXd d1(2, 2), d2(1, 2);
  d1 << 0.0, 0.0, 5.0, -3.0;
  d2 << 1.0, 1.0;
  std::array<SinkhornBall, 2> balls{SinkhornBall{0.01, 0.1, 2},
                                    SinkhornBall{0.01, 0.1, 2}};
  auto map = map_2f(2, 1);
  const SaaInstance a = build_instance(d1, d2, map, balls, 2000, 99);

  // Draw means sit near the centers (variance eps per coordinate).
  Eigen::VectorXd mean0 = Eigen::VectorXd::Zero(2);
  for (int j = 0; j < 2000; ++j) mean0 += a.draws[0].row(j).transpose();
  mean0 /= 2000.0;
  CHECK((mean0 - d1.row(0).transpose()).norm() < 0.02);

  // Same seed reproduces bit-for-bit.
  const SaaInstance b = build_instance(d1, d2, map, balls, 2000, 99);
  CHECK((a.draws[0] - b.draws[0]).norm() == 0.0);
  CHECK((a.draws[1] - b.draws[1]).norm() == 0.0);

  // Changing center 1 leaves center 0's stream untouched.
  Eigen::MatrixXd d1b = d1;
  d1b.row(1) << -7.0, 2.0;
  const SaaInstance c = build_instance(d1b, d2, map, balls, 2000, 99);
  CHECK((c.draws[0].topRows(2000) - a.draws[0].topRows(2000)).norm() == 0.0);
  CHECK((c.draws[1] - a.draws[1]).norm() == 0.0);
}

TEST_CASE("indicator pattern at the zero detector follows the tie convention") {
  const SaaInstance inst = tiny_instance(51);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(inst.feature_dim());
  const BitsPattern p = indicator_pattern(inst, zero);
  CHECK(p[1].cast<int>().sum() == 0);           // score 0 is correct under H1
  CHECK(p[2].cast<int>().sum() == 2 * inst.m);  // and an error under H2
}

TEST_CASE("indicator pattern matches per-draw score signs") {
  const SaaInstance inst = tiny_instance(52);
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd theta = rng.normal_vector(inst.feature_dim());
    const BitsPattern p = indicator_pattern(inst, theta);
    for (int k = 1; k <= 2; ++k) {
      for (int i = 0; i < inst.n(k); ++i) {
        for (int j = 0; j < inst.m; ++j) {
          const double score = inst.feature(k, i, j).dot(theta);
          const bool err = k == 1 ? score < 0.0 : score >= 0.0;
          CHECK(p[k](i, j) == static_cast<std::uint8_t>(err ? 1 : 0));
        }
      }
    }
  }
}

TEST_CASE("saa objective equals the per-hypothesis optimized duals") {
  const SaaInstance inst = tiny_instance(53);
  Rng rng(9);
  const Eigen::VectorXd theta = rng.normal_vector(inst.feature_dim());
  const BitsPattern p = indicator_pattern(inst, theta);
  const SaaObjective obj = saa_objective(inst, theta);
  const double v1 = optimize_lambda(inst.ball(1), p[1]).value;
  const double v2 = optimize_lambda(inst.ball(2), p[2]).value;
  CHECK(obj.s_hat == doctest::Approx(std::max(v1, v2)).epsilon(1e-12));
  CHECK(obj.lambda[0].value == doctest::Approx(v1).epsilon(1e-12));
  CHECK(obj.lambda[1].value == doctest::Approx(v2).epsilon(1e-12));
  CHECK(obj.s_hat >= 0.0);
  CHECK(obj.s_hat <= 1.0 + 1e-12);
}

TEST_CASE("saa objective is scale free in the detector") {
  const SaaInstance inst = tiny_instance(54);
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const Eigen::VectorXd theta = rng.normal_vector(inst.feature_dim());
    const double base = saa_objective(inst, theta).s_hat;
    CHECK(saa_objective(inst, 17.0 * theta).s_hat == doctest::Approx(base));
    CHECK(saa_objective(inst, 1e-6 * theta).s_hat == doctest::Approx(base));
  }
}

TEST_CASE("empirical risk of the zero detector is one-sided") {
  auto map = map_2f(2, 77);
  const Detector det{map, Eigen::VectorXd::Zero(map->output_dim())};
  Rng rng(11);
  Eigen::MatrixXd t1(6, 2), t2(5, 2);
  for (int i = 0; i < 6; ++i) t1.row(i) = rng.normal_vector(2).transpose();
  for (int i = 0; i < 5; ++i) t2.row(i) = rng.normal_vector(2).transpose();
  const EmpiricalRisk r = empirical_risk(det, t1, t2);
  CHECK(r.type1 == 0.0);
  CHECK(r.type2 == 1.0);
  CHECK(r.max_err == 1.0);
}

TEST_CASE("empirical risk matches a direct classification count") {
  auto map = map_2f(2, 78);
  Rng rng(12);
  Eigen::VectorXd theta = rng.normal_vector(map->output_dim());
  const Detector det{map, theta};
  Eigen::MatrixXd t1(10, 2), t2(10, 2);
  for (int i = 0; i < 10; ++i) {
    t1.row(i) = rng.normal_vector(2).transpose();
    t2.row(i) = rng.normal_vector(2).transpose();
  }
  int e1 = 0, e2 = 0;
  for (int i = 0; i < 10; ++i) {
    if (det.classify(t1.row(i).transpose()) != 1) ++e1;
    if (det.classify(t2.row(i).transpose()) != 2) ++e2;
  }
  const EmpiricalRisk r = empirical_risk(det, t1, t2);
  CHECK(r.type1 == doctest::Approx(e1 / 10.0));
  CHECK(r.type2 == doctest::Approx(e2 / 10.0));
  CHECK(r.max_err == doctest::Approx(std::max(e1, e2) / 10.0));
}
