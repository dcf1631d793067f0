#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rht/math_util.hpp"
#include "rht/rng.hpp"

using namespace rht;

TEST_CASE("derive_seed separates streams deterministically") {
  CHECK(derive_seed(42, 0) == derive_seed(42, 0));
  CHECK(derive_seed(42, 0) != derive_seed(42, 1));
  CHECK(derive_seed(42, 0) != derive_seed(43, 0));
  // Nearby masters and streams should not collide in a small census.
  std::vector<std::uint64_t> seen;
  for (std::uint64_t master = 0; master < 32; ++master) {
    for (std::uint64_t stream = 0; stream < 32; ++stream) {
      seen.push_back(derive_seed(master, stream));
    }
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("rng reproduces its sequence and respects ranges") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform01();
    CHECK(u == b.uniform01());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng c(9);
  for (int i = 0; i < 200; ++i) {
    const double v = c.uniform01_open_left();
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    CHECK(std::isfinite(std::log(v)));
  }
  Rng d(11);
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t x = d.next_below(17);
    CHECK(x < 17);
  }
}

TEST_CASE("rng normal moments on a large sample") {
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng permutation is a permutation") {
  Rng rng(5);
  const std::vector<int> p = rng.permutation(31);
  std::vector<bool> seen(31, false);
  for (int v : p) {
    REQUIRE(v >= 0);
    REQUIRE(v < 31);
    CHECK(!seen[v]);
    seen[v] = true;
  }
}

TEST_CASE("log_sum_exp matches direct evaluation and survives large inputs") {
  const std::vector<double> xs = {0.1, -0.3, 1.7};
  double direct = 0.0;
  for (double x : xs) direct += std::exp(x);
  CHECK(log_sum_exp(xs) == doctest::Approx(std::log(direct)).epsilon(1e-12));

  const std::vector<double> big = {1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  const std::vector<double> tiny = {-1e308, -1e308};
  CHECK(std::isfinite(log_sum_exp(tiny)));
}

TEST_CASE("log_mix_exp oracle and edge weights") {
  // Direct formula at a moderate argument.
  const double w = 0.3, x = 1.4;
  CHECK(log_mix_exp(w, x) ==
        doctest::Approx(std::log(1.0 - w + w * std::exp(x))).epsilon(1e-12));
  // Weight limits.
  CHECK(log_mix_exp(0.0, 50.0) == 0.0);
  CHECK(log_mix_exp(1.0, 50.0) == 50.0);
  // Huge exponent: log(w) + x dominates, no overflow.
  CHECK(log_mix_exp(0.5, 800.0) == doctest::Approx(std::log(0.5) + 800.0));
  CHECK(log1p_q_expm1(0.25, 2.0) == log_mix_exp(0.25, 2.0));
}

TEST_CASE("normal_cdf reference values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(normal_cdf(-1.0) + normal_cdf(1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(normal_cdf(8.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("golden_section_min finds quadratic minimum") {
  const double x = golden_section_min([](double t) { return (t - 2.0) * (t - 2.0); },
                                      -10.0, 10.0);
  CHECK(x == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("minimize_log_grid refines a log-quadratic") {
  const auto f = [](double t) {
    const double u = std::log(t) - 1.0;
    return u * u;
  };
  const ScalarMin best = minimize_log_grid(f, 1e-6, 1e4);
  CHECK(best.x == doctest::Approx(std::exp(1.0)).epsilon(1e-6));
  CHECK(best.value == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("project_to_unit_ball") {
  Eigen::VectorXd v(2);
  v << 3.0, 4.0;
  const Eigen::VectorXd p = project_to_unit_ball(v);
  CHECK(p.norm() == doctest::Approx(1.0));
  CHECK(p(0) == doctest::Approx(0.6));
  Eigen::VectorXd w(2);
  w << 0.1, -0.2;
  CHECK((project_to_unit_ball(w) - w).norm() == 0.0);
}

TEST_CASE("interval union normalizes and answers membership") {
  const IntervalUnion u({{2.0, 3.0}, {0.0, 1.0}, {0.5, 1.5}});
  REQUIRE(u.parts().size() == 2);
  CHECK(u.parts()[0].lo == 0.0);
  CHECK(u.parts()[0].hi == 1.5);
  CHECK(u.parts()[1].lo == 2.0);
  CHECK(u.contains(1.5));
  CHECK(u.contains(2.0));
  CHECK(!u.contains(1.75));
  CHECK(u.distance_to_complement(0.5) == doctest::Approx(0.5));
  CHECK(u.distance_to_set(1.75) == doctest::Approx(0.25));
  CHECK(u.distance_to_set(0.5) == 0.0);

  const IntervalUnion ray({{0.0, kInf}});
  CHECK(ray.contains(1e12));
  CHECK(ray.distance_to_complement(3.0) == doctest::Approx(3.0));
}
