#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <string>

#include "rht/errors.hpp"
#include "rht/exact_solver.hpp"
#include "rht/features.hpp"
#include "rht/rng.hpp"
#include "rht/saa.hpp"

using namespace rht;

namespace {

std::shared_ptr<const FeatureMap> map_2f(std::uint64_t seed) {
  FeatureMapSpec spec;
  spec.kind = FeatureKind::kGaussianRff;
  spec.input_dim = 2;
  spec.num_features = 2;
  spec.bandwidth = 1.0;
  spec.seed = seed;
  return std::make_shared<const FeatureMap>(build_feature_map(spec));
}

SaaInstance make_tiny(int n1, int n2, int m, std::uint64_t seed,
                      double eps = 0.1, double rho = 0.1) {
  Rng rng(seed);
  Eigen::MatrixXd d1(n1, 2), d2(n2, 2);
  for (int i = 0; i < n1; ++i) d1.row(i) = rng.normal_vector(2).transpose();
  for (int i = 0; i < n2; ++i)
    d2.row(i) = (rng.normal_vector(2) + Eigen::VectorXd::Constant(2, 0.8)).transpose();
  std::array<SinkhornBall, 2> balls{SinkhornBall{eps, rho, 2},
                                    SinkhornBall{eps, rho, 2}};
  return build_instance(d1, d2, map_2f(seed + 1), balls, m, seed + 2);
}

int count_lines_with_prefix(const std::string& text, const std::string& prefix) {
  std::istringstream is(text);
  std::string line;
  int count = 0;
  while (std::getline(is, line)) {
    if (line.rfind(prefix, 0) == 0) ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("miecp counts on a one-draw-per-hypothesis instance") {
  const SaaInstance inst = make_tiny(1, 1, 1, 60);
  const MiecpModel model = build_miecp(inst);
  CHECK(model.num_binaries() == 2);
  CHECK(model.num_cones() == 2);
  CHECK(model.num_aux() == 2);
  CHECK(model.feature_dim == 2);
  CHECK(model.margin > 0.0);
  CHECK(model.margin < 1e-6);
}

TEST_CASE("native text export: structure and exact round trip") {
  const SaaInstance inst = make_tiny(1, 1, 1, 61);
  const MiecpModel model = build_miecp(inst);
  const std::string text = export_model(model, ExportFormat::kNativeText);

  CHECK(text.rfind("MIECP-NATIVE v1", 0) == 0);
  CHECK(count_lines_with_prefix(text, "EXP ") == 2);
  CHECK(count_lines_with_prefix(text, "objective min") == 1);
  CHECK(text.find("end\n") != std::string::npos);
  // Binary indicators appear as kind 'B'.
  CHECK(text.find(" B ") != std::string::npos);

  const ConicModel direct = conic_view(model);
  const ConicModel parsed = parse_native_model(text);
  CHECK(conic_models_equal(direct, parsed));

  // A corrupted coefficient must break equality.
  std::string broken = text;
  const std::size_t pos = broken.find("row L");
  REQUIRE(pos != std::string::npos);
  broken.replace(pos, 5, "row E");
  CHECK(!conic_models_equal(direct, parse_native_model(broken)));
}

TEST_CASE("native parser rejects malformed input with line context") {
  CHECK_THROWS_AS(parse_native_model("bogus\n"), IoError);
  const SaaInstance inst = make_tiny(1, 1, 1, 62);
  const std::string text = export_model(build_miecp(inst), ExportFormat::kNativeText);
  // Truncated file: the end marker is required.
  const std::string truncated = text.substr(0, text.size() - 4);
  CHECK_THROWS_AS(parse_native_model(truncated), IoError);
}

TEST_CASE("cbf-like export carries the cone and integer sections") {
  const SaaInstance inst = make_tiny(2, 1, 2, 63);
  const std::string text = export_model(build_miecp(inst), ExportFormat::kCbfLike);
  CHECK(text.find("VER") != std::string::npos);
  CHECK(text.find("VAR") != std::string::npos);
  CHECK(text.find("INT") != std::string::npos);
  CHECK(text.find("EXP") != std::string::npos);
  CHECK(text.find("ACOORD") != std::string::npos);
  // Deterministic output.
  CHECK(text == export_model(build_miecp(inst), ExportFormat::kCbfLike));
}

TEST_CASE("conic view dimensions") {
  const SaaInstance inst = make_tiny(1, 1, 1, 64);
  const ConicModel cm = conic_view(build_miecp(inst));
  // theta(2) + s + u1 + u2 + t(2) + a(2) + z(2) + w(2) = 13 variables.
  CHECK(cm.vars.size() == 13);
  CHECK(cm.exp_cones.size() == 2);
  CHECK(cm.ball_vars.size() == 2);
  REQUIRE(cm.objective_var >= 0);
  CHECK(cm.vars[cm.objective_var].name == "s");
  int binaries = 0;
  for (const ConicVariable& v : cm.vars) binaries += v.kind == 'B' ? 1 : 0;
  CHECK(binaries == 2);
}

TEST_CASE("root relaxation bounds the incumbent from below") {
  const SaaInstance inst = make_tiny(3, 2, 2, 65);
  const MiecpModel model = build_miecp(inst);
  const BnbNode root = root_node(model);
  BnbOptions opt;
  opt.relax_iters = 300;
  opt.seed = 17;
  const RelaxationResult rel = node_relaxation(model, root, opt);
  CHECK(!rel.infeasible);

  Rng rng(18);
  double best = 1.0;
  for (int t = 0; t < 64; ++t) {
    Eigen::VectorXd theta = rng.normal_vector(inst.feature_dim());
    best = std::min(best, saa_objective(inst, theta).s_hat);
  }
  CHECK(rel.bound <= best + 1e-9);
  CHECK(rel.bound >= -1e-9);
  REQUIRE(rel.z_relax[0].rows() == 3);
  REQUIRE(rel.z_relax[1].rows() == 2);
  CHECK(rel.z_relax[0].minCoeff() >= 0.0);
  CHECK(rel.z_relax[0].maxCoeff() <= 1.0);
}

TEST_CASE("all-ones fixing reproduces the trivial upper value") {
  const SaaInstance inst = make_tiny(2, 2, 2, 66);
  const MiecpModel model = build_miecp(inst);
  BnbNode node = root_node(model);
  for (int k = 1; k <= 2; ++k) node[k].setConstant(1);
  const RelaxationResult rel = node_relaxation(model, node, BnbOptions{});
  // Every indicator forced to 1: the dual value of the all-ones pattern is 1
  // in the lambda -> 0 limit, and no detector constraint is active.
  CHECK(!rel.infeasible);
  CHECK(rel.bound == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("contradictory fixings are detected as infeasible") {
  // One draw fixed to "correct" under both hypotheses with identical
  // features: score >= 0 (z^1 = 0) and score < 0 (z^2 = 0) cannot both hold
  // unless the feature is degenerate, and here it is not.
  const SaaInstance base = make_tiny(1, 1, 1, 67);
  SaaInstance inst = base;
  inst.features[1] = inst.features[0];
  inst.big_m[1] = inst.big_m[0];
  const MiecpModel model = build_miecp(inst);
  BnbNode node = root_node(model);
  node[1](0, 0) = 0;  // needs score >= 0
  node[2](0, 0) = 0;  // needs score < 0 (strictly, via the margin)
  const RelaxationResult rel = node_relaxation(model, node, BnbOptions{});
  CHECK(rel.infeasible);
}

TEST_CASE("feasible fixing in 2-d yields a witness satisfying the pattern") {
  const SaaInstance inst = make_tiny(2, 2, 2, 68);
  const MiecpModel model = build_miecp(inst);
  BnbNode node = root_node(model);
  node[1](0, 0) = 0;
  node[1](1, 1) = 0;
  const RelaxationResult rel = node_relaxation(model, node, BnbOptions{});
  REQUIRE(!rel.infeasible);
  REQUIRE(rel.theta_feasible.size() == 2);
  CHECK(rel.theta_feasible.norm() <= 1.0 + 1e-9);
  CHECK(inst.feature(1, 0, 0).dot(rel.theta_feasible) >= -1e-12);
  CHECK(inst.feature(1, 1, 1).dot(rel.theta_feasible) >= -1e-12);
}

TEST_CASE("branch and bound matches the dense angle oracle on tiny instances") {
  for (std::uint64_t seed : {70, 71}) {
    const SaaInstance inst = make_tiny(3, 3, 2, seed);
    BnbOptions opt;
    opt.seed = seed;
    const ExactSolution sol = solve_bnb(inst, 1e-6, opt);
    const OracleResult oracle = oracle_grid_search(inst, 4000 * 6 * 2);
    CHECK(!sol.partial);
    CHECK(sol.gap <= 1e-6 + 1e-12);
    // Termination at gap <= tol allows the incumbent to sit above the true
    // optimum (== the dense oracle value) by at most tol.
    CHECK(sol.s_star <= oracle.s + 1e-6 + 1e-12);
    CHECK(sol.s_star >= oracle.s - 1e-3);
    CHECK(sol.s_star >= 0.0);
    CHECK(sol.s_star <= 1.0);
    // The returned detector actually achieves the reported value.
    CHECK(saa_objective(inst, sol.theta).s_hat == doctest::Approx(sol.s_star));
  }
}

TEST_CASE("worker count does not change the certified answer") {
  const SaaInstance inst = make_tiny(3, 2, 2, 72);
  BnbOptions one;
  one.seed = 5;
  BnbOptions three = one;
  three.workers = 3;
  const ExactSolution a = solve_bnb(inst, 1e-6, one);
  const ExactSolution b = solve_bnb(inst, 1e-6, three);
  CHECK(!a.partial);
  CHECK(!b.partial);
  // Both incumbents are within tol of the same optimum.
  CHECK(std::abs(a.s_star - b.s_star) <= 2e-6);
}

TEST_CASE("node budget produces an honest partial certificate") {
  const SaaInstance inst = make_tiny(6, 6, 3, 73);
  BnbOptions opt;
  opt.seed = 3;
  opt.max_nodes = 1;
  opt.relax_iters = 40;
  const ExactSolution sol = solve_bnb(inst, 1e-9, opt);
  if (sol.partial) {
    CHECK(sol.gap > 1e-9);
    CHECK(sol.lower_bound <= sol.s_star + 1e-12);
  }
  // Whatever happened, the incumbent is a genuine detector value.
  CHECK(saa_objective(inst, sol.theta).s_hat == doctest::Approx(sol.s_star));
}

TEST_CASE("oracle grid search requires two feature dimensions") {
  FeatureMapSpec spec;
  spec.kind = FeatureKind::kGaussianRff;
  spec.input_dim = 2;
  spec.num_features = 3;
  spec.bandwidth = 1.0;
  spec.seed = 2;
  auto map = std::make_shared<const FeatureMap>(build_feature_map(spec));
  Eigen::MatrixXd d1(1, 2), d2(1, 2);
  d1 << 0.0, 0.0;
  d2 << 1.0, 1.0;
  std::array<SinkhornBall, 2> balls{SinkhornBall{0.1, 0.1, 2},
                                    SinkhornBall{0.1, 0.1, 2}};
  const SaaInstance inst = build_instance(d1, d2, map, balls, 1, 1);
  CHECK_THROWS(oracle_grid_search(inst, 100));
}
