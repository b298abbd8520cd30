#include <catch_amalgamated.hpp>

#include "aopt/problem.hpp"

#include <cstring>
#include <random>

using namespace aopt;
using Catch::Approx;

namespace {

Mat scalar(double a) { return Mat::Constant(1, 1, a); }
Vec vscalar(double a) { return Vec::Constant(1, a); }

std::shared_ptr<const Plant> scalar_plant(double a = -1.0, double b = 1.0, double w = 0.0) {
  return std::make_shared<const Plant>(LtiPlant(scalar(a), scalar(b), vscalar(w)));
}

QuadraticObjective scalar_quadratic(double q, double c, double r, double lx = 0.0, double lu = 0.0) {
  QuadraticObjective o;
  o.hessian_xx = scalar(q);
  o.hessian_xu = scalar(c);
  o.hessian_uu = scalar(r);
  o.linear_x = vscalar(lx);
  o.linear_u = vscalar(lu);
  return o;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("scalar reduced problem", "[problem]") {
  const Problem prob(scalar_plant(), scalar_quadratic(1, 0, 0));
  CHECK(prob.reduced_objective(vscalar(2)) == Approx(2.0));
  CHECK(prob.reduced_gradient(vscalar(3))(0) == Approx(3.0));
  CHECK(prob.kkt_residual(vscalar(1), vscalar(1)) == Approx(1.0));
  const Optimum opt = solve_optimum(prob);
  CHECK(std::abs(opt.u(0)) <= 1e-12);
  CHECK(prob.kkt_residual(opt.x, opt.u) <= 1e-8);
  CHECK_THROWS_AS(prob.reduced_objective(Vec::Zero(2)), DimensionError);
}

TEST_CASE("random instance evaluation against dense arithmetic", "[problem]") {
  const RandomInstance inst = random_instance(20, 5, 1);
  const Problem prob = make_problem(inst);
  const Vec x0 = inst.plant.A().fullPivLu().solve(-inst.plant.w());
  Vec z = Vec::Zero(25);
  z.head(20) = x0;
  const Mat Hs = inst.objective.full_hessian();
  Vec q(25);
  q << inst.objective.linear_x, inst.objective.linear_u;
  const double oracle = 0.5 * z.dot(Hs * z) + q.dot(z);
  CHECK(prob.reduced_objective(Vec::Zero(5)) == Approx(oracle).epsilon(1e-12));
}

TEST_CASE("chain rule against finite differences", "[problem]") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const RandomInstance inst = random_instance(3 + k % 10, 1 + k % 4, 100 + k);
    const Problem prob = make_problem(inst);
    Vec u(prob.input_dim());
    for (auto& a : u) a = N(rng);
    const Vec g = prob.reduced_gradient(u);
    Vec fd(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      Vec up = u, um = u;
      up(i) += 1e-6;
      um(i) -= 1e-6;
      fd(i) = (prob.reduced_objective(up) - prob.reduced_objective(um)) / 2e-6;
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("optimum and KKT residual", "[problem]") {
  for (std::uint64_t seed : {0u, 5u, 9u}) {
    const RandomInstance inst = random_instance(20, 5, seed);
    const Problem prob = make_problem(inst);
    const Optimum opt = solve_optimum(prob);
    CHECK(prob.reduced_gradient(opt.u).norm() <= 1e-10);
    CHECK(prob.kkt_residual(opt.x, opt.u) <= 1e-8);
    CHECK(prob.kkt_residual(opt.x, (opt.u.array() + 0.1).matrix()) > 1e-3);
  }

  SECTION("with an output constraint") {
    RandomInstanceOptions o;
    o.constraints = 5;
    const RandomInstance inst = random_instance(20, 10, 4, o);
    const Problem prob = make_problem(inst);
    const Optimum opt = solve_optimum(prob);
    CHECK(prob.constraint_violation(opt.x) <= 1e-10);
    CHECK(prob.kkt_residual(opt.x, opt.u) <= 1e-8);
    CHECK(prob.kkt_residual(opt.x, opt.u, opt.multipliers) <= 1e-8);
    CHECK(prob.kkt_residual(opt.x, opt.u, Vec(opt.multipliers.array() + 1.0)) > 1e-3);
    CHECK_THROWS_AS(prob.kkt_residual(opt.x, opt.u, Vec::Zero(3)), DimensionError);
  }
}

TEST_CASE("projected KKT residual on an interval", "[problem]") {
  // Φ = ½(x+1)², h(u) = u: the reduced gradient at u = 0 is 1, pointing outward
  const Problem prob(scalar_plant(), scalar_quadratic(1, 0, 0, 1.0), PolyhedralSet::box(vscalar(0), vscalar(1)));
  CHECK(prob.kkt_residual(vscalar(0), vscalar(0)) == 0.0);
  CHECK(prob.kkt_residual(vscalar(0.5), vscalar(0.5)) == Approx(1.5));
}

TEST_CASE("l1 term in the KKT residual", "[problem]") {
  QuadraticObjective o = scalar_quadratic(0, 0, 0);
  o.l1_weight_x = 1.0;
  const Problem prob(scalar_plant(), o);
  CHECK(prob.kkt_residual(vscalar(0), vscalar(0)) == 0.0);
  CHECK(prob.kkt_residual(vscalar(0.5), vscalar(0.5)) == Approx(1.0));
  CHECK(prob.kkt_residual(vscalar(-0.5), vscalar(-0.5)) == Approx(1.0));
  CHECK(prob.kkt_residual(vscalar(5e-4), vscalar(5e-4)) == 0.0);
  CHECK(prob.reduced_objective(vscalar(-2)) == Approx(2.0));
}

TEST_CASE("random instance recipe", "[problem]") {
  const RandomInstance a = random_instance(1, 1, 0);
  CHECK(a.plant.A()(0, 0) < 0.0);

  const RandomInstance b1 = random_instance(20, 5, 7);
  const RandomInstance b2 = random_instance(20, 5, 7);
  CHECK(bitwise_equal(b1.plant.A(), b2.plant.A()));
  CHECK(bitwise_equal(b1.plant.B(), b2.plant.B()));
  CHECK(bitwise_equal(b1.plant.w(), b2.plant.w()));
  CHECK(bitwise_equal(b1.objective.full_hessian(), b2.objective.full_hessian()));
  CHECK(bitwise_equal(b1.objective.linear_u, b2.objective.linear_u));
  Eigen::EigenSolver<Mat> es(b1.plant.A());
  CHECK(es.eigenvalues().real().maxCoeff() <= -0.1 + 1e-12);

  const RandomInstance c = random_instance(20, 5, 8);
  CHECK_FALSE(bitwise_equal(b1.plant.A(), c.plant.A()));

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const RandomInstance inst = random_instance(20, 5, seed);
    const Problem prob = make_problem(inst);
    CHECK(min_eig(prob.reduced_hessian(Vec::Zero(5))) > 0.0);
  }
  CHECK_THROWS_AS(random_instance(0, 1, 0), DimensionError);
}

TEST_CASE("problem validation", "[problem]") {
  CHECK_THROWS_AS(Problem(scalar_plant(), scalar_quadratic(-1, 0, 0)), DomainError);
  QuadraticObjective wrong;
  wrong.hessian_xx = Mat::Identity(2, 2);
  wrong.hessian_xu = Mat::Zero(2, 1);
  wrong.hessian_uu = scalar(1);
  wrong.linear_x = Vec::Zero(2);
  wrong.linear_u = Vec::Zero(1);
  CHECK_THROWS_AS(Problem(scalar_plant(), wrong), DimensionError);
  CHECK_THROWS_AS(Problem(scalar_plant(), scalar_quadratic(1, 0, 0), std::nullopt,
                          OutputConstraint{Mat::Ones(1, 2), Vec::Ones(1)}),
                  DimensionError);
}

TEST_CASE("nonlinear plant reduced Hessian", "[problem]") {
  // h(u) = u³/3 + u, so Φ̃(u) = ½h(u)² for Φ = ½x²
  const auto plant = std::make_shared<const Plant>(NonlinearPlant(
      1, 1, [](const Vec& x, const Vec& u) { return Vec(-x + u.array().cube().matrix() / 3.0 + u); },
      [](const Vec& u) { return Vec(u.array().cube().matrix() / 3.0 + u); },
      [](const Vec& u) { return Mat::Constant(1, 1, u(0) * u(0) + 1.0); }, PlantConstants{}));
  const Problem prob(plant, scalar_quadratic(1, 0, 0));
  const double u = 0.7;
  const double h = u * u * u / 3 + u, dh = u * u + 1, d2h = 2 * u;
  CHECK(prob.reduced_gradient(vscalar(u))(0) == Approx(h * dh).epsilon(1e-12));
  CHECK(prob.reduced_hessian(vscalar(u))(0, 0) == Approx(dh * dh + h * d2h).epsilon(1e-6));
}
