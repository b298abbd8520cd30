#include <catch_amalgamated.hpp>

#include "aopt/bounds.hpp"
#include "aopt/experiments.hpp"

#include <random>

using namespace aopt;
using Catch::Approx;

TEST_CASE("gain bound formulas", "[bounds]") {
  CHECK(gradient_bound({1, 1, 1}) == 1.0);
  CHECK(gradient_bound({2, 1, 4}) == 0.5);
  CHECK(gradient_bound({1, 2, 0}) == kInf);
  CHECK_THROWS_AS(gradient_bound({0, 1, 1}), DomainError);
  CHECK_THROWS_AS(gradient_bound({1, 1, -1}), DomainError);

  CHECK(newton_bound({1, 1, 1, 0.5}) == 0.5);
  CHECK_THROWS_AS(newton_bound({1, 1, 1}), DomainError);

  BoundInputs in{1, 1, 1};
  in.kappa_Q = 0.5;
  CHECK(gradient_predicate(in));
  in.kappa_Q = 1.0;
  CHECK_FALSE(gradient_predicate(in));
}

TEST_CASE("momentum condition", "[bounds]") {
  BoundInputs in{1, 1, 1};
  in.kappa_Q = 0.5;
  in.lambda_D = 0.5;
  const MomentumCheck a = momentum_bound_holds(in);
  CHECK(a.holds);
  CHECK(a.margin == Approx(0.5));

  in.kappa_Q = 2.0;
  in.lambda_D = 1.0;
  const MomentumCheck b = momentum_bound_holds(in);
  CHECK_FALSE(b.holds);
  CHECK(b.margin == Approx(-3.0));

  in.kappa_Q = 1.0;
  CHECK_FALSE(momentum_bound_holds(in).holds);  // equality is not enough
}

TEST_CASE("general bound is below half the gradient bound", "[bounds]") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.01, 5.0), S(1.0, 10.0);
  for (int k = 0; k < 1000; ++k) {
    BoundInputs in{U(rng), U(rng), U(rng)};
    in.mu = U(rng);
    in.ell = *in.mu * S(rng);
    in.kappa_V = 1.0;
    REQUIRE(general_bound(in) <= 0.5 * gradient_bound(in) * (1 + 1e-15));
  }
  BoundInputs in{1, 1, 1, 1.0};
  in.kappa_V = 2.0;
  in.ell = 0.5;
  CHECK(general_bound(in) == Approx(0.5));
}

TEST_CASE("LTI bound", "[bounds]") {
  const Mat one = Mat::Identity(1, 1);
  const LtiBound b = lti_bound(one, 0.5, one, 1.0);
  CHECK(b.primary == Approx(1.0));
  CHECK(b.condition_form == Approx(1.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    Mat M(4, 4), H(4, 2);
    for (Eigen::Index i = 0; i < M.size(); ++i) M(i) = N(rng);
    for (Eigen::Index i = 0; i < H.size(); ++i) H(i) = N(rng);
    const Mat P = M * M.transpose() + 0.1 * Mat::Identity(4, 4);
    const LtiBound base = lti_bound(P, 0.3, H, 2.0);
    CHECK(base.condition_form <= base.primary * (1 + 1e-12));
    // invariant under scaling P, inversely proportional to L
    const LtiBound scaled = lti_bound(3.0 * P, 0.3, H, 2.0);
    CHECK(scaled.primary == Approx(base.primary).epsilon(1e-12));
    CHECK(lti_bound(P, 0.3, H, 4.0).primary == Approx(0.5 * base.primary).epsilon(1e-12));
  }
  CHECK_THROWS_AS(lti_bound(-one, 0.5, one, 1.0), DomainError);
}

TEST_CASE("two-rate coupling matrix", "[bounds]") {
  const LambdaTest a = lambda_matrix(1, 1, 0, 0.5, 0.5, 0.5);
  CHECK(a.Lambda(0, 0) == Approx(-0.5));
  CHECK(a.Lambda(0, 1) == Approx(0.25));
  CHECK(a.Lambda(1, 0) == Approx(0.25));
  CHECK(a.Lambda(1, 1) == Approx(-0.5));
  CHECK(a.negdef);
  CHECK_FALSE(lambda_matrix(1, 1, 0, 2, 2, 0.5).negdef);

  CHECK(optimal_delta(1, 1) == 0.5);
  CHECK(optimal_delta(1, 3) == 0.25);
  CHECK(optimal_delta(0, 3) == 0.0);
  CHECK_THROWS_AS(optimal_delta(0, 0), DomainError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.05, 5.0), X(0.0, 3.0);
  int agree = 0, negative = 0;
  for (int k = 0; k < 1000; ++k) {
    const double a1 = U(rng), a2 = U(rng), b1 = U(rng), b2 = U(rng), xi = X(rng);
    const LambdaTest t = lambda_matrix(a1, a2, xi, b1, b2, optimal_delta(b1, b2));
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(t.Lambda);
    const bool oracle = es.eigenvalues().maxCoeff() < 0.0;
    agree += (t.negdef == oracle && oracle == lambda_ratio_test(a1, a2, xi, b1, b2)) ? 1 : 0;
    negative += oracle ? 1 : 0;
  }
  CHECK(agree == 1000);
  CHECK(negative > 50);
  CHECK(negative < 950);
}

TEST_CASE("mixed Lipschitz constant", "[bounds]") {
  CHECK(estimate_L(scalar_example(), LMode::analytic_quadratic) == Approx(1.0).epsilon(1e-14));
  CHECK(estimate_L(cross_coupled_example(), LMode::analytic_quadratic) == Approx(3.0).epsilon(1e-14));
  CHECK(estimate_L(scalar_lti_problem(-1, 1, 0, 0, 1), LMode::analytic_quadratic) == 0.0);
  CHECK_THROWS_AS(estimate_L(l1_example(), LMode::analytic_quadratic), DomainError);

  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const Problem prob = make_problem(random_instance(20, 5, seed));
    SampleOptions so;
    so.seed = seed;
    const double analytic = estimate_L(prob, LMode::analytic_quadratic);
    const double ratio = sampled_L_ratio(prob, so);
    CHECK(ratio <= analytic * (1 + 1e-12));
    CHECK(ratio >= 0.05 * analytic);
    CHECK(estimate_L(prob, LMode::sampled, so) == Approx(1.1 * ratio));
  }
}

TEST_CASE("bounds report on the scalar example", "[bounds]") {
  const BoundsReport br = bounds_report(scalar_example(), 0.5, 1000);
  CHECK(br.P(0, 0) == Approx(1.0).epsilon(1e-14));
  CHECK(br.tau == Approx(0.5).epsilon(1e-14));
  CHECK(br.cert.gamma == Approx(1.0).epsilon(1e-14));
  CHECK(br.cert.zeta == Approx(1.0).epsilon(1e-14));
  CHECK(br.L == Approx(1.0).epsilon(1e-14));
  CHECK(br.eps_star == Approx(1.0).epsilon(1e-14));
  CHECK(br.lti.primary == Approx(1.0).epsilon(1e-14));
  REQUIRE(br.L_sampled);
  CHECK(*br.L_sampled <= 1.1 + 1e-12);
}

TEST_CASE("LaSalle function along closed-loop runs", "[bounds]") {
  const Problem prob = scalar_example();
  const BoundsReport br = bounds_report(prob, 0.5);
  const double delta = lasalle_delta(br.cert, br.L);
  CHECK(delta == 0.5);

  const ControlLaw law = GradientLaw{Metric::scaled(0.5 * br.eps_star)};
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.horizon = 40.0;
  const InitialState init{Vec::Ones(1), Vec::Constant(1, -2.0), Vec()};
  const Trajectory tr = simulate_closed_loop(prob, law, init, cfg);
  const LaSalleSeries s = lasalle_eval(prob, br.cert, delta, law, tr);
  CHECK(s.fraction_satisfied() == 1.0);
  double worst = -kInf;
  for (double d : s.psi_dot) worst = std::max(worst, d);
  CHECK(worst <= 0.0);

  // an unstable run must show Ψ increasing somewhere
  const Problem cross = cross_coupled_example();
  const BoundsReport bc = bounds_report(cross, 0.5);
  const ControlLaw fast = GradientLaw{Metric::scaled(3.0)};
  cfg.horizon = 10.0;
  const Trajectory bad = simulate_closed_loop(cross, fast, init, cfg);
  const LaSalleSeries sb = lasalle_eval(cross, bc.cert, lasalle_delta(bc.cert, bc.L), fast, bad);
  CHECK(*std::max_element(sb.psi_dot.begin(), sb.psi_dot.end()) > 0.0);

  // constant at the equilibrium
  const Optimum opt = solve_optimum(prob);
  cfg.stop_on_convergence = false;
  cfg.horizon = 1.0;
  const Trajectory eq = simulate_closed_loop(prob, law, {opt.x, opt.u, Vec()}, cfg);
  const LaSalleSeries se = lasalle_eval(prob, br.cert, delta, law, eq);
  for (double p : se.psi) CHECK(p == se.psi.front());

  CHECK_THROWS_AS(lasalle_eval(prob, br.cert, 0.0, law, tr), DomainError);
  CHECK_THROWS_AS(lasalle_eval(prob, br.cert, delta, SubgradientLaw{}, tr), DomainError);
  CHECK_THROWS_AS(lasalle_eval(prob, certificate_from(converse_lyapunov_constants(1, 1, 1, 1, 1)), delta, law, tr),
                  DomainError);
}

TEST_CASE("LaSalle function for the saddle-point law", "[bounds]") {
  RandomInstanceOptions o;
  o.constraints = 2;
  const Problem prob = make_problem(random_instance(6, 4, 1, o));
  const BoundsReport br = bounds_report(prob);
  const ControlLaw law = SaddlePointLaw{0.2 * br.eps_star, 1.0, false};
  const SimConfig cfg = affine_config(prob, law, false);
  const Trajectory tr = simulate_closed_loop(prob, law, default_start(prob, law), cfg);
  REQUIRE(tr.outcome == Outcome::converged);
  const LaSalleSeries s = lasalle_eval(prob, br.cert, lasalle_delta(br.cert, br.L), law, tr);
  CHECK(s.psi.back() < s.psi.front());
  CHECK(s.psi.back() >= 0.0);
}
