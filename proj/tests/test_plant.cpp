#include <catch_amalgamated.hpp>

#include "aopt/plant.hpp"
#include "aopt/problem.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <random>

using namespace aopt;
using Catch::Approx;

namespace {

Mat scalar(double a) { return Mat::Constant(1, 1, a); }
Vec vscalar(double a) { return Vec::Constant(1, a); }

// vec(AᵀX + XA) = (I⊗Aᵀ + Aᵀ⊗I) vec(X)
Mat kron_lyapunov_oracle(const Mat& A, const Mat& Q) {
  const Eigen::Index n = A.rows();
  const Mat I = Mat::Identity(n, n);
  Mat K = Mat::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) += I(i, j) * A.transpose();
      K.block(i * n, j * n, n, n) += A(j, i) * I;
    }
  const Vec q = Eigen::Map<const Vec>(Q.data(), n * n);
  const Vec x = K.fullPivLu().solve(-q);
  return Eigen::Map<const Mat>(x.data(), n, n);
}

Mat random_hurwitz(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> N(0.0, 1.0);
  Mat M(n, n);
  for (Eigen::Index i = 0; i < M.size(); ++i) M(i) = N(rng);
  Eigen::EigenSolver<Mat> es(M);
  const double shift = es.eigenvalues().real().maxCoeff() + 0.2 + 0.5 * std::abs(N(rng));
  return M - shift * Mat::Identity(n, n);
}

using mp = boost::multiprecision::cpp_bin_float_50;

struct MpConstants {
  mp T, alpha, beta, delta, zeta_prime, zeta;
};

MpConstants mp_constants(double K_, double tau_, double lx_, double lu_, double l_) {
  const mp K = K_, tau = tau_, lx = lx_, lu = lu_, l = l_;
  MpConstants c;
  c.T = log(2 * K * K) / (2 * tau);
  c.alpha = (1 - exp(-2 * lx * c.T)) / (2 * lx);
  c.beta = K * K * (1 - exp(-2 * tau * c.T)) / (2 * tau);
  c.delta = 2 * K * (1 - exp((lx - tau) * c.T)) / (tau - lx);
  const mp lp = lx * l + lu;
  c.zeta_prime = (2 * K * lp / ((lx - tau) * (lx - tau))) * ((lx * c.T - tau * c.T - 1) * exp((lx - tau) * c.T) + 1);
  c.zeta = c.delta * l + c.zeta_prime;
  return c;
}

double rel(double got, const mp& want) { return static_cast<double>(abs((mp(got) - want) / want)); }

}  // namespace

TEST_CASE("steady state of LTI plants", "[plant]") {
  const LtiPlant p1(scalar(-1), scalar(1), vscalar(0));
  CHECK(p1.steady_state(vscalar(4))(0) == Approx(4.0));
  const LtiPlant p2(scalar(-2), scalar(1), vscalar(2));
  CHECK(p2.steady_state(vscalar(0))(0) == Approx(1.0));

  const RandomInstance inst = random_instance(20, 5, 3);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    Vec u(5);
    for (auto& v : u) v = N(rng);
    const Vec x = inst.plant.steady_state(u);
    CHECK((inst.plant.A() * x + inst.plant.B() * u + inst.plant.w()).norm() <= 1e-10);
  }
  CHECK_THROWS_AS(LtiPlant(scalar(0.5), scalar(1), vscalar(0)), NotHurwitz);
  CHECK_THROWS_AS(LtiPlant(scalar(-1), Mat::Ones(2, 1), vscalar(0)), DimensionError);
}

TEST_CASE("shifted Lyapunov solve", "[plant]") {
  const auto s1 = solve_lti_lyapunov(scalar(-1), 0.5);
  CHECK(s1.tau == Approx(0.5).margin(1e-15));
  CHECK(s1.P(0, 0) == Approx(1.0).margin(1e-12));

  Mat A = Mat::Zero(2, 2);
  A.diagonal() << -1, -3;
  const auto s2 = solve_lti_lyapunov(A, 0.5);
  CHECK(s2.tau == Approx(0.5));
  CHECK(s2.P(0, 0) == Approx(1.0).margin(1e-12));
  CHECK(s2.P(1, 1) == Approx(0.2).margin(1e-12));
  CHECK(std::abs(s2.P(0, 1)) <= 1e-12);

  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Mat Ak = random_hurwitz(rng, 2 + k % 7);
    const auto s = solve_lti_lyapunov(Ak);
    CHECK(lmi_residual(Ak, s.P, s.tau) <= 1e-9);
    CHECK(min_eig(s.P) > 0.0);
    const Mat shifted = Ak + s.tau * Mat::Identity(Ak.rows(), Ak.cols());
    const Mat oracle = kron_lyapunov_oracle(shifted, Mat::Identity(Ak.rows(), Ak.cols()));
    CHECK((oracle - s.P).norm() <= 1e-8 * std::max(1.0, oracle.norm()));
  }

  CHECK_THROWS_AS(solve_lti_lyapunov(scalar(1.0)), NotHurwitz);
  CHECK_THROWS_AS(solve_lti_lyapunov(scalar(-1.0), 1.5), DomainError);
}

TEST_CASE("LTI certificate constants", "[plant]") {
  const LtiPlant plant(scalar(-1), scalar(1), vscalar(0));
  const auto cert = lti_certificate(plant, scalar(1), 0.5);
  CHECK(cert.gamma == Approx(1.0).margin(1e-12));
  CHECK(cert.zeta == Approx(1.0).margin(1e-12));
  CHECK(cert.alpha == Approx(0.5));
  CHECK(cert.beta == Approx(0.5));

  // P = 2I, τ = 1 on A = −I (tight LMI); ‖H‖ = 3
  Mat B = Mat::Zero(2, 2);
  B.diagonal() << 3, 1;
  const LtiPlant p2(-Mat::Identity(2, 2), B, Vec::Zero(2));
  const auto c2 = lti_certificate(p2, 2 * Mat::Identity(2, 2), 1.0);
  CHECK(c2.gamma == Approx(2.0));
  CHECK(c2.zeta == Approx(6.0));

  // γ/ζ invariant under P → cP
  const RandomInstance inst = random_instance(6, 2, 9);
  const auto s = solve_lti_lyapunov(inst.plant.A());
  const auto ca = lti_certificate(inst.plant, s.P, s.tau);
  const auto cb = lti_certificate(inst.plant, 7.5 * s.P, s.tau);
  CHECK(ca.gamma / ca.zeta == Approx(cb.gamma / cb.zeta).epsilon(1e-10));
  CHECK(ca.gamma >= s.tau * min_eig(s.P) * (1 - 1e-12));

  CHECK_THROWS_AS(lti_certificate(plant, scalar(1), 2.0), DomainError);
}

TEST_CASE("converse-Lyapunov constants against a 50-digit evaluation", "[plant]") {
  const double Ks[] = {1.0, 1.5, 3.0, 10.0};
  const double taus[] = {0.3, 1.0, 4.0};
  const double lxs[] = {0.2, 1.7, 6.0};
  double worst = 0.0;
  for (double K : Ks)
    for (double tau : taus)
      for (double lx : lxs) {
        if (lx == tau) continue;
        const double lu = 0.7, l = 1.3;
        const auto c = converse_lyapunov_constants(K, tau, lx, lu, l);
        const auto o = mp_constants(K, tau, lx, lu, l);
        worst = std::max({worst, rel(c.T, o.T), rel(c.alpha, o.alpha), rel(c.beta, o.beta), rel(c.delta, o.delta),
                          rel(c.zeta_prime, o.zeta_prime), rel(c.zeta, o.zeta)});
        CHECK(c.gamma == 0.5);
      }
  CHECK(worst <= 1e-12);

  SECTION("K=1, τ=0.5 gives T = ln 2") {
    const auto c = converse_lyapunov_constants(1.0, 0.5, 1.0, 1.0, 1.0);
    CHECK(c.T == Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(c.alpha > 0);
    CHECK(c.beta > 0);
    CHECK(c.delta > 0);
    CHECK(c.zeta > 0);
  }

  SECTION("removable singularity at ℓx = τ") {
    const double K = 2.0, tau = 1.0;
    const auto c = converse_lyapunov_constants(K, tau, tau, 0.5, 2.0);
    const double T = std::log(2 * K * K) / (2 * tau);
    CHECK(c.delta == Approx(2 * K * T).epsilon(1e-14));
    CHECK(c.zeta_prime == Approx(K * (tau * 2.0 + 0.5) * T * T).epsilon(1e-14));
    // continuity from both sides
    for (double off : {1e-9, 1e-6, 1e-3}) {
      for (double sgn : {-1.0, 1.0}) {
        const double lx = tau * (1 + sgn * off);
        const auto n = converse_lyapunov_constants(K, tau, lx, 0.5, 2.0);
        const auto o = mp_constants(K, tau, lx, 0.5, 2.0);
        CHECK(rel(n.delta, o.delta) <= 1e-12);
        CHECK(rel(n.zeta_prime, o.zeta_prime) <= 1e-12);
      }
    }
  }

  SECTION("monotone in K and 1/τ") {
    for (double lx : {0.5, 2.0})
      for (double K = 1.0; K < 8.0; K += 0.5)
        for (double tau = 0.25; tau < 5.0; tau *= 1.5) {
          const auto c = converse_lyapunov_constants(K, tau, lx, 1.0, 1.0);
          const auto bigK = converse_lyapunov_constants(K + 0.5, tau, lx, 1.0, 1.0);
          const auto smallTau = converse_lyapunov_constants(K, tau / 1.5, lx, 1.0, 1.0);
          CHECK(bigK.beta >= c.beta);
          CHECK(bigK.zeta >= c.zeta);
          CHECK(smallTau.beta >= c.beta);
          CHECK(smallTau.zeta >= c.zeta);
        }
  }

  CHECK_THROWS_AS(converse_lyapunov_constants(0.5, 1, 1, 1, 1), DomainError);
  CHECK_THROWS_AS(converse_lyapunov_constants(1, 0, 1, 1, 1), DomainError);
}

TEST_CASE("decay estimation", "[plant]") {
  const Plant p1 = LtiPlant(scalar(-2), scalar(1), vscalar(0));
  const auto e1 = estimate_decay(p1, {vscalar(0)}, {vscalar(1)}, DecayProbe{1e-3, 8.0});
  CHECK(e1.tau == Approx(2.0).epsilon(0.02));
  CHECK(e1.K == Approx(1.0).epsilon(0.02));

  Mat A = Mat::Zero(2, 2);
  A.diagonal() << -1, -10;
  const Plant p2 = LtiPlant(A, Mat::Identity(2, 2), Vec::Zero(2));
  std::vector<Vec> x0s = {Vec::Ones(2), (Vec(2) << 1, -3).finished(), (Vec(2) << 0.2, 5).finished()};
  std::vector<Vec> us = {Vec::Zero(2), (Vec(2) << 1, 1).finished()};
  const DecayProbe probe{1e-3, 15.0};
  const auto e2 = estimate_decay(p2, us, x0s, probe);
  CHECK(e2.tau == Approx(1.0).epsilon(0.05));

  // envelope validity
  double worst = 0.0;
  for (const Vec& u : us) {
    const Vec xs = steady_state(p2, u);
    for (const Vec& x0 : x0s) {
      Vec x = x0;
      const VectorField f = [&](double, const Vec& s) { return dynamics(p2, s, u); };
      for (int k = 0; k < 15000; ++k) {
        const double t = k * probe.dt;
        worst = std::max(worst, (x - xs).norm() / (e2.K * (x0 - xs).norm() * std::exp(-e2.tau * t)));
        x = rk4_step(f, t, x, probe.dt);
      }
    }
  }
  CHECK(worst <= 1.0 + 1e-9);

  const Plant unstable = NonlinearPlant(
      1, 1, [](const Vec& x, const Vec&) { return Vec(0.1 * x); }, [](const Vec&) { return Vec::Zero(1); },
      nullptr, PlantConstants{});
  CHECK_THROWS_AS(estimate_decay(unstable, {vscalar(0)}, {vscalar(1)}, DecayProbe{1e-2, 5.0}), DomainError);
}

TEST_CASE("nonlinear plant steady state", "[plant]") {
  const Mat B = (Mat(2, 1) << 1.0, -0.5).finished();
  const NonlinearPlant np(
      2, 1,
      [B](const Vec& x, const Vec& u) {
        const Vec e = x - B * u;
        return Vec(-e - 0.3 * e.array().tanh().matrix());
      },
      [B](const Vec& u) { return Vec(B * u); }, [B](const Vec&) { return B; }, PlantConstants{1.0, 1.0, 1.3, 1.3, 1.2});
  const Plant p = np;
  for (double u : {-2.0, 0.0, 0.7, 5.0}) CHECK(steady_state_residual(p, vscalar(u)) <= 1e-9);
  const auto est = estimate_decay(p, {vscalar(0.5)}, {Vec::Ones(2), (Vec(2) << -3, 2).finished()}, DecayProbe{1e-3, 20.0});
  CHECK(est.tau >= 1.0 - 0.02);
  CHECK(est.tau <= 1.3 + 0.02);
}

TEST_CASE("Lyapunov function evaluation", "[plant]") {
  const Plant p = LtiPlant(scalar(-1), scalar(1), vscalar(0));
  const auto cert = lti_certificate(std::get<LtiPlant>(p), scalar(1), 0.5);
  const auto v = lyapunov_eval(cert, p, vscalar(2), vscalar(1));
  CHECK(v.W == Approx(0.5));
  CHECK(v.grad_x(0) == Approx(1.0));
  CHECK(v.grad_u(0) == Approx(-1.0));
  const auto z = lyapunov_eval(cert, p, vscalar(3), vscalar(3));
  CHECK(z.W == 0.0);
  CHECK(z.grad_x.norm() == 0.0);
  CHECK(z.grad_u.norm() == 0.0);

  const RandomInstance inst = random_instance(8, 3, 21);
  const Plant ip = inst.plant;
  const auto s = solve_lti_lyapunov(inst.plant.A());
  const auto c = lti_certificate(inst.plant, s.P, s.tau);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    Vec x(8), u(3);
    for (auto& a : x) a = 3 * N(rng);
    for (auto& a : u) a = 3 * N(rng);
    const double e2 = (x - steady_state(ip, u)).squaredNorm();
    const auto lv = lyapunov_eval(c, ip, x, u);
    REQUIRE(lv.W >= c.alpha * e2 * (1 - 1e-12));
    REQUIRE(lv.W <= c.beta * e2 * (1 + 1e-12));
    REQUIRE(lv.grad_u.norm() <= c.zeta * std::sqrt(e2) * (1 + 1e-12));
  }

  SECTION("dissipation along constant-input trajectories") {
    const double dt = 1e-3;
    Vec u(3);
    u << 0.3, -1.0, 2.0;
    Vec x = Vec::Constant(8, 2.0);
    const VectorField f = [&](double, const Vec& st) { return dynamics(ip, st, u); };
    std::vector<Vec> xs;
    for (int k = 0; k < 3000; ++k) {
      xs.push_back(x);
      x = rk4_step(f, k * dt, x, dt);
    }
    for (std::size_t k = 1; k + 1 < xs.size(); ++k) {
      const double Wdot = (lyapunov_eval(c, ip, xs[k + 1], u).W - lyapunov_eval(c, ip, xs[k - 1], u).W) / (2 * dt);
      const double e2 = (xs[k] - steady_state(ip, u)).squaredNorm();
      const double Wk = lyapunov_eval(c, ip, xs[k], u).W;
      REQUIRE(Wdot <= -c.gamma * e2 + 10 * dt * std::max(1.0, Wk));
    }
  }

  const Plant np = NonlinearPlant(
      1, 1, [](const Vec& x, const Vec& u) { return Vec(u - x); }, [](const Vec& u) { return u; }, nullptr,
      PlantConstants{});
  LyapunovCertificate bare = certificate_from(converse_lyapunov_constants(1, 1, 2, 1, 1));
  CHECK_THROWS_AS(lyapunov_eval(bare, np, vscalar(1), vscalar(0)), DomainError);
}
