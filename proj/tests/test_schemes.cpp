#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ohj/schemes.hpp"

using namespace ohj;

namespace {

ProblemSpec quadratic(double potential, double obstacle, double initial) {
  ProblemSpec p;
  p.hamiltonian.potential = TrigPoly::constant(potential);
  p.obstacle = TrigPoly::constant(obstacle);
  p.initial = TrigPoly::constant(initial);
  return p;
}

std::vector<double> smooth_random(const TorusGrid& g, std::mt19937_64& rng, double shift) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  const double a = u(rng), b = u(rng), c = u(rng);
  std::vector<double> v(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double x = g.coords(n)[0];
    v[n] = shift + a * std::cos(2 * M_PI * x) + b * std::sin(4 * M_PI * x) + c;
  }
  return v;
}

}  // namespace

TEST(Penalty, VanishesBelowZero) {
  for (double r : {-3.0, -1e-9, 0.0}) EXPECT_EQ(penalty(0.01, r), 0.0);
}

TEST(Penalty, HalfAtFourthRootOfDelta) {
  for (double d : {1e-1, 1e-3, 1e-6}) EXPECT_NEAR(penalty(d, std::pow(d, 0.25)), 0.5, 1e-14);
}

TEST(Penalty, ConstantTimesFourthRoot) { EXPECT_NEAR(penalty(1e-4, 3.0 * 0.1), 4.5, 1e-12); }

TEST(Penalty, RejectsNonPositiveDelta) { EXPECT_THROW(penalty(0.0, 1.0), InvalidArgument); }

TEST(NumericalHamiltonian, ConsistentWithH) {
  HamiltonianSpec h;
  h.potential = TrigPoly::cosine(0.5, 1);
  const Vec2 x{0.3, 0.0}, p{0.7, 0.0};
  EXPECT_DOUBLE_EQ(numerical_hamiltonian(h, x, p, p, {2.0, 0.0}), hamiltonian_eval(h, x, p).value);
}

TEST(NumericalHamiltonian, ArithmeticExample) {
  HamiltonianSpec h;
  EXPECT_DOUBLE_EQ(numerical_hamiltonian(h, {0.0, 0.0}, {0.0, 0.0}, {2.0, 0.0}, {2.0, 0.0}), -1.5);
}

TEST(NumericalHamiltonian, MonotoneInsideTheDissipationBox) {
  HamiltonianSpec h;
  h.potential = TrigPoly::cosine(0.3, 1, 1);
  h.drift[0] = TrigPoly::sine(0.2, 0, 1);
  const Vec2 lam{2.5, 2.5};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0), pd(-1.0, 1.0);
  const double e = 1e-4;
  for (int i = 0; i < 1000; ++i) {
    const Vec2 x{u(rng), u(rng)};
    const Vec2 pm{pd(rng), pd(rng)}, pp{pd(rng), pd(rng)};
    const double base = numerical_hamiltonian(h, x, pm, pp, lam);
    for (int d = 0; d < 2; ++d) {
      Vec2 a = pm, b = pp;
      a[d] += e;
      b[d] += e;
      EXPECT_GE(numerical_hamiltonian(h, x, a, pp, lam), base - 1e-14);
      EXPECT_LE(numerical_hamiltonian(h, x, pm, b, lam), base + 1e-14);
    }
  }
}

TEST(Cfl, ArithmeticExample) {
  SchemeParams sp;
  sp.lf_dissipation = {2.0, 0.0};
  sp.cfl_safety = 0.5;
  EXPECT_NEAR(cfl_dt(TorusGrid(1, 128), sp, 0.0), 0.5 / 256.0, 1e-15);
  EXPECT_NEAR(cfl_dt(TorusGrid(1, 128), sp, 0.0), 1.95e-3, 1e-5);
}

TEST(Cfl, DoublingResolutionHalvesStep) {
  SchemeParams sp;
  sp.lf_dissipation = {2.0, 0.0};
  EXPECT_NEAR(cfl_dt(TorusGrid(1, 64), sp, 0.0), 2.0 * cfl_dt(TorusGrid(1, 128), sp, 0.0), 1e-15);
}

TEST(Cfl, ParabolicScaling) {
  SchemeParams sp;
  sp.lf_dissipation = {1.0, 0.0};
  const double r = cfl_dt(TorusGrid(1, 1024), sp, 1.0) / cfl_dt(TorusGrid(1, 2048), sp, 1.0);
  EXPECT_NEAR(r, 4.0, 0.01);
}

TEST(Cfl, ScalesWithEpsilon) {
  SchemeParams sp;
  sp.lf_dissipation = {2.0, 0.0};
  const double full = cfl_dt(TorusGrid(1, 128), sp, 0.0);
  sp.epsilon = 0.1;
  EXPECT_NEAR(cfl_dt(TorusGrid(1, 128), sp, 0.0), 0.1 * full, 1e-15);
}

TEST(PenalizedStep, InactiveObstacleKeepsZero) {
  const auto p = quadratic(0.0, kInactiveObstacle, 0.0);
  SchemeParams sp;
  sp.penalty_delta = 0.01;
  Scheme s(p, TorusGrid(1, 64), sp);
  const std::vector<double> w(64, 0.0);
  const auto out = step_penalized(s, w, s.cfl_dt());
  for (double v : out.w_next) EXPECT_EQ(v, 0.0);
}

TEST(PenalizedStep, PullsTowardObstacleAtRateOneOverTwoEps) {
  const double delta = 1e-4, eps = 0.5;
  const auto p = quadratic(0.0, 0.0, 0.0);
  SchemeParams sp;
  sp.penalty_delta = delta;
  sp.epsilon = eps;
  Scheme s(p, TorusGrid(1, 32), sp);
  const double lift = std::pow(delta, 0.25);
  const std::vector<double> w(32, lift);
  for (double dt : {s.cfl_dt(), 1e-3 * s.cfl_dt()}) {
    const auto out = step_penalized(s, w, dt);
    const double move = lift - out.w_next[0];
    // The implicit penalty moves strictly toward psi, by at most the explicit
    // amount dt gamma(delta^{1/4}) / eps = dt / (2 eps), and tends to it.
    EXPECT_GT(move, 0.0);
    EXPECT_LE(move, dt / (2 * eps) * (1 + 1e-12));
    if (dt < s.cfl_dt()) {
      EXPECT_NEAR(move / (dt / (2 * eps)), 1.0, 1e-3);
    }
  }
}

TEST(ProjectedStep, ExactLinearDecay) {
  const auto p = quadratic(1.0, 0.0, 0.0);
  Scheme s(p, TorusGrid(1, 64), {});
  const double dt = s.cfl_dt();
  for (double v : step_projected(s, std::vector<double>(64, 0.0), dt)) EXPECT_NEAR(v, -dt, 1e-15);
}

TEST(ProjectedStep, ProjectionActive) {
  const auto p = quadratic(-1.0, 0.0, -1.0);
  Scheme s(p, TorusGrid(1, 64), {});
  for (double v : step_projected(s, std::vector<double>(64, 0.0), s.cfl_dt())) EXPECT_EQ(v, 0.0);
}

TEST(Steps, PreserveOrder) {
  const auto p = catalog_problem("obstacle-cos-1d");
  const TorusGrid g(1, 64);
  // The random fields are steeper than the initial data, so pin lambda.
  SchemeParams base;
  base.lf_dissipation = {3.0, 0.0};
  SchemeParams sp = base;
  sp.penalty_delta = 0.01;
  sp.epsilon = 0.2;
  Scheme pen(p, g, sp);
  Scheme proj(p, g, base);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> gap(0.0, 0.05);
  for (int i = 0; i < 100; ++i) {
    auto w = smooth_random(g, rng, -0.6);
    auto v = w;
    for (auto& x : v) x += gap(rng);
    const auto a = step_penalized(pen, w, pen.cfl_dt()).w_next;
    const auto b = step_penalized(pen, v, pen.cfl_dt()).w_next;
    const auto c = step_projected(proj, w, proj.cfl_dt());
    const auto d = step_projected(proj, v, proj.cfl_dt());
    for (std::size_t n = 0; n < g.size(); ++n) {
      EXPECT_LE(a[n], b[n] + 1e-14);
      EXPECT_LE(c[n], d[n] + 1e-14);
    }
  }
}

TEST(Steps, RejectOversizedTimeStep) {
  const auto p = catalog_problem("obstacle-cos-1d");
  Scheme s(p, TorusGrid(1, 64), {});
  EXPECT_THROW(step_projected(s, std::vector<double>(64, -1.0), 2.0 * s.cfl_dt()), SolverError);
}

TEST(Steps, DetectLostMonotonicity) {
  const auto p = quadratic(0.0, kInactiveObstacle, 0.0);
  SchemeParams sp;
  sp.lf_dissipation = {0.5, 0.0};
  Scheme s(p, TorusGrid(1, 64), sp);
  std::vector<double> w(64);
  for (std::size_t n = 0; n < 64; ++n) w[n] = std::sin(2 * M_PI * n / 64.0);  // |Dw| up to 2 pi
  std::vector<double> out(64);
  EXPECT_THROW(s.explicit_rate(w, out), SolverError);
}

TEST(LinearizedStep, TransposeIsExact) {
  const auto p = catalog_problem("degenerate-diag-2d");
  const TorusGrid g(2, 16);
  SchemeParams sp;
  sp.penalty_delta = 0.01;
  sp.epsilon = 0.2;
  Scheme s(p, g, sp);
  std::vector<double> w(s.initial().begin(), s.initial().end());
  for (auto& x : w) x += 1.0;  // above psi so the penalty is active
  const auto step = step_penalized(s, w, s.cfl_dt());
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<double> f(g.size()), q(g.size());
  for (int trial = 0; trial < 10; ++trial) {
    for (auto& x : f) x = nd(rng);
    for (auto& x : q) x = nd(rng);
    const auto jf = step.linearized.apply(f);
    const auto jtq = step.linearized.apply_transpose(q);
    double lhs = 0, rhs = 0, scale = 0;
    for (std::size_t n = 0; n < g.size(); ++n) {
      lhs += jf[n] * q[n];
      rhs += f[n] * jtq[n];
      scale += std::abs(jf[n] * q[n]);
    }
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * scale);
  }
}
