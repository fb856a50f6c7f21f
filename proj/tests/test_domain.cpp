#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ohj/problem.hpp"

using namespace ohj;

TEST(Grid, OneDimensional) {
  TorusGrid g(1, 8);
  EXPECT_EQ(g.size(), 8u);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.125);
}

TEST(Grid, TwoDimensional) {
  TorusGrid g(2, 16);
  EXPECT_EQ(g.size(), 256u);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.0625);
}

TEST(Grid, RejectsUnsupportedDimension) {
  try {
    TorusGrid g(3, 16);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported dimension"), std::string::npos);
  }
}

TEST(Grid, RejectsCoarseResolution) { EXPECT_THROW(TorusGrid(1, 4), InvalidArgument); }

TEST(Grid, PeriodicNeighbours) {
  TorusGrid g(2, 8);
  EXPECT_EQ(g.neighbor(g.index(7, 3), 0, 1), g.index(0, 3));
  EXPECT_EQ(g.neighbor(g.index(2, 0), 1, -1), g.index(2, 7));
}

TEST(TrigPoly, RoundTripsThroughText) {
  const auto p = TrigPoly(-1.0) + TrigPoly::cosine(0.2, 1) + TrigPoly::sine(0.3, 2, -1);
  const auto q = TrigPoly::parse(p.to_string());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec2 x{u(rng), u(rng)};
    EXPECT_DOUBLE_EQ(p.value(x), q.value(x));
  }
}

TEST(TrigPoly, GradientMatchesFiniteDifferences) {
  const auto p = TrigPoly::cosine(0.7, 1, 2) + TrigPoly::sine(-0.4, 3, 0);
  const double e = 1e-6;
  for (const Vec2 x : {Vec2{0.1, 0.3}, Vec2{0.77, 0.52}}) {
    const Vec2 g = p.gradient(x);
    EXPECT_NEAR(g[0], (p.value({x[0] + e, x[1]}) - p.value({x[0] - e, x[1]})) / (2 * e), 1e-6);
    EXPECT_NEAR(g[1], (p.value({x[0], x[1] + e}) - p.value({x[0], x[1] - e})) / (2 * e), 1e-6);
  }
}

TEST(Hamiltonian, ZeroCase) {
  HamiltonianSpec h;
  const auto v = hamiltonian_eval(h, {0.3, 0.0}, {0.0, 0.0});
  EXPECT_EQ(v.value, 0.0);
  EXPECT_EQ(v.grad_p[0], 0.0);
  EXPECT_EQ(v.grad_x[0], 0.0);
}

TEST(Hamiltonian, CosinePotentialClosedForm) {
  HamiltonianSpec h;
  h.potential = TrigPoly::cosine(1.0, 1);
  const auto v = hamiltonian_eval(h, {0.0, 0.0}, {2.0, 0.0});
  EXPECT_DOUBLE_EQ(v.value, 3.0);
  EXPECT_DOUBLE_EQ(v.grad_p[0], 2.0);
  EXPECT_NEAR(v.grad_x[0], 0.0, 1e-15);
}

TEST(Hamiltonian, DerivativesMatchFiniteDifferences) {
  HamiltonianSpec h;
  h.potential = TrigPoly(-0.4) + TrigPoly::cosine(0.3, 1, 1);
  h.drift[0] = TrigPoly::sine(0.2, 0, 1);
  h.drift[1] = TrigPoly::cosine(0.1, 1, 0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0), pd(-2.0, 2.0);
  const double e = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const Vec2 x{u(rng), u(rng)};
    const Vec2 p{pd(rng), pd(rng)};
    const auto v = hamiltonian_eval(h, x, p);
    for (int d = 0; d < 2; ++d) {
      Vec2 pp = p, pm = p, xp = x, xm = x;
      pp[d] += e;
      pm[d] -= e;
      xp[d] += e;
      xm[d] -= e;
      const double fd_p = (hamiltonian_eval(h, x, pp).value - hamiltonian_eval(h, x, pm).value) / (2 * e);
      const double fd_x = (hamiltonian_eval(h, xp, p).value - hamiltonian_eval(h, xm, p).value) / (2 * e);
      EXPECT_NEAR(v.grad_p[d], fd_p, 1e-6);
      EXPECT_NEAR(v.grad_x[d], fd_x, 1e-6);
    }
  }
}

TEST(Lagrangian, ClosedForms) {
  HamiltonianSpec h;
  EXPECT_EQ(lagrangian_eval(h, {0.2, 0.0}, {0.0, 0.0}), 0.0);
  h.potential = TrigPoly::constant(-1.0);
  EXPECT_DOUBLE_EQ(lagrangian_eval(h, {0.2, 0.0}, {0.0, 0.0}), 1.0);
}

TEST(Lagrangian, IsTheLegendreTransform) {
  HamiltonianSpec h;
  h.potential = TrigPoly(0.3) + TrigPoly::cosine(0.5, 1, 0);
  h.drift[0] = TrigPoly::sine(0.4, 1, 0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0), qd(-1.5, 1.5), pd(-4.0, 4.0);
  for (int i = 0; i < 20; ++i) {
    const Vec2 x{u(rng), u(rng)};
    const Vec2 q{qd(rng), qd(rng)};
    const double L = lagrangian_eval(h, x, q);
    for (int k = 0; k < 1000; ++k) {
      const Vec2 p{pd(rng), pd(rng)};
      EXPECT_GE(L, dot(p, q) - hamiltonian_eval(h, x, p).value - 1e-12);
    }
    const Vec2 pstar{q[0] + h.drift[0].value(x), q[1] + h.drift[1].value(x)};
    EXPECT_NEAR(L, dot(pstar, q) - hamiltonian_eval(h, x, pstar).value, 1e-12);
  }
}

TEST(Validation, CatalogCasesPass) {
  for (const auto& k : catalog_keys()) {
    const auto p = catalog_problem(k);
    const auto rep = validate_problem(p, TorusGrid(p.dim, 32));
    EXPECT_TRUE(rep.ok()) << k << "\n" << rep.summary();
  }
}

TEST(Validation, IncompatibleInitialDataFlaggedEverywhere) {
  auto p = catalog_problem("obstacle-cos-1d");
  p.initial = p.obstacle + 0.1;
  const TorusGrid g(1, 32);
  const auto rep = validate_problem(p, g);
  EXPECT_FALSE(rep.ok());
  const auto& c = rep.check("H4-compatibility");
  EXPECT_FALSE(c.passed);
  EXPECT_EQ(c.nodes.size(), g.size());
}

TEST(Validation, DegenerateDiffusionIsPsd) {
  ProblemSpec p;
  // sin^2(2 pi x) vanishes at x = 0 and x = 1/2, both grid nodes.
  p.diffusion = DiffusionSpec::diagonal(TrigPoly(0.5) + TrigPoly::cosine(-0.5, 2));
  p.obstacle = TrigPoly::constant(0.0);
  p.initial = TrigPoly::constant(-1.0);
  const auto rep = validate_problem(p, TorusGrid(1, 64));
  EXPECT_TRUE(rep.check("H3-psd").passed);
}

TEST(Validation, NegativeDiffusionRejected) {
  ProblemSpec p;
  p.diffusion = DiffusionSpec::diagonal(TrigPoly::cosine(0.1, 1));
  p.obstacle = TrigPoly::constant(0.0);
  p.initial = TrigPoly::constant(-1.0);
  EXPECT_FALSE(validate_problem(p, TorusGrid(1, 32)).check("H3-psd").passed);
}

TEST(Catalog, UnknownKeyThrows) { EXPECT_THROW(catalog_problem("nope"), InvalidArgument); }
