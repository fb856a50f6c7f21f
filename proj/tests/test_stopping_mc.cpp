#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "ohj/stopping_mc.hpp"

using namespace ohj;

TEST(DiffusionRoot, SquaresBackToA) {
  for (const char* key : {"obstacle-cos-1d", "eikonal-visc-1d", "degenerate-diag-2d"}) {
    const auto p = catalog_problem(key);
    EXPECT_LE(DiffusionRoot{p.diffusion}.max_defect(TorusGrid(p.dim, 64)), 1e-15) << key;
  }
}

TEST(MonteCarlo, ImmediateStopReturnsObstacle) {
  const auto p = catalog_problem("subcritical-obstacle-1d");
  const auto e = mc_value_upper(p, {0.3, 0.0}, 1.0, zero_policy(), stop_immediately(), 100, 1);
  EXPECT_EQ(e.mean, 0.0);
  EXPECT_EQ(e.stddev, 0.0);
  EXPECT_EQ(e.mean_stop_time, 0.0);
}

TEST(MonteCarlo, NeverStopAccruesRunningCost) {
  // L(x,0) = -V = 1 along a frozen path, then u0 = -1 at the horizon.
  const auto p = catalog_problem("subcritical-obstacle-1d");
  for (double t : {0.5, 2.0}) {
    const auto e = mc_value_upper(p, {0.3, 0.0}, t, zero_policy(), never_stop(), 100, 1);
    EXPECT_NEAR(e.mean, t - 1.0, 1e-10);
    EXPECT_NEAR(e.stddev, 0.0, 1e-12);
  }
}

TEST(MonteCarlo, SeededAndJobIndependent) {
  const auto p = catalog_problem("obstacle-cos-1d");
  McOptions one, four;
  four.jobs = 4;
  const auto a = mc_value_upper(p, {0.4, 0.0}, 0.5, random_policy(1.0), never_stop(), 4000, 99, one);
  const auto b = mc_value_upper(p, {0.4, 0.0}, 0.5, random_policy(1.0), never_stop(), 4000, 99, four);
  const auto c = mc_value_upper(p, {0.4, 0.0}, 0.5, random_policy(1.0), never_stop(), 4000, 100, one);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stddev, b.stddev);
  EXPECT_NE(a.mean, c.mean);
}

TEST(MonteCarlo, ConfidenceIntervalShrinksAsInverseSqrtM) {
  const auto p = catalog_problem("obstacle-cos-1d");
  McOptions opt;
  opt.jobs = 4;
  std::vector<double> hw;
  for (std::size_t M : {1000u, 10000u, 100000u}) {
    hw.push_back(mc_value_upper(p, {0.4, 0.0}, 0.2, random_policy(1.0), never_stop(), M, 7, opt).half_width);
  }
  for (std::size_t i = 0; i + 1 < hw.size(); ++i) EXPECT_NEAR(hw[i] / hw[i + 1], std::sqrt(10.0), 0.2 * std::sqrt(10.0));
}

TEST(MonteCarlo, RejectsBadArguments) {
  const auto p = catalog_problem("obstacle-cos-1d");
  EXPECT_THROW(mc_value_upper(p, {0.4, 0.0}, 1.0, zero_policy(), never_stop(), 50, 1), InvalidArgument);
  McOptions coarse;
  coarse.dt = 0.01;
  EXPECT_THROW(mc_value_upper(p, {0.4, 0.0}, 1.0, zero_policy(), never_stop(), 1000, 1, coarse), InvalidArgument);
}

TEST(MonteCarlo, HeuristicPoliciesDominatePdeValue) {
  const auto p = catalog_problem("obstacle-cos-1d");
  const TorusGrid g(1, 512);
  const PdeValueTable table(p, 1.0, g, {}, 200);
  McOptions opt;
  opt.jobs = 4;
  for (double x : {0.15, 0.6}) {
    const double u = table.value({x, 0.0}, 1.0);
    for (const auto& pol : {zero_policy(), random_policy(1.0)}) {
      const auto e = mc_value_upper(p, {x, 0.0}, 1.0, pol, never_stop(), 2000, 3, opt);
      EXPECT_LE(u, e.mean + e.half_width + 1e-2) << pol.name << " x=" << x;
    }
  }
}

TEST(PdeValueTable, MatchesSolverAtNodes) {
  const auto p = catalog_problem("obstacle-cos-1d");
  const TorusGrid g(1, 64);
  const PdeValueTable table(p, 0.5, g, {}, 10);
  SampledProblem s(p, g);
  for (std::size_t n = 0; n < g.size(); n += 7) {
    EXPECT_NEAR(table.value(g.coords(n), 0.0), s.initial[n], 1e-14);
    EXPECT_NEAR(table.value(g.coords(n), 0.5), table.final_values()[n], 1e-14);
  }
}
