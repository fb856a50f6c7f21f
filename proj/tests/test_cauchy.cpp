#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "ohj/cauchy.hpp"

using namespace ohj;

TEST(SolveObstacle, ExactSolutionUEqualsMinusT) {
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  const auto traj = solve_obstacle(catalog_problem("supercritical-1d"), 2.0, TorusGrid(1, 128), {}, opt);
  EXPECT_NEAR(traj.times.back(), 2.0, 1e-12);
  for (double v : traj.final_field().values) EXPECT_NEAR(v, -2.0, 1e-3);
}

TEST(SolveObstacle, ConvergesToObstacleInSubcriticalRegime) {
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  const auto traj = solve_obstacle(catalog_problem("subcritical-obstacle-1d"), 10.0, TorusGrid(1, 128), {}, opt);
  EXPECT_LE(max_abs(traj.final_field().view()), 5e-3);
}

TEST(SolveObstacle, ComparisonPrinciple) {
  const auto p = catalog_problem("obstacle-cos-1d");
  const TorusGrid g(1, 128);
  SampledProblem s(p, g);
  std::vector<double> lo(s.initial), hi(s.initial);
  for (std::size_t n = 0; n < g.size(); ++n) {
    lo[n] -= 0.3 + 0.1 * std::cos(2 * M_PI * g.coords(n)[0]);
    hi[n] = std::min(hi[n] + 0.2, s.obstacle[n]);
  }
  // Same dissipation for both runs so the discrete operators coincide.
  SchemeParams sp;
  sp.lf_dissipation = resolve_lf_dissipation(p, g);
  SolveOptions a, b;
  a.initial_override = lo;
  b.initial_override = hi;
  a.snapshot_count = b.snapshot_count = 20;
  const auto ta = solve_obstacle(p, 1.0, g, sp, a);
  const auto tb = solve_obstacle(p, 1.0, g, sp, b);
  ASSERT_EQ(ta.snapshots.size(), tb.snapshots.size());
  for (std::size_t k = 0; k < ta.snapshots.size(); ++k) {
    for (std::size_t n = 0; n < g.size(); ++n) EXPECT_LE(ta.snapshots[k].values[n], tb.snapshots[k].values[n] + 1e-14);
  }
}

TEST(SolveObstacle, SnapshotCountIsExact) {
  SolveOptions opt;
  opt.snapshot_count = 10;
  const auto traj = solve_obstacle(catalog_problem("obstacle-cos-1d"), 1.0, TorusGrid(1, 64), {}, opt);
  ASSERT_EQ(traj.times.size(), 11u);
  for (std::size_t k = 0; k <= 10; ++k) EXPECT_NEAR(traj.times[k], 0.1 * double(k), 1e-12);
}

TEST(SolveObstacle, RejectsInvalidProblem) {
  auto p = catalog_problem("obstacle-cos-1d");
  p.initial = p.obstacle + 0.1;
  EXPECT_THROW(solve_obstacle(p, 1.0, TorusGrid(1, 64)), InvalidArgument);
}

TEST(SolvePenalized, InactiveObstacleMatchesUnconstrainedSolve) {
  const auto p = without_obstacle(catalog_problem("eikonal-visc-1d"));
  const TorusGrid g(1, 128);
  const double eps = 0.2, delta = 0.04;
  SchemeParams sp;
  sp.lf_dissipation = resolve_lf_dissipation(p, g);
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  const auto w = solve_penalized(p, eps, delta, g, sp, opt);
  SchemeParams ref = sp;
  ref.epsilon = eps;
  ref.artificial_viscosity = delta * delta;
  SolveOptions ropt;
  ropt.store = StorePolicy::endpoints;
  ropt.steps = w.steps;
  const auto u = solve_obstacle(p, 1.0, g, ref, ropt);
  EXPECT_LE(max_abs_diff(w.final_field().view(), u.final_field().view()), 1e-10);
}

TEST(SolvePenalized, StepLogReplayIsBitwise) {
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  opt.keep_step_log = true;
  const auto w = solve_penalized(catalog_problem("obstacle-cos-1d"), 0.2, 0.04, TorusGrid(1, 64), {}, opt);
  ASSERT_TRUE(w.step_log.has_value());
  EXPECT_EQ(w.step_log->replay(), w.final_field().values);
}

TEST(SolvePenalized, RejectsBadParameters) {
  const auto p = catalog_problem("obstacle-cos-1d");
  EXPECT_THROW(solve_penalized(p, 0.0, 0.01, TorusGrid(1, 64)), InvalidArgument);
  EXPECT_THROW(solve_penalized(p, 0.2, 1.5, TorusGrid(1, 64)), InvalidArgument);
}

TEST(PenaltyBound, HoldsOnObstacleCases) {
  for (const char* key : {"obstacle-cos-1d", "subcritical-obstacle-1d"}) {
    for (double eps : {0.4, 0.1}) {
      const auto c = penalty_bound_check(catalog_problem(key), eps, eps * eps, TorusGrid(1, 128));
      EXPECT_EQ(c.violations, 0u) << key << " eps=" << eps;
      EXPECT_LE(c.max_excess, c.bound * (1 + 1e-12));
      EXPECT_GT(c.constant, 0.0);
    }
  }
}

TEST(PenaltyBound, UniformGradientBound) {
  std::vector<double> lip;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    lip.push_back(penalty_bound_check(catalog_problem("obstacle-cos-1d"), eps, eps * eps, TorusGrid(1, 256)).lipschitz_final);
  }
  const auto [lo, hi] = std::minmax_element(lip.begin(), lip.end());
  EXPECT_LE(*hi / *lo, 2.0);
}

TEST(StabilityGap, IdenticalDynamicsWithoutObstacleOrDeltaEffects) {
  GapOptions go;
  go.viscosity = 0.0;
  const auto m = stability_gap(without_obstacle(catalog_problem("eikonal-cos-1d")), 0.2, TorusGrid(1, 128), {}, go);
  EXPECT_LE(m.gap, 1e-6);
}

TEST(StabilityGap, DecreasesWithEpsilon) {
  const auto p = catalog_problem("subcritical-obstacle-1d");
  double prev = INFINITY;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) {
    const double gap = stability_gap(p, eps, TorusGrid(1, 256)).gap;
    EXPECT_LT(gap, prev) << "eps=" << eps;
    prev = gap;
  }
}

TEST(DeltaSensitivity, BoundedByShapeAndGrowsAsDeltaShrinks) {
  const auto p = catalog_problem("obstacle-cos-1d");
  double prev = 0.0;
  for (double delta : {1e-2, 1e-3, 1e-4}) {
    const auto m = delta_sensitivity(p, 0.2, delta, TorusGrid(1, 64));
    EXPECT_LE(m.value, 10.0 * m.bound_shape);
    EXPECT_GE(m.value, prev) << "delta=" << delta;
    prev = m.value;
  }
}
