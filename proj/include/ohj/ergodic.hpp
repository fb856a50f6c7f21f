#ifndef OHJ_ERGODIC_HPP_
#define OHJ_ERGODIC_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "ohj/cauchy.hpp"
#include "ohj/error.hpp"
#include "ohj/grid.hpp"
#include "ohj/problem.hpp"
#include "ohj/report.hpp"
#include "ohj/schemes.hpp"

namespace ohj {

struct StationaryOptions {
  double tolerance = 1e-9;
  int max_iterations = 200;
  //! Initial pseudo-time step (0 = none, plain Newton). The step grows as
  //! the residual falls (switched evolution relaxation).
  double initial_pseudo_dt = 0.0;
};

struct StationaryStats {
  int iterations = 0;
  double residual = 0.0;
  //! max |D_pH| / lambda at the solution; above 1 the discrete operator is
  //! no longer monotone.
  double advection_ratio = 0.0;
};

namespace detail {

//! Residual  -F(w) + alpha w + gamma^delta(w - psi) + mu - rhs  of a
//! stationary problem built on the scheme's spatial operator F.
//! In bordered mode x[0] holds mu and w[0] = 0.
struct StationarySystem {
  const Scheme* scheme = nullptr;
  double alpha = 0.0;
  bool penalized = false;
  bool bordered = false;
  double rhs = 0.0;

  std::size_t size() const { return scheme->grid().size(); }

  void unpack(std::span<const double> x, std::vector<double>& w, double& mu) const {
    w.assign(x.begin(), x.end());
    mu = 0.0;
    if (bordered) {
      mu = x[0];
      w[0] = 0.0;
    }
  }

  //! Fills the residual and, if @a jac is given, the Jacobian triplets.
  double evaluate(std::span<const double> x, std::vector<double>& res,
                  std::vector<Eigen::Triplet<double>>* jac, double* adv_ratio = nullptr) const {
    const Scheme& s = *scheme;
    const TorusGrid& g = s.grid();
    const SampledProblem& data = s.sampled();
    const double h = g.spacing();
    const double inv_h = 1.0 / h;
    const double nu = s.params().artificial_viscosity;
    const double delta = s.params().penalty_delta;
    std::vector<double> w;
    double mu = 0.0;
    unpack(x, w, mu);
    res.assign(size(), 0.0);
    double ratio = 0.0;
    double worst = 0.0;
    for (std::size_t n = 0; n < size(); ++n) {
      double f = -data.potential[n];
      double diag = 0.0;
      for (int d = 0; d < g.dim(); ++d) {
        const std::size_t np = g.neighbor(n, d, 1);
        const std::size_t nm = g.neighbor(n, d, -1);
        const double second = w[np] - 2.0 * w[n] + w[nm];
        const double beta = 0.5 * (w[np] - w[nm]) * inv_h - data.drift[d][n];
        const double lam = s.params().lf_dissipation[d];
        const double diff = (data.diffusion[d][n] + nu) * inv_h * inv_h;
        f += diff * second + 0.5 * lam * second * inv_h - 0.5 * beta * beta;
        ratio = std::max(ratio, std::abs(beta) / lam);
        if (jac) {
          const double up = diff + 0.5 * (lam - beta) * inv_h;
          const double down = diff + 0.5 * (lam + beta) * inv_h;
          // d(-F)/dw
          if (!bordered || np != 0) jac->emplace_back(int(n), int(np), -up);
          if (!bordered || nm != 0) jac->emplace_back(int(n), int(nm), -down);
          diag += up + down;
        }
      }
      double r = -f + alpha * w[n] + mu - rhs;
      double dpen = 0.0;
      if (penalized) {
        r += penalty(delta, w[n] - data.obstacle[n]);
        dpen = penalty_prime(delta, w[n] - data.obstacle[n]);
      }
      res[n] = r;
      worst = std::max(worst, std::abs(r));
      if (jac) {
        if (bordered) {
          jac->emplace_back(int(n), 0, 1.0);
          if (n != 0) jac->emplace_back(int(n), int(n), diag + alpha + dpen);
        } else {
          jac->emplace_back(int(n), int(n), diag + alpha + dpen);
        }
      }
    }
    if (adv_ratio) *adv_ratio = ratio;
    return worst;
  }
};

//! Newton's method with pseudo-time regularization on a stationary system.
inline std::vector<double> solve_stationary(const StationarySystem& sys, std::vector<double> x,
                                            const StationaryOptions& opt, StationaryStats& stats) {
  using SpMat = Eigen::SparseMatrix<double>;
  const std::size_t n = sys.size();
  std::vector<double> res, trial_res, trial(n);
  std::vector<Eigen::Triplet<double>> trip;
  double r = sys.evaluate(x, res, nullptr);
  if (!std::isfinite(r)) throw SolverError("stationary solve: non-finite initial residual");
  double shift = opt.initial_pseudo_dt > 0.0 ? 1.0 / opt.initial_pseudo_dt : 0.0;
  int rejections = 0;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  SpMat J{Eigen::Index(n), Eigen::Index(n)};
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(n));
  int it = 0;
  for (; it < opt.max_iterations && r > opt.tolerance; ++it) {
    trip.clear();
    sys.evaluate(x, res, &trip);
    for (std::size_t i = sys.bordered ? 1 : 0; i < n; ++i) trip.emplace_back(int(i), int(i), shift);
    J.setFromTriplets(trip.begin(), trip.end());
    if (!analyzed) {
      lu.analyzePattern(J);
      analyzed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success) {
      shift = std::max(10.0 * shift, 1.0);
      if (++rejections > 40) throw SolverError("stationary solve: singular Jacobian");
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) rhs[int(i)] = -res[i];
    const Eigen::VectorXd dx = lu.solve(rhs);
    for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + dx[int(i)];
    const double rt = sys.evaluate(trial, trial_res, nullptr);
    // Newton on these convex, monotone systems converges from a
    // supersolution but not monotonically in the max norm, so moderate
    // growth is accepted; blow-up triggers the pseudo-time fallback.
    if (std::isfinite(rt) && rt < 10.0 * r) {
      shift = (rt <= 1e-3 * r || shift < 1e-12) ? 0.0 : shift * std::min(1.0, rt / r);
      x.swap(trial);
      r = rt;
      rejections = 0;
    } else {
      shift = std::max(10.0 * shift, 1.0);
      if (++rejections > 40) {
        throw SolverError("stationary solve stagnated at residual " + std::to_string(r) + " (tolerance " +
                          std::to_string(opt.tolerance) + ")");
      }
    }
  }
  if (!(r <= opt.tolerance)) {
    throw SolverError("stationary solve stagnated at residual " + std::to_string(r) + " after " +
                      std::to_string(it) + " iterations (tolerance " + std::to_string(opt.tolerance) + ")");
  }
  stats.iterations = it;
  stats.residual = r;
  sys.evaluate(x, res, nullptr, &stats.advection_ratio);
  return x;
}

inline SchemeParams with_dissipation(const ProblemSpec& problem, const TorusGrid& grid, SchemeParams params) {
  if (params.lf_dissipation[0] <= 0.0 || (grid.dim() == 2 && params.lf_dissipation[1] <= 0.0)) {
    params.lf_dissipation = resolve_lf_dissipation(problem, grid);
  }
  return params;
}

inline ScalarField normalized(const TorusGrid& g, std::vector<double> v) {
  const double v0 = v[0];
  for (double& x : v) x -= v0;
  v[0] = 0.0;
  return ScalarField(g, std::move(v));
}

}  // namespace detail

struct DiscountedResult {
  //! -alpha v(x_ref), x_ref = node 0.
  double c_estimate = 0.0;
  //! v - v(0).
  ScalarField corrector;
  std::vector<double> raw;
  StationaryStats stats;
};

//! Solves alpha v - tr(A D^2 v) + H(x,Dv) = delta Lap v and returns the
//! estimate -alpha v(0) of the ergodic constant.
inline DiscountedResult ergodic_constant_discounted(const ProblemSpec& problem, double alpha, double delta,
                                                    const TorusGrid& grid, SchemeParams params = {},
                                                    const StationaryOptions& opt = {}) {
  if (!(alpha > 0.0)) throw InvalidArgument("discount alpha must be positive");
  if (!(delta > 0.0)) throw InvalidArgument("viscosity delta must be positive");
  detail::require_valid(problem, grid);
  params = detail::with_dissipation(problem, grid, params);
  params.artificial_viscosity = delta;
  params.epsilon = 1.0;
  Scheme scheme(without_obstacle(problem), grid, params);
  detail::StationarySystem sys{&scheme, alpha, false, false, 0.0};
  // Constant start -min V / alpha is a subsolution.
  double vmin = scheme.sampled().potential[0];
  for (double v : scheme.sampled().potential) vmin = std::min(vmin, v);
  DiscountedResult out;
  out.raw = detail::solve_stationary(sys, std::vector<double>(grid.size(), -vmin / alpha), opt, out.stats);
  out.c_estimate = -alpha * out.raw[0];
  out.corrector = detail::normalized(grid, out.raw);
  return out;
}

struct ExtrapolatedEstimate {
  double c_estimate = 0.0;
  std::vector<double> alphas;
  std::vector<double> raw_estimates;
  //! Degree of the fitted polynomial in alpha.
  int degree = 0;
};

//! Discounted estimates over a schedule (delta = alpha^2), extrapolated to
//! alpha = 0 by a least-squares polynomial of degree min(2, m - 1)
//! (Richardson extrapolation for three halving steps).
inline ExtrapolatedEstimate ergodic_constant_extrapolated(const ProblemSpec& problem, std::vector<double> alphas,
                                                          const TorusGrid& grid, SchemeParams params = {}) {
  if (alphas.size() < 2) throw InvalidArgument("extrapolation needs at least two discount values");
  params = detail::with_dissipation(problem, grid, params);
  ExtrapolatedEstimate e;
  e.alphas = alphas;
  for (double a : alphas) e.raw_estimates.push_back(ergodic_constant_discounted(problem, a, a * a, grid, params).c_estimate);
  e.degree = int(std::min<std::size_t>(2, alphas.size() - 1));
  const auto m = Eigen::Index(alphas.size());
  Eigen::MatrixXd X(m, e.degree + 1);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (int j = 0; j <= e.degree; ++j) X(i, j) = std::pow(alphas[std::size_t(i)], j);
    y[i] = e.raw_estimates[std::size_t(i)];
  }
  e.c_estimate = X.colPivHouseholderQr().solve(y)[0];
  return e;
}

struct ErgodicResult {
  //! c (for cell problems) or c^eps (approximate obstacle problems).
  double c_estimate = 0.0;
  //! Unclipped c_H^eps for approximate problems, otherwise equal to c_estimate.
  double c_unclipped = 0.0;
  //! Solution profile normalized to zero at node 0.
  ScalarField corrector;
  //! The solution itself. For obstacle problems V is pinned by psi and
  //! cannot be shifted, so it is kept alongside the normalized profile.
  ScalarField solution;
  double residual = 0.0;
  double tolerance = 0.0;
  int iterations = 0;
  double advection_ratio = 0.0;
  std::string schedule;
};

//! Direct solve of -tr(A D^2 v) + H(x,Dv) = nu Lap v + c with v(0) = 0,
//! unknowns (v, c), by a bordered Newton iteration.
inline ErgodicResult ergodic_constant_direct(const ProblemSpec& problem, double viscosity, const TorusGrid& grid,
                                             SchemeParams params = {}, const StationaryOptions& opt = {}) {
  if (!(viscosity >= 0.0)) throw InvalidArgument("viscosity must be non-negative");
  detail::require_valid(problem, grid);
  params = detail::with_dissipation(problem, grid, params);
  params.artificial_viscosity = viscosity;
  params.epsilon = 1.0;
  Scheme scheme(without_obstacle(problem), grid, params);
  detail::StationarySystem sys{&scheme, 0.0, false, true, 0.0};
  StationaryStats st;
  std::vector<double> x(grid.size(), 0.0);
  x = detail::solve_stationary(sys, std::move(x), opt, st);
  ErgodicResult r;
  r.c_estimate = r.c_unclipped = -x[0];
  x[0] = 0.0;
  r.corrector = ScalarField(grid, x);
  r.solution = r.corrector;
  r.residual = st.residual;
  r.tolerance = opt.tolerance;
  r.iterations = st.iterations;
  r.advection_ratio = st.advection_ratio;
  r.schedule = "direct bordered Newton, viscosity " + std::to_string(viscosity);
  return r;
}

//! -(u(x_ref,T) - u(x_ref,T/2)) / (T/2) from the unconstrained Cauchy problem.
inline double ergodic_constant_longtime(const ProblemSpec& problem_without_obstacle, double T, const TorusGrid& grid,
                                        SchemeParams params = {}) {
  if (!problem_without_obstacle.obstacle_inactive()) {
    throw InvalidArgument("long-time estimator requires the obstacle to be disabled");
  }
  params.epsilon = 1.0;
  SolveOptions opt;
  opt.snapshot_count = 2;
  auto traj = solve_obstacle(problem_without_obstacle, T, grid, params, opt);
  const double half = traj.snapshots[1][0];
  const double full = traj.snapshots[2][0];
  return -(full - half) / (0.5 * T);
}

//! Approximate ergodic problem: c_H^eps from the cell problem with viscosity
//! eps^4, then V^eps from
//!   -tr(A D^2V) + H(x,DV) + gamma^{eps^2}(V - psi) = eps^4 Lap V + c^eps,
//! with c^eps = max{0, c_H^eps}.
inline ErgodicResult solve_approx_ergodic(const ProblemSpec& problem, double eps, const TorusGrid& grid,
                                          SchemeParams params = {}, const StationaryOptions& opt = {}) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0,1)");
  params = detail::with_dissipation(problem, grid, params);
  const double nu = std::pow(eps, 4);
  const double delta = eps * eps;
  auto cell = ergodic_constant_direct(problem, nu, grid, params, opt);
  ErgodicResult r;
  r.c_unclipped = cell.c_estimate;
  r.c_estimate = std::max(0.0, cell.c_estimate);
  if (r.c_estimate < 0.0) throw SolverError("c^eps < 0 is impossible by construction");
  r.tolerance = opt.tolerance;
  r.schedule = "viscosity eps^4 = " + std::to_string(nu) + ", penalty delta eps^2 = " + std::to_string(delta);

  params.artificial_viscosity = nu;
  params.penalty_delta = delta;
  params.epsilon = 1.0;
  Scheme scheme(problem, grid, params);
  const auto psi = scheme.obstacle();
  std::vector<double> V;
  if (r.c_estimate > 0.0) {
    // v^eps shifted strictly below psi: the penalty vanishes and the
    // equation reduces to the cell problem.
    V = cell.corrector.values;
    double gap = psi[0] - V[0];
    for (std::size_t n = 0; n < V.size(); ++n) gap = std::min(gap, psi[n] - V[n]);
    for (double& v : V) v += gap - 1.0;
    detail::StationarySystem sys{&scheme, 0.0, true, false, r.c_estimate};
    std::vector<double> res;
    r.residual = sys.evaluate(V, res, nullptr, &r.advection_ratio);
    r.iterations = cell.iterations;
  } else {
    // psi + C delta^{1/4} is a supersolution; Newton decreases from it.
    const double lift = obstacle_supersolution_constant(problem, grid) * std::pow(delta, 0.25);
    V.assign(psi.begin(), psi.end());
    for (double& v : V) v += lift;
    detail::StationarySystem sys{&scheme, 0.0, true, false, 0.0};
    StationaryStats st;
    V = detail::solve_stationary(sys, std::move(V), opt, st);
    r.residual = st.residual;
    r.iterations = st.iterations;
    r.advection_ratio = st.advection_ratio;
  }
  r.solution = ScalarField(grid, V);
  r.corrector = detail::normalized(grid, V);
  return r;
}

struct ObstacleLimitOptions {
  //! Reject when the estimated c_H exceeds this (no solution exists for c_H > 0).
  double c_guard = 0.05;
  double window = 1.0;
  double tolerance = 1e-8;
  double max_time = 4000.0;
  //! Start here instead of psi.
  std::optional<std::vector<double>> start;
};

//! Long-time limit of the projection scheme started from psi, solving
//! max{ -tr(A D^2V) + H(x,DV), V - psi } = 0.
inline ErgodicResult solve_ergodic_obstacle(const ProblemSpec& problem, const TorusGrid& grid, SchemeParams params = {},
                                            const ObstacleLimitOptions& lopt = {}) {
  params = detail::with_dissipation(problem, grid, params);
  params.epsilon = 1.0;
  params.artificial_viscosity = 0.0;
  const auto cell = ergodic_constant_direct(problem, 0.0, grid, params);
  if (cell.c_estimate > lopt.c_guard) {
    throw NoSolutionRegime("no solution regime: estimated c_H = " + std::to_string(cell.c_estimate) + " > " +
                           std::to_string(lopt.c_guard));
  }
  Scheme scheme(problem, grid, params);
  std::vector<double> u = lopt.start ? *lopt.start : std::vector<double>(scheme.obstacle().begin(), scheme.obstacle().end());
  if (u.size() != grid.size()) throw InvalidArgument("start field does not match the grid");
  const double dt = lopt.window / std::ceil(lopt.window / scheme.step_dt() - 1e-9);
  const std::size_t per_window = std::size_t(std::llround(lopt.window / dt));
  std::vector<double> next(u.size()), scratch(u.size()), prev;
  double t = 0.0;
  double change = std::numeric_limits<double>::infinity();
  int windows = 0;
  while (change > lopt.tolerance) {
    if (t >= lopt.max_time) {
      throw SolverError("obstacle limit not reached by time " + std::to_string(lopt.max_time) +
                        " (last window change " + std::to_string(change) + ")");
    }
    prev = u;
    for (std::size_t k = 0; k < per_window; ++k) {
      advance_projected(scheme, u, dt, next, scratch);
      u.swap(next);
    }
    t += lopt.window;
    ++windows;
    change = max_abs_diff(u, prev);
  }
  // Residual of max{ G(V), V - psi } with G = -F.
  scheme.explicit_rate(u, scratch);
  const auto psi = scheme.obstacle();
  double res = 0.0;
  for (std::size_t n = 0; n < u.size(); ++n) res = std::max(res, std::abs(std::max(-scratch[n], u[n] - psi[n])));
  ErgodicResult r;
  r.c_estimate = 0.0;
  r.c_unclipped = cell.c_estimate;
  r.solution = ScalarField(grid, u);
  r.corrector = detail::normalized(grid, u);
  r.residual = res;
  r.tolerance = lopt.tolerance;
  r.iterations = windows;
  r.schedule = "projection marching in windows of " + std::to_string(lopt.window) + " until change <= " +
               std::to_string(lopt.tolerance) + ", stopped at t = " + std::to_string(t);
  return r;
}

struct DichotomyOptions {
  //! |c_H| below this is treated as near-critical.
  double critical_band = 0.02;
  //! Oscillation of u + c t (c > 0) or u (c <= 0) over [T/2, T].
  double oscillation_tol = 1e-6;
  //! Contact set must be empty after this time (c > 0).
  double contact_time_tol = 0.01;
  //! ||u(.,T) - V|| for c <= 0.
  double limit_tol = 1e-2;
  //! Spatial oscillation of u(.,T) in the near-critical case.
  double flatness_tol = 2e-2;
  std::size_t snapshots = 200;
};

//! Large-time behaviour experiment: the sign of c_H decides between
//! u + c_H t -> v (obstacle eventually inactive) and u -> V.
inline ExperimentReport dichotomy_experiment(const ProblemSpec& problem, const TorusGrid& grid, double T_max,
                                             SchemeParams params = {}, const DichotomyOptions& dopt = {}) {
  ExperimentReport rep("dichotomy");
  params = detail::with_dissipation(problem, grid, params);
  params.epsilon = 1.0;
  params.artificial_viscosity = 0.0;
  rep.config() = {{"problem", problem.name},       {"N", grid.points_per_axis()},
                  {"dim", grid.dim()},             {"T_max", T_max},
                  {"cfl_safety", params.cfl_safety}, {"critical_band", dopt.critical_band},
                  {"oscillation_tol", dopt.oscillation_tol}, {"contact_time_tol", dopt.contact_time_tol},
                  {"limit_tol", dopt.limit_tol},   {"flatness_tol", dopt.flatness_tol},
                  {"snapshots", dopt.snapshots}};
  const double c = ergodic_constant_direct(problem, 0.0, grid, params).c_estimate;
  rep.scalar("c_H_estimate", c);
  const bool near_critical = std::abs(c) <= dopt.critical_band;
  if (near_critical) rep.flag("near-critical");

  Scheme scheme(problem, grid, params);
  const auto psi = scheme.obstacle();
  double last_contact = 0.0;
  SolveOptions opt;
  opt.snapshot_count = dopt.snapshots;
  opt.observer = [&](std::size_t, double t, std::span<const double> u) {
    for (std::size_t n = 0; n < u.size(); ++n) {
      if (!(u[n] < psi[n])) {
        last_contact = t;
        return;
      }
    }
  };
  auto traj = solve_obstacle(problem, T_max, grid, params, opt);
  const double shift = (c > 0.0 && !near_critical) ? c : 0.0;
  // Oscillation in time of u + shift t over [T/2, T], worst node.
  double osc = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
      if (traj.times[k] < 0.5 * T_max - 1e-12) continue;
      const double v = traj.snapshots[k][n] + shift * traj.times[k];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    osc = std::max(osc, hi - lo);
  }
  rep.scalar("oscillation", osc);
  const auto& uT = traj.final_field().values;

  if (c > 0.0 && !near_critical) {
    rep.flag("branch:c_H>0");
    // First time after which the contact set stays empty.
    const double T0 = last_contact > 0.0 ? last_contact + traj.dt : traj.dt;
    rep.scalar("contact_free_after", T0);
    rep.require_le("oscillation-u-plus-ct", osc, dopt.oscillation_tol, "sup_x osc_{[T/2,T]} (u + c t)");
    rep.require_le("contact-set-empty", T0, dopt.contact_time_tol, "u < psi strictly after this time");
  } else {
    rep.flag("branch:c_H<=0");
    rep.require_le("oscillation-u", osc, near_critical ? dopt.flatness_tol : dopt.limit_tol, "sup_x osc_{[T/2,T]} u");
    const auto V = solve_ergodic_obstacle(problem, grid, params);
    const double dist = max_abs_diff(uT, V.solution.values);
    rep.scalar("distance_to_V", dist);
    rep.scalar("V_residual", V.residual);
    if (near_critical) {
      rep.info("distance-to-V", dist, "c_H ~ 0: V need not be unique, limit reported only");
      double lo = uT[0], hi = uT[0];
      for (double x : uT) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      rep.scalar("spatial_oscillation_T", hi - lo);
      rep.require_le("flatness-at-T", hi - lo, dopt.flatness_tol, "u(.,T) close to a constant");
    } else {
      rep.require_le("distance-to-V", dist, dopt.limit_tol, "||u(.,T) - V||");
    }
  }
  rep.finish();
  return rep;
}

}  // namespace ohj

#endif  // OHJ_ERGODIC_HPP_
