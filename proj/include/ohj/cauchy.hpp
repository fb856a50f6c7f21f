#ifndef OHJ_CAUCHY_HPP_
#define OHJ_CAUCHY_HPP_

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ohj/error.hpp"
#include "ohj/grid.hpp"
#include "ohj/problem.hpp"
#include "ohj/schemes.hpp"

namespace ohj {

enum class StorePolicy { all_steps, sampled, endpoints };

//! Every forward state of a penalized run, enough to rebuild each
//! LinearizedStep on demand (one field per step instead of dim+1).
struct StepLog {
  Scheme scheme;
  double dt = 0.0;
  std::vector<std::vector<double>> states;

  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }

  LinearizedStep linearized(std::size_t k) const { return linearize_step(scheme, states[k], states[k + 1], dt); }

  //! Re-runs the forward steps from states[0].
  std::vector<double> replay() const {
    std::vector<double> w = states.front(), next(w.size()), scratch(w.size());
    for (std::size_t k = 0; k < steps(); ++k) {
      advance_penalized(scheme, w, dt, next, scratch);
      w.swap(next);
    }
    return w;
  }
};

struct FieldTrajectory {
  TorusGrid grid;
  std::vector<double> times;
  std::vector<ScalarField> snapshots;
  StorePolicy store_policy = StorePolicy::sampled;
  std::optional<StepLog> step_log;
  double dt = 0.0;
  std::size_t steps = 0;
  SchemeParams params;

  const ScalarField& final_field() const { return snapshots.back(); }
  const ScalarField& initial_field() const { return snapshots.front(); }
};

struct SolveOptions {
  StorePolicy store = StorePolicy::sampled;
  std::size_t max_snapshots = 256;
  //! If non-zero, the step count is rounded up to a multiple of this and
  //! snapshots are taken at exactly snapshot_count + 1 uniform times.
  std::size_t snapshot_count = 0;
  //! Force the number of steps (0 = from the CFL bound).
  std::size_t steps = 0;
  bool keep_step_log = false;
  //! Penalized runs use delta^2 unless overridden.
  std::optional<double> viscosity_override;
  //! Start from this field instead of the problem's u0.
  std::optional<std::vector<double>> initial_override;
  //! Called after every step with (step index, time, state).
  std::function<void(std::size_t, double, std::span<const double>)> observer;
};

namespace detail {

enum class StepKind { projected, penalized };

inline FieldTrajectory march(const Scheme& scheme, std::vector<double> w, double horizon, const SolveOptions& opt,
                             StepKind kind) {
  const TorusGrid& g = scheme.grid();
  if (!(horizon > 0.0)) throw InvalidArgument("time horizon must be positive");
  if (w.size() != g.size()) throw InvalidArgument("initial field does not match the grid");

  std::size_t K = opt.steps;
  if (K == 0) K = std::size_t(std::max(1.0, std::ceil(horizon / scheme.step_dt() - 1e-9)));
  std::size_t stride = 1;
  if (opt.snapshot_count > 0) {
    K = ((K + opt.snapshot_count - 1) / opt.snapshot_count) * opt.snapshot_count;
    stride = K / opt.snapshot_count;
  } else if (opt.store == StorePolicy::sampled && opt.max_snapshots > 1) {
    stride = std::max<std::size_t>(1, (K + opt.max_snapshots - 2) / (opt.max_snapshots - 1));
  } else if (opt.store == StorePolicy::endpoints) {
    stride = K;
  }
  const double dt = horizon / double(K);
  scheme.check_dt(dt);

  FieldTrajectory traj;
  traj.grid = g;
  traj.store_policy = opt.snapshot_count > 0 ? StorePolicy::sampled : opt.store;
  traj.dt = dt;
  traj.steps = K;
  traj.params = scheme.params();
  traj.times.push_back(0.0);
  traj.snapshots.emplace_back(g, w);

  std::optional<StepLog> log;
  if (opt.keep_step_log) {
    log = StepLog{scheme, dt, {}};
    log->states.reserve(K + 1);
    log->states.push_back(w);
  }

  std::vector<double> next(w.size()), scratch(w.size());
  for (std::size_t k = 0; k < K; ++k) {
    if (kind == StepKind::penalized) {
      advance_penalized(scheme, w, dt, next, scratch);
    } else {
      advance_projected(scheme, w, dt, next, scratch);
    }
    w.swap(next);
    const double t = (k + 1 == K) ? horizon : double(k + 1) * dt;
    if (log) log->states.push_back(w);
    if (opt.observer) opt.observer(k + 1, t, w);
    if ((k + 1) % stride == 0 || k + 1 == K) {
      traj.times.push_back(t);
      traj.snapshots.emplace_back(g, w);
    }
  }
  traj.step_log = std::move(log);
  return traj;
}

inline void require_valid(const ProblemSpec& problem, const TorusGrid& grid) {
  auto rep = validate_problem(problem, grid);
  if (!rep.ok()) throw InvalidArgument("problem '" + problem.name + "' violates standing assumptions:\n" + rep.summary());
}

}  // namespace detail

//! Resolves the Lax-Friedrichs dissipation from the problem data so several
//! runs can share it.
inline Vec2 resolve_lf_dissipation(const ProblemSpec& problem, const TorusGrid& grid) {
  SampledProblem s(problem, grid);
  return choose_lf_dissipation(problem, s, s.initial);
}

//! Projection scheme for max{ eps u_t - tr(A D^2u) + H(x,Du), u - psi } = 0
//! on [0, T] (eps = params.epsilon, normally 1).
inline FieldTrajectory solve_obstacle(const ProblemSpec& problem, double T, const TorusGrid& grid,
                                      const SchemeParams& params = {}, const SolveOptions& opt = {}) {
  detail::require_valid(problem, grid);
  Scheme scheme(problem, grid, params);
  std::vector<double> w = opt.initial_override ? *opt.initial_override
                                               : std::vector<double>(scheme.initial().begin(), scheme.initial().end());
  return detail::march(scheme, std::move(w), T, opt, detail::StepKind::projected);
}

//! Penalized approximation on rescaled time [0,1]:
//!   eps w_t - tr(A D^2 w) + H(x,Dw) + gamma^delta(w - psi) = delta^2 Lap w.
inline FieldTrajectory solve_penalized(const ProblemSpec& problem, double eps, double delta, const TorusGrid& grid,
                                       SchemeParams params = {}, const SolveOptions& opt = {}) {
  if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("epsilon must lie in (0,1]");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0,1)");
  detail::require_valid(problem, grid);
  params.epsilon = eps;
  params.penalty_delta = delta;
  params.artificial_viscosity = opt.viscosity_override.value_or(delta * delta);
  Scheme scheme(problem, grid, params);
  std::vector<double> w = opt.initial_override ? *opt.initial_override
                                               : std::vector<double>(scheme.initial().begin(), scheme.initial().end());
  return detail::march(scheme, std::move(w), 1.0, opt, detail::StepKind::penalized);
}

// ---------------------------------------------------------------------------
// Measurements

struct GapMeasurement {
  double gap = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double h = 0.0;
  double dt_rescaled = 0.0;
  double dt_physical = 0.0;
  std::size_t steps = 0;
};

struct GapOptions {
  std::optional<double> delta;      // default eps^2
  std::optional<double> viscosity;  // default delta^2
};

//! || w^{eps,eps^2}(.,1) - u(., 1/eps) ||_inf with u from the projection
//! scheme using the same grid, dissipation and step count.
inline GapMeasurement stability_gap(const ProblemSpec& problem, double eps, const TorusGrid& grid,
                                    SchemeParams params = {}, const GapOptions& gopt = {}) {
  if (params.lf_dissipation[0] <= 0.0) params.lf_dissipation = resolve_lf_dissipation(problem, grid);
  const double delta = gopt.delta.value_or(eps * eps);
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  opt.viscosity_override = gopt.viscosity;
  auto w = solve_penalized(problem, eps, delta, grid, params, opt);

  SchemeParams ref = params;
  ref.epsilon = 1.0;
  ref.artificial_viscosity = 0.0;
  ref.fixed_dt = 0.0;
  SolveOptions ropt;
  ropt.store = StorePolicy::endpoints;
  ropt.steps = w.steps;
  auto u = solve_obstacle(problem, 1.0 / eps, grid, ref, ropt);

  GapMeasurement m;
  m.gap = max_abs_diff(w.final_field().view(), u.final_field().view());
  m.epsilon = eps;
  m.delta = delta;
  m.h = grid.spacing();
  m.dt_rescaled = w.dt;
  m.dt_physical = u.dt;
  m.steps = w.steps;
  return m;
}

struct SensitivityMeasurement {
  double value = 0.0;
  //! 1/eps + delta^{-3/4}, the shape of the bound.
  double bound_shape = 0.0;
  std::size_t steps = 0;
};

//! Finite-difference surrogate || w^{eps,1.05 delta}(.,1) - w^{eps,delta}(.,1) || / (0.05 delta).
inline SensitivityMeasurement delta_sensitivity(const ProblemSpec& problem, double eps, double delta,
                                                const TorusGrid& grid, SchemeParams params = {}) {
  if (params.lf_dissipation[0] <= 0.0) params.lf_dissipation = resolve_lf_dissipation(problem, grid);
  const double bumped = 1.05 * delta;
  // Common step count, set by the stiffer (larger viscosity) run.
  SchemeParams stiff = params;
  stiff.epsilon = eps;
  stiff.penalty_delta = bumped;
  stiff.artificial_viscosity = bumped * bumped;
  Scheme s(problem, grid, stiff);
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  opt.steps = std::size_t(std::max(1.0, std::ceil(1.0 / s.step_dt() - 1e-9)));
  auto a = solve_penalized(problem, eps, delta, grid, params, opt);
  auto b = solve_penalized(problem, eps, bumped, grid, params, opt);
  SensitivityMeasurement m;
  m.value = max_abs_diff(a.final_field().view(), b.final_field().view()) / (0.05 * delta);
  m.bound_shape = 1.0 / eps + std::pow(delta, -0.75);
  m.steps = opt.steps;
  return m;
}

//! sqrt(2 max_x(|tr(A D^2 psi)| + |H(x, D psi)| + |Lap psi|)), evaluated at
//! the grid nodes with analytic derivatives.
inline double obstacle_supersolution_constant(const ProblemSpec& problem, const TorusGrid& grid) {
  double m = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec2 x = grid.coords(n);
    const auto hs = problem.obstacle.hessian(x);
    double tr = 0.0;
    for (int d = 0; d < grid.dim(); ++d) tr += problem.diffusion.coefficient(d, x) * hs[d == 0 ? 0 : 2];
    const Vec2 dpsi = problem.obstacle.gradient(x);
    const double hv = hamiltonian_eval(problem.hamiltonian, x, dpsi).value;
    m = std::max(m, std::abs(tr) + std::abs(hv) + std::abs(hs[0] + (grid.dim() == 2 ? hs[2] : 0.0)));
  }
  return std::sqrt(2.0 * m);
}

struct PenaltyBoundCheck {
  double max_excess = 0.0;  // max over nodes and steps of (w - psi)_+
  double constant = 0.0;    // C_psi
  double bound = 0.0;       // C_psi delta^{1/4}
  std::size_t violations = 0;
  double lipschitz_final = 0.0;
};

inline PenaltyBoundCheck penalty_bound_check(const ProblemSpec& problem, double eps, double delta, const TorusGrid& grid,
                                             SchemeParams params = {}) {
  PenaltyBoundCheck c;
  c.constant = obstacle_supersolution_constant(problem, grid);
  c.bound = c.constant * std::pow(delta, 0.25);
  SampledProblem s(problem, grid);
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  opt.observer = [&](std::size_t, double, std::span<const double> w) {
    for (std::size_t n = 0; n < w.size(); ++n) {
      const double ex = w[n] - s.obstacle[n];
      if (ex > c.max_excess) c.max_excess = ex;
      if (ex > c.bound * (1.0 + 1e-12)) ++c.violations;
    }
  };
  auto traj = solve_penalized(problem, eps, delta, grid, params, opt);
  c.lipschitz_final = discrete_lipschitz(grid, traj.final_field().view());
  return c;
}

}  // namespace ohj

#endif  // OHJ_CAUCHY_HPP_
