#ifndef OHJ_ADJOINT_HPP_
#define OHJ_ADJOINT_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ohj/cauchy.hpp"
#include "ohj/ergodic.hpp"
#include "ohj/error.hpp"
#include "ohj/grid.hpp"
#include "ohj/report.hpp"
#include "ohj/schemes.hpp"

namespace ohj {

//! Summation roundoff allowed in the discrete mass monotonicity check.
inline constexpr double kMassRoundoff = 1e-14;

//! Backward density sigma^k on every step, k = 0..K, built by exact
//! transposition of the forward linearized steps.
struct AdjointTrajectory {
  TorusGrid grid;
  std::vector<double> times;
  std::vector<std::vector<double>> sigma;
  //! mass(k) = sum sigma^k h^n.
  std::vector<double> mass;
  //! P_k = sum gamma'_k d_k sigma^{k+1} h^n, the discrete penalty flux of step k.
  std::vector<double> penalty_flux;
  //! Relative duality defect |<J f, s> - <f, J^T s>| / scale per step.
  std::vector<double> duality_defect;
  std::size_t x0 = 0;
  double epsilon = 1.0;
  double delta = 1.0;
  double dt = 0.0;

  std::size_t steps() const { return sigma.empty() ? 0 : sigma.size() - 1; }
};

struct AdjointOptions {
  //! Probe the duality of every step with a random field.
  bool check_duality = true;
  std::uint64_t seed = 12345;
};

namespace detail {

inline double weighted_dot(std::span<const double> a, std::span<const double> b, double w) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * w;
}

inline double total_mass(std::span<const double> s, double w) {
  double m = 0.0;
  for (double x : s) m += x;
  return m * w;
}

}  // namespace detail

//! Solves the discrete adjoint backward from the Dirac mass h^{-n} at x0.
inline AdjointTrajectory solve_adjoint(const FieldTrajectory& forward, std::size_t x0,
                                       const AdjointOptions& aopt = {}) {
  if (!forward.step_log) throw InvalidArgument("adjoint solve requires a forward run with a step log");
  const StepLog& log = *forward.step_log;
  const TorusGrid& g = forward.grid;
  if (x0 >= g.size()) throw InvalidArgument("terminal node x0 out of range");
  const std::size_t K = log.steps();
  const double hn = g.cell_volume();

  AdjointTrajectory adj;
  adj.grid = g;
  adj.x0 = x0;
  adj.epsilon = log.scheme.params().epsilon;
  adj.delta = log.scheme.params().penalty_delta;
  adj.dt = log.dt;
  adj.sigma.assign(K + 1, {});
  adj.mass.assign(K + 1, 0.0);
  adj.penalty_flux.assign(K, 0.0);
  adj.duality_defect.assign(K, 0.0);
  adj.times.resize(K + 1);
  for (std::size_t k = 0; k <= K; ++k) adj.times[k] = (k == K) ? 1.0 : double(k) * log.dt;

  std::vector<double> s(g.size(), 0.0);
  s[x0] = 1.0 / hn;
  adj.sigma[K] = s;
  adj.mass[K] = detail::total_mass(s, hn);

  std::mt19937_64 rng(aopt.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> f(g.size()), jf(g.size()), prev(g.size());
  for (std::size_t k = K; k-- > 0;) {
    const LinearizedStep lin = log.linearized(k);
    const auto& next = adj.sigma[k + 1];
    lin.apply_transpose(next, prev);
    const auto gp = lin.penalty_weight();
    const auto d = lin.penalty_factor();
    double flux = 0.0;
    for (std::size_t n = 0; n < g.size(); ++n) flux += gp[n] * d[n] * next[n];
    adj.penalty_flux[k] = flux * hn;
    if (aopt.check_duality) {
      for (double& x : f) x = unif(rng);
      lin.apply(f, jf);
      const double lhs = detail::weighted_dot(jf, next, hn);
      const double rhs = detail::weighted_dot(f, prev, hn);
      double scale = 0.0;
      for (std::size_t n = 0; n < g.size(); ++n) scale += std::abs(jf[n] * next[n]);
      scale = std::max(scale * hn, std::numeric_limits<double>::min());
      adj.duality_defect[k] = std::abs(lhs - rhs) / scale;
    }
    adj.sigma[k] = prev;
    adj.mass[k] = detail::total_mass(prev, hn);
  }
  return adj;
}

//! Node maximizing |w^K - w^{K-1}| / dt, followed by the next best
//! candidates (count in total).
inline std::vector<std::size_t> terminal_candidates(const FieldTrajectory& forward, std::size_t count = 3) {
  if (!forward.step_log) throw InvalidArgument("terminal node selection requires a step log");
  const auto& st = forward.step_log->states;
  const auto& a = st[st.size() - 1];
  const auto& b = st[st.size() - 2];
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), std::size_t(0));
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(count), idx.end(), [&](std::size_t i, std::size_t j) {
    const double di = std::abs(a[i] - b[i]), dj = std::abs(a[j] - b[j]);
    return di != dj ? di > dj : i < j;
  });
  idx.resize(count);
  return idx;
}

//! Mass monotonicity, positivity and the two penalty identities:
//!   (ii)  sum_k dt P_k = eps (mass(K) - mass(0))
//!   (iii) eps sum_k dt mass(k) + sum_k dt sum_{j>=k} dt P_j = eps
//! with left Riemann sums in time, the quadrature under which they are exact.
inline ExperimentReport adjoint_mass_report(const AdjointTrajectory& adj, const FieldTrajectory& forward) {
  ExperimentReport rep("adjoint-mass");
  if (!forward.step_log || forward.step_log->steps() != adj.steps() || !(forward.grid == adj.grid)) {
    throw InvalidArgument("adjoint and forward trajectories do not match");
  }
  const std::size_t K = adj.steps();
  const double eps = adj.epsilon;
  const double dt = adj.dt;
  rep.config() = {{"N", adj.grid.points_per_axis()}, {"dim", adj.grid.dim()}, {"epsilon", eps},
                  {"delta", adj.delta},             {"dt", dt},                {"steps", K},
                  {"x0", adj.x0}};
  double min_sigma = 0.0;
  for (const auto& s : adj.sigma) {
    for (double x : s) min_sigma = std::min(min_sigma, x);
  }
  std::size_t decreases = 0;
  double worst_decrease = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double step = adj.mass[k + 1] - adj.mass[k];
    worst_decrease = std::min(worst_decrease, step);
    if (step < -kMassRoundoff) ++decreases;
  }
  double pi = 0.0, double_integral = 0.0, tail_term = 0.0, tail = 0.0;
  for (std::size_t k = K; k-- > 0;) {
    pi += dt * adj.penalty_flux[k];
    tail += dt * adj.penalty_flux[k];
    tail_term += dt * tail;
    double_integral += dt * adj.mass[k];
  }
  const double ident2 = std::abs(pi - eps * (adj.mass[K] - adj.mass[0]));
  const double ident3 = std::abs(eps * double_integral + tail_term - eps);
  const double max_mass = *std::max_element(adj.mass.begin(), adj.mass.end());
  const double duality = adj.duality_defect.empty()
                             ? 0.0
                             : *std::max_element(adj.duality_defect.begin(), adj.duality_defect.end());
  rep.scalar("min_sigma", min_sigma);
  rep.scalar("mass_initial", adj.mass[0]);
  rep.scalar("mass_terminal", adj.mass[K]);
  rep.scalar("max_mass", max_mass);
  rep.scalar("penalty_integral", pi);
  rep.scalar("sigma_double_integral", double_integral);
  rep.scalar("worst_mass_decrease", worst_decrease);
  rep.require_ge("sigma-nonnegative", min_sigma, 0.0, "min over nodes and steps");
  rep.require_le("mass-monotone", double(decreases), 0.0,
                 "steps with mass(k+1) < mass(k) - 1e-14");
  rep.require_le("mass-at-most-one", max_mass, 1.0 + 1e-12);
  rep.require_le("identity-ii", ident2, 1e-10 * eps, "|Pi - eps(mass(1) - mass(0))|");
  rep.require_le("identity-iii", ident3, 1e-10 * eps, "|eps int sigma + int_t int_t^1 P - eps|");
  rep.require_le("double-integral-at-most-one", double_integral, 1.0 + 1e-12);
  rep.require_le("penalty-integral-at-most-eps", pi, eps * (1.0 + 1e-12));
  rep.require_le("duality", duality, 1e-12, "max relative defect over steps");
  rep.finish();
  return rep;
}

//! Energy E^k = <F(w^k) - gamma(w^{k+1} - psi), sigma^{k+1}> h^n, the
//! discrete form of the sigma-weighted equation; it is conserved up to the
//! linearization remainder.
struct EnergySeries {
  std::vector<double> times;
  std::vector<double> energy;
  double drift = 0.0;
  double reconstruction = 0.0;
  double terminal_rate = 0.0;
};

inline EnergySeries energy_series(const FieldTrajectory& forward, const AdjointTrajectory& adj) {
  if (!forward.step_log) throw InvalidArgument("energy audit requires a step log");
  const StepLog& log = *forward.step_log;
  const std::size_t K = log.steps();
  if (adj.steps() != K) throw InvalidArgument("adjoint and forward trajectories do not match");
  const Scheme& scheme = log.scheme;
  const double hn = forward.grid.cell_volume();
  const double delta = scheme.params().penalty_delta;
  const auto psi = scheme.obstacle();
  EnergySeries es;
  std::vector<double> rate(forward.grid.size());
  for (std::size_t k = 0; k < K; ++k) {
    scheme.explicit_rate(log.states[k], rate);
    const auto& next = log.states[k + 1];
    const auto& s = adj.sigma[k + 1];
    double e = 0.0;
    for (std::size_t n = 0; n < rate.size(); ++n) e += (rate[n] - penalty(delta, next[n] - psi[n])) * s[n];
    es.times.push_back(adj.times[k]);
    es.energy.push_back(e * hn);
  }
  const double last = es.energy.back();
  double integral = 0.0;
  for (double e : es.energy) {
    es.drift = std::max(es.drift, std::abs(e - last));
    integral += log.dt * e;
  }
  const double eps = scheme.params().epsilon;
  es.terminal_rate = eps * (log.states[K][adj.x0] - log.states[K - 1][adj.x0]) / log.dt;
  es.reconstruction = std::abs(es.terminal_rate - integral);
  return es;
}

inline ExperimentReport energy_audit(const FieldTrajectory& forward, const AdjointTrajectory& adj) {
  ExperimentReport rep("energy-audit");
  auto es = energy_series(forward, adj);
  rep.config() = {{"N", forward.grid.points_per_axis()}, {"epsilon", adj.epsilon}, {"delta", adj.delta},
                  {"dt", adj.dt}, {"steps", adj.steps()}, {"x0", adj.x0}};
  rep.scalar("drift", es.drift);
  rep.scalar("reconstruction_residual", es.reconstruction);
  rep.scalar("terminal_rate", es.terminal_rate);
  rep.info("drift", es.drift, "max_k |E^k - E^{K-1}|");
  rep.info("reconstruction", es.reconstruction, "|eps w_t(x0,1) - sum_k dt E^k|");
  rep.finish();
  return rep;
}

// ---------------------------------------------------------------------------
// Key estimates

namespace detail {

//! Centered second differences (xx, xy, yy) at node n.
inline std::array<double, 3> hessian_at(const TorusGrid& g, std::span<const double> w, std::size_t n) {
  const double h2 = g.spacing() * g.spacing();
  std::array<double, 3> hs{0.0, 0.0, 0.0};
  hs[0] = (w[g.neighbor(n, 0, 1)] - 2.0 * w[n] + w[g.neighbor(n, 0, -1)]) / h2;
  if (g.dim() == 2) {
    hs[2] = (w[g.neighbor(n, 1, 1)] - 2.0 * w[n] + w[g.neighbor(n, 1, -1)]) / h2;
    const std::size_t pp = g.neighbor(g.neighbor(n, 0, 1), 1, 1);
    const std::size_t pm = g.neighbor(g.neighbor(n, 0, 1), 1, -1);
    const std::size_t mp = g.neighbor(g.neighbor(n, 0, -1), 1, 1);
    const std::size_t mm = g.neighbor(g.neighbor(n, 0, -1), 1, -1);
    hs[1] = (w[pp] - w[pm] - w[mp] + w[mm]) / (4.0 * h2);
  }
  return hs;
}

inline Vec2 gradient_at(const TorusGrid& g, std::span<const double> w, std::size_t n) {
  const double h = g.spacing();
  Vec2 p{0.0, 0.0};
  for (int d = 0; d < g.dim(); ++d) p[d] = (w[g.neighbor(n, d, 1)] - w[g.neighbor(n, d, -1)]) / (2.0 * h);
  return p;
}

}  // namespace detail

//! sigma-weighted space-time integrals of the key estimates, trapezoid
//! rule over the stored steps.
struct KeyIntegrals {
  double epsilon = 0.0;
  //! a^{ij} w_ik w_jk + delta^2 |D^2 w|^2
  double hessian_energy = 0.0;
  //! |D W|^2, W = V - w
  double gradient_gap = 0.0;
  //! gamma(V - psi) + gamma(w - psi)
  double penalty_sum = 0.0;
  //! eps^7 |D^2 W|^2
  double weighted_hessian_gap = 0.0;
  //! a^{ij} a^{ll} W_ik W_jk
  double diffusion_hessian_gap = 0.0;
  //! |a^{ij} W_ij|^2
  double diffusion_trace_gap = 0.0;
};

inline KeyIntegrals key_estimate_integrals(const FieldTrajectory& forward, const AdjointTrajectory& adj,
                                           const ErgodicResult& stationary) {
  if (!forward.step_log) throw InvalidArgument("key estimates require a step log");
  const StepLog& log = *forward.step_log;
  const TorusGrid& g = forward.grid;
  if (!(stationary.solution.grid == g)) throw InvalidArgument("stationary solution lives on a different grid");
  const std::size_t K = log.steps();
  const SampledProblem& data = log.scheme.sampled();
  const double eps = log.scheme.params().epsilon;
  const double delta = log.scheme.params().penalty_delta;
  const double hn = g.cell_volume();
  const auto& V = stationary.solution.values;
  KeyIntegrals ki;
  ki.epsilon = eps;
  std::vector<double> W(g.size());
  for (std::size_t k = 0; k <= K; ++k) {
    const double wt = (k == 0 || k == K) ? 0.5 * log.dt : log.dt;
    const auto& w = log.states[k];
    const auto& s = adj.sigma[k];
    for (std::size_t n = 0; n < g.size(); ++n) W[n] = V[n] - w[n];
    double e1 = 0, e2 = 0, e3 = 0, e4 = 0, e5 = 0, e6 = 0;
    for (std::size_t n = 0; n < g.size(); ++n) {
      if (s[n] == 0.0) continue;
      const auto hw = detail::hessian_at(g, w, n);
      const auto hW = detail::hessian_at(g, W, n);
      const Vec2 dW = detail::gradient_at(g, W, n);
      const double a0 = data.diffusion[0][n], a1 = data.diffusion[1][n];
      // Diagonal A: a^{ij} f_ik f_jk = sum_i a_ii sum_k f_ik^2.
      const double row0 = hw[0] * hw[0] + hw[1] * hw[1], row1 = hw[1] * hw[1] + hw[2] * hw[2];
      const double Row0 = hW[0] * hW[0] + hW[1] * hW[1], Row1 = hW[1] * hW[1] + hW[2] * hW[2];
      const double full_w = hw[0] * hw[0] + 2.0 * hw[1] * hw[1] + hw[2] * hw[2];
      const double full_W = hW[0] * hW[0] + 2.0 * hW[1] * hW[1] + hW[2] * hW[2];
      e1 += (a0 * row0 + a1 * row1 + delta * delta * full_w) * s[n];
      e2 += norm2(dW) * s[n];
      e3 += (penalty(delta, V[n] - data.obstacle[n]) + penalty(delta, w[n] - data.obstacle[n])) * s[n];
      e4 += std::pow(eps, 7) * full_W * s[n];
      e5 += (a0 + a1) * (a0 * Row0 + a1 * Row1) * s[n];
      const double tr = a0 * hW[0] + a1 * hW[2];
      e6 += tr * tr * s[n];
    }
    ki.hessian_energy += wt * e1 * hn;
    ki.gradient_gap += wt * e2 * hn;
    ki.penalty_sum += wt * e3 * hn;
    ki.weighted_hessian_gap += wt * e4 * hn;
    ki.diffusion_hessian_gap += wt * e5 * hn;
    ki.diffusion_trace_gap += wt * e6 * hn;
  }
  return ki;
}

//! Schedule report: eps-scalings of the key integrals.
//! Bounded ratios are checked as max over the schedule of integral/scale <= 10;
//! the uniformly bounded Hessian energy as max/min <= 10.
inline ExperimentReport key_estimate_report(const std::vector<KeyIntegrals>& cells) {
  ExperimentReport rep("key-estimates");
  if (cells.size() < 2) throw InvalidArgument("key estimate report needs at least two epsilon values");
  std::vector<double> eps, a, b, c, d, e, f;
  for (const auto& k : cells) {
    eps.push_back(k.epsilon);
    a.push_back(k.hessian_energy);
    b.push_back(k.gradient_gap);
    c.push_back(k.penalty_sum);
    d.push_back(k.weighted_hessian_gap);
    e.push_back(k.diffusion_hessian_gap);
    f.push_back(k.diffusion_trace_gap);
  }
  rep.series("epsilon", eps);
  rep.series("hessian_energy", a);
  rep.series("gradient_gap", b);
  rep.series("penalty_sum", c);
  rep.series("weighted_hessian_gap", d);
  rep.series("diffusion_hessian_gap", e);
  rep.series("diffusion_trace_gap", f);
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const double spread = *amin > 0.0 ? *amax / *amin : std::numeric_limits<double>::infinity();
  double rb = 0.0, rc = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    rb = std::max(rb, b[i] / eps[i]);
    rc = std::max(rc, c[i] / eps[i]);
  }
  rep.scalar("hessian_energy_spread", spread);
  rep.scalar("gradient_gap_over_eps_max", rb);
  rep.scalar("penalty_sum_over_eps_max", rc);
  rep.require_le("hessian-energy-uniform", spread, 10.0, "max/min over the schedule");
  rep.require_le("gradient-gap-over-eps", rb, 10.0, "max over the schedule");
  rep.require_le("penalty-sum-over-eps", rc, 10.0, "max over the schedule");
  for (const auto& [name, vals, scale] :
       {std::tuple{"weighted-hessian-gap", &d, 0.0}, std::tuple{"diffusion-hessian-gap", &e, 0.5},
        std::tuple{"diffusion-trace-gap", &f, 0.5}}) {
    const double slope = loglog_slope(eps, *vals);
    rep.scalar(std::string(name) + "_fitted_exponent", slope);
    double ratio = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) ratio = std::max(ratio, (*vals)[i] / std::pow(eps[i], scale));
    rep.scalar(std::string(name) + "_ratio_max", ratio);
    rep.info(name, slope, "fitted exponent; predicted " + fmt_num(scale));
  }
  rep.finish();
  return rep;
}

//! eps ||w_t(.,1)||_inf per epsilon (backward difference at t = 1).
inline double terminal_rate_norm(const ProblemSpec& problem, double eps, const TorusGrid& grid,
                                 SchemeParams params = {}) {
  std::vector<double> prev;
  std::size_t K = 0;
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  // Keep the state before the last step.
  std::vector<double> last;
  opt.observer = [&](std::size_t k, double, std::span<const double> w) {
    prev.swap(last);
    last.assign(w.begin(), w.end());
    K = k;
  };
  auto traj = solve_penalized(problem, eps, eps * eps, grid, params, opt);
  if (K < 2) throw SolverError("terminal rate needs at least two steps");
  return eps * max_abs_diff(last, prev) / traj.dt;
}

inline ExperimentReport key_stability_measure(const ProblemSpec& problem, const std::vector<double>& eps_schedule,
                                              const TorusGrid& grid, SchemeParams params = {},
                                              double min_slope = 0.15) {
  ExperimentReport rep("key-stability");
  if (eps_schedule.size() < 3) throw InvalidArgument("key stability needs at least three epsilon values");
  if (params.lf_dissipation[0] <= 0.0) params.lf_dissipation = resolve_lf_dissipation(problem, grid);
  rep.config() = {{"problem", problem.name}, {"N", grid.points_per_axis()}, {"epsilon", eps_schedule},
                  {"min_slope", min_slope}};
  const double c = ergodic_constant_direct(problem, 0.0, grid, params).c_estimate;
  rep.scalar("c_H_estimate", c);
  if (c > 0.0) rep.flag("not-applicable: c_H > 0, eps w_t tends to c_H");
  std::vector<double> vals;
  for (double e : eps_schedule) vals.push_back(terminal_rate_norm(problem, e, grid, params));
  rep.series("epsilon", eps_schedule);
  rep.series("eps_wt_norm", vals);
  std::size_t bad = 0;
  for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
    if (!(vals[i + 1] < vals[i])) ++bad;
  }
  const double slope = loglog_slope(eps_schedule, vals);
  rep.scalar("fitted_slope", slope);
  rep.require_le("strictly-decreasing", double(bad), 0.0, "pairs with no strict decrease");
  rep.require_ge("fitted-slope", slope, min_slope, "log-log slope of eps ||w_t|| against eps");
  rep.finish();
  return rep;
}

}  // namespace ohj

#endif  // OHJ_ADJOINT_HPP_
