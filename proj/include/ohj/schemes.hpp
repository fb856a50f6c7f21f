#ifndef OHJ_SCHEMES_HPP_
#define OHJ_SCHEMES_HPP_

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ohj/error.hpp"
#include "ohj/grid.hpp"
#include "ohj/problem.hpp"

namespace ohj {

// ---------------------------------------------------------------------------
// Penalty gamma^delta(r) = r_+^2 / (2 sqrt(delta)), i.e. gamma(delta^{-1/4} r)
// with gamma(r) = r_+^2 / 2.

inline double penalty(double delta, double r) {
  if (!(delta > 0.0)) throw InvalidArgument("penalty requires delta > 0");
  const double rp = r > 0.0 ? r : 0.0;
  return rp * rp / (2.0 * std::sqrt(delta));
}

inline double penalty_prime(double delta, double r) {
  if (!(delta > 0.0)) throw InvalidArgument("penalty requires delta > 0");
  return r > 0.0 ? r / std::sqrt(delta) : 0.0;
}

//! Lax-Friedrichs flux H(x, (p- + p+)/2) - sum_i lambda_i/2 (p+_i - p-_i).
//! In one dimension pass zero second components.
inline double numerical_hamiltonian(const HamiltonianSpec& h, const Vec2& x, const Vec2& p_minus,
                                    const Vec2& p_plus, const Vec2& lambda) {
  const Vec2 mid{0.5 * (p_minus[0] + p_plus[0]), 0.5 * (p_minus[1] + p_plus[1])};
  return hamiltonian_eval(h, x, mid).value - 0.5 * lambda[0] * (p_plus[0] - p_minus[0]) -
         0.5 * lambda[1] * (p_plus[1] - p_minus[1]);
}

struct SchemeParams {
  //! Lax-Friedrichs dissipation per axis; zero means "choose from the data".
  Vec2 lf_dissipation{0.0, 0.0};
  double cfl_safety = 0.5;
  double penalty_delta = 1.0;
  //! Coefficient of the extra Laplacian (delta^2 for the penalized Cauchy
  //! problem, eps^4 for the approximate cell problems).
  double artificial_viscosity = 0.0;
  //! Time-derivative weight; 1 for unrescaled runs.
  double epsilon = 1.0;
  //! Force a time step (0 = take the CFL step). Must not exceed the CFL step.
  double fixed_dt = 0.0;
};

//! Grid samples of every coefficient. Shared read-only between a Scheme and
//! the linearized steps it produces.
struct SampledProblem {
  TorusGrid grid;
  std::vector<double> potential;
  std::array<std::vector<double>, 2> drift;
  std::array<std::vector<double>, 2> diffusion;
  std::vector<double> obstacle;
  std::vector<double> initial;
  double max_trace_a = 0.0;

  SampledProblem(const ProblemSpec& p, const TorusGrid& g) : grid(g) {
    if (p.dim != g.dim()) throw InvalidArgument("problem dimension does not match grid dimension");
    const std::size_t n = g.size();
    potential.resize(n);
    obstacle.resize(n);
    initial.resize(n);
    for (int d = 0; d < 2; ++d) {
      drift[d].assign(n, 0.0);
      diffusion[d].assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 x = g.coords(i);
      potential[i] = p.hamiltonian.potential.value(x);
      obstacle[i] = p.obstacle.value(x);
      initial[i] = p.initial.value(x);
      double tr = 0.0;
      for (int d = 0; d < g.dim(); ++d) {
        drift[d][i] = p.hamiltonian.drift[d].value(x);
        double a = p.diffusion.coefficient(d, x);
        if (a < 0.0 && a >= -kPsdTolerance) a = 0.0;  // sampled zeros of sin^2
        if (a < 0.0) throw InvalidArgument("diffusion coefficient is negative at " + detail::node_label(g, i));
        diffusion[d][i] = a;
        tr += a;
      }
      max_trace_a = std::max(max_trace_a, tr);
    }
  }

  double hamiltonian(std::size_t n, const Vec2& p) const {
    const double q0 = p[0] - drift[0][n];
    const double q1 = p[1] - drift[1][n];
    return 0.5 * (q0 * q0 + q1 * q1) + potential[n];
  }
};

//! Raw CFL formula: safety * eps / (2 max tr A / h^2 + 2 dim nu / h^2 + sum lambda / h).
inline double cfl_dt(const TorusGrid& grid, const SchemeParams& params, double max_trace_a) {
  const double h = grid.spacing();
  if (!(h > 0.0)) throw InvalidArgument("grid spacing must be positive");
  double lam = 0.0;
  for (int d = 0; d < grid.dim(); ++d) lam += params.lf_dissipation[d];
  const double denom =
      2.0 * max_trace_a / (h * h) + 2.0 * grid.dim() * params.artificial_viscosity / (h * h) + lam / h;
  if (!(denom > 0.0)) throw InvalidArgument("CFL bound is unbounded: no diffusion, viscosity or dissipation");
  return params.cfl_safety * params.epsilon / denom;
}

//! 1.1 x the largest |D_p H| over the one-sided gradients of @a field and
//! over the a priori box |p| <= lipschitz_hint.
inline Vec2 choose_lf_dissipation(const ProblemSpec& problem, const SampledProblem& s,
                                  std::span<const double> field) {
  const TorusGrid& g = s.grid;
  const double inv_h = 1.0 / g.spacing();
  Vec2 lam{0.0, 0.0};
  for (std::size_t n = 0; n < g.size(); ++n) {
    for (int d = 0; d < g.dim(); ++d) {
      const double pp = (field[g.neighbor(n, d, 1)] - field[n]) * inv_h;
      const double pm = (field[n] - field[g.neighbor(n, d, -1)]) * inv_h;
      const double b = s.drift[d][n];
      lam[d] = std::max({lam[d], std::abs(pp - b), std::abs(pm - b), problem.lipschitz_hint + std::abs(b)});
    }
  }
  for (int d = 0; d < g.dim(); ++d) lam[d] *= 1.1;
  return lam;
}

//! Monotone explicit discretization of
//!   eps w_t = tr(A D^2 w) + nu Lap w - H(x, Dw)
//! with the Lax-Friedrichs flux. Cheap to copy; coefficient samples are shared.
class Scheme {
 public:
  Scheme(const ProblemSpec& problem, const TorusGrid& grid, SchemeParams params)
      : data_(std::make_shared<const SampledProblem>(problem, grid)), params_(params) {
    if (params_.lf_dissipation[0] <= 0.0 || (grid.dim() == 2 && params_.lf_dissipation[1] <= 0.0)) {
      params_.lf_dissipation = choose_lf_dissipation(problem, *data_, data_->initial);
    }
    validate();
  }

  const TorusGrid& grid() const { return data_->grid; }
  const SchemeParams& params() const { return params_; }
  const SampledProblem& sampled() const { return *data_; }
  std::span<const double> obstacle() const { return data_->obstacle; }
  std::span<const double> initial() const { return data_->initial; }

  double cfl_dt() const { return ohj::cfl_dt(grid(), params_, data_->max_trace_a); }

  //! Time step actually used: fixed_dt if set, else the CFL step.
  double step_dt() const {
    const double c = cfl_dt();
    if (params_.fixed_dt > 0.0) {
      if (params_.fixed_dt > c * (1.0 + 1e-12)) {
        throw SolverError("fixed time step " + std::to_string(params_.fixed_dt) + " violates CFL bound " +
                          std::to_string(c));
      }
      return params_.fixed_dt;
    }
    return c;
  }

  void check_dt(double dt) const {
    if (!(dt > 0.0) || dt > cfl_dt() * (1.0 + 1e-12)) {
      throw SolverError("time step " + std::to_string(dt) + " violates CFL bound " + std::to_string(cfl_dt()));
    }
  }

  //! Lax-Friedrichs numerical Hamiltonian at node n of field w.
  double numerical_hamiltonian_at(std::size_t n, std::span<const double> w) const {
    const TorusGrid& g = grid();
    const double inv_h = 1.0 / g.spacing();
    Vec2 mid{0.0, 0.0};
    double lf = 0.0;
    for (int d = 0; d < g.dim(); ++d) {
      const double wp = w[g.neighbor(n, d, 1)];
      const double wm = w[g.neighbor(n, d, -1)];
      mid[d] = 0.5 * (wp - wm) * inv_h;
      lf += 0.5 * params_.lf_dissipation[d] * (wp - 2.0 * w[n] + wm) * inv_h;
    }
    return data_->hamiltonian(n, mid) - lf;
  }

  //! out = tr(A D^2 w) + nu Lap w - Hhat(w). Throws when the frozen
  //! advection |D_p H| exceeds the dissipation (monotonicity lost).
  void explicit_rate(std::span<const double> w, std::span<double> out) const {
    const TorusGrid& g = grid();
    const double inv_h = 1.0 / g.spacing();
    const double inv_h2 = inv_h * inv_h;
    const double nu = params_.artificial_viscosity;
    const std::size_t size = g.size();
    for (std::size_t n = 0; n < size; ++n) {
      double diff = 0.0;
      double lf = 0.0;
      double kin = 0.0;
      for (int d = 0; d < g.dim(); ++d) {
        const double wp = w[g.neighbor(n, d, 1)];
        const double wm = w[g.neighbor(n, d, -1)];
        const double second = wp - 2.0 * w[n] + wm;
        const double beta = 0.5 * (wp - wm) * inv_h - data_->drift[d][n];
        if (std::abs(beta) > params_.lf_dissipation[d] * (1.0 + 1e-12)) {
          throw SolverError("Lax-Friedrichs bound exceeded at " + detail::node_label(g, n) + ": |D_pH| = " +
                            std::to_string(std::abs(beta)) + " > lambda = " +
                            std::to_string(params_.lf_dissipation[d]));
        }
        diff += (data_->diffusion[d][n] + nu) * second * inv_h2;
        lf += 0.5 * params_.lf_dissipation[d] * second * inv_h;
        kin += 0.5 * beta * beta;
      }
      out[n] = diff + lf - kin - data_->potential[n];
    }
  }

 private:
  void validate() const {
    if (!(params_.cfl_safety > 0.0 && params_.cfl_safety <= 1.0)) throw InvalidArgument("cfl_safety must lie in (0,1]");
    if (!(params_.penalty_delta > 0.0)) throw InvalidArgument("penalty_delta must be positive");
    if (!(params_.artificial_viscosity >= 0.0)) throw InvalidArgument("artificial_viscosity must be >= 0");
    if (!(params_.epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  }

  std::shared_ptr<const SampledProblem> data_;
  SchemeParams params_;
};

inline double cfl_dt(const Scheme& scheme, std::span<const double> current_field) {
  for (double x : current_field) {
    if (!std::isfinite(x)) throw InvalidArgument("cfl_dt: field is not finite");
  }
  return scheme.cfl_dt();
}

namespace detail {

//! Solves eps (w+ - w_hat)/dt + gamma^delta(w+ - psi) = 0 at one node by
//! Newton's method started at w_hat (monotone from above).
inline double implicit_penalty(double w_hat, double psi, double rate, double delta) {
  const double r_hat = w_hat - psi;
  if (r_hat <= 0.0) return w_hat;
  const double s = std::sqrt(delta);
  const double scale = std::max(1.0, rate * r_hat);
  auto residual = [&](double r) { return rate * (r - r_hat) + r * r / (2.0 * s); };
  double r = r_hat;
  for (int it = 0; it < 30; ++it) {
    const double g = residual(r);
    if (g == 0.0) return psi + r;
    const double step = g / (rate + r / s);
    r = std::max(0.0, r - step);
    // Quadratic convergence: stop once the correction is at roundoff level.
    if (std::abs(step) <= 1e-15 * r) return psi + r;
  }
  if (std::abs(residual(r)) <= 1e-12 * scale) return psi + r;
  throw SolverError("implicit penalty Newton did not converge (w_hat=" + std::to_string(w_hat) +
                    ", psi=" + std::to_string(psi) + ")");
}

}  // namespace detail

//! Jacobian of one penalized step, kept matrix-free:
//!   J f = D (I + dt/eps G) f
//! where G is the frozen advection-diffusion generator (zero row sums) and
//! D = diag(k / (k + gamma'(w+ - psi))), k = eps/dt, from the implicit penalty.
class LinearizedStep {
 public:
  LinearizedStep(Scheme scheme, std::vector<double> advection, std::vector<double> penalty_weight, double dt)
      : scheme_(std::move(scheme)), advection_(std::move(advection)), weight_(std::move(penalty_weight)), dt_(dt) {
    const std::size_t n = scheme_.grid().size();
    const int dim = scheme_.grid().dim();
    const double rate = scheme_.params().epsilon / dt_;
    factor_.resize(n);
    for (std::size_t i = 0; i < n; ++i) factor_[i] = rate / (rate + weight_[i]);
    // Neighbour weights c+ and c- per node and axis.
    const double h = scheme_.grid().spacing();
    const double nu = scheme_.params().artificial_viscosity;
    up_.resize(n * dim);
    down_.resize(n * dim);
    diag_.resize(n);
    const double r = dt_ / scheme_.params().epsilon;
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double diff = (scheme_.sampled().diffusion[d][i] + nu) / (h * h);
        const double lam = 0.5 * scheme_.params().lf_dissipation[d] / h;
        const double adv = 0.5 * advection_[i * dim + d] / h;
        up_[i * dim + d] = diff - adv + lam;
        down_[i * dim + d] = diff + adv + lam;
        total += up_[i * dim + d] + down_[i * dim + d];
      }
      diag_[i] = 1.0 - r * total;
    }
  }

  const TorusGrid& grid() const { return scheme_.grid(); }
  double dt() const { return dt_; }
  double epsilon() const { return scheme_.params().epsilon; }
  //! D_pH(x, central gradient of w), node-major, dim entries per node.
  std::span<const double> advection() const { return advection_; }
  //! (gamma^delta)'(w+ - psi) per node.
  std::span<const double> penalty_weight() const { return weight_; }
  //! k / (k + gamma'), the derivative of the implicit penalty map.
  std::span<const double> penalty_factor() const { return factor_; }

  //! Advection-diffusion generator G f (annihilates constants).
  void apply_generator(std::span<const double> f, std::span<double> out) const {
    const TorusGrid& g = grid();
    const int dim = g.dim();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double acc = 0.0;
      for (int d = 0; d < dim; ++d) {
        acc += up_[i * dim + d] * (f[g.neighbor(i, d, 1)] - f[i]) + down_[i * dim + d] * (f[g.neighbor(i, d, -1)] - f[i]);
      }
      out[i] = acc;
    }
  }

  void apply(std::span<const double> f, std::span<double> out) const {
    const TorusGrid& g = grid();
    const int dim = g.dim();
    const double r = dt_ / epsilon();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double acc = 0.0;
      for (int d = 0; d < dim; ++d) {
        acc += up_[i * dim + d] * f[g.neighbor(i, d, 1)] + down_[i * dim + d] * f[g.neighbor(i, d, -1)];
      }
      out[i] = factor_[i] * (diag_[i] * f[i] + r * acc);
    }
  }

  //! Exact algebraic transpose of apply().
  void apply_transpose(std::span<const double> g_in, std::span<double> out) const {
    const TorusGrid& g = grid();
    const int dim = g.dim();
    const double r = dt_ / epsilon();
    for (std::size_t m = 0; m < g.size(); ++m) {
      double acc = 0.0;
      for (int d = 0; d < dim; ++d) {
        const std::size_t below = g.neighbor(m, d, -1);  // row whose "up" neighbour is m
        const std::size_t above = g.neighbor(m, d, 1);   // row whose "down" neighbour is m
        acc += up_[below * dim + d] * factor_[below] * g_in[below] + down_[above * dim + d] * factor_[above] * g_in[above];
      }
      out[m] = diag_[m] * factor_[m] * g_in[m] + r * acc;
    }
  }

  std::vector<double> apply(std::span<const double> f) const {
    std::vector<double> out(f.size());
    apply(f, out);
    return out;
  }
  std::vector<double> apply_transpose(std::span<const double> g_in) const {
    std::vector<double> out(g_in.size());
    apply_transpose(g_in, out);
    return out;
  }
  std::vector<double> apply_generator(std::span<const double> f) const {
    std::vector<double> out(f.size());
    apply_generator(f, out);
    return out;
  }

 private:
  Scheme scheme_;
  std::vector<double> advection_;
  std::vector<double> weight_;
  std::vector<double> factor_;
  std::vector<double> up_;
  std::vector<double> down_;
  std::vector<double> diag_;
  double dt_;
};

//! Builds the linearization of the penalized step w -> w_next.
inline LinearizedStep linearize_step(const Scheme& scheme, std::span<const double> w,
                                     std::span<const double> w_next, double dt) {
  const TorusGrid& g = scheme.grid();
  const int dim = g.dim();
  const double inv_h = 1.0 / g.spacing();
  std::vector<double> adv(g.size() * dim);
  std::vector<double> weight(g.size());
  const auto psi = scheme.obstacle();
  for (std::size_t n = 0; n < g.size(); ++n) {
    for (int d = 0; d < dim; ++d) {
      adv[n * dim + d] =
          0.5 * (w[g.neighbor(n, d, 1)] - w[g.neighbor(n, d, -1)]) * inv_h - scheme.sampled().drift[d][n];
    }
    weight[n] = penalty_prime(scheme.params().penalty_delta, w_next[n] - psi[n]);
  }
  return LinearizedStep(scheme, std::move(adv), std::move(weight), dt);
}

//! One penalized step without building the linearization. @a rate_scratch
//! must have the field's size.
inline void advance_penalized(const Scheme& scheme, std::span<const double> w, double dt, std::span<double> out,
                              std::span<double> rate_scratch) {
  scheme.explicit_rate(w, rate_scratch);
  const double eps = scheme.params().epsilon;
  const double rate = eps / dt;
  const double delta = scheme.params().penalty_delta;
  const auto psi = scheme.obstacle();
  const double r = dt / eps;
  for (std::size_t n = 0; n < w.size(); ++n) {
    out[n] = detail::implicit_penalty(w[n] + r * rate_scratch[n], psi[n], rate, delta);
  }
}

struct PenalizedStep {
  std::vector<double> w_next;
  LinearizedStep linearized;
};

//! Explicit monotone update of eps w_t - tr(A D^2 w) + H + gamma^delta(w - psi) = nu Lap w,
//! with the penalty taken implicitly node by node.
inline PenalizedStep step_penalized(const Scheme& scheme, std::span<const double> w, double dt) {
  scheme.check_dt(dt);
  std::vector<double> next(w.size()), scratch(w.size());
  advance_penalized(scheme, w, dt, next, scratch);
  auto lin = linearize_step(scheme, w, next, dt);
  return {std::move(next), std::move(lin)};
}

inline void advance_projected(const Scheme& scheme, std::span<const double> u, double dt, std::span<double> out,
                              std::span<double> rate_scratch) {
  scheme.explicit_rate(u, rate_scratch);
  const auto psi = scheme.obstacle();
  const double r = dt / scheme.params().epsilon;
  for (std::size_t n = 0; n < u.size(); ++n) out[n] = std::min(psi[n], u[n] + r * rate_scratch[n]);
}

//! Explicit step of the unconstrained equation followed by u = min(psi, .).
inline std::vector<double> step_projected(const Scheme& scheme, std::span<const double> u, double dt) {
  scheme.check_dt(dt);
  std::vector<double> next(u.size()), scratch(u.size());
  advance_projected(scheme, u, dt, next, scratch);
  return next;
}

}  // namespace ohj

#endif  // OHJ_SCHEMES_HPP_
