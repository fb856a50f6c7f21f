#ifndef OHJ_PROBLEM_HPP_
#define OHJ_PROBLEM_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ohj/error.hpp"
#include "ohj/grid.hpp"
#include "ohj/trig_poly.hpp"

namespace ohj {

inline constexpr const char* kQuadraticFamily = "quadratic-with-drift";

//! Obstacle level used to switch the constraint off.
inline constexpr double kInactiveObstacle = 1.0e6;

//! H(x,p) = 1/2 |p - b(x)|^2 + V(x). The Hessian in p is the identity, so the
//! convexity constant is theta = 1/2.
struct HamiltonianSpec {
  std::string family = kQuadraticFamily;
  TrigPoly potential;
  std::array<TrigPoly, 2> drift;
  double theta = 0.5;
};

enum class DiffusionForm { zero, constant_isotropic, diagonal_variable };

inline const char* to_string(DiffusionForm f) {
  switch (f) {
    case DiffusionForm::zero: return "zero";
    case DiffusionForm::constant_isotropic: return "constant-isotropic";
    case DiffusionForm::diagonal_variable: return "diagonal-variable";
  }
  return "?";
}

//! Diagonal diffusion matrix A(x) = diag(a^11(x), a^22(x)).
struct DiffusionSpec {
  DiffusionForm form = DiffusionForm::zero;
  std::array<TrigPoly, 2> coefficients;

  static DiffusionSpec none() { return {}; }
  static DiffusionSpec isotropic(double a) {
    return {DiffusionForm::constant_isotropic, {TrigPoly(a), TrigPoly(a)}};
  }
  static DiffusionSpec diagonal(TrigPoly a11, TrigPoly a22 = TrigPoly()) {
    return {DiffusionForm::diagonal_variable, {std::move(a11), std::move(a22)}};
  }

  double coefficient(int axis, const Vec2& x) const {
    if (form == DiffusionForm::zero) return 0.0;
    return coefficients[axis].value(x);
  }
};

struct ProblemSpec {
  std::string name = "custom";
  int dim = 1;
  HamiltonianSpec hamiltonian;
  DiffusionSpec diffusion;
  TrigPoly obstacle;
  TrigPoly initial;
  //! A priori bound on |Du| used to size the Lax-Friedrichs dissipation.
  double lipschitz_hint = 1.0;

  bool obstacle_inactive() const {
    return obstacle.is_constant() && obstacle.constant_term() >= kInactiveObstacle;
  }
};

//! Same problem with the constraint switched off (psi far above u0).
inline ProblemSpec without_obstacle(ProblemSpec p) {
  p.obstacle = TrigPoly::constant(kInactiveObstacle);
  return p;
}

struct HamiltonianValue {
  double value = 0.0;
  Vec2 grad_p{0.0, 0.0};
  Vec2 grad_x{0.0, 0.0};
};

inline HamiltonianValue hamiltonian_eval(const HamiltonianSpec& h, const Vec2& x, const Vec2& p) {
  const Vec2 b{h.drift[0].value(x), h.drift[1].value(x)};
  const Vec2 q{p[0] - b[0], p[1] - b[1]};
  HamiltonianValue out;
  out.value = 0.5 * norm2(q) + h.potential.value(x);
  out.grad_p = q;
  // D_x H = DV - (Db)^T (p - b)
  const Vec2 dv = h.potential.gradient(x);
  const Vec2 db0 = h.drift[0].gradient(x);
  const Vec2 db1 = h.drift[1].gradient(x);
  out.grad_x = {dv[0] - db0[0] * q[0] - db1[0] * q[1], dv[1] - db0[1] * q[0] - db1[1] * q[1]};
  return out;
}

//! Legendre transform sup_p { p.q - H(x,p) } in closed form.
inline double lagrangian_eval(const HamiltonianSpec& h, const Vec2& x, const Vec2& q) {
  if (h.family != kQuadraticFamily) {
    throw InvalidArgument("closed-form Lagrangian requires the quadratic-with-drift family, got '" +
                          h.family + "'");
  }
  const Vec2 b{h.drift[0].value(x), h.drift[1].value(x)};
  return 0.5 * norm2(q) + dot(b, q) - h.potential.value(x);
}

// ---------------------------------------------------------------------------
// Standing assumptions

struct AssumptionCheck {
  std::string id;
  bool passed = true;
  double measured = 0.0;
  std::string detail;
  std::vector<std::size_t> nodes;  // offending nodes
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  //! Constant C in |D_x H| <= C (1 + |p|^2) measured over the p-box.
  double growth_constant = 0.0;
  double p_box = 0.0;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const AssumptionCheck& check(const std::string& id) const {
    for (const auto& c : checks) {
      if (c.id == id) return c;
    }
    throw InvalidArgument("no assumption check named " + id);
  }
  std::string summary() const {
    std::ostringstream os;
    for (const auto& c : checks) os << c.id << ": " << (c.passed ? "ok" : "VIOLATED") << " " << c.detail << "\n";
    return os.str();
  }
};

inline constexpr double kPsdTolerance = 1e-14;

namespace detail {

inline std::string node_label(const TorusGrid& g, std::size_t n) {
  auto x = g.coords(n);
  std::ostringstream os;
  os << "node " << n << " (x=" << x[0];
  if (g.dim() == 2) os << ", y=" << x[1];
  os << ")";
  return os.str();
}

inline void describe_nodes(AssumptionCheck& c, const TorusGrid& g, const std::string& what) {
  std::ostringstream os;
  os << what << " at " << c.nodes.size() << " node(s)";
  if (!c.nodes.empty()) os << ", first " << node_label(g, c.nodes.front());
  c.detail = os.str();
}

}  // namespace detail

//! Checks convexity, growth, diffusion PSD and obstacle compatibility on the
//! grid nodes. Violations are reported, never thrown.
inline ValidationReport validate_problem(const ProblemSpec& problem, const TorusGrid& grid,
                                         double p_box = 4.0) {
  ValidationReport rep;
  rep.p_box = p_box;

  AssumptionCheck dim{"dimension", problem.dim == grid.dim(), double(problem.dim), "", {}};
  if (problem.dim == 1) {
    const bool flat = !problem.hamiltonian.potential.depends_on_y() &&
                      !problem.hamiltonian.drift[0].depends_on_y() && problem.hamiltonian.drift[1].is_zero() &&
                      !problem.obstacle.depends_on_y() && !problem.initial.depends_on_y() &&
                      !problem.diffusion.coefficients[0].depends_on_y();
    dim.passed = dim.passed && flat;
  }
  dim.detail = dim.passed ? "data consistent with the grid dimension"
                          : "problem data inconsistent with a " + std::to_string(grid.dim()) + "D grid";
  rep.checks.push_back(dim);

  // (H1): D_pp H = I for the quadratic family.
  AssumptionCheck h1{"H1-convexity", true, 1.0, "", {}};
  if (problem.hamiltonian.family != kQuadraticFamily) {
    h1.passed = false;
    h1.detail = "unsupported Hamiltonian family " + problem.hamiltonian.family;
  } else {
    h1.passed = problem.hamiltonian.theta > 0.0 && 2.0 * problem.hamiltonian.theta <= 1.0;
    h1.detail = "D2_pp H = I, requires 2*theta <= 1 with theta = " + std::to_string(problem.hamiltonian.theta);
  }
  rep.checks.push_back(h1);

  // (H2): report the growth constant over the momentum box.
  const int samples = 9;
  double growth = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec2 x = grid.coords(n);
    for (int i = 0; i < samples; ++i) {
      for (int j = 0; j < (grid.dim() == 2 ? samples : 1); ++j) {
        const Vec2 p{-p_box + 2.0 * p_box * i / (samples - 1),
                     grid.dim() == 2 ? -p_box + 2.0 * p_box * j / (samples - 1) : 0.0};
        const auto hv = hamiltonian_eval(problem.hamiltonian, x, p);
        growth = std::max(growth, std::sqrt(norm2(hv.grad_x)) / (1.0 + norm2(p)));
      }
    }
  }
  rep.growth_constant = growth;
  AssumptionCheck h2{"H2-growth", std::isfinite(growth), growth, "", {}};
  h2.detail = "max |D_x H| / (1 + |p|^2) over |p_i| <= " + std::to_string(p_box) + " is " + std::to_string(growth);
  rep.checks.push_back(h2);

  // (H3): diagonal A is PSD iff each diagonal entry is nonnegative.
  AssumptionCheck h3{"H3-psd", true, 0.0, "", {}};
  double min_a = 0.0;
  bool first = true;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec2 x = grid.coords(n);
    for (int d = 0; d < grid.dim(); ++d) {
      const double a = problem.diffusion.coefficient(d, x);
      min_a = first ? a : std::min(min_a, a);
      first = false;
      if (a < -kPsdTolerance || !std::isfinite(a)) {
        h3.nodes.push_back(n);
        break;
      }
    }
  }
  h3.measured = min_a;
  h3.passed = h3.nodes.empty();
  detail::describe_nodes(h3, grid, h3.passed ? "A(x) >= 0 holds" : "negative diffusion entry");
  rep.checks.push_back(h3);

  // (H4): u0 <= psi.
  AssumptionCheck h4{"H4-compatibility", true, 0.0, "", {}};
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec2 x = grid.coords(n);
    const double gap = problem.initial.value(x) - problem.obstacle.value(x);
    worst = std::max(worst, gap);
    if (gap > 0.0) h4.nodes.push_back(n);
  }
  h4.measured = worst;
  h4.passed = h4.nodes.empty();
  detail::describe_nodes(h4, grid, h4.passed ? "u0 <= psi holds" : "u0 > psi");
  rep.checks.push_back(h4);
  return rep;
}

// ---------------------------------------------------------------------------
// Builtin problems

inline std::vector<std::string> catalog_keys() {
  return {"eikonal-cos-1d",   "eikonal-visc-1d", "supercritical-1d",   "subcritical-obstacle-1d",
          "critical-1d",      "obstacle-cos-1d", "degenerate-diag-2d"};
}

inline ProblemSpec catalog_problem(const std::string& key) {
  ProblemSpec p;
  p.name = key;
  // sin^2(2 pi x) = 1/2 - 1/2 cos(4 pi x)
  auto sin_sq = [](double scale, int axis) {
    return TrigPoly(0.5 * scale) + (axis == 0 ? TrigPoly::cosine(-0.5 * scale, 2, 0) : TrigPoly::cosine(-0.5 * scale, 0, 2));
  };
  if (key == "eikonal-cos-1d" || key == "eikonal-visc-1d") {
    p.hamiltonian.potential = TrigPoly::cosine(1.0, 1);
    if (key == "eikonal-visc-1d") p.diffusion = DiffusionSpec::isotropic(0.05);
    p.obstacle = TrigPoly::constant(0.0);
    p.initial = TrigPoly::constant(-1.0);
    p.lipschitz_hint = 2.0;
  } else if (key == "supercritical-1d") {
    p.hamiltonian.potential = TrigPoly::constant(1.0);
    p.obstacle = TrigPoly::constant(0.0);
    p.initial = TrigPoly::constant(0.0);
  } else if (key == "subcritical-obstacle-1d") {
    p.hamiltonian.potential = TrigPoly::constant(-1.0);
    p.obstacle = TrigPoly::constant(0.0);
    p.initial = TrigPoly::constant(-1.0);
  } else if (key == "critical-1d") {
    p.obstacle = TrigPoly::constant(0.0);
    p.initial = TrigPoly(-0.5) + TrigPoly::cosine(0.25, 1);
    p.lipschitz_hint = 1.6;
  } else if (key == "obstacle-cos-1d") {
    p.hamiltonian.potential = TrigPoly(-1.0) + TrigPoly::cosine(0.2, 1);
    p.diffusion = DiffusionSpec::diagonal(sin_sq(0.02, 0));
    p.obstacle = TrigPoly::sine(0.25, 1);
    p.initial = p.obstacle - 1.0;
    p.lipschitz_hint = 1.6;
  } else if (key == "degenerate-diag-2d") {
    p.dim = 2;
    p.hamiltonian.potential = TrigPoly(-0.4) + TrigPoly::cosine(0.1, 1, 0) + TrigPoly::cosine(0.1, 0, 1);
    p.hamiltonian.drift[0] = TrigPoly::sine(0.2, 0, 1);
    p.diffusion = DiffusionSpec::diagonal(sin_sq(0.02, 0), sin_sq(0.02, 1));
    p.obstacle = TrigPoly::cosine(0.075, 1, 1) + TrigPoly::cosine(0.075, 1, -1);
    p.initial = p.obstacle - 1.0;
    p.lipschitz_hint = 1.5;
  } else {
    throw InvalidArgument("unknown catalog problem '" + key + "'");
  }
  return p;
}

}  // namespace ohj

#endif  // OHJ_PROBLEM_HPP_
