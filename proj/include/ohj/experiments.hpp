#ifndef OHJ_EXPERIMENTS_HPP_
#define OHJ_EXPERIMENTS_HPP_

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "ohj/adjoint.hpp"
#include "ohj/cauchy.hpp"
#include "ohj/config.hpp"
#include "ohj/ergodic.hpp"
#include "ohj/export.hpp"
#include "ohj/report.hpp"
#include "ohj/stopping_mc.hpp"

namespace ohj {

struct RunContext {
  ArtifactSink sink;
  int jobs = 1;
  std::uint64_t seed = 2024;
};

//! Runs f(0..n-1) on up to `jobs` threads; results are stored by index, so
//! the outcome does not depend on scheduling. The first exception (by index)
//! is rethrown.
template <class F>
auto parallel_map(std::size_t n, int jobs, F&& f) -> std::vector<std::invoke_result_t<F&, std::size_t>> {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, int(n)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

namespace detail {

inline std::vector<std::string> one_d_catalog() {
  std::vector<std::string> out;
  for (const auto& k : catalog_keys()) {
    if (catalog_problem(k).dim == 1) out.push_back(k);
  }
  return out;
}

//! [problem] section if present, else "<section>.problem", else "run.problem",
//! else the experiment default.
inline ProblemSpec resolve_problem(const Config& cfg, const std::string& section, const std::string& fallback) {
  if (cfg.has_section("problem")) return problem_from_config(cfg);
  std::string key = cfg.get_string("run", "problem", fallback);
  key = cfg.get_string(section, "problem", key);
  try {
    return catalog_problem(key);
  } catch (const InvalidArgument& e) {
    throw ConfigError(section + ".problem: " + e.what());
  }
}

inline int positive_int(const Config& cfg, const std::string& s, const std::string& k, long fallback) {
  const long v = cfg.get_int(s, k, fallback);
  if (v <= 0) throw ConfigError(s + "." + k + " must be positive");
  return int(v);
}

inline std::vector<double> eps_list(const Config& cfg, const std::string& s, const std::string& k,
                                    std::vector<double> fallback) {
  auto v = cfg.get_list(s, k, std::move(fallback));
  for (double e : v) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError(s + "." + k + ": epsilon values must lie in (0,1)");
  }
  return v;
}

inline SchemeParams scheme_params(const Config& cfg, const std::string& s) {
  SchemeParams p;
  p.cfl_safety = cfg.get_double(s, "cfl_safety", p.cfl_safety);
  if (!(p.cfl_safety > 0.0 && p.cfl_safety <= 1.0)) throw ConfigError(s + ".cfl_safety must lie in (0,1]");
  return p;
}

inline std::size_t count_non_decreasing(const std::vector<double>& v) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (!(v[i + 1] < v[i])) ++bad;
  }
  return bad;
}

inline TorusGrid grid_for(const ProblemSpec& p, int N) { return TorusGrid(p.dim, N); }

}  // namespace detail

// ---------------------------------------------------------------------------
// solve

struct SolveParams {
  std::string mode = "obstacle";  // obstacle | penalized
  int N = 128;
  double T = 2.0;
  double epsilon = 0.2;
  double delta = 0.0;  // 0 = epsilon^2
  std::size_t snapshots = 20;
  SchemeParams scheme;

  static SolveParams from_config(const Config& c) {
    SolveParams p;
    p.mode = c.get_string("solve", "mode", p.mode);
    if (p.mode != "obstacle" && p.mode != "penalized") throw ConfigError("solve.mode must be obstacle or penalized");
    p.N = detail::positive_int(c, "solve", "N", p.N);
    p.T = c.get_double("solve", "T", p.T);
    if (!(p.T > 0.0)) throw ConfigError("solve.T must be positive");
    p.epsilon = c.get_double("solve", "epsilon", p.epsilon);
    p.delta = c.get_double("solve", "delta", p.delta);
    p.snapshots = std::size_t(detail::positive_int(c, "solve", "snapshots", long(p.snapshots)));
    p.scheme = detail::scheme_params(c, "solve");
    return p;
  }
  Json to_json() const {
    return {{"mode", mode},       {"N", N}, {"T", T}, {"epsilon", epsilon}, {"delta", delta},
            {"snapshots", snapshots}, {"cfl_safety", scheme.cfl_safety}};
  }
};

//! Forward run with assumption checks, feasibility and trajectory export.
inline ExperimentReport run_solve(const ProblemSpec& problem, const SolveParams& sp, const RunContext& ctx) {
  ExperimentReport rep("solve");
  rep.config() = sp.to_json();
  rep.config()["problem"] = problem_to_json(problem);
  const TorusGrid grid = detail::grid_for(problem, sp.N);
  const auto val = validate_problem(problem, grid);
  for (const auto& c : val.checks) rep.require(c.id, c.passed, c.measured, c.detail);
  if (!val.ok()) {
    rep.finish();
    return rep;
  }
  SolveOptions opt;
  opt.snapshot_count = sp.snapshots;
  SampledProblem s(problem, grid);
  double excess = -std::numeric_limits<double>::infinity();
  opt.observer = [&](std::size_t, double, std::span<const double> u) {
    for (std::size_t n = 0; n < u.size(); ++n) excess = std::max(excess, u[n] - s.obstacle[n]);
  };
  FieldTrajectory traj;
  if (sp.mode == "obstacle") {
    traj = solve_obstacle(problem, sp.T, grid, sp.scheme, opt);
    rep.scalar("max_u_minus_psi", excess);
    rep.require_le("obstacle-feasibility", excess, 0.0, "max over nodes and steps of u - psi");
  } else {
    const double delta = sp.delta > 0.0 ? sp.delta : sp.epsilon * sp.epsilon;
    traj = solve_penalized(problem, sp.epsilon, delta, grid, sp.scheme, opt);
    const double C = obstacle_supersolution_constant(problem, grid);
    rep.scalar("max_w_minus_psi", excess);
    rep.scalar("C_psi", C);
    rep.require_le("penalty-bound", std::max(excess, 0.0), C * std::pow(delta, 0.25) * (1.0 + 1e-12),
                   "(w - psi)_+ <= C_psi delta^{1/4}");
  }
  rep.scalar("dt", traj.dt);
  rep.scalar("steps", double(traj.steps));
  rep.scalar("final_min", *std::min_element(traj.final_field().values.begin(), traj.final_field().values.end()));
  rep.scalar("final_max", *std::max_element(traj.final_field().values.begin(), traj.final_field().values.end()));
  rep.scalar("lipschitz_final", discrete_lipschitz(grid, traj.final_field().view()));
  export_trajectory(traj, ctx.sink, &rep);
  rep.finish();
  return rep;
}

// ---------------------------------------------------------------------------
// ergodic

struct ErgodicParams {
  std::vector<std::string> problems = detail::one_d_catalog();
  int N = 512;
  std::vector<double> alphas{0.1, 0.05, 0.025};
  double longtime_T = 20.0;
  std::string oracle_problem = "eikonal-cos-1d";
  int oracle_N = 2048;
  double oracle_alpha = 1e-3;
  double oracle_delta = 1e-6;
  //! max V for the eikonal family.
  double analytic = 1.0;
  double tolerance = 0.02;
  SchemeParams scheme;

  static ErgodicParams from_config(const Config& c) {
    ErgodicParams p;
    if (c.has("run", "problem")) p.problems = {c.get_string("run", "problem", "")};
    p.problems = c.get_names("ergodic", "problems", p.problems);
    p.N = detail::positive_int(c, "ergodic", "N", p.N);
    p.alphas = c.get_list("ergodic", "alphas", p.alphas);
    for (double a : p.alphas) {
      if (!(a > 0.0)) throw ConfigError("ergodic.alphas must be positive");
    }
    if (p.alphas.size() < 2) throw ConfigError("ergodic.alphas needs at least two values");
    p.longtime_T = c.get_double("ergodic", "longtime_T", p.longtime_T);
    p.oracle_problem = c.get_string("ergodic", "oracle_problem", p.oracle_problem);
    p.oracle_N = detail::positive_int(c, "ergodic", "oracle_N", p.oracle_N);
    p.oracle_alpha = c.get_double("ergodic", "oracle_alpha", p.oracle_alpha);
    p.oracle_delta = c.get_double("ergodic", "oracle_delta", p.oracle_delta);
    p.analytic = c.get_double("ergodic", "analytic", p.analytic);
    p.tolerance = c.get_double("ergodic", "tolerance", p.tolerance);
    p.scheme = detail::scheme_params(c, "ergodic");
    return p;
  }
  Json to_json() const {
    return {{"problems", problems},       {"N", N},
            {"alphas", alphas},           {"delta_rule", "alpha^2"},
            {"longtime_T", longtime_T},   {"oracle_problem", oracle_problem},
            {"oracle_N", oracle_N},       {"oracle_alpha", oracle_alpha},
            {"oracle_delta", oracle_delta}, {"analytic", analytic},
            {"tolerance", tolerance},     {"cfl_safety", scheme.cfl_safety}};
  }
};

//! Discounted (extrapolated) and long-time estimates of c_H per problem,
//! the fine-grid oracle, and the direct cell-problem solve with its corrector.
inline ExperimentReport run_ergodic(const ErgodicParams& ep, const RunContext& ctx) {
  ExperimentReport rep("ergodic");
  rep.config() = ep.to_json();
  struct Cell {
    std::string key;
    double discounted = 0.0, longtime = 0.0, direct = 0.0;
    std::vector<double> raw;
    ScalarField corrector;
  };
  auto cells = parallel_map(ep.problems.size(), ctx.jobs, [&](std::size_t i) {
    Cell c;
    c.key = ep.problems[i];
    const ProblemSpec p = catalog_problem(c.key);
    const TorusGrid g = detail::grid_for(p, ep.N);
    const auto ex = ergodic_constant_extrapolated(p, ep.alphas, g, ep.scheme);
    c.discounted = ex.c_estimate;
    c.raw = ex.raw_estimates;
    c.longtime = ergodic_constant_longtime(without_obstacle(p), ep.longtime_T, g, ep.scheme);
    const auto d = ergodic_constant_direct(p, 0.0, g, ep.scheme);
    c.direct = d.c_estimate;
    c.corrector = d.corrector;
    return c;
  });
  CsvWriter constants({"problem", "estimator", "c"});
  CsvWriter correctors({"problem", "x", "y", "v"});
  for (const auto& c : cells) {
    rep.scalar(c.key + "/discounted_extrapolated", c.discounted);
    rep.scalar(c.key + "/longtime", c.longtime);
    rep.scalar(c.key + "/direct", c.direct);
    rep.series(c.key + "/discounted_raw", c.raw);
    rep.require_le("coherence/" + c.key, std::abs(c.discounted - c.longtime), ep.tolerance,
                   "|discounted - long-time|");
    rep.info("direct/" + c.key, c.direct, "bordered cell-problem solve");
    constants.row({c.key, std::string("discounted_extrapolated"), c.discounted});
    constants.row({c.key, std::string("longtime"), c.longtime});
    constants.row({c.key, std::string("direct"), c.direct});
    for (std::size_t n = 0; n < c.corrector.grid.size(); ++n) {
      const Vec2 x = c.corrector.grid.coords(n);
      correctors.row({c.key, x[0], x[1], c.corrector.values[n]});
    }
    if (c.key == ep.oracle_problem) {
      const ProblemSpec p = catalog_problem(c.key);
      const TorusGrid fine = detail::grid_for(p, ep.oracle_N);
      const double oracle = ergodic_constant_discounted(p, ep.oracle_alpha, ep.oracle_delta, fine, ep.scheme).c_estimate;
      rep.scalar(c.key + "/oracle", oracle);
      constants.row({c.key, std::string("oracle"), oracle});
      rep.require_le("oracle/" + c.key, std::abs(c.discounted - oracle), ep.tolerance, "|discounted - fine-grid oracle|");
      rep.require_le("analytic/" + c.key, std::abs(c.discounted - ep.analytic), ep.tolerance,
                     "|discounted - max V|");
    }
  }
  ctx.sink.write_csv("constants.csv", constants, &rep);
  ctx.sink.write_csv("correctors.csv", correctors, &rep);
  rep.finish();
  return rep;
}

// ---------------------------------------------------------------------------
// dichotomy

struct DichotomyParams {
  int N = 256;
  double T_max = 20.0;
  DichotomyOptions options;
  SchemeParams scheme;

  static DichotomyParams from_config(const Config& c) {
    DichotomyParams p;
    p.N = detail::positive_int(c, "dichotomy", "N", p.N);
    p.T_max = c.get_double("dichotomy", "T_max", p.T_max);
    if (!(p.T_max > 0.0)) throw ConfigError("dichotomy.T_max must be positive");
    auto& o = p.options;
    o.critical_band = c.get_double("dichotomy", "critical_band", o.critical_band);
    o.oscillation_tol = c.get_double("dichotomy", "oscillation_tol", o.oscillation_tol);
    o.contact_time_tol = c.get_double("dichotomy", "contact_time_tol", o.contact_time_tol);
    o.limit_tol = c.get_double("dichotomy", "limit_tol", o.limit_tol);
    o.flatness_tol = c.get_double("dichotomy", "flatness_tol", o.flatness_tol);
    o.snapshots = std::size_t(detail::positive_int(c, "dichotomy", "snapshots", long(o.snapshots)));
    p.scheme = detail::scheme_params(c, "dichotomy");
    return p;
  }
};

inline ExperimentReport run_dichotomy(const ProblemSpec& problem, const DichotomyParams& dp, const RunContext& ctx) {
  auto rep = dichotomy_experiment(problem, detail::grid_for(problem, dp.N), dp.T_max, dp.scheme, dp.options);
  rep.config()["problem"] = problem_to_json(problem);
  (void)ctx;
  return rep;
}

// ---------------------------------------------------------------------------
// rate-study

struct RateStudyParams {
  int N = 1024;
  std::vector<double> epsilon{0.4, 0.2, 0.1, 0.05};
  double min_slope = 0.3;
  SchemeParams scheme;

  static RateStudyParams from_config(const Config& c) {
    RateStudyParams p;
    p.N = detail::positive_int(c, "rate-study", "N", p.N);
    p.epsilon = detail::eps_list(c, "rate-study", "epsilon", p.epsilon);
    p.min_slope = c.get_double("rate-study", "min_slope", p.min_slope);
    p.scheme = detail::scheme_params(c, "rate-study");
    return p;
  }
  Json to_json() const {
    return {{"N", N}, {"epsilon", epsilon}, {"delta_rule", "eps^2"}, {"min_slope", min_slope},
            {"cfl_safety", scheme.cfl_safety}};
  }
};

//! Stability gap ||w^{eps,eps^2}(.,1) - u(.,1/eps)|| over an epsilon sweep.
inline ExperimentReport run_rate_study(const ProblemSpec& problem, const RateStudyParams& rp, const RunContext& ctx) {
  ExperimentReport rep("rate-study");
  rep.config() = rp.to_json();
  rep.config()["problem"] = problem_to_json(problem);
  const TorusGrid grid = detail::grid_for(problem, rp.N);
  SchemeParams params = rp.scheme;
  params.lf_dissipation = resolve_lf_dissipation(problem, grid);
  auto gaps = parallel_map(rp.epsilon.size(), ctx.jobs,
                           [&](std::size_t i) { return stability_gap(problem, rp.epsilon[i], grid, params); });
  CsvWriter csv({"epsilon", "delta", "gap", "h", "dt_rescaled", "dt_physical", "steps"});
  std::vector<double> g;
  for (const auto& m : gaps) {
    g.push_back(m.gap);
    csv.row({m.epsilon, m.delta, m.gap, m.h, m.dt_rescaled, m.dt_physical, (long long)m.steps});
  }
  rep.series("epsilon", rp.epsilon);
  rep.series("gap", g);
  const double slope = loglog_slope(rp.epsilon, g);
  rep.scalar("fitted_slope", slope);
  rep.scalar("lf_dissipation", params.lf_dissipation[0]);
  rep.require_le("monotone-decreasing", double(detail::count_non_decreasing(g)), 0.0,
                 "pairs where the gap does not decrease with epsilon");
  rep.require_ge("fitted-slope", slope, rp.min_slope, "log-log slope of gap against epsilon");
  ctx.sink.write_csv("rate_study.csv", csv, &rep);
  rep.finish();
  return rep;
}

// ---------------------------------------------------------------------------
// adjoint-audit

struct AdjointAuditParams {
  int N = 128;
  double epsilon = 0.2;
  std::size_t candidates = 3;
  bool refine = true;
  bool key_estimates = true;
  int key_N = 128;
  std::vector<double> key_epsilon{0.4, 0.2, 0.1, 0.05};
  double refine_factor = 3.0;
  SchemeParams scheme;

  static AdjointAuditParams from_config(const Config& c) {
    AdjointAuditParams p;
    const std::string s = "adjoint-audit";
    p.N = detail::positive_int(c, s, "N", p.N);
    p.epsilon = c.get_double(s, "epsilon", p.epsilon);
    if (!(p.epsilon > 0.0 && p.epsilon < 1.0)) throw ConfigError(s + ".epsilon must lie in (0,1)");
    p.candidates = std::size_t(detail::positive_int(c, s, "candidates", long(p.candidates)));
    p.refine = c.get_bool(s, "refine", p.refine);
    p.key_estimates = c.get_bool(s, "key_estimates", p.key_estimates);
    p.key_N = detail::positive_int(c, s, "key_N", p.key_N);
    p.key_epsilon = detail::eps_list(c, s, "key_epsilon", p.key_epsilon);
    p.refine_factor = c.get_double(s, "refine_factor", p.refine_factor);
    p.scheme = detail::scheme_params(c, s);
    return p;
  }
  Json to_json() const {
    return {{"N", N},
            {"epsilon", epsilon},
            {"delta_rule", "eps^2"},
            {"viscosity_rule", "delta^2"},
            {"candidates", candidates},
            {"refine", refine},
            {"refinement", "(h, dt) -> (h/2, dt/4), shared Lax-Friedrichs dissipation"},
            {"refine_factor", refine_factor},
            {"key_estimates", key_estimates},
            {"key_N", key_N},
            {"key_epsilon", key_epsilon},
            {"cfl_safety", scheme.cfl_safety}};
  }
};

namespace detail {

inline FieldTrajectory penalized_with_log(const ProblemSpec& p, double eps, const TorusGrid& g, const SchemeParams& sp,
                                          std::size_t steps = 0) {
  SolveOptions o;
  o.keep_step_log = true;
  o.store = StorePolicy::endpoints;
  o.steps = steps;
  return solve_penalized(p, eps, eps * eps, g, sp, o);
}

}  // namespace detail

//! Adjoint identities at the top terminal candidates, energy conservation
//! under refinement, and the key-estimate integrals over an epsilon schedule.
inline ExperimentReport run_adjoint_audit(const ProblemSpec& problem, const AdjointAuditParams& ap,
                                          const RunContext& ctx) {
  ExperimentReport rep("adjoint-audit");
  rep.config() = ap.to_json();
  rep.config()["problem"] = problem_to_json(problem);
  if (problem.dim != 1 && ap.refine) throw ConfigError("adjoint-audit.refine requires a 1D problem");
  const TorusGrid grid = detail::grid_for(problem, ap.N);
  SchemeParams params = ap.scheme;
  params.lf_dissipation = resolve_lf_dissipation(problem, grid);

  const auto forward = detail::penalized_with_log(problem, ap.epsilon, grid, params);
  const auto cands = terminal_candidates(forward, ap.candidates);
  rep.series("x0_candidates", std::vector<double>(cands.begin(), cands.end()));
  AdjointOptions aopt;
  aopt.seed = ctx.seed;

  std::vector<double> drift, recon, ident2;
  EnergySeries coarse_energy;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto adj = solve_adjoint(forward, cands[i], aopt);
    const auto mass = adjoint_mass_report(adj, forward);
    const auto es = energy_series(forward, adj);
    drift.push_back(es.drift);
    recon.push_back(es.reconstruction);
    ident2.push_back(mass.find_check("identity-ii")->measured);
    if (i == 0) {
      rep.absorb(mass, "mass");
      coarse_energy = es;
      CsvWriter mcsv({"step", "t", "mass", "penalty_flux"});
      for (std::size_t k = 0; k <= adj.steps(); ++k) {
        mcsv.row({(long long)k, adj.times[k], adj.mass[k], k < adj.steps() ? adj.penalty_flux[k] : 0.0});
      }
      ctx.sink.write_csv("adjoint_mass.csv", mcsv, &rep);
      CsvWriter ecsv({"t", "energy"});
      for (std::size_t k = 0; k < es.energy.size(); ++k) ecsv.row({es.times[k], es.energy[k]});
      ctx.sink.write_csv("energy.csv", ecsv, &rep);
      CsvWriter scsv({"x", "sigma_0", "sigma_1"});
      for (std::size_t n = 0; n < grid.size(); ++n) {
        scsv.row({grid.coords(n)[0], adj.sigma.front()[n], adj.sigma.back()[n]});
      }
      ctx.sink.write_csv("sigma_endpoints.csv", scsv, &rep);
    } else {
      // Identities must hold wherever x0 is placed.
      rep.absorb(mass, "mass-x0-" + std::to_string(i));
    }
  }
  rep.series("x0_drift", drift);
  rep.series("x0_reconstruction", recon);
  rep.series("x0_identity_ii", ident2);
  rep.scalar("energy/drift", coarse_energy.drift);
  rep.scalar("energy/reconstruction", coarse_energy.reconstruction);
  rep.scalar("energy/terminal_rate", coarse_energy.terminal_rate);
  {
    const auto [lo, hi] = std::minmax_element(drift.begin(), drift.end());
    rep.info("x0-sensitivity-drift", *lo > 0.0 ? *hi / *lo : 0.0, "max/min drift over the terminal candidates");
  }

  if (ap.refine) {
    const TorusGrid fine(1, 2 * ap.N);
    const auto fwd = detail::penalized_with_log(problem, ap.epsilon, fine, params, 4 * forward.steps);
    const auto adj = solve_adjoint(fwd, 2 * cands[0], aopt);
    const auto es = energy_series(fwd, adj);
    const double rd = es.drift > 0.0 ? coarse_energy.drift / es.drift : std::numeric_limits<double>::infinity();
    const double rr = es.reconstruction > 0.0 ? coarse_energy.reconstruction / es.reconstruction
                                              : std::numeric_limits<double>::infinity();
    rep.scalar("energy/fine_drift", es.drift);
    rep.scalar("energy/fine_reconstruction", es.reconstruction);
    rep.scalar("energy/fine_steps", double(fwd.steps));
    rep.require_ge("energy/drift-refinement-ratio", rd, ap.refine_factor, "coarse/fine drift");
    rep.require_ge("energy/reconstruction-refinement-ratio", rr, ap.refine_factor, "coarse/fine reconstruction residual");
  }

  if (ap.key_estimates) {
    const TorusGrid kg = detail::grid_for(problem, ap.key_N);
    SchemeParams kp = ap.scheme;
    kp.lf_dissipation = resolve_lf_dissipation(problem, kg);
    auto cells = parallel_map(ap.key_epsilon.size(), ctx.jobs, [&](std::size_t i) {
      const double e = ap.key_epsilon[i];
      const auto f = detail::penalized_with_log(problem, e, kg, kp);
      const auto adj = solve_adjoint(f, terminal_candidates(f, 1)[0], aopt);
      const auto V = solve_approx_ergodic(problem, e, kg, kp);
      return key_estimate_integrals(f, adj, V);
    });
    const auto key = key_estimate_report(cells);
    rep.absorb(key, "key");
    CsvWriter kcsv({"epsilon", "hessian_energy", "gradient_gap", "penalty_sum", "weighted_hessian_gap",
                    "diffusion_hessian_gap", "diffusion_trace_gap"});
    for (const auto& k : cells) {
      kcsv.row({k.epsilon, k.hessian_energy, k.gradient_gap, k.penalty_sum, k.weighted_hessian_gap,
                k.diffusion_hessian_gap, k.diffusion_trace_gap});
    }
    ctx.sink.write_csv("key_estimates.csv", kcsv, &rep);
  }
  rep.finish();
  return rep;
}

// ---------------------------------------------------------------------------
// key-stability

struct KeyStabilityParams {
  int N = 256;
  std::vector<double> epsilon{0.4, 0.2, 0.1, 0.05};
  double min_slope = 0.15;
  SchemeParams scheme;

  static KeyStabilityParams from_config(const Config& c) {
    KeyStabilityParams p;
    p.N = detail::positive_int(c, "key-stability", "N", p.N);
    p.epsilon = detail::eps_list(c, "key-stability", "epsilon", p.epsilon);
    p.min_slope = c.get_double("key-stability", "min_slope", p.min_slope);
    p.scheme = detail::scheme_params(c, "key-stability");
    return p;
  }
};

inline ExperimentReport run_key_stability(const ProblemSpec& problem, const KeyStabilityParams& kp,
                                          const RunContext& ctx) {
  auto rep = key_stability_measure(problem, kp.epsilon, detail::grid_for(problem, kp.N), kp.scheme, kp.min_slope);
  rep.config()["problem"] = problem_to_json(problem);
  rep.config()["cfl_safety"] = kp.scheme.cfl_safety;
  CsvWriter csv({"epsilon", "eps_wt_norm"});
  const auto& vals = rep.series().back().second;
  for (std::size_t i = 0; i < kp.epsilon.size(); ++i) csv.row({kp.epsilon[i], vals[i]});
  ctx.sink.write_csv("key_stability.csv", csv, &rep);
  return rep;
}

// ---------------------------------------------------------------------------
// mc-verify

struct McVerifyParams {
  int N = 1024;
  double t = 1.0;
  std::size_t M = 10000;
  std::size_t nodes = 8;
  std::size_t pde_snapshots = 400;
  SchemeParams scheme;

  static McVerifyParams from_config(const Config& c) {
    McVerifyParams p;
    p.N = detail::positive_int(c, "mc-verify", "N", p.N);
    p.t = c.get_double("mc-verify", "t", p.t);
    if (!(p.t > 0.0)) throw ConfigError("mc-verify.t must be positive");
    p.M = std::size_t(detail::positive_int(c, "mc-verify", "M", long(p.M)));
    if (p.M < 100) throw ConfigError("mc-verify.M must be at least 100");
    p.nodes = std::size_t(detail::positive_int(c, "mc-verify", "nodes", long(p.nodes)));
    p.pde_snapshots = std::size_t(detail::positive_int(c, "mc-verify", "pde_snapshots", long(p.pde_snapshots)));
    p.scheme = detail::scheme_params(c, "mc-verify");
    return p;
  }
};

inline ExperimentReport run_mc_verify(const ProblemSpec& problem, const McVerifyParams& mp, const RunContext& ctx) {
  if (problem.dim != 1) throw ConfigError("mc-verify samples nodes along the x axis; use a 1D problem");
  const TorusGrid grid = detail::grid_for(problem, mp.N);
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < mp.nodes; ++i) nodes.push_back((2 * i + 1) * grid.size() / (2 * mp.nodes));
  ValueBoundsOptions vo;
  vo.M = mp.M;
  vo.seed = ctx.seed;
  vo.jobs = ctx.jobs;
  vo.pde_snapshots = mp.pde_snapshots;
  vo.params = mp.scheme;
  std::vector<McPairRow> rows;
  auto rep = verify_value_bounds(problem, grid, mp.t, nodes, vo, &rows);
  rep.config()["problem"] = problem_to_json(problem);
  CsvWriter csv({"node", "x", "u_pde", "policy", "stop", "estimate", "half_width", "mean_stop_time"});
  for (const auto& r : rows) {
    csv.row({(long long)r.node, r.x[0], r.u_pde, r.policy, r.stop, r.estimate.mean, r.estimate.half_width,
             r.estimate.mean_stop_time});
  }
  ctx.sink.write_csv("mc_estimates.csv", csv, &rep);
  return rep;
}

// ---------------------------------------------------------------------------
// structural properties

struct PropertyParams {
  std::vector<std::string> problems = catalog_keys();
  int N1 = 64;
  int N2 = 16;
  std::size_t pairs = 100;
  double epsilon = 0.2;
  double horizon = 1.0;

  static PropertyParams from_config(const Config& c) {
    PropertyParams p;
    p.problems = c.get_names("properties", "problems", p.problems);
    p.N1 = detail::positive_int(c, "properties", "N1", p.N1);
    p.N2 = detail::positive_int(c, "properties", "N2", p.N2);
    p.pairs = std::size_t(detail::positive_int(c, "properties", "pairs", long(p.pairs)));
    p.epsilon = c.get_double("properties", "epsilon", p.epsilon);
    p.horizon = c.get_double("properties", "horizon", p.horizon);
    return p;
  }
  Json to_json() const {
    return {{"problems", problems}, {"N1", N1},           {"N2", N2},
            {"pairs", pairs},       {"epsilon", epsilon}, {"horizon", horizon}};
  }
};

namespace detail {

//! Smooth random perturbation sum of low modes, amplitude <= amp.
inline std::vector<double> smooth_noise(const TorusGrid& g, std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> out(g.size(), 0.0);
  const int modes = 2;
  std::vector<std::array<double, 4>> coef;
  for (int kx = 0; kx <= modes; ++kx) {
    for (int ky = 0; ky <= (g.dim() == 2 ? modes : 0); ++ky) coef.push_back({double(kx), double(ky), U(rng), U(rng)});
  }
  const double norm = amp / (2.0 * double(coef.size()));
  for (std::size_t n = 0; n < g.size(); ++n) {
    const Vec2 x = g.coords(n);
    double v = 0.0;
    for (const auto& c : coef) {
      const double arg = 2.0 * std::numbers::pi * (c[0] * x[0] + c[1] * x[1]);
      v += c[2] * std::cos(arg) + c[3] * std::sin(arg);
    }
    out[n] = norm * v;
  }
  return out;
}

struct PropertyTally {
  std::size_t order_violations = 0;
  std::size_t expansion_violations = 0;
  std::size_t feasibility_violations = 0;
  std::size_t trajectory_order_violations = 0;
  std::size_t trajectory_expansions = 0;
  std::size_t pairs = 0;
};

inline PropertyTally check_problem_properties(const ProblemSpec& p, const PropertyParams& pp, std::uint64_t seed) {
  const TorusGrid g(p.dim, p.dim == 1 ? pp.N1 : pp.N2);
  std::seed_seq sq{seed, std::uint64_t(std::hash<std::string>{}(p.name) & 0xffffffffu)};
  std::mt19937_64 rng(sq);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  SampledProblem s(p, g);
  const auto& psi = s.obstacle;
  PropertyTally t;
  std::vector<double> out_u(g.size()), out_v(g.size()), scratch(g.size());
  for (int kind = 0; kind < 2; ++kind) {
    for (std::size_t k = 0; k < pp.pairs; ++k) {
      std::vector<double> u = s.initial;
      const auto noise = smooth_noise(g, rng, 0.1);
      for (std::size_t n = 0; n < u.size(); ++n) u[n] += noise[n];
      std::vector<double> v = u;
      for (std::size_t n = 0; n < v.size(); ++n) v[n] += U(rng) < 0.3 ? 0.0 : 1e-3 + 0.05 * U(rng);
      if (kind == 0) {
        for (std::size_t n = 0; n < u.size(); ++n) {
          u[n] = std::min(u[n], psi[n]);
          v[n] = std::min(v[n], psi[n]);
        }
      }
      SchemeParams sp;
      const Vec2 lu = choose_lf_dissipation(p, s, u), lv = choose_lf_dissipation(p, s, v);
      sp.lf_dissipation = {std::max(lu[0], lv[0]), std::max(lu[1], lv[1])};
      if (kind == 1) {
        sp.epsilon = pp.epsilon;
        sp.penalty_delta = pp.epsilon * pp.epsilon;
        sp.artificial_viscosity = sp.penalty_delta * sp.penalty_delta;
      }
      Scheme scheme(p, g, sp);
      const double dt = std::min(scheme.step_dt(), std::min(cfl_dt(scheme, u), cfl_dt(scheme, v)));
      if (kind == 0) {
        advance_projected(scheme, u, dt, out_u, scratch);
        advance_projected(scheme, v, dt, out_v, scratch);
        for (std::size_t n = 0; n < g.size(); ++n) {
          if (out_u[n] > psi[n] || out_v[n] > psi[n]) ++t.feasibility_violations;
        }
      } else {
        advance_penalized(scheme, u, dt, out_u, scratch);
        advance_penalized(scheme, v, dt, out_v, scratch);
      }
      for (std::size_t n = 0; n < g.size(); ++n) {
        if (out_u[n] > out_v[n]) ++t.order_violations;
      }
      const double before = max_abs_diff(u, v), after = max_abs_diff(out_u, out_v);
      if (after > before * (1.0 + 1e-12)) ++t.expansion_violations;
      ++t.pairs;
    }
  }
  // Trajectory level: comparison, non-expansiveness in time and feasibility
  // for the projection scheme from u0 and an ordered smooth perturbation.
  std::vector<double> u = s.initial, v = s.initial;
  const auto noise = smooth_noise(g, rng, 0.1);
  for (std::size_t n = 0; n < u.size(); ++n) v[n] = std::min(psi[n], v[n] + 0.05 + std::abs(noise[n]));
  SchemeParams sp;
  const Vec2 lu = choose_lf_dissipation(p, s, u), lv = choose_lf_dissipation(p, s, v);
  sp.lf_dissipation = {std::max(lu[0], lv[0]), std::max(lu[1], lv[1])};
  Scheme scheme(p, g, sp);
  const std::size_t steps = std::size_t(std::ceil(pp.horizon / scheme.step_dt() - 1e-9));
  const double dt = pp.horizon / double(steps);
  double dist = max_abs_diff(u, v);
  for (std::size_t k = 0; k < steps; ++k) {
    advance_projected(scheme, u, dt, out_u, scratch);
    advance_projected(scheme, v, dt, out_v, scratch);
    u.swap(out_u);
    v.swap(out_v);
    for (std::size_t n = 0; n < g.size(); ++n) {
      if (u[n] > v[n]) ++t.trajectory_order_violations;
      if (u[n] > psi[n] || v[n] > psi[n]) ++t.feasibility_violations;
    }
    const double d = max_abs_diff(u, v);
    if (d > dist * (1.0 + 1e-12)) ++t.trajectory_expansions;
    dist = d;
  }
  return t;
}

}  // namespace detail

//! Order preservation and non-expansiveness of both step operators on random
//! ordered pairs, trajectory comparison and exact obstacle feasibility.
inline ExperimentReport run_properties(const PropertyParams& pp, const RunContext& ctx) {
  ExperimentReport rep("properties");
  rep.config() = pp.to_json();
  rep.config()["seed"] = ctx.seed;
  auto tallies = parallel_map(pp.problems.size(), ctx.jobs, [&](std::size_t i) {
    return detail::check_problem_properties(catalog_problem(pp.problems[i]), pp, ctx.seed);
  });
  detail::PropertyTally total;
  CsvWriter csv({"problem", "pairs", "order_violations", "expansion_violations", "feasibility_violations",
                 "trajectory_order_violations", "trajectory_expansions"});
  for (std::size_t i = 0; i < tallies.size(); ++i) {
    const auto& t = tallies[i];
    csv.row({pp.problems[i], (long long)t.pairs, (long long)t.order_violations, (long long)t.expansion_violations,
             (long long)t.feasibility_violations, (long long)t.trajectory_order_violations,
             (long long)t.trajectory_expansions});
    total.order_violations += t.order_violations;
    total.expansion_violations += t.expansion_violations;
    total.feasibility_violations += t.feasibility_violations;
    total.trajectory_order_violations += t.trajectory_order_violations;
    total.trajectory_expansions += t.trajectory_expansions;
    total.pairs += t.pairs;
  }
  rep.scalar("pairs_tested", double(total.pairs));
  rep.require_le("monotonicity", double(total.order_violations), 0.0, "nodewise order violations, both step operators");
  rep.require_le("non-expansive-step", double(total.expansion_violations), 0.0, "sup-norm expansions over one step");
  rep.require_le("comparison", double(total.trajectory_order_violations), 0.0, "order violations along trajectories");
  rep.require_le("non-expansive-in-time", double(total.trajectory_expansions), 0.0,
                 "steps where ||u - v|| increased");
  rep.require_le("obstacle-feasibility", double(total.feasibility_violations), 0.0, "nodes with u > psi");
  ctx.sink.write_csv("properties.csv", csv, &rep);
  rep.finish();
  return rep;
}

}  // namespace ohj

#endif  // OHJ_EXPERIMENTS_HPP_
