#ifndef OHJ_SUITE_HPP_
#define OHJ_SUITE_HPP_

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "ohj/experiments.hpp"

namespace ohj {

//! Fixed-problem experiments behind the acceptance criteria that have no
//! general-purpose subcommand of their own.

//! ||u(.,T) + T|| for H = |p|^2/2 + 1, psi = 0, u0 = 0 (exact u = -t).
inline ExperimentReport exact_solution_experiment(int N = 128, double T = 2.0, double tol = 1e-3) {
  ExperimentReport rep("exact-solution");
  const auto p = catalog_problem("supercritical-1d");
  rep.config() = {{"problem", problem_to_json(p)}, {"N", N}, {"T", T}, {"tolerance", tol}};
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  const auto traj = solve_obstacle(p, T, TorusGrid(1, N), {}, opt);
  double err = 0.0;
  for (double v : traj.final_field().values) err = std::max(err, std::abs(v + T));
  rep.scalar("max_error", err);
  rep.scalar("steps", double(traj.steps));
  rep.require_le("exact-u=-t", err, tol, "||u(.,T) + T||_inf");
  rep.finish();
  return rep;
}

//! ||u(.,T)|| for H = |p|^2/2 - 1, psi = 0 (V = psi = 0), with the two-start
//! uniqueness probe of the limit problem.
inline ExperimentReport obstacle_limit_experiment(int N = 256, double T = 10.0, double tol = 5e-3,
                                                  double probe_tol = 1e-6) {
  ExperimentReport rep("obstacle-limit");
  const auto p = catalog_problem("subcritical-obstacle-1d");
  const TorusGrid g(1, N);
  rep.config() = {{"problem", problem_to_json(p)}, {"N", N}, {"T", T}, {"tolerance", tol}, {"probe_tolerance", probe_tol}};
  SolveOptions opt;
  opt.store = StorePolicy::endpoints;
  const auto traj = solve_obstacle(p, T, g, {}, opt);
  const double err = max_abs(traj.final_field().view());
  const auto from_psi = solve_ergodic_obstacle(p, g);
  ObstacleLimitOptions lo;
  std::vector<double> start(g.size());
  SampledProblem s(p, g);
  for (std::size_t n = 0; n < g.size(); ++n) start[n] = s.obstacle[n] - 1.0;
  lo.start = start;
  const auto from_below = solve_ergodic_obstacle(p, g, {}, lo);
  const double probe = max_abs_diff(from_psi.solution.values, from_below.solution.values);
  rep.scalar("max_abs_u_T", err);
  rep.scalar("uniqueness_probe", probe);
  rep.scalar("V_max_abs", max_abs(from_psi.solution.view()));
  rep.require_le("limit-is-psi", err, tol, "||u(.,T) - 0||_inf");
  rep.require_le("uniqueness-probe", probe, probe_tol, "||V(start psi) - V(start psi - 1)||_inf");
  rep.finish();
  return rep;
}

//! max (w - psi)_+ against C_psi delta^{1/4} for every (eps, eps^2) cell.
inline ExperimentReport penalty_bound_experiment(const std::vector<std::string>& problems,
                                                 const std::vector<double>& eps, int N1 = 256, int N2 = 32,
                                                 int jobs = 1) {
  ExperimentReport rep("penalty-bound");
  rep.config() = {{"problems", problems}, {"epsilon", eps}, {"delta_rule", "eps^2"}, {"N1", N1}, {"N2", N2}};
  struct Cell {
    std::string key;
    double eps;
  };
  std::vector<Cell> cells;
  for (const auto& k : problems) {
    for (double e : eps) cells.push_back({k, e});
  }
  auto out = parallel_map(cells.size(), jobs, [&](std::size_t i) {
    const auto p = catalog_problem(cells[i].key);
    return penalty_bound_check(p, cells[i].eps, cells[i].eps * cells[i].eps, TorusGrid(p.dim, p.dim == 1 ? N1 : N2));
  });
  std::size_t violations = 0;
  for (const auto& k : problems) {
    std::vector<double> excess, bound, lip;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].key != k) continue;
      excess.push_back(out[i].max_excess);
      bound.push_back(out[i].bound);
      lip.push_back(out[i].lipschitz_final);
      violations += out[i].violations;
    }
    rep.series(k + "/max_excess", excess);
    rep.series(k + "/bound", bound);
    rep.series(k + "/lipschitz_final", lip);
    const auto [lo, hi] = std::minmax_element(lip.begin(), lip.end());
    rep.info(k + "/lipschitz-variation", *lo > 0.0 ? *hi / *lo : 0.0, "max/min discrete Lipschitz constant of w(.,1)");
  }
  rep.require_le("violations", double(violations), 0.0, "(node, step) pairs above C_psi delta^{1/4}");
  rep.finish();
  return rep;
}

// ---------------------------------------------------------------------------

struct CriterionResult {
  int number = 0;
  std::string title;
  bool passed = false;
  double seconds = 0.0;
  double time_limit = 0.0;  // 0 = none
  std::string detail;
};

struct SuiteResult {
  std::vector<CriterionResult> criteria;
  std::vector<ExperimentReport> reports;
  std::string fingerprint;
  std::string rerun_fingerprint;

  bool passed() const {
    for (const auto& c : criteria) {
      if (!c.passed) return false;
    }
    return true;
  }
};

namespace detail {

//! PASS when every non-INFO check whose id starts with prefix passes.
inline bool checks_pass(const ExperimentReport& rep, const std::string& prefix, std::string& detail) {
  bool ok = true;
  for (const auto& c : rep.checks()) {
    if (c.verdict == Verdict::info || c.id.rfind(prefix, 0) != 0) continue;
    if (c.verdict == Verdict::fail) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + c.id + " = " + fmt_num(c.measured) + " (need " + c.relation + " " +
                fmt_num(c.threshold) + ")";
    }
  }
  return ok;
}

struct SuiteStep {
  std::string name;
  std::function<ExperimentReport(const RunContext&)> run;
};

inline std::vector<SuiteStep> suite_steps() {
  return {
      {"exact-solution", [](const RunContext&) { return exact_solution_experiment(); }},
      {"obstacle-limit", [](const RunContext&) { return obstacle_limit_experiment(); }},
      {"ergodic", [](const RunContext& c) { return run_ergodic(ErgodicParams{}, c); }},
      {"penalty-bound",
       [](const RunContext& c) {
         return penalty_bound_experiment({"obstacle-cos-1d", "subcritical-obstacle-1d", "degenerate-diag-2d"},
                                         {0.4, 0.2, 0.1, 0.05}, 256, 32, c.jobs);
       }},
      {"adjoint-identities",
       [](const RunContext& c) {
         AdjointAuditParams ap;
         ap.refine = false;
         ap.key_estimates = false;
         return run_adjoint_audit(catalog_problem("obstacle-cos-1d"), ap, c);
       }},
      {"adjoint-audit",
       [](const RunContext& c) { return run_adjoint_audit(catalog_problem("obstacle-cos-1d"), AdjointAuditParams{}, c); }},
      {"rate-study",
       [](const RunContext& c) { return run_rate_study(catalog_problem("subcritical-obstacle-1d"), RateStudyParams{}, c); }},
      {"key-stability",
       [](const RunContext& c) {
         return run_key_stability(catalog_problem("subcritical-obstacle-1d"), KeyStabilityParams{}, c);
       }},
      {"mc-verify", [](const RunContext& c) { return run_mc_verify(catalog_problem("obstacle-cos-1d"), McVerifyParams{}, c); }},
      {"properties", [](const RunContext& c) { return run_properties(PropertyParams{}, c); }},
  };
}

inline std::string combined_fingerprint(const std::vector<ExperimentReport>& reps) {
  Fnv1a h;
  for (const auto& r : reps) {
    h.text(r.id());
    h.text(r.fingerprint());
  }
  return h.hex();
}

}  // namespace detail

//! Runs the acceptance battery, then re-runs it (artifacts off, different
//! job count) to check bitwise reproducibility of every measurement.
//! `progress` is called after each experiment of the first pass.
inline SuiteResult run_suite(const RunContext& ctx,
                             const std::function<void(const std::string&, double)>& progress = {}) {
  SuiteResult out;
  const auto steps = detail::suite_steps();
  std::vector<double> seconds;
  for (const auto& s : steps) {
    RunContext sub = ctx;
    sub.sink = ctx.sink.sub(s.name);
    const auto t0 = std::chrono::steady_clock::now();
    auto rep = s.run(sub);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    sub.sink.write_report(rep);
    if (progress) progress(s.name, seconds.back());
    out.reports.push_back(std::move(rep));
  }
  out.fingerprint = detail::combined_fingerprint(out.reports);

  RunContext again;
  again.seed = ctx.seed;
  again.jobs = ctx.jobs == 1 ? 2 : 1;
  std::vector<ExperimentReport> rerun;
  for (const auto& s : steps) rerun.push_back(s.run(again));
  out.rerun_fingerprint = detail::combined_fingerprint(rerun);
  std::size_t mismatched = 0;
  std::string mismatch_names;
  for (std::size_t i = 0; i < rerun.size(); ++i) {
    if (rerun[i].fingerprint() != out.reports[i].fingerprint()) {
      ++mismatched;
      mismatch_names += (mismatch_names.empty() ? "" : ", ") + steps[i].name;
    }
  }

  auto at = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].name == name) return i;
    }
    throw InvalidArgument("unknown suite step " + name);
  };
  auto criterion = [&](int number, const std::string& title, const std::string& step, const std::string& prefix,
                       double limit) {
    CriterionResult c;
    c.number = number;
    c.title = title;
    const std::size_t i = at(step);
    c.passed = detail::checks_pass(out.reports[i], prefix, c.detail);
    c.seconds = seconds[i];
    c.time_limit = limit;
    if (limit > 0.0 && c.seconds > limit) {
      c.passed = false;
      c.detail += (c.detail.empty() ? "" : "; ") + std::string("wall clock ") + fmt_num(c.seconds) + " s > " +
                  fmt_num(limit) + " s";
    }
    out.criteria.push_back(c);
  };
  criterion(1, "exact solution u = -t (supercritical-1d, N=128)", "exact-solution", "", 5.0);
  criterion(2, "obstacle limit V = psi = 0 (subcritical-obstacle-1d, N=256)", "obstacle-limit", "", 30.0);
  criterion(3, "ergodic constant estimators (N=512)", "ergodic", "", 120.0);
  criterion(4, "penalty bound C_psi delta^{1/4}", "penalty-bound", "", 0.0);
  criterion(5, "adjoint identities and duality", "adjoint-identities", "", 60.0);
  criterion(6, "energy conservation under refinement", "adjoint-audit", "energy/", 0.0);
  criterion(7, "stability gap rate (subcritical-obstacle-1d, N=1024)", "rate-study", "", 300.0);
  criterion(8, "key stability eps ||w_t(.,1)||", "key-stability", "", 0.0);
  criterion(9, "key-estimate scalings", "adjoint-audit", "key/", 0.0);
  criterion(10, "control representation (Monte Carlo, M=1e4)", "mc-verify", "", 180.0);
  criterion(11, "structural properties and bitwise reproducibility", "properties", "", 0.0);
  auto& c11 = out.criteria.back();
  if (mismatched > 0) {
    c11.passed = false;
    c11.detail += (c11.detail.empty() ? "" : "; ") + std::to_string(mismatched) + " experiments not reproducible (" +
                  mismatch_names + ")";
  } else {
    c11.detail += (c11.detail.empty() ? "" : "; ") + std::string("suite fingerprint ") + out.fingerprint +
                  " reproduced with jobs=" + std::to_string(again.jobs);
  }
  return out;
}

inline Json suite_to_json(const SuiteResult& s) {
  Json j;
  Json cs = Json::array();
  for (const auto& c : s.criteria) {
    cs.push_back({{"criterion", c.number},
                  {"title", c.title},
                  {"verdict", c.passed ? "PASS" : "FAIL"},
                  {"seconds", c.seconds},
                  {"time_limit_seconds", c.time_limit},
                  {"detail", c.detail}});
  }
  j["criteria"] = cs;
  Json reps = Json::object();
  for (const auto& r : s.reports) reps[r.id()] = {{"fingerprint", r.fingerprint()}, {"passed", r.passed()}};
  j["experiments"] = reps;
  j["fingerprint"] = s.fingerprint;
  j["rerun_fingerprint"] = s.rerun_fingerprint;
  j["passed"] = s.passed();
  return j;
}

}  // namespace ohj

#endif  // OHJ_SUITE_HPP_
