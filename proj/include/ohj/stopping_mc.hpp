#ifndef OHJ_STOPPING_MC_HPP_
#define OHJ_STOPPING_MC_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ohj/cauchy.hpp"
#include "ohj/error.hpp"
#include "ohj/grid.hpp"
#include "ohj/problem.hpp"
#include "ohj/report.hpp"

namespace ohj {

using Rng = std::mt19937_64;

//! Entrywise square root of the diagonal diffusion, A = sigma sigma^T.
struct DiffusionRoot {
  DiffusionSpec diffusion;

  double factor(int axis, const Vec2& x) const {
    const double a = diffusion.coefficient(axis, x);
    return a > 0.0 ? std::sqrt(a) : 0.0;
  }

  //! max |sigma sigma^T - A| over the grid nodes.
  double max_defect(const TorusGrid& grid) const {
    double m = 0.0;
    for (std::size_t n = 0; n < grid.size(); ++n) {
      const Vec2 x = grid.coords(n);
      for (int d = 0; d < grid.dim(); ++d) {
        const double s = factor(d, x);
        const double a = diffusion.coefficient(d, x);
        m = std::max(m, std::abs(s * s - std::max(a, 0.0)));
      }
    }
    return m;
  }
};

//! Feedback control xi(x, s) at elapsed time s; may draw from the path's RNG.
struct Policy {
  std::string name;
  std::function<Vec2(const Vec2&, double, Rng&)> control;
};

//! Stopping rule evaluated before each step at elapsed time s < t.
struct StopRule {
  std::string name;
  std::function<bool(const Vec2&, double)> stop;
};

inline Policy zero_policy() {
  return {"zero", [](const Vec2&, double, Rng&) { return Vec2{0.0, 0.0}; }};
}
inline Policy constant_policy(Vec2 xi) {
  return {"constant", [xi](const Vec2&, double, Rng&) { return xi; }};
}
//! Deliberately poor control: an independent N(0, scale^2) draw each step.
inline Policy random_policy(double scale) {
  return {"random", [scale](const Vec2&, double, Rng& rng) {
            std::normal_distribution<double> nd(0.0, scale);
            const double a = nd(rng);
            const double b = nd(rng);
            return Vec2{a, b};
          }};
}
inline StopRule never_stop() {
  return {"never", [](const Vec2&, double) { return false; }};
}
inline StopRule stop_immediately() {
  return {"immediate", [](const Vec2&, double) { return true; }};
}

struct McOptions {
  //! Euler-Maruyama step; 0 means 1e-3 t.
  double dt = 0.0;
  std::size_t batch_size = 1000;
  int jobs = 1;
};

struct McEstimate {
  double mean = 0.0;
  //! 95% normal half-width.
  double half_width = 0.0;
  double stddev = 0.0;
  std::size_t samples = 0;
  double mean_stop_time = 0.0;
};

namespace detail {

inline double wrap_unit(double x) {
  x -= std::floor(x);
  return x >= 1.0 ? 0.0 : x;
}

//! Running mean and centered second moment (Welford); merged in batch order
//! with the pairwise update, which avoids the E[x^2] - E[x]^2 cancellation.
struct BatchSums {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  double stop_sum = 0.0;

  void add(double v) {
    count += 1.0;
    const double d = v - mean;
    mean += d / count;
    m2 += d * (v - mean);
  }
  void merge(const BatchSums& o) {
    if (o.count == 0.0) return;
    const double n = count + o.count;
    const double d = o.mean - mean;
    mean += d * o.count / n;
    m2 += o.m2 + d * d * count * o.count / n;
    count = n;
    stop_sum += o.stop_sum;
  }
};

}  // namespace detail

//! Upper-bound estimator E[ int_0^theta L(X, xi) ds + h(X_theta, t - theta) ]
//! with dX = -xi ds + sqrt(2) sigma(X) dW, sigma = sqrt(A). The factor sqrt(2)
//! makes the generator tr(A D^2) match the equation.
inline McEstimate mc_value_upper(const ProblemSpec& problem, const Vec2& x, double t, const Policy& policy,
                                 const StopRule& stop_rule, std::size_t M, std::uint64_t seed,
                                 const McOptions& opt = {}) {
  if (M < 100) throw InvalidArgument("Monte Carlo needs at least 100 samples");
  if (problem.hamiltonian.family != kQuadraticFamily) {
    throw InvalidArgument("closed-form Lagrangian requires the quadratic-with-drift family");
  }
  if (!(t > 0.0)) throw InvalidArgument("time horizon must be positive");
  const double dt_max = 1e-3 * t;
  const double dt_req = opt.dt > 0.0 ? opt.dt : dt_max;
  if (dt_req > dt_max * (1.0 + 1e-12)) throw InvalidArgument("Monte Carlo step must not exceed 1e-3 t");
  const std::size_t steps = std::size_t(std::ceil(t / dt_req - 1e-9));
  const double dt = t / double(steps);
  const double sqdt = std::sqrt(dt);
  const int dim = problem.dim;
  const DiffusionRoot root{problem.diffusion};
  const bool noisy = problem.diffusion.form != DiffusionForm::zero;

  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  const std::size_t batches = (M + bs - 1) / bs;
  std::vector<detail::BatchSums> sums(batches);

  auto run_batch = [&](std::size_t b) {
    std::seed_seq sq{std::uint64_t(seed), std::uint64_t(b)};
    Rng rng(sq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t count = std::min(bs, M - b * bs);
    detail::BatchSums acc;
    for (std::size_t p = 0; p < count; ++p) {
      Vec2 X = x;
      double cost = 0.0;
      double payoff = 0.0;
      double stop_time = t;
      bool stopped = false;
      for (std::size_t j = 0; j < steps; ++j) {
        const double s = double(j) * dt;
        if (stop_rule.stop(X, s)) {
          payoff = problem.obstacle.value(X);
          stop_time = s;
          stopped = true;
          break;
        }
        const Vec2 xi = policy.control(X, s, rng);
        cost += lagrangian_eval(problem.hamiltonian, X, xi) * dt;
        for (int d = 0; d < dim; ++d) {
          double dx = -xi[d] * dt;
          if (noisy) dx += std::sqrt(2.0) * root.factor(d, X) * sqdt * normal(rng);
          X[d] = detail::wrap_unit(X[d] + dx);
        }
      }
      if (!stopped) payoff = problem.initial.value(X);
      const double v = cost + payoff;
      acc.add(v);
      acc.stop_sum += stop_time;
    }
    sums[b] = acc;
  };

  const int jobs = std::max(1, std::min<int>(opt.jobs, int(batches)));
  if (jobs == 1) {
    for (std::size_t b = 0; b < batches; ++b) run_batch(b);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t b = std::size_t(w); b < batches; b += std::size_t(jobs)) run_batch(b);
      });
    }
    for (auto& th : pool) th.join();
  }
  // Merge in batch order so the result does not depend on the job count.
  detail::BatchSums tot;
  for (const auto& s : sums) tot.merge(s);
  McEstimate e;
  e.samples = M;
  e.mean = tot.mean;
  const double var = tot.m2 / double(M - 1);
  e.stddev = std::sqrt(var);
  e.half_width = 1.96 * e.stddev / std::sqrt(double(M));
  e.mean_stop_time = tot.stop_sum / double(M);
  return e;
}

//! PDE solution on [0, t] stored at uniform times, with bilinear lookup of
//! u and Du at remaining time tau.
class PdeValueTable {
 public:
  PdeValueTable(const ProblemSpec& problem, double t, const TorusGrid& grid, const SchemeParams& params,
                std::size_t snapshots)
      : grid_(grid), horizon_(t) {
    SolveOptions opt;
    opt.snapshot_count = snapshots;
    auto traj = solve_obstacle(problem, t, grid, params, opt);
    times_ = traj.times;
    const double h = grid.spacing();
    for (const auto& s : traj.snapshots) {
      values_.push_back(s.values);
      std::array<std::vector<double>, 2> grad;
      for (int d = 0; d < 2; ++d) grad[d].assign(grid.size(), 0.0);
      for (std::size_t n = 0; n < grid.size(); ++n) {
        for (int d = 0; d < grid.dim(); ++d) {
          grad[d][n] = (s.values[grid.neighbor(n, d, 1)] - s.values[grid.neighbor(n, d, -1)]) / (2.0 * h);
        }
      }
      grads_.push_back(std::move(grad));
    }
  }

  const TorusGrid& grid() const { return grid_; }
  double horizon() const { return horizon_; }
  std::span<const double> final_values() const { return values_.back(); }

  double value(const Vec2& x, double tau) const { return lookup(x, tau, [&](std::size_t k) -> const auto& { return values_[k]; }); }
  Vec2 gradient(const Vec2& x, double tau) const {
    Vec2 p{0.0, 0.0};
    for (int d = 0; d < grid_.dim(); ++d) {
      p[d] = lookup(x, tau, [&](std::size_t k) -> const auto& { return grads_[k][d]; });
    }
    return p;
  }

 private:
  template <class Field>
  double lookup(const Vec2& x, double tau, Field field) const {
    tau = std::clamp(tau, 0.0, horizon_);
    const double pos = tau / horizon_ * double(times_.size() - 1);
    const std::size_t k0 = std::min(std::size_t(pos), times_.size() - 2);
    const double wt = pos - double(k0);
    return (1.0 - wt) * spatial(field(k0), x) + wt * spatial(field(k0 + 1), x);
  }

  double spatial(const std::vector<double>& f, const Vec2& x) const {
    const int N = grid_.points_per_axis();
    const double gx = detail::wrap_unit(x[0]) * N;
    const int i = int(gx);
    const double fx = gx - i;
    if (grid_.dim() == 1) return (1.0 - fx) * f[grid_.index(i)] + fx * f[grid_.index(i + 1)];
    const double gy = detail::wrap_unit(x[1]) * N;
    const int j = int(gy);
    const double fy = gy - j;
    return (1.0 - fx) * (1.0 - fy) * f[grid_.index(i, j)] + fx * (1.0 - fy) * f[grid_.index(i + 1, j)] +
           (1.0 - fx) * fy * f[grid_.index(i, j + 1)] + fx * fy * f[grid_.index(i + 1, j + 1)];
  }

  TorusGrid grid_;
  double horizon_;
  std::vector<double> times_;
  std::vector<std::vector<double>> values_;
  std::vector<std::array<std::vector<double>, 2>> grads_;
};

//! xi = D_pH(x, Du_pde(x, t - s)) = Du - b.
inline Policy feedback_policy(std::shared_ptr<const PdeValueTable> table, const ProblemSpec& problem) {
  const double t = table->horizon();
  const HamiltonianSpec h = problem.hamiltonian;
  return {"feedback", [table, t, h](const Vec2& x, double s, Rng&) {
            const Vec2 p = table->gradient(x, t - s);
            return Vec2{p[0] - h.drift[0].value(x), p[1] - h.drift[1].value(x)};
          }};
}

//! Stop once |u_pde(x, t - s) - psi(x)| <= band.
inline StopRule contact_stop(std::shared_ptr<const PdeValueTable> table, const ProblemSpec& problem, double band) {
  const double t = table->horizon();
  const TrigPoly psi = problem.obstacle;
  return {"contact", [table, t, psi, band](const Vec2& x, double s) {
            return std::abs(table->value(x, t - s) - psi.value(x)) <= band;
          }};
}

struct ValueBoundsOptions {
  std::size_t M = 10000;
  std::uint64_t seed = 2024;
  int jobs = 1;
  std::size_t pde_snapshots = 400;
  double dominance_slack = 1e-2;
  double tightness_slack = 5e-2;
  //! Allowed fraction of (node, policy) pairs violating dominance.
  double violation_fraction = 0.01;
  double tightness_fraction = 0.8;
  SchemeParams params;
};

struct McPairRow {
  std::size_t node = 0;
  Vec2 x{0.0, 0.0};
  double u_pde = 0.0;
  std::string policy;
  std::string stop;
  McEstimate estimate;
};

//! Checks u_pde <= MC upper bound for heuristic policies and near-equality
//! for the PDE feedback policy with contact stopping.
inline ExperimentReport verify_value_bounds(const ProblemSpec& problem, const TorusGrid& grid, double t,
                                            const std::vector<std::size_t>& sample_nodes,
                                            const ValueBoundsOptions& vopt = {},
                                            std::vector<McPairRow>* rows = nullptr) {
  ExperimentReport rep("mc-verify");
  auto table = std::make_shared<const PdeValueTable>(problem, t, grid, vopt.params, vopt.pde_snapshots);
  const double band = 2.0 * grid.spacing();
  rep.config() = {{"problem", problem.name},
                  {"N", grid.points_per_axis()},
                  {"t", t},
                  {"M", vopt.M},
                  {"seed", vopt.seed},
                  {"dt_mc", 1e-3 * t},
                  {"pde_snapshots", vopt.pde_snapshots},
                  {"stop_band", band},
                  {"dominance_slack", vopt.dominance_slack},
                  {"tightness_slack", vopt.tightness_slack},
                  {"sample_nodes", sample_nodes}};
  rep.scalar("diffusion_root_defect", DiffusionRoot{problem.diffusion}.max_defect(grid));

  struct Heuristic {
    Policy policy;
    StopRule stop;
  };
  std::vector<Heuristic> heuristics = {
      {zero_policy(), never_stop()},
      {zero_policy(), stop_immediately()},
      {constant_policy({0.5, 0.0}), contact_stop(table, problem, band)},
      {random_policy(1.0), never_stop()},
      {feedback_policy(table, problem), never_stop()},
  };
  const Policy fb = feedback_policy(table, problem);
  const StopRule fb_stop = contact_stop(table, problem, band);
  McOptions mo;
  mo.jobs = vopt.jobs;

  std::size_t pairs = 0, violations = 0, tight = 0;
  std::vector<double> u_series, fb_series, fb_hw;
  std::uint64_t stream = 0;
  for (std::size_t node : sample_nodes) {
    const Vec2 x = grid.coords(node);
    const double u = table->final_values()[node];
    u_series.push_back(u);
    for (const auto& hcase : heuristics) {
      const auto e = mc_value_upper(problem, x, t, hcase.policy, hcase.stop, vopt.M, vopt.seed + (++stream), mo);
      ++pairs;
      const bool ok = u <= e.mean + e.half_width + vopt.dominance_slack;
      if (!ok) ++violations;
      rep.scalar("node" + std::to_string(node) + "/" + hcase.policy.name + "+" + hcase.stop.name, e.mean);
      if (rows) rows->push_back({node, x, u, hcase.policy.name, hcase.stop.name, e});
    }
    const auto e = mc_value_upper(problem, x, t, fb, fb_stop, vopt.M, vopt.seed + (++stream), mo);
    if (rows) rows->push_back({node, x, u, fb.name, fb_stop.name, e});
    const double gap = std::abs(e.mean - u);
    fb_series.push_back(e.mean);
    fb_hw.push_back(e.half_width);
    if (gap <= vopt.tightness_slack + e.half_width) ++tight;
    ++pairs;
    if (!(u <= e.mean + e.half_width + vopt.dominance_slack)) ++violations;
  }
  rep.series("u_pde", u_series);
  rep.series("feedback_estimate", fb_series);
  rep.series("feedback_half_width", fb_hw);
  const double vfrac = pairs ? double(violations) / double(pairs) : 0.0;
  const double tfrac = sample_nodes.empty() ? 0.0 : double(tight) / double(sample_nodes.size());
  rep.require_lt("dominance-violations", vfrac, vopt.violation_fraction, "fraction of (node, policy) pairs");
  rep.require_ge("feedback-tightness", tfrac, vopt.tightness_fraction, "fraction of nodes within slack + CI");
  rep.finish();
  return rep;
}

}  // namespace ohj

#endif  // OHJ_STOPPING_MC_HPP_
