#pragma once

// Comparison strategies (generator only; hybrid with constant storage
// efficiencies), percentage savings, and an exhaustive grid search used to
// check the ADMM solution on small horizons.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "microgrid/admm.hpp"
#include "microgrid/dispatch_objective.hpp"
#include "microgrid/dispatch_problem.hpp"
#include "microgrid/errors.hpp"
#include "microgrid/microgrid_model.hpp"

namespace microgrid {

struct BaselineResult {
  Schedule schedule;
  CostBreakdown cost;
};

// The generator alone covers load plus line losses.
inline BaselineResult diesel_only_dispatch(std::span<const double> load, const NetworkParams& net,
                                           const CostParams& c, double dt = 1.0) {
  BaselineResult r;
  r.schedule = Schedule(load.size(), dt, net.soc_initial);
  for (std::size_t t = 0; t < load.size(); ++t) {
    const double p = net.loss_factor * load[t];
    if (p > net.gen_max) {
      throw InfeasibleError("diesel-only: step " + std::to_string(t) + " needs " +
                                std::to_string(p) + " kW, generator limit is " +
                                std::to_string(net.gen_max) + " kW",
                            t);
    }
    r.schedule.p_gl[t] = p;
    r.cost.j1_total += generator_cost(p, c);
  }
  r.cost.objective = c.w1 * r.cost.j1_total;
  return r;
}

// Same constrained problem and solver path with the storage efficiencies
// frozen, which turns every block update into a closed-form step.
inline SolveResult static_hybrid_dispatch(const DispatchProblem& problem, double eta_c0 = 1.0,
                                          double eta_d0 = 1.0, const SolverOptions& opts = {}) {
  if (!(eta_c0 > 0.0 && eta_c0 <= 1.0) || !(eta_d0 > 0.0 && eta_d0 <= 1.0)) {
    throw DomainError("static_hybrid_dispatch: efficiencies must lie in (0, 1]");
  }
  AdmmSolver<StaticEfficiency> solver(problem, opts, StaticEfficiency{eta_c0, eta_d0});
  return solver.solve();
}

struct SavingsReport {
  std::string label;
  double cost_diesel_only = 0.0;
  double cost_static_hybrid = 0.0;
  double cost_proposed = 0.0;
  // Empty when the baseline cost is not positive.
  std::optional<double> pct_vs_diesel;
  std::optional<double> pct_vs_static;
};

inline std::optional<double> percent_reduction(double baseline, double proposed) {
  if (!(baseline > 0.0) || !std::isfinite(baseline) || !std::isfinite(proposed)) {
    return std::nullopt;
  }
  return 100.0 * (baseline - proposed) / baseline;
}

inline SavingsReport savings_report(double cost_diesel_only, double cost_static_hybrid,
                                    double cost_proposed, std::string label = {}) {
  SavingsReport r;
  r.label = std::move(label);
  r.cost_diesel_only = cost_diesel_only;
  r.cost_static_hybrid = cost_static_hybrid;
  r.cost_proposed = cost_proposed;
  r.pct_vs_diesel = percent_reduction(cost_diesel_only, cost_proposed);
  r.pct_vs_static = percent_reduction(cost_static_hybrid, cost_proposed);
  return r;
}

struct OracleResult {
  Schedule schedule;
  CostBreakdown cost;
  std::size_t candidates = 0;  // feasible per-step tuples summed over steps
};

inline constexpr std::size_t kOracleMaxHorizon = 3;

namespace detail {

struct OracleCandidate {
  double p_gl, p_pvl, p_pves, p_esl;
  double objective;  // weighted per-step cost
  double soc_delta;
};

template <class Efficiency>
std::vector<OracleCandidate> oracle_candidates(const DispatchProblem& p, std::size_t t,
                                               double step, const Efficiency& eff) {
  const double eps = 1e-9;
  const NetworkParams& net = p.network;
  const CostParams& c = p.cost;
  const double pv = p.pv_available[t];
  const double demand = net.loss_factor * p.load[t];
  const double d_max = p.discharge_bound();
  auto grid = [&](double hi) {
    std::vector<double> g;
    for (std::size_t k = 0;; ++k) {
      const double x = static_cast<double>(k) * step;
      if (x > hi + eps) break;
      g.push_back(x);
    }
    return g;
  };
  std::vector<OracleCandidate> out;
  auto consider = [&](double l, double ch, double dis) {
    // Balance is met exactly through the generator.
    const double g = demand - l - dis;
    if (g < net.gen_min - eps || g > net.gen_max + eps) return;
    const double gen = std::clamp(g, net.gen_min, net.gen_max);
    const double j1 = generator_cost(gen, c);
    const double j2 = storage_saving(ch, dis, eff, c);
    const double j3 = pv_saving(l, c);
    out.push_back({gen, l, ch, dis, c.w1 * j1 - c.w2 * j2 - c.w3 * j3,
                   p.dt * (eff.charge_energy(ch) - eff.discharge_energy(dis))});
  };
  for (double l : grid(pv)) {
    // Charging only (includes the idle tuple).
    for (double ch : grid(std::min(pv - l, p.battery.p_max))) consider(l, ch, 0.0);
    // Discharging only; beyond demand - l the generator would go negative.
    for (double dis : grid(std::min(d_max, demand - l - net.gen_min))) {
      if (dis > 0.0) consider(l, 0.0, dis);
    }
  }
  return out;
}

}  // namespace detail

// Exhaustive search over flows on a uniform grid. PV-to-load, charge and
// discharge are enumerated; the generator takes the exact balance remainder.
// Only tuples with at most one storage flow nonzero are considered, and the
// SOC must stay in [soc_min, soc_max] at every step.
template <class Efficiency>
OracleResult brute_force_oracle(const DispatchProblem& p, double grid_step, const Efficiency& eff) {
  if (p.horizon() > kOracleMaxHorizon) {
    throw DomainError("brute_force_oracle: horizon " + std::to_string(p.horizon()) +
                      " exceeds the enumeration limit of " + std::to_string(kOracleMaxHorizon));
  }
  if (!(grid_step > 0.0)) throw DomainError("brute_force_oracle: grid_step must be > 0");
  p.validate();
  const std::size_t n = p.horizon();
  std::vector<std::vector<detail::OracleCandidate>> cand(n);
  OracleResult best;
  for (std::size_t t = 0; t < n; ++t) {
    cand[t] = detail::oracle_candidates(p, t, grid_step, eff);
    best.candidates += cand[t].size();
  }
  const NetworkParams& net = p.network;
  const double soc_eps = 1e-12;

  struct Best {
    double objective = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick;
  };

  // Depth-first over steps 1..n-1 for a fixed first-step choice.
  auto search_from = [&](std::size_t first) {
    Best b;
    std::vector<std::size_t> pick(n);
    pick[0] = first;
    auto rec = [&](auto&& self, std::size_t t, double soc, double acc) -> void {
      if (t == n) {
        if (acc < b.objective) {
          b.objective = acc;
          b.pick = pick;
        }
        return;
      }
      for (std::size_t k = 0; k < cand[t].size(); ++k) {
        const double s = soc + cand[t][k].soc_delta;
        if (s < net.soc_min - soc_eps || s > net.soc_max + soc_eps) continue;
        pick[t] = k;
        self(self, t + 1, s, acc + cand[t][k].objective);
      }
    };
    const double s0 = net.soc_initial + cand[0][first].soc_delta;
    if (s0 >= net.soc_min - soc_eps && s0 <= net.soc_max + soc_eps) {
      rec(rec, 1, s0, cand[0][first].objective);
    }
    return b;
  };

  // Fan out over the first step; each worker keeps the lowest index among
  // equal objectives so the result does not depend on scheduling.
  const std::size_t m = cand[0].size();
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), 16));
  const std::size_t chunk = (m + workers - 1) / std::max<std::size_t>(workers, 1);
  std::vector<std::future<Best>> futures;
  for (std::size_t lo = 0; lo < m; lo += chunk) {
    const std::size_t hi = std::min(m, lo + chunk);
    futures.push_back(std::async(std::launch::async, [&, lo, hi] {
      Best local;
      for (std::size_t i = lo; i < hi; ++i) {
        Best b = search_from(i);
        if (b.objective < local.objective) local = std::move(b);
      }
      return local;
    }));
  }
  Best overall;
  for (auto& f : futures) {
    Best b = f.get();
    if (b.objective < overall.objective) overall = std::move(b);
  }
  if (overall.pick.empty()) {
    throw InfeasibleError("brute_force_oracle: no grid point satisfies all constraints", 0);
  }

  best.schedule = Schedule(n, p.dt, net.soc_initial);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& c = cand[t][overall.pick[t]];
    best.schedule.p_gl[t] = c.p_gl;
    best.schedule.p_pvl[t] = c.p_pvl;
    best.schedule.p_pves[t] = c.p_pves;
    best.schedule.p_esl[t] = c.p_esl;
    best.schedule.soc[t + 1] = best.schedule.soc[t] + c.soc_delta;
  }
  best.cost = total_objective(best.schedule, eff, p.cost);
  return best;
}

inline OracleResult brute_force_oracle(const DispatchProblem& p, double grid_step) {
  return brute_force_oracle(p, grid_step, DynamicEfficiency{p.battery});
}

}  // namespace microgrid
