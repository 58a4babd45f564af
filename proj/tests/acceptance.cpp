// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "microgrid/admm.hpp"
#include "microgrid/baselines.hpp"
#include "microgrid/battery_model.hpp"
#include "microgrid/profiles.hpp"
#include "microgrid/scenario.hpp"

namespace mg = microgrid;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(bool ok, const char* name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Fixed corpus of small instances: 12 single-step and 12 two-step problems
// with loads and PV drawn uniformly from [0, 4.5] kW and the initial SOC
// anywhere in the band, plus hand-picked edge cases.
std::vector<mg::DispatchProblem> corpus() {
  std::mt19937_64 rng(20240611);
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };
  std::vector<mg::DispatchProblem> out;
  for (std::size_t n : {1u, 2u}) {
    for (int k = 0; k < 12; ++k) {
      mg::DispatchProblem p;
      for (std::size_t t = 0; t < n; ++t) {
        p.load.push_back(uniform(0.0, 4.5));
        p.pv_available.push_back(k % 4 == 0 ? 0.0 : uniform(0.0, 4.5));
      }
      p.network.soc_initial = uniform(27.5, 55.0);
      out.push_back(p);
    }
  }
  mg::DispatchProblem edge;
  edge.load = {1.0};
  edge.pv_available = {0.0};
  edge.network.soc_initial = 27.5;
  out.push_back(edge);
  edge.load = {0.0};
  edge.network.soc_initial = 41.25;
  out.push_back(edge);
  edge.load = {0.5, 2.0};
  edge.pv_available = {4.5, 4.5};
  edge.network.soc_initial = 54.0;
  out.push_back(edge);
  return out;
}

bool feasible(const mg::Schedule& s, const mg::DispatchProblem& p, std::string* why = nullptr) {
  const auto v = mg::check_schedule(s, p.load, p.pv_available, p.network);
  const bool ok = v.within(1e-4, 1e-6, 1e-6);
  if (!ok && why) {
    *why = fmt("balance %.2e pv %.2e soc %.2e simultaneous %.2e", v.max_balance, v.max_pv_split,
               v.max_soc_excursion, v.max_simultaneous);
  }
  return ok;
}

mg::DispatchProblem day_problem(mg::ProfileKind kind) {
  const auto pair = mg::synth_profile(kind, 1);
  mg::DispatchProblem p;
  p.load = pair.load.values;
  const mg::PvParams pv;
  for (double irr : pair.irradiance.values) p.pv_available.push_back(mg::pv_output(irr, pv));
  p.network.soc_initial = mg::kSyntheticDaySocInitial;
  return p;
}

void check_convexity() {
  const auto t0 = Clock::now();
  mg::BatteryParams b;
  b.alpha = 1e-6 / b.p_max;
  const auto a = mg::convexity_audit(b, 1001, 0.95, 1e-6);
  const double dt = seconds_since(t0);
  const bool ok = a.discharge_convex && a.charge_concave && a.ragone_at_p_max.concavity_valid &&
                  dt < 1.0;
  report(ok, "convexity-audit",
         fmt("alpha*p_max=%.1e, min d2 discharge %.3e (>= -1e-6), max d2 charge %.3e (<= 1e-6) "
             "on [0, %.2f] kW, %.3f s",
             a.ragone_at_p_max.value, a.min_discharge_second_diff, a.max_charge_second_diff,
             a.upper, dt));
}

void check_oracle(const std::vector<mg::DispatchProblem>& cases) {
  const auto t0 = Clock::now();
  int bad = 0;
  double worst = -1e300;
  for (const auto& p : cases) {
    const auto r = mg::solve(p);
    const auto o = mg::brute_force_oracle(p, 0.05);
    const double slack = 0.01 * std::max(std::abs(o.cost.objective), 1e-6);
    worst = std::max(worst, (r.cost.objective - o.cost.objective) /
                                std::max(std::abs(o.cost.objective), 1e-6));
    if (!(r.converged && r.cost.objective <= o.cost.objective + slack)) {
      ++bad;
      std::printf("  instance N=%zu soc0=%.4f load[0]=%.4f pv[0]=%.4f: solver %.6f (%s, %d "
                  "iterations), oracle %.6f\n",
                  p.horizon(), p.network.soc_initial, p.load[0], p.pv_available[0],
                  r.cost.objective, r.converged ? "converged" : "not converged", r.iterations,
                  o.cost.objective);
    }
  }
  const double dt = seconds_since(t0);
  report(bad == 0 && cases.size() >= 20 && dt < 60.0, "oracle-equivalence",
         fmt("%zu instances (N in {1,2}, grid 0.05 kW), %d above oracle + 1%%, worst relative "
             "excess %+.2e, %.2f s",
             cases.size(), bad, worst, dt));
}

void check_collapse(const std::vector<mg::DispatchProblem>& cases) {
  double worst = 0.0;
  bool converged = true;
  for (auto p : cases) {
    p.battery.alpha = p.battery.u = p.battery.v = 0.0;
    const auto a = mg::solve(p);
    const auto b = mg::static_hybrid_dispatch(p, 1.0, 1.0);
    converged = converged && a.converged && b.converged;
    for (std::size_t t = 0; t < p.horizon(); ++t) {
      worst = std::max({worst, std::abs(a.schedule.p_gl[t] - b.schedule.p_gl[t]),
                        std::abs(a.schedule.p_pvl[t] - b.schedule.p_pvl[t]),
                        std::abs(a.schedule.p_pves[t] - b.schedule.p_pves[t]),
                        std::abs(a.schedule.p_esl[t] - b.schedule.p_esl[t])});
    }
  }
  report(converged && worst <= 1e-4, "model-collapse",
         fmt("alpha=u=v=0 vs static efficiencies 1 on %zu instances, max flow gap %.2e kW",
             cases.size(), worst));
}

void check_feasibility(const std::vector<mg::DispatchProblem>& cases) {
  int checked = 0, bad = 0;
  std::string why;
  auto check = [&](const mg::SolveResult& r, const mg::DispatchProblem& p) {
    ++checked;
    std::string w;
    if (!r.converged || !feasible(r.schedule, p, &w)) {
      ++bad;
      why = r.converged ? w : "not converged";
    }
  };
  for (const auto& p : cases) {
    check(mg::solve(p), p);
    check(mg::static_hybrid_dispatch(p), p);
  }
  for (auto kind : {mg::ProfileKind::kSummerDay, mg::ProfileKind::kWinterDay}) {
    const auto p = day_problem(kind);
    check(mg::solve(p), p);
    check(mg::static_hybrid_dispatch(p), p);
  }
  report(bad == 0, "feasibility",
         fmt("%d converged schedules; |balance|, PV overuse <= 1e-4 kW, SOC band +-1e-6 kWh, "
             "min(p_pves, p_esl) <= 1e-6 kW%s%s",
             checked, bad ? "; violation: " : "", why.c_str()));
}

void check_dominance() {
  for (auto kind : {mg::ProfileKind::kSummerDay, mg::ProfileKind::kWinterDay}) {
    const auto t0 = Clock::now();
    const auto p = day_problem(kind);
    const mg::DynamicEfficiency dyn{p.battery};
    const auto proposed = mg::solve(p);
    const auto stat = mg::static_hybrid_dispatch(p);
    const auto diesel = mg::diesel_only_dispatch(p.load, p.network, p.cost);
    const double cp = proposed.cost.objective;
    const double cs = mg::total_objective(stat.schedule, dyn, p.cost).objective;
    const double cd = mg::total_objective(diesel.schedule, dyn, p.cost).objective;
    const auto s = mg::savings_report(cd, cs, cp, mg::profile_kind_name(kind));
    const double dt = seconds_since(t0);
    const bool ok = proposed.converged && proposed.iterations <= 5000 && cp <= cd && cp <= cs &&
                    s.pct_vs_diesel && *s.pct_vs_diesel > 0.0 && s.pct_vs_static &&
                    *s.pct_vs_static > 0.0 && dt < 30.0;
    const std::string name = std::string("dominance-") + mg::profile_kind_name(kind);
    report(ok, name.c_str(),
           fmt("proposed %.6f, static-hybrid %.6f, diesel-only %.6f; savings %.3f%% vs diesel, "
               "%.3f%% vs static; %d iterations, %.3f s",
               cp, cs, cd, s.pct_vs_diesel.value_or(NAN), s.pct_vs_static.value_or(NAN),
               proposed.iterations, dt));
  }
}

void check_seasonality() {
  const fs::path dir = fs::temp_directory_path() / "microgrid_acceptance_annual";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto pair = mg::synth_profile(mg::ProfileKind::kAnnual, 1);
  mg::write_series_csv((dir / "load.csv").string(), pair.load, mg::kLoadColumn);
  mg::write_series_csv((dir / "irradiance.csv").string(), pair.irradiance, mg::kIrradianceColumn);
  {
    std::ofstream cfg(dir / "scenario.json");
    cfg << R"({"load_csv": "load.csv", "irradiance_csv": "irradiance.csv", "daily_mean": true,
               "mode": "proposed", "output_dir": "out"})";
  }
  const auto cfg = mg::load_config((dir / "scenario.json").string());
  const auto rep = mg::run_scenario(cfg);
  mg::emit_plot_data(rep, cfg.output_dir);
  mg::write_report(rep, cfg.output_dir);

  // Months come from the schedule CSV timestamps; flows from the plot CSV.
  std::ifstream sched(fs::path(cfg.output_dir) / "schedule_proposed.csv");
  std::ifstream flows(fs::path(cfg.output_dir) / "plot_flows_proposed.csv");
  std::string a, b;
  std::getline(sched, a);
  std::getline(flows, b);
  double gw = 0, gs = 0, lw = 0, ls = 0;
  int nw = 0, ns = 0;
  while (std::getline(sched, a) && std::getline(flows, b)) {
    const int month = std::stoi(a.substr(5, 2));
    std::vector<double> v;
    std::istringstream cells(b);
    std::string cell;
    while (std::getline(cells, cell, ',')) v.push_back(std::stod(cell));
    if (month == 12 || month <= 2) gw += v[1], lw += v[2], ++nw;
    if (month >= 6 && month <= 8) gs += v[1], ls += v[2], ++ns;
  }
  fs::remove_all(dir);
  const bool ok = nw > 0 && ns > 0 && gw / nw > gs / ns && ls / ns > lw / nw &&
                  rep.all_converged();
  report(ok, "seasonality",
         fmt("annual (365 daily means): mean p_gl winter %.3f > summer %.3f kW; mean p_pvl "
             "summer %.3f > winter %.3f kW",
             nw ? gw / nw : NAN, ns ? gs / ns : NAN, ns ? ls / ns : NAN, nw ? lw / nw : NAN));
}

void check_lagrangian(const std::vector<mg::DispatchProblem>& cases) {
  mg::SolverOptions o;
  o.track_lagrangian = true;
  double worst = -1e300;
  std::size_t checks = 0;
  bool converged = true;
  auto run = [&](const mg::DispatchProblem& p) {
    const auto r = mg::solve(p, o);
    worst = std::max(worst, r.max_lagrangian_increase);
    checks += r.lagrangian_checks;
    converged = converged && r.converged;
  };
  for (const auto& p : cases) run(p);
  run(day_problem(mg::ProfileKind::kSummerDay));
  run(day_problem(mg::ProfileKind::kWinterDay));
  report(converged && worst <= 1e-9, "monotone-lagrangian",
         fmt("%zu block updates over %zu full solves, largest increase %.2e (<= 1e-9)", checks,
             cases.size() + 2, worst));
}

}  // namespace

int main() {
  const auto cases = corpus();
  check_convexity();
  check_oracle(cases);
  check_collapse(cases);
  check_feasibility(cases);
  check_dominance();
  check_seasonality();
  check_lagrangian(cases);
  std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
