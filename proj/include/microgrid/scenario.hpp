#pragma once

// Scenario configuration, strategy orchestration and report emission.
//
// A scenario file is a JSON object; every key is optional except the two
// series paths, and unknown keys are rejected. Relative paths resolve against
// the directory holding the config file.
//
//   {
//     "load_csv": "load.csv",
//     "irradiance_csv": "irradiance.csv",
//     "daily_mean": false,
//     "mode": "all",                  // proposed | no-degradation | diesel-only | all
//     "output_dir": "out",
//     "label": "summer-day",          // default: name of the config's directory
//     "pv":      {"area_m2": 30, "efficiency": 0.15, "capacity_cap_kw": 4.5},
//     "network": {"loss_factor": 1.05, "gen_min_kw": 0, "gen_max_kw": 5, "h_max_kw": 1e-6,
//                 "soc_min_kwh": 27.5, "soc_max_kwh": 55, "soc_initial_kwh": 41.25},
//     "battery": {"u": 0.035, "v": 0.0052, "p_max_kw": 12, "alpha": 0.01, "v0": 3.2,
//                 "r_internal": 0.1, "q0": 55, "dod": 0.5, "soc_max_kwh": 55,
//                 "eta_c_static": 1, "eta_d_static": 1},
//     "cost":    {"a": 0.25, "b": 0.1, "g1": 1, "g2": 1, "g3": 1, "g4": 1,
//                 "w1": 1, "w2": 10, "w3": 0.1},
//     "solver":  {"rho": 1, "tol_primal": 1e-4, "tol_dual": 1e-4, "max_iters": 5000,
//                 "newton_tol": 1e-10, "newton_max_iters": 50, "projection_interval": 1,
//                 "projection": "clip", "soc_refinement": true, "soc_row_scale": 0.3}
//   }
//
// When the network section omits the SOC band it follows from the battery:
// [(1 - dod) * soc_max, soc_max].

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "microgrid/admm.hpp"
#include "microgrid/baselines.hpp"
#include "microgrid/dispatch_problem.hpp"
#include "microgrid/errors.hpp"
#include "microgrid/microgrid_model.hpp"
#include "microgrid/timeseries.hpp"

namespace microgrid {

enum class RunMode { kProposed, kNoDegradation, kDieselOnly, kAll };

inline RunMode parse_run_mode(std::string_view s) {
  if (s == "proposed") return RunMode::kProposed;
  if (s == "no-degradation") return RunMode::kNoDegradation;
  if (s == "diesel-only") return RunMode::kDieselOnly;
  if (s == "all") return RunMode::kAll;
  throw ConfigError("unknown mode `" + std::string(s) +
                    "` (expected proposed, no-degradation, diesel-only or all)");
}

inline const char* run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::kProposed: return "proposed";
    case RunMode::kNoDegradation: return "no-degradation";
    case RunMode::kDieselOnly: return "diesel-only";
    case RunMode::kAll: return "all";
  }
  return "?";
}

// Schedule check failed after a converged solve; nothing was written.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A solver stopped at max_iters with a schedule that fails validation.
class NotConvergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Initial SOC of the synthetic day scenarios, kWh: 1 kWh below a full pack.
// The objective rewards stored energy, so with more headroom the strategies
// that use the battery can reach a negative total and savings percentages
// against them are undefined.
inline constexpr double kSyntheticDaySocInitial = 54.0;

struct ScenarioConfig {
  std::string load_csv;
  std::string irradiance_csv;
  bool daily_mean = false;
  PvParams pv;
  NetworkParams network;
  BatteryParams battery;
  CostParams cost;
  SolverOptions solver;
  RunMode mode = RunMode::kAll;
  std::string output_dir = "out";
  std::string label;  // names the scenario in savings.json
};

namespace detail {

using Json = nlohmann::ordered_json;

class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("`" + name_ + "` must be an object");
  }

  template <class T>
  bool read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("`" + name_ + "." + key + "` has the wrong type");
    }
    return true;
  }

  void reject_unknown() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key `" + name_ + "." + k + "`");
    }
  }

  // Marks a key as handled elsewhere (nested sections).
  void allow(const char* key) { seen_.insert(key); }

 private:
  const Json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

inline Json subsection(const Json& root, const char* key) {
  const auto it = root.find(key);
  return it == root.end() ? Json::object() : *it;
}

}  // namespace detail

inline ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  using detail::Json;
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ScenarioConfig cfg;
  detail::Section top(root, "config");
  if (!top.read("load_csv", cfg.load_csv)) throw ConfigError("missing key `load_csv`");
  if (!top.read("irradiance_csv", cfg.irradiance_csv)) {
    throw ConfigError("missing key `irradiance_csv`");
  }
  top.read("daily_mean", cfg.daily_mean);
  std::string mode;
  if (top.read("mode", mode)) cfg.mode = parse_run_mode(mode);
  top.read("output_dir", cfg.output_dir);
  if (!top.read("label", cfg.label)) {
    std::filesystem::path dir = base_dir.lexically_normal();
    if (!dir.has_filename()) dir = dir.parent_path();
    cfg.label = dir.filename().string();
    if (cfg.label.empty() || cfg.label == ".") cfg.label = "scenario";
  }

  const Json pv_j = detail::subsection(root, "pv");
  const Json net_j = detail::subsection(root, "network");
  const Json bat_j = detail::subsection(root, "battery");
  const Json cost_j = detail::subsection(root, "cost");
  const Json sol_j = detail::subsection(root, "solver");
  for (const char* k : {"pv", "network", "battery", "cost", "solver"}) top.allow(k);
  top.reject_unknown();

  detail::Section pv(pv_j, "pv");
  pv.read("area_m2", cfg.pv.area);
  pv.read("efficiency", cfg.pv.efficiency);
  pv.read("capacity_cap_kw", cfg.pv.capacity_cap);
  pv.reject_unknown();

  detail::Section bat(bat_j, "battery");
  bat.read("u", cfg.battery.u);
  bat.read("v", cfg.battery.v);
  bat.read("p_max_kw", cfg.battery.p_max);
  bat.read("alpha", cfg.battery.alpha);
  bat.read("v0", cfg.battery.v0);
  bat.read("r_internal", cfg.battery.r_internal);
  bat.read("q0", cfg.battery.q0);
  bat.read("dod", cfg.battery.dod);
  bat.read("soc_max_kwh", cfg.battery.soc_max);
  bat.read("eta_c_static", cfg.battery.eta_c_static);
  bat.read("eta_d_static", cfg.battery.eta_d_static);
  bat.reject_unknown();

  detail::Section net(net_j, "network");
  try {
    const SocLimits lim = soc_limits(cfg.battery.soc_max, cfg.battery.dod);
    cfg.network.soc_min = lim.soc_min;
    cfg.network.soc_max = lim.soc_max;
    cfg.network.soc_initial = 0.5 * (lim.soc_min + lim.soc_max);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  net.read("loss_factor", cfg.network.loss_factor);
  net.read("gen_min_kw", cfg.network.gen_min);
  net.read("gen_max_kw", cfg.network.gen_max);
  net.read("h_max_kw", cfg.network.h_max);
  net.read("soc_min_kwh", cfg.network.soc_min);
  net.read("soc_max_kwh", cfg.network.soc_max);
  net.read("soc_initial_kwh", cfg.network.soc_initial);
  net.reject_unknown();

  detail::Section cost(cost_j, "cost");
  cost.read("a", cfg.cost.a);
  cost.read("b", cfg.cost.b);
  cost.read("g1", cfg.cost.g1);
  cost.read("g2", cfg.cost.g2);
  cost.read("g3", cfg.cost.g3);
  cost.read("g4", cfg.cost.g4);
  cost.read("w1", cfg.cost.w1);
  cost.read("w2", cfg.cost.w2);
  cost.read("w3", cfg.cost.w3);
  cost.reject_unknown();

  detail::Section sol(sol_j, "solver");
  sol.read("rho", cfg.solver.rho);
  sol.read("tol_primal", cfg.solver.tol_primal);
  sol.read("tol_dual", cfg.solver.tol_dual);
  sol.read("max_iters", cfg.solver.max_iters);
  sol.read("newton_tol", cfg.solver.newton_tol);
  sol.read("newton_max_iters", cfg.solver.newton_max_iters);
  sol.read("projection_interval", cfg.solver.projection_interval);
  sol.read("soc_refinement", cfg.solver.soc_refinement);
  sol.read("soc_row_scale", cfg.solver.soc_row_scale);
  std::string proj;
  if (sol.read("projection", proj)) {
    if (proj == "clip") {
      cfg.solver.projection = ProjectionRule::kClipToBound;
    } else if (proj == "zero") {
      cfg.solver.projection = ProjectionRule::kZero;
    } else {
      throw ConfigError("`solver.projection` must be `clip` or `zero`");
    }
  }
  sol.reject_unknown();

  auto resolve = [&](std::string& p) {
    const std::filesystem::path fp(p);
    if (fp.is_relative()) p = (base_dir / fp).lexically_normal().string();
  };
  resolve(cfg.load_csv);
  resolve(cfg.irradiance_csv);
  resolve(cfg.output_dir);

  try {
    cfg.pv.validate();
    cfg.network.validate();
    cfg.battery.validate();
    cfg.cost.validate();
    cfg.solver.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  return parse_config(buf.str(), base.empty() ? std::filesystem::path(".") : base);
}

// Series loaded and aligned into a problem.
struct ScenarioData {
  std::vector<Timestamp> timestamps;
  DispatchProblem problem;
};

inline ScenarioData load_scenario_data(const ScenarioConfig& cfg) {
  for (const auto* p : {&cfg.load_csv, &cfg.irradiance_csv}) {
    if (!std::filesystem::is_regular_file(*p)) throw ConfigError(*p + ": file not found");
  }
  const TimeSeries load = parse_load_csv(cfg.load_csv, cfg.daily_mean);
  const TimeSeries irr = parse_irradiance_csv(cfg.irradiance_csv, cfg.daily_mean);
  if (load.timestamps != irr.timestamps) {
    throw ConfigError("load and irradiance series do not share the same timestamps");
  }
  ScenarioData d;
  d.timestamps = load.timestamps;
  d.problem.dt = load.dt_hours;
  d.problem.load = load.values;
  d.problem.pv_available.reserve(irr.size());
  for (double x : irr.values) d.problem.pv_available.push_back(pv_output(x, cfg.pv));
  d.problem.battery = cfg.battery;
  d.problem.network = cfg.network;
  d.problem.cost = cfg.cost;
  try {
    d.problem.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return d;
}

// One strategy's outcome.
struct StrategyRun {
  RunMode mode = RunMode::kProposed;
  Schedule schedule;
  CostBreakdown cost;          // under the strategy's own efficiency model
  CostBreakdown dynamic_cost;  // full objective under dynamic efficiencies
  bool converged = true;
  int iterations = 0;
  bool refined = false;  // schedule from the SOC-row refinement phase
  double primal_residual = 0.0;
  std::vector<IterationRecord> history;
  std::vector<std::string> warnings;
};

struct DispatchReport {
  std::vector<Timestamp> timestamps;
  std::vector<double> load;
  std::vector<double> pv_available;
  std::vector<StrategyRun> runs;  // in the order proposed, no-degradation, diesel-only
  std::optional<SavingsReport> savings;

  bool all_converged() const {
    for (const auto& r : runs) {
      if (!r.converged) return false;
    }
    return true;
  }
};

inline StrategyRun run_strategy(RunMode mode, const DispatchProblem& p, const SolverOptions& opts) {
  StrategyRun run;
  run.mode = mode;
  const DynamicEfficiency dyn{p.battery};
  if (mode == RunMode::kDieselOnly) {
    BaselineResult b = diesel_only_dispatch(p.load, p.network, p.cost, p.dt);
    run.schedule = std::move(b.schedule);
    run.cost = b.cost;
  } else {
    SolveResult r = mode == RunMode::kProposed
                        ? solve(p, opts)
                        : static_hybrid_dispatch(p, p.battery.eta_c_static,
                                                 p.battery.eta_d_static, opts);
    run.schedule = std::move(r.schedule);
    run.cost = r.cost;
    run.converged = r.converged;
    run.iterations = r.iterations;
    run.refined = r.refined;
    run.primal_residual = r.primal_residual;
    run.history = std::move(r.history);
    run.warnings = std::move(r.warnings);
  }
  run.dynamic_cost = total_objective(run.schedule, dyn, p.cost);
  return run;
}

inline constexpr double kFlowTolerance = 1e-4;  // kW
inline constexpr double kSocTolerance = 1e-6;   // kWh
inline constexpr double kRegimeTolerance = 1e-6;  // kW

// Solves the configured strategies (concurrently for mode=all) and checks
// every schedule; nothing is written here.
inline DispatchReport run_scenario(const ScenarioConfig& cfg, const ScenarioData& data) {
  std::vector<RunMode> modes;
  if (cfg.mode == RunMode::kAll) {
    modes = {RunMode::kProposed, RunMode::kNoDegradation, RunMode::kDieselOnly};
  } else {
    modes = {cfg.mode};
  }
  std::vector<std::future<StrategyRun>> futures;
  for (RunMode m : modes) {
    futures.push_back(std::async(std::launch::async, run_strategy, m, std::cref(data.problem),
                                 std::cref(cfg.solver)));
  }
  DispatchReport rep;
  rep.timestamps = data.timestamps;
  rep.load = data.problem.load;
  rep.pv_available = data.problem.pv_available;
  for (auto& f : futures) rep.runs.push_back(f.get());

  for (const auto& r : rep.runs) {
    const ScheduleViolations v =
        check_schedule(r.schedule, data.problem.load, data.problem.pv_available,
                       data.problem.network);
    if (!v.within(kFlowTolerance, kSocTolerance, kRegimeTolerance)) {
      std::ostringstream msg;
      msg << run_mode_name(r.mode) << " schedule fails validation: balance " << v.max_balance
          << " kW, pv " << v.max_pv_split << " kW, soc " << v.max_soc_excursion
          << " kWh, simultaneous " << v.max_simultaneous << " kW";
      if (!r.converged) {
        throw NotConvergedError(msg.str() + " after " + std::to_string(r.iterations) +
                                " iterations without convergence");
      }
      throw ValidationError(msg.str());
    }
  }
  if (cfg.mode == RunMode::kAll) {
    rep.savings = savings_report(rep.runs[2].dynamic_cost.objective,
                                 rep.runs[1].dynamic_cost.objective,
                                 rep.runs[0].dynamic_cost.objective,
                                 cfg.label);
  }
  return rep;
}

inline DispatchReport run_scenario(const ScenarioConfig& cfg) {
  return run_scenario(cfg, load_scenario_data(cfg));
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(ParseError::Kind::kIo, path.string() + ": cannot write");
  out << text;
  if (!out) throw ParseError(ParseError::Kind::kIo, path.string() + ": write failed");
}

inline Json cost_json(const CostBreakdown& c) {
  return Json{{"j1_generator", c.j1_total},
              {"j2_storage", c.j2_total},
              {"j3_pv", c.j3_total},
              {"objective", c.objective}};
}

inline Json optional_json(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ParseError(ParseError::Kind::kIo, dir.string() + ": cannot create output directory");
  }
}

}  // namespace detail

inline std::string schedule_csv(const DispatchReport& rep, const StrategyRun& run) {
  std::ostringstream out;
  out << "timestamp,load_kw,pv_available_kw,p_gl,p_pvl,p_pves,p_esl,soc_kwh\n";
  const Schedule& s = run.schedule;
  for (std::size_t t = 0; t < s.horizon(); ++t) {
    out << format_iso8601(rep.timestamps[t]) << ',' << format_double(rep.load[t]) << ','
        << format_double(rep.pv_available[t]) << ',' << format_double(s.p_gl[t]) << ','
        << format_double(s.p_pvl[t]) << ',' << format_double(s.p_pves[t]) << ','
        << format_double(s.p_esl[t]) << ',' << format_double(s.soc[t + 1]) << '\n';
  }
  return out.str();
}

inline std::string convergence_log(const StrategyRun& run) {
  std::ostringstream out;
  for (const auto& h : run.history) {
    out << h.iteration << ' ' << format_double(h.primal_residual) << ' '
        << format_double(h.objective) << '\n';
  }
  return out.str();
}

inline std::string costs_json(const DispatchReport& rep) {
  detail::Json j = detail::Json::object();
  for (const auto& r : rep.runs) {
    detail::Json e{{"own_model", detail::cost_json(r.cost)},
                   {"dynamic_efficiency", detail::cost_json(r.dynamic_cost)},
                   {"converged", r.converged},
                   {"iterations", r.iterations},
                   {"soc_refined", r.refined},
                   {"primal_residual", r.primal_residual},
                   {"warnings", r.warnings}};
    j[run_mode_name(r.mode)] = std::move(e);
  }
  return j.dump(2) + "\n";
}

inline std::string savings_json(const SavingsReport& s) {
  detail::Json j{{"label", s.label},
                 {"cost_diesel_only", s.cost_diesel_only},
                 {"cost_static_hybrid", s.cost_static_hybrid},
                 {"cost_proposed", s.cost_proposed},
                 {"pct_vs_diesel", detail::optional_json(s.pct_vs_diesel)},
                 {"pct_vs_static", detail::optional_json(s.pct_vs_static)}};
  return j.dump(2) + "\n";
}

// Files per strategy: schedule_<mode>.csv and, for solver runs,
// convergence_<mode>.log. Shared: costs.json and, for mode=all,
// savings.json. Returns the paths written.
inline std::vector<std::string> write_report(const DispatchReport& rep,
                                             const std::filesystem::path& dir) {
  detail::ensure_dir(dir);
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& text) {
    detail::write_text(dir / name, text);
    written.push_back((dir / name).string());
  };
  for (const auto& r : rep.runs) {
    const std::string m = run_mode_name(r.mode);
    put("schedule_" + m + ".csv", schedule_csv(rep, r));
    if (r.mode != RunMode::kDieselOnly) put("convergence_" + m + ".log", convergence_log(r));
  }
  put("costs.json", costs_json(rep));
  if (rep.savings) put("savings.json", savings_json(*rep.savings));
  return written;
}

// Figure-ready data: plot_flows_<mode>.csv (t, four flows, soc; one row per
// step) and plot_costs.csv (one row per strategy, full dynamic objective).
inline std::vector<std::string> emit_plot_data(const DispatchReport& rep,
                                               const std::filesystem::path& dir) {
  detail::ensure_dir(dir);
  std::vector<std::string> written;
  for (const auto& r : rep.runs) {
    std::ostringstream out;
    out << "t,p_gl,p_pvl,p_pves,p_esl,soc\n";
    const Schedule& s = r.schedule;
    for (std::size_t t = 0; t < s.horizon(); ++t) {
      out << t << ',' << format_double(s.p_gl[t]) << ',' << format_double(s.p_pvl[t]) << ','
          << format_double(s.p_pves[t]) << ',' << format_double(s.p_esl[t]) << ','
          << format_double(s.soc[t + 1]) << '\n';
    }
    const auto path = dir / ("plot_flows_" + std::string(run_mode_name(r.mode)) + ".csv");
    detail::write_text(path, out.str());
    written.push_back(path.string());
  }
  std::ostringstream costs;
  costs << "strategy,cost\n";
  for (const auto& r : rep.runs) {
    costs << run_mode_name(r.mode) << ',' << format_double(r.dynamic_cost.objective) << '\n';
  }
  detail::write_text(dir / "plot_costs.csv", costs.str());
  written.push_back((dir / "plot_costs.csv").string());
  return written;
}

}  // namespace microgrid
