// Command-line front end: solve a scenario, generate synthetic inputs, or
// audit the convexity conditions of a battery parameterization.
//
// Exit status: 0 success, 1 usage, 2 configuration or input error,
// 3 infeasible, 4 not converged (outputs written only if the best iterate
// still validates), 5 validation
// failure, 6 output I/O error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "microgrid/battery_model.hpp"
#include "microgrid/errors.hpp"
#include "microgrid/profiles.hpp"
#include "microgrid/scenario.hpp"
#include "microgrid/timeseries.hpp"

namespace {

namespace mg = microgrid;

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kInfeasible = 3, kNotConverged = 4,
            kValidation = 5, kIo = 6 };

int run_solve(const std::string& config_path, const std::string& mode,
              const std::string& out_dir, bool plot_data) {
  mg::ScenarioConfig cfg = mg::load_config(config_path);
  if (!mode.empty()) cfg.mode = mg::parse_run_mode(mode);
  if (!out_dir.empty()) cfg.output_dir = out_dir;

  const mg::DispatchReport rep = mg::run_scenario(cfg);
  mg::write_report(rep, cfg.output_dir);
  if (plot_data) mg::emit_plot_data(rep, cfg.output_dir);

  for (const auto& r : rep.runs) {
    std::printf("%-15s objective %.6f (dynamic-efficiency %.6f)", mg::run_mode_name(r.mode),
                r.cost.objective, r.dynamic_cost.objective);
    if (r.mode != mg::RunMode::kDieselOnly) {
      std::printf("  %s after %d iterations", r.converged ? "converged" : "NOT converged",
                  r.iterations);
    }
    std::printf("\n");
    for (const auto& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
  }
  if (rep.savings) {
    auto pct = [](const std::optional<double>& v) {
      return v ? std::to_string(*v) + "%" : std::string("undefined");
    };
    std::printf("savings vs diesel-only: %s, vs no-degradation: %s\n",
                pct(rep.savings->pct_vs_diesel).c_str(), pct(rep.savings->pct_vs_static).c_str());
  }
  std::printf("outputs in %s\n", cfg.output_dir.c_str());
  return rep.all_converged() ? kOk : kNotConverged;
}

int run_synth(const std::string& kind_name, std::uint64_t seed, const std::string& out_dir,
              std::optional<double> base, std::optional<double> peak) {
  const mg::ProfileKind kind = mg::parse_profile_kind(kind_name);
  mg::ProfileParams prm = mg::ProfileParams::defaults_for(kind, seed);
  if (base) prm.base = *base;
  if (peak) prm.peak = *peak;
  const mg::ProfilePair pair = mg::synth_profile(kind, prm);

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  mg::write_series_csv((dir / "load.csv").string(), pair.load, mg::kLoadColumn);
  mg::write_series_csv((dir / "irradiance.csv").string(), pair.irradiance,
                       mg::kIrradianceColumn);

  // Day scenarios start just below a full pack; the annual one is aggregated
  // to daily means and starts mid-band.
  nlohmann::ordered_json cfg{{"load_csv", "load.csv"},
                             {"irradiance_csv", "irradiance.csv"},
                             {"daily_mean", kind == mg::ProfileKind::kAnnual},
                             {"mode", "all"},
                             {"output_dir", "out"}};
  if (kind != mg::ProfileKind::kAnnual) cfg["network"] = {{"soc_initial_kwh", mg::kSyntheticDaySocInitial}};
  std::ofstream out(dir / "scenario.json", std::ios::binary);
  out << cfg.dump(2) << "\n";
  if (!out) throw mg::ParseError(mg::ParseError::Kind::kIo, "cannot write scenario.json");
  std::printf("wrote %zu rows of %s profile (seed %llu) to %s\n", pair.load.size(),
              mg::profile_kind_name(kind), static_cast<unsigned long long>(seed),
              dir.string().c_str());
  return kOk;
}

int run_audit(const std::string& config_path, std::size_t grid_points, bool strict) {
  const mg::ScenarioConfig cfg = mg::load_config(config_path);
  const mg::BatteryParams& b = cfg.battery;
  const mg::ConvexityAudit a = mg::convexity_audit(b, grid_points);
  std::printf("grid: %zu points on [0, %.4f] kW, step %.3g kW\n", a.grid_points, a.upper, a.step);
  std::printf("discharge cost: min second difference %.3e -> %s\n", a.min_discharge_second_diff,
              a.discharge_convex ? "convex" : "NOT convex");
  std::printf("charge cost:    max second difference %.3e -> %s\n", a.max_charge_second_diff,
              a.charge_concave ? "concave" : "NOT concave");
  std::printf("Ragone parameter alpha*p_max = %.3e (threshold %.0e): %s\n",
              a.ragone_at_p_max.value, mg::kRagoneValidityThreshold,
              a.ragone_at_p_max.concavity_valid ? "valid" : "outside the validity regime");
  const bool ok = a.passed() && a.ragone_at_p_max.concavity_valid;
  std::printf("verdict: %s\n", ok ? "PASS" : "FAIL");
  return (strict && !ok) ? kValidation : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Degradation-aware economic dispatch for a PV-diesel-battery microgrid"};
  app.require_subcommand(1);

  std::string config, mode, out_dir;
  bool plot_data = false;
  auto* solve = app.add_subcommand("solve", "solve a scenario and write reports");
  solve->add_option("--config", config, "scenario JSON file")->required();
  solve->add_option("--mode", mode, "proposed | no-degradation | diesel-only | all")
      ->check(CLI::IsMember({"proposed", "no-degradation", "diesel-only", "all"}));
  solve->add_option("--out", out_dir, "output directory (overrides the config)");
  solve->add_flag("--emit-plot-data", plot_data, "also write figure-ready CSVs");

  std::string kind, synth_out;
  std::uint64_t seed = 1;
  std::optional<double> base, peak;
  auto* synth = app.add_subcommand("synth", "generate a synthetic scenario");
  synth->add_option("--kind", kind, "summer-day | winter-day | annual")
      ->required()
      ->check(CLI::IsMember({"summer-day", "winter-day", "annual"}));
  synth->add_option("--seed", seed, "random seed")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--base", base, "base load, kW");
  synth->add_option("--peak", peak, "peak load, kW");

  std::string audit_config;
  std::size_t grid_points = 401;
  bool strict = false;
  auto* audit = app.add_subcommand("audit", "check convexity of the storage cost terms");
  audit->add_option("--config", audit_config, "scenario JSON file")->required();
  audit->add_option("--grid-points", grid_points, "audit grid size")->check(CLI::Range(3, 1000000));
  audit->add_flag("--strict", strict, "exit with status 5 when the verdict is FAIL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) return run_solve(config, mode, out_dir, plot_data);
    if (*synth) return run_synth(kind, seed, synth_out, base, peak);
    if (*audit) return run_audit(audit_config, grid_points, strict);
  } catch (const mg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const mg::ParseError& e) {
    std::cerr << (e.kind() == mg::ParseError::Kind::kIo ? "i/o error: " : "input error: ")
              << e.what() << "\n";
    return e.kind() == mg::ParseError::Kind::kIo ? kIo : kConfig;
  } catch (const mg::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const mg::NotConvergedError& e) {
    std::cerr << "not converged: " << e.what() << "\n";
    return kNotConverged;
  } catch (const mg::ValidationError& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return kValidation;
  } catch (const mg::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
