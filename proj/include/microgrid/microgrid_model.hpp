#pragma once

// Feasibility side of the dispatch problem: PV output, power balance,
// state-of-charge dynamics and limits, regime switching and the SOC
// projection rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "microgrid/battery_model.hpp"
#include "microgrid/errors.hpp"

namespace microgrid {

// One dispatch over N steps. All flows are kW and nonnegative; soc has N+1
// entries with soc[0] the initial state.
struct Schedule {
  double dt = 1.0;  // hours per step
  std::vector<double> p_gl;    // generator -> load
  std::vector<double> p_pvl;   // PV -> load
  std::vector<double> p_pves;  // PV -> storage
  std::vector<double> p_esl;   // storage -> load
  std::vector<double> soc;     // kWh

  Schedule() = default;
  Schedule(std::size_t n, double dt_hours, double soc0)
      : dt(dt_hours), p_gl(n, 0.0), p_pvl(n, 0.0), p_pves(n, 0.0), p_esl(n, 0.0),
        soc(n + 1, soc0) {}

  std::size_t horizon() const { return p_gl.size(); }
};

struct PvParams {
  double area = 30.0;         // m^2
  double efficiency = 0.15;
  double capacity_cap = 4.5;  // kW

  void validate() const {
    if (!(area > 0.0)) throw DomainError("PvParams: area must be > 0");
    if (!(efficiency > 0.0 && efficiency <= 1.0)) {
      throw DomainError("PvParams: efficiency must lie in (0, 1]");
    }
    if (!(capacity_cap > 0.0)) throw DomainError("PvParams: capacity_cap must be > 0");
  }
};

struct SocLimits {
  double soc_min = 0.0;
  double soc_max = 0.0;
};

inline SocLimits soc_limits(double soc_max, double dod) {
  if (!(dod >= 0.0 && dod <= 1.0)) throw DomainError("soc_limits: dod must lie in [0, 1]");
  return {(1.0 - dod) * soc_max, soc_max};
}

struct NetworkParams {
  double loss_factor = 1.05;
  double gen_min = 0.0;  // kW
  double gen_max = 5.0;  // kW
  double h_max = 1e-6;   // kW
  double soc_min = 27.5;
  double soc_max = 55.0;
  double soc_initial = 41.25;

  // Network limits consistent with a battery: SOC bounds follow from its
  // capacity and depth of discharge.
  static NetworkParams for_battery(const BatteryParams& b, double soc_initial) {
    NetworkParams n;
    const SocLimits lim = soc_limits(b.soc_max, b.dod);
    n.soc_min = lim.soc_min;
    n.soc_max = lim.soc_max;
    n.soc_initial = soc_initial;
    return n;
  }

  void validate() const {
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw DomainError(std::string("NetworkParams: ") + msg);
    };
    require(loss_factor > 0.0, "loss_factor must be > 0");
    require(gen_min >= 0.0 && gen_min <= gen_max, "need 0 <= gen_min <= gen_max");
    require(h_max > 0.0 && h_max < gen_max, "need 0 < h_max << gen_max");
    require(soc_min >= 0.0 && soc_min <= soc_max, "need 0 <= soc_min <= soc_max");
    require(soc_initial >= soc_min && soc_initial <= soc_max,
            "soc_initial must lie in [soc_min, soc_max]");
  }
};

inline double pv_output(double irradiance, const PvParams& pv) {
  if (!(irradiance >= 0.0)) throw DomainError("pv_output: irradiance must be >= 0");
  return std::min(pv.area * pv.efficiency * irradiance, pv.capacity_cap);
}

// Positive values mean more PV was routed than was available.
inline double pv_split_residual(double p_pvl, double p_pves, double p_pv) {
  return p_pvl + p_pves - p_pv;
}

inline double balance_residual(double p_gl, double p_pvl, double p_esl, double load,
                               const NetworkParams& net) {
  return p_gl + p_pvl + p_esl - net.loss_factor * load;
}

// SOC recursion for an arbitrary efficiency model. The model supplies
// charge_energy(p) = p*eta_c(p) and discharge_energy(p) = p/eta_d(p).
template <class Efficiency>
std::vector<double> soc_trajectory(std::span<const double> p_pves, std::span<const double> p_esl,
                                   double soc0, double dt, const Efficiency& eff) {
  if (p_pves.size() != p_esl.size()) {
    throw DomainError("soc_trajectory: flow sequences differ in length");
  }
  std::vector<double> soc(p_pves.size() + 1);
  soc[0] = soc0;
  for (std::size_t t = 0; t < p_pves.size(); ++t) {
    soc[t + 1] = soc[t] + dt * (eff.charge_energy(p_pves[t]) - eff.discharge_energy(p_esl[t]));
  }
  return soc;
}

// Dynamic (rate-dependent) efficiencies from the fade model.
struct DynamicEfficiency {
  static constexpr bool kLinear = false;
  BatteryParams battery;

  double charge_energy(double p) const { return charge_cost_exact(p, battery); }
  double discharge_energy(double p) const { return discharge_cost(p, battery); }
  Derivatives charge_derivatives(double p) const { return charge_cost_derivatives(p, battery); }
  Derivatives discharge_derivatives(double p) const {
    return discharge_cost_derivatives(p, battery);
  }
};

// Constant efficiencies: the storage terms become linear.
struct StaticEfficiency {
  static constexpr bool kLinear = true;
  double eta_c = 1.0;
  double eta_d = 1.0;

  double charge_energy(double p) const { return eta_c * p; }
  double discharge_energy(double p) const { return p / eta_d; }
  Derivatives charge_derivatives(double p) const { return {eta_c * p, eta_c, 0.0}; }
  Derivatives discharge_derivatives(double p) const { return {p / eta_d, 1.0 / eta_d, 0.0}; }
};

inline std::vector<double> soc_trajectory(std::span<const double> p_pves,
                                          std::span<const double> p_esl, double soc0, double dt,
                                          const BatteryParams& battery) {
  return soc_trajectory(p_pves, p_esl, soc0, dt, DynamicEfficiency{battery});
}

// Binary weights of the no-simultaneous-charge/discharge row
// n1*p_pves + n2*p_esl <= h_max. Whichever flow is larger in the previous
// iterate survives; the other is suppressed. Ties suppress discharge.
struct RegimeCoefficients {
  int n1 = 0;  // weight on p_pves
  int n2 = 1;  // weight on p_esl

  bool operator==(const RegimeCoefficients&) const = default;
};

inline RegimeCoefficients regime_coefficients(double p_pves_iter, double p_esl_iter) {
  if (p_esl_iter > p_pves_iter) return {1, 0};
  return {0, 1};
}

struct StepFlows {
  double p_gl = 0.0;
  double p_pvl = 0.0;
  double p_pves = 0.0;
  double p_esl = 0.0;
};

// Zero the storage flow that pushed SOC outside [soc_min, soc_max].
inline StepFlows soc_projection(StepFlows flows, double soc_t, const NetworkParams& net) {
  if (soc_t > net.soc_max) {
    flows.p_pves = 0.0;
  } else if (soc_t < net.soc_min) {
    flows.p_esl = 0.0;
  }
  return flows;
}

struct ScheduleViolations {
  double max_balance = 0.0;  // max |balance residual|
  double max_pv_split = 0.0;  // max positive PV overuse
  double max_soc_excursion = 0.0;  // distance outside [soc_min, soc_max]
  double max_simultaneous = 0.0;   // max min(p_pves, p_esl)
  double min_flow = 0.0;           // most negative flow entry

  bool within(double flow_tol, double soc_tol, double regime_tol) const {
    return max_balance <= flow_tol && max_pv_split <= flow_tol &&
           max_soc_excursion <= soc_tol && max_simultaneous <= regime_tol &&
           min_flow >= -flow_tol;
  }
};

// Measures how far a schedule is from the feasibility invariants.
inline ScheduleViolations check_schedule(const Schedule& s, std::span<const double> load,
                                         std::span<const double> pv_available,
                                         const NetworkParams& net) {
  ScheduleViolations v;
  for (std::size_t t = 0; t < s.horizon(); ++t) {
    v.max_balance = std::max(
        v.max_balance, std::abs(balance_residual(s.p_gl[t], s.p_pvl[t], s.p_esl[t], load[t], net)));
    v.max_pv_split =
        std::max(v.max_pv_split, pv_split_residual(s.p_pvl[t], s.p_pves[t], pv_available[t]));
    v.max_simultaneous = std::max(v.max_simultaneous, std::min(s.p_pves[t], s.p_esl[t]));
    v.min_flow = std::min({v.min_flow, s.p_gl[t], s.p_pvl[t], s.p_pves[t], s.p_esl[t]});
  }
  for (double soc : s.soc) {
    v.max_soc_excursion =
        std::max({v.max_soc_excursion, net.soc_min - soc, soc - net.soc_max});
  }
  return v;
}

}  // namespace microgrid
