#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "microgrid/battery_model.hpp"
#include "microgrid/errors.hpp"
#include "microgrid/microgrid_model.hpp"

namespace microgrid {

struct CostParams {
  double a = 0.25;  // quadratic fuel coefficient
  double b = 0.1;   // linear fuel coefficient
  double g1 = 1.0;  // unit costs
  double g2 = 1.0;
  double g3 = 1.0;
  double g4 = 1.0;
  double w1 = 1.0;  // component weights
  double w2 = 10.0;
  double w3 = 0.1;

  void validate() const {
    if (!(a >= 0.0)) throw DomainError("CostParams: a must be >= 0");
    if (!(g1 >= 0.0 && g2 >= 0.0 && g3 >= 0.0 && g4 >= 0.0)) {
      throw DomainError("CostParams: unit costs must be >= 0");
    }
    if (!(w1 >= 0.0 && w2 >= 0.0 && w3 >= 0.0)) {
      throw DomainError("CostParams: weights must be >= 0");
    }
  }
};

// Totals over the horizon. objective = w1*j1 - w2*j2 - w3*j3.
struct CostBreakdown {
  double j1_total = 0.0;  // generator fuel cost
  double j2_total = 0.0;  // storage term (charging credited, discharging debited)
  double j3_total = 0.0;  // PV-to-load saving
  double objective = 0.0;
};

inline double generator_cost(double p_gl, const CostParams& c) {
  return c.g1 * (c.a * p_gl * p_gl + c.b * p_gl);
}

inline double pv_saving(double p_pvl, const CostParams& c) { return c.g2 * p_pvl; }

template <class Efficiency>
double storage_saving(double p_pves, double p_esl, const Efficiency& eff, const CostParams& c) {
  return c.g3 * eff.charge_energy(p_pves) - c.g4 * eff.discharge_energy(p_esl);
}

inline double storage_saving(double p_pves, double p_esl, const BatteryParams& battery,
                             const CostParams& c) {
  return storage_saving(p_pves, p_esl, DynamicEfficiency{battery}, c);
}

// Weighted objective of a schedule. Costs are per step; no dt factor is
// applied so the sum stays in the discrete form of the cost model.
template <class Efficiency>
CostBreakdown total_objective(const Schedule& s, const Efficiency& eff, const CostParams& c) {
  CostBreakdown out;
  for (std::size_t t = 0; t < s.horizon(); ++t) {
    out.j1_total += generator_cost(s.p_gl[t], c);
    out.j2_total += storage_saving(s.p_pves[t], s.p_esl[t], eff, c);
    out.j3_total += pv_saving(s.p_pvl[t], c);
  }
  out.objective = c.w1 * out.j1_total - c.w2 * out.j2_total - c.w3 * out.j3_total;
  return out;
}

inline CostBreakdown total_objective(const Schedule& s, std::span<const double> load,
                                     const BatteryParams& battery, const CostParams& c) {
  if (load.size() != s.horizon()) {
    throw DomainError("total_objective: load and schedule lengths differ");
  }
  return total_objective(s, DynamicEfficiency{battery}, c);
}

}  // namespace microgrid
