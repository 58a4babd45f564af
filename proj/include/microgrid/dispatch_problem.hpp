#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "microgrid/battery_model.hpp"
#include "microgrid/dispatch_objective.hpp"
#include "microgrid/errors.hpp"
#include "microgrid/microgrid_model.hpp"

namespace microgrid {

// Discharge is held strictly below p_max, where eta_d reaches zero.
inline constexpr double kDischargeBoundFraction = 0.999;

struct DispatchProblem {
  double dt = 1.0;
  std::vector<double> load;          // kW
  std::vector<double> pv_available;  // kW, after the array cap
  BatteryParams battery;
  NetworkParams network;
  CostParams cost;

  std::size_t horizon() const { return load.size(); }

  double discharge_bound() const { return kDischargeBoundFraction * battery.p_max; }

  // Checks shapes and parameter invariants, then that each step can be
  // served at all by generator, PV and the largest admissible discharge.
  void validate() const {
    if (load.empty()) throw DomainError("DispatchProblem: empty horizon");
    if (pv_available.size() != load.size()) {
      throw DomainError("DispatchProblem: load and PV series differ in length");
    }
    if (!(dt > 0.0)) throw DomainError("DispatchProblem: dt must be > 0");
    battery.validate();
    network.validate();
    cost.validate();
    for (std::size_t t = 0; t < load.size(); ++t) {
      if (!(load[t] >= 0.0) || !(pv_available[t] >= 0.0)) {
        throw DomainError("DispatchProblem: negative load or PV at step " + std::to_string(t));
      }
    }
    check_feasible();
  }

  void check_feasible() const {
    for (std::size_t t = 0; t < load.size(); ++t) {
      const double demand = network.loss_factor * load[t];
      const double supply = network.gen_max + pv_available[t] + discharge_bound();
      if (demand > supply) {
        throw InfeasibleError("step " + std::to_string(t) + ": demand " + std::to_string(demand) +
                                  " kW exceeds maximum supply " + std::to_string(supply) + " kW",
                              t);
      }
    }
  }
};

}  // namespace microgrid
