#pragma once

// Rate-dependent capacity fade, efficiency and lifetime relations for a
// lithium-ion storage pack, the charge/discharge cost terms built on them,
// and a finite-difference audit of their curvature.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "microgrid/errors.hpp"

namespace microgrid {

// Ragone parameter alpha*P above which the charging cost is no longer
// treated as concave.
inline constexpr double kRagoneValidityThreshold = 1e-6;

struct BatteryParams {
  double u = 0.035;       // fade coefficient, 1/kW
  double v = 0.0052;      // fade coefficient, 1/kW^2
  double p_max = 12.0;    // rated discharge power, kW
  double alpha = 0.01;    // 2R/V0^2 at pack scale, 1/kW
  double v0 = 3.2;        // cell open-circuit voltage, V (cell-level ops only)
  double r_internal = 0.1;  // cell internal resistance, ohm (cell-level ops only)
  double q0 = 55.0;       // nominal capacity, kWh at pack scale
  double dod = 0.5;       // depth of discharge
  double soc_max = 55.0;  // kWh
  double eta_c_static = 1.0;  // efficiencies used when degradation is ignored
  double eta_d_static = 1.0;

  // Throws DomainError naming the first violated invariant.
  void validate() const {
    auto require = [](bool ok, const char* msg) {
      if (!ok) throw DomainError(std::string("BatteryParams: ") + msg);
    };
    require(std::isfinite(u) && u >= 0.0, "u must be >= 0");
    require(std::isfinite(v) && v >= 0.0, "v must be >= 0");
    require(std::isfinite(p_max) && p_max > 0.0, "p_max must be > 0");
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be >= 0");
    require(dod >= 0.0 && dod <= 1.0, "dod must lie in [0, 1]");
    require(std::isfinite(q0) && q0 > 0.0, "q0 must be > 0");
    require(std::isfinite(soc_max) && soc_max > 0.0, "soc_max must be > 0");
    require(eta_c_static > 0.0 && eta_c_static <= 1.0, "eta_c_static must lie in (0, 1]");
    require(eta_d_static > 0.0 && eta_d_static <= 1.0, "eta_d_static must lie in (0, 1]");
  }
};

struct CellState {
  double current = 0.0;             // A
  double capacity_available = 0.0;  // same units as q0
  double lifetime = 0.0;            // h
};

// Capacity fraction during charging. `out_of_fitted_range` is raised when the
// quadratic fade exceeds the nominal capacity (fraction < 0); the raw value is
// still reported.
struct FadeFraction {
  double value = 1.0;
  bool out_of_fitted_range = false;
};

struct RagoneParameter {
  double value = 0.0;
  bool concavity_valid = true;
};

namespace detail {

inline void require_nonnegative(double p, const char* what) {
  if (!(p >= 0.0)) throw DomainError(std::string(what) + ": power must be >= 0");
}

inline void require_cell(const BatteryParams& b, const char* what) {
  if (!(b.v0 > 0.0) || !(b.r_internal > 0.0)) {
    throw DomainError(std::string(what) + ": v0 and r_internal must be > 0");
  }
}

// (P_max - P) / sqrt(P_max + P), the argument of the discharge tanh.
inline double discharge_argument(double p, double p_max) {
  return (p_max - p) / std::sqrt(p_max + p);
}

}  // namespace detail

inline FadeFraction capacity_fraction_charge(double p, const BatteryParams& b) {
  detail::require_nonnegative(p, "capacity_fraction_charge");
  const double f = 1.0 - b.u * p - b.v * p * p;
  return {f, f < 0.0};
}

inline double capacity_fraction_discharge(double p, const BatteryParams& b) {
  if (!(p >= 0.0) || p > b.p_max) {
    throw DomainError("capacity_fraction_discharge: power must lie in [0, p_max]");
  }
  return std::tanh(detail::discharge_argument(p, b.p_max));
}

// Positive root of P = I*V0 + I^2*R, the charging branch of the equivalent
// circuit. Power in watts.
inline double charge_current(double p, const BatteryParams& b) {
  detail::require_nonnegative(p, "charge_current");
  detail::require_cell(b, "charge_current");
  const double k = b.v0 / (2.0 * b.r_internal);
  return -k + std::sqrt(k * k + p / b.r_internal);
}

// Smaller root of P = I*V0 - I^2*R; defined up to V0^2/(4R).
inline double discharge_current(double p, const BatteryParams& b) {
  detail::require_nonnegative(p, "discharge_current");
  detail::require_cell(b, "discharge_current");
  const double p_max = b.v0 * b.v0 / (4.0 * b.r_internal);
  if (p > p_max * (1.0 + 1e-12)) {
    throw DomainError("discharge_current: power exceeds V0^2/(4R)");
  }
  // At p = p_max the discriminant vanishes; rounding may leave it at -ulp.
  const double k = b.v0 / (2.0 * b.r_internal);
  return k - std::sqrt(std::max(0.0, k * k - p / b.r_internal));
}

inline double max_discharge_power(const BatteryParams& b) {
  detail::require_cell(b, "max_discharge_power");
  return b.v0 * b.v0 / (4.0 * b.r_internal);
}

// Hours until the available capacity is exhausted at a constant current.
inline double cell_lifetime(double capacity_available, double current) {
  if (!(current > 0.0)) throw DomainError("cell_lifetime: current must be > 0");
  if (!(capacity_available >= 0.0)) {
    throw DomainError("cell_lifetime: capacity must be >= 0");
  }
  return capacity_available / current;
}

// Charging at power `p` (W) with the fade-reduced capacity applied.
inline CellState charging_cell_state(double p, const BatteryParams& b) {
  CellState s;
  s.current = charge_current(p, b);
  s.capacity_available = std::clamp(capacity_fraction_charge(p, b).value, 0.0, 1.0) * b.q0;
  s.lifetime = s.current > 0.0 ? cell_lifetime(s.capacity_available, s.current)
                               : std::numeric_limits<double>::infinity();
  return s;
}

// Discharging counterpart. Uses the discharge capacity Q_d (the printed
// lifetime relation repeats Q_c, which contradicts the surrounding text).
inline CellState discharging_cell_state(double p, const BatteryParams& b) {
  CellState s;
  s.current = discharge_current(p, b);
  s.capacity_available = capacity_fraction_discharge(p, b) * b.q0;
  s.lifetime = s.current > 0.0 ? cell_lifetime(s.capacity_available, s.current)
                               : std::numeric_limits<double>::infinity();
  return s;
}

// Energy (Wh) held at infinite time after charging at `p` watts, given the
// available capacity in Ah.
inline double stored_energy_charge(double p, double capacity_available, const BatteryParams& b) {
  detail::require_nonnegative(p, "stored_energy_charge");
  detail::require_cell(b, "stored_energy_charge");
  const double k = b.v0 / (2.0 * b.r_internal);
  return b.q0 * b.v0 + (k - std::sqrt(k * k + p / b.r_internal)) * capacity_available * b.r_internal;
}

// Energy (Wh) deliverable when discharging at `p` watts from Q_d Ah.
inline double available_energy_discharge(double p, double capacity_available,
                                         const BatteryParams& b) {
  detail::require_nonnegative(p, "available_energy_discharge");
  detail::require_cell(b, "available_energy_discharge");
  const double disc = b.v0 * b.v0 - 4.0 * b.r_internal * p;
  if (disc < 0.0) {
    throw DomainError("available_energy_discharge: power exceeds V0^2/(4R)");
  }
  if (p == 0.0) return capacity_available * b.v0;
  // 2RP / (V0 - sqrt(V0^2 - 4RP)) rewritten without the cancellation.
  return capacity_available * (b.v0 + std::sqrt(disc)) / 2.0;
}

inline double eta_c(double p, const BatteryParams& b) {
  detail::require_nonnegative(p, "eta_c");
  const double fade = 1.0 - b.u * p - b.v * p * p;
  return 1.0 + 0.5 * (1.0 - std::sqrt(1.0 + 2.0 * b.alpha * p)) * fade;
}

inline double eta_d(double p, const BatteryParams& b) {
  if (!(p >= 0.0) || p >= b.p_max) {
    throw DomainError("eta_d: power must lie in [0, p_max)");
  }
  return std::tanh(detail::discharge_argument(p, b.p_max));
}

// p * eta_c(p): energy credited to the pack per unit charging time.
inline double charge_cost_exact(double p, const BatteryParams& b) { return p * eta_c(p, b); }

// Second-order truncation of charge_cost_exact, meaningful only while
// ragone_parameter(p).concavity_valid holds.
inline double charge_cost_quadratic(double p, const BatteryParams& b) {
  detail::require_nonnegative(p, "charge_cost_quadratic");
  return p - 0.5 * b.alpha * p * p;
}

// p / eta_d(p): energy drawn from the pack per unit discharging time.
inline double discharge_cost(double p, const BatteryParams& b) {
  const double eta = eta_d(p, b);
  return p == 0.0 ? 0.0 : p / eta;
}

inline RagoneParameter ragone_parameter(double p, const BatteryParams& b) {
  const double value = b.alpha * p;
  return {value, value <= kRagoneValidityThreshold};
}

// Analytic first and second derivatives of the cost terms, used by the
// Newton block solves. Checked against finite differences in the tests.
struct Derivatives {
  double value;
  double first;
  double second;
};

inline Derivatives charge_cost_derivatives(double p, const BatteryParams& b) {
  detail::require_nonnegative(p, "charge_cost_derivatives");
  const double s = std::sqrt(1.0 + 2.0 * b.alpha * p);
  const double ds = b.alpha / s;
  const double d2s = -b.alpha * b.alpha / (s * s * s);
  const double q = 1.0 - b.u * p - b.v * p * p;
  const double dq = -b.u - 2.0 * b.v * p;
  const double d2q = -2.0 * b.v;
  Derivatives d;
  d.value = p + 0.5 * p * (1.0 - s) * q;
  d.first = 1.0 + 0.5 * (1.0 - s) * q - 0.5 * p * ds * q + 0.5 * p * (1.0 - s) * dq;
  d.second = -ds * q + (1.0 - s) * dq - 0.5 * p * d2s * q - p * ds * dq +
             0.5 * p * (1.0 - s) * d2q;
  return d;
}

inline Derivatives discharge_cost_derivatives(double p, const BatteryParams& b) {
  if (!(p >= 0.0) || p >= b.p_max) {
    throw DomainError("discharge_cost_derivatives: power must lie in [0, p_max)");
  }
  const double sum = b.p_max + p;
  const double z = detail::discharge_argument(p, b.p_max);
  const double dz = -(3.0 * b.p_max + p) / (2.0 * sum * std::sqrt(sum));
  const double d2z = -0.5 / (sum * std::sqrt(sum)) +
                     0.75 * (3.0 * b.p_max + p) / (sum * sum * std::sqrt(sum));
  const double th = std::tanh(z);
  const double coth = 1.0 / th;
  const double csch2 = coth * coth - 1.0;
  Derivatives d;
  d.value = p * coth;
  d.first = coth - p * csch2 * dz;
  d.second = -2.0 * csch2 * dz + 2.0 * p * csch2 * coth * dz * dz - p * csch2 * d2z;
  return d;
}

struct ConvexityAudit {
  std::size_t grid_points = 0;
  double upper = 0.0;  // audited interval is [0, upper]
  double step = 0.0;   // finite-difference step
  double min_discharge_second_diff = 0.0;
  double max_charge_second_diff = 0.0;
  bool discharge_convex = false;
  bool charge_concave = false;
  RagoneParameter ragone_at_p_max;
  double tolerance = 1e-6;

  bool passed() const { return discharge_convex && charge_concave; }
};

// Central second differences of the two storage cost terms over an evenly
// spaced grid on [0, margin * p_max]. One-sided stencils are avoided by
// shifting the first point up by one step. Degenerate parameters yield a
// failing report rather than an exception.
inline ConvexityAudit convexity_audit(const BatteryParams& b, std::size_t grid_points,
                                      double margin = 0.95, double tolerance = 1e-6) {
  ConvexityAudit a;
  a.grid_points = grid_points;
  a.tolerance = tolerance;
  a.min_discharge_second_diff = std::numeric_limits<double>::infinity();
  a.max_charge_second_diff = -std::numeric_limits<double>::infinity();
  if (grid_points < 3 || !(margin > 0.0 && margin < 1.0) || !(b.p_max > 0.0)) {
    a.min_discharge_second_diff = std::numeric_limits<double>::quiet_NaN();
    a.max_charge_second_diff = std::numeric_limits<double>::quiet_NaN();
    return a;
  }
  a.ragone_at_p_max = ragone_parameter(b.p_max, b);
  a.upper = margin * b.p_max;
  a.step = b.p_max * 1e-4;
  const double h = a.step;
  bool finite = true;
  for (std::size_t i = 0; i < grid_points; ++i) {
    double p = a.upper * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    p = std::clamp(p, h, a.upper);
    try {
      const double dc = (discharge_cost(p + h, b) - 2.0 * discharge_cost(p, b) +
                         discharge_cost(p - h, b)) / (h * h);
      const double cc = (charge_cost_exact(p + h, b) - 2.0 * charge_cost_exact(p, b) +
                         charge_cost_exact(p - h, b)) / (h * h);
      if (!std::isfinite(dc) || !std::isfinite(cc)) finite = false;
      a.min_discharge_second_diff = std::min(a.min_discharge_second_diff, dc);
      a.max_charge_second_diff = std::max(a.max_charge_second_diff, cc);
    } catch (const DomainError&) {
      finite = false;
    }
  }
  a.discharge_convex = finite && a.min_discharge_second_diff >= -tolerance;
  a.charge_concave = finite && a.max_charge_second_diff <= tolerance;
  return a;
}

}  // namespace microgrid
