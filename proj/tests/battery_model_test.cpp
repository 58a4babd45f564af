#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "microgrid/battery_model.hpp"

namespace mg = microgrid;

namespace {

mg::BatteryParams table1() { return mg::BatteryParams{}; }

mg::BatteryParams cell() {
  mg::BatteryParams b;
  b.v0 = 3.2;
  b.r_internal = 0.1;
  b.q0 = 0.9;
  return b;
}

}  // namespace

TEST(CapacityFraction, ChargeAtZeroPowerIsOne) {
  const auto f = mg::capacity_fraction_charge(0.0, table1());
  EXPECT_DOUBLE_EQ(f.value, 1.0);
  EXPECT_FALSE(f.out_of_fitted_range);
}

TEST(CapacityFraction, ChargeMatchesTableConstants) {
  EXPECT_NEAR(mg::capacity_fraction_charge(2.0, table1()).value, 0.9092, 1e-12);
  EXPECT_NEAR(mg::capacity_fraction_charge(10.0, table1()).value, 0.13, 1e-12);
}

TEST(CapacityFraction, ChargeFlagsFadeBeyondCapacity) {
  // 1 - 0.035 p - 0.0052 p^2 crosses zero near 10.905 kW.
  const auto below = mg::capacity_fraction_charge(10.9, table1());
  const auto above = mg::capacity_fraction_charge(10.91, table1());
  EXPECT_FALSE(below.out_of_fitted_range);
  EXPECT_TRUE(above.out_of_fitted_range);
  EXPECT_LT(above.value, 0.0);
}

TEST(CapacityFraction, ChargeRejectsNegativePower) {
  EXPECT_THROW(mg::capacity_fraction_charge(-1.0, table1()), mg::DomainError);
}

TEST(CapacityFraction, Discharge) {
  EXPECT_DOUBLE_EQ(mg::capacity_fraction_discharge(12.0, table1()), 0.0);
  EXPECT_NEAR(mg::capacity_fraction_discharge(0.0, table1()), 0.998042398598, 1e-11);
  EXPECT_NEAR(mg::capacity_fraction_discharge(6.0, table1()), 0.888385561586, 1e-11);
  EXPECT_THROW(mg::capacity_fraction_discharge(12.5, table1()), mg::DomainError);
  EXPECT_THROW(mg::capacity_fraction_discharge(-0.1, table1()), mg::DomainError);
}

TEST(Current, ChargeRoot) {
  EXPECT_DOUBLE_EQ(mg::charge_current(0.0, cell()), 0.0);
  EXPECT_NEAR(mg::charge_current(1.0, cell()), 0.3095064303, 1e-9);
  const double i = mg::charge_current(10.0, cell());
  EXPECT_LT(std::abs(i * (3.2 + i * 0.1) - 10.0), 1e-9);
}

TEST(Current, DischargeRoot) {
  EXPECT_DOUBLE_EQ(mg::discharge_current(0.0, cell()), 0.0);
  EXPECT_NEAR(mg::discharge_current(1.0, cell()), 0.3156128586, 1e-9);
  const double pmax = mg::max_discharge_power(cell());
  EXPECT_NEAR(pmax, 25.6, 1e-12);
  EXPECT_NEAR(mg::discharge_current(pmax, cell()), 16.0, 1e-9);
  EXPECT_THROW(mg::discharge_current(pmax * 1.01, cell()), mg::DomainError);
}

TEST(Current, RejectsNonPhysicalCell) {
  auto b = cell();
  b.r_internal = 0.0;
  EXPECT_THROW(mg::charge_current(1.0, b), mg::DomainError);
  b = cell();
  b.v0 = -1.0;
  EXPECT_THROW(mg::discharge_current(1.0, b), mg::DomainError);
}

TEST(Lifetime, Division) {
  EXPECT_DOUBLE_EQ(mg::cell_lifetime(0.0, 0.31), 0.0);
  EXPECT_NEAR(mg::cell_lifetime(0.9, 0.31), 2.903225806, 1e-9);
  EXPECT_THROW(mg::cell_lifetime(0.9, 0.0), mg::DomainError);
}

TEST(Lifetime, ChargingStateComposesFadeAndCurrent) {
  auto b = cell();
  b.u = 0.035;
  b.v = 0.0052;
  const auto s = mg::charging_cell_state(2.0, b);
  const double cap = (1.0 - 0.035 * 2.0 - 0.0052 * 4.0) * 0.9;
  const double cur = -16.0 + std::sqrt(256.0 + 20.0);
  EXPECT_NEAR(s.capacity_available, cap, 1e-12);
  EXPECT_NEAR(s.current, cur, 1e-12);
  EXPECT_NEAR(s.lifetime, cap / cur, 1e-9);
}

TEST(Lifetime, DischargingStateUsesDischargeCapacity) {
  auto b = cell();
  b.p_max = 12.0;
  const auto s = mg::discharging_cell_state(1.0, b);
  EXPECT_NEAR(s.capacity_available, std::tanh(11.0 / std::sqrt(13.0)) * 0.9, 1e-12);
  EXPECT_NEAR(s.lifetime, s.capacity_available / s.current, 1e-12);
}

TEST(Energy, StoredOnCharge) {
  EXPECT_DOUBLE_EQ(mg::stored_energy_charge(0.0, 0.9, cell()), 0.9 * 3.2);
  EXPECT_NEAR(mg::stored_energy_charge(1.0, 0.9, cell()), 2.852144421, 1e-9);
}

TEST(Energy, AvailableOnDischarge) {
  EXPECT_DOUBLE_EQ(mg::available_energy_discharge(0.0, 0.9, cell()), 0.9 * 3.2);
  EXPECT_NEAR(mg::available_energy_discharge(1e-9, 0.9, cell()), 0.9 * 3.2, 1e-9);
  EXPECT_NEAR(mg::available_energy_discharge(1.0, 0.9, cell()), 2.851594843, 1e-9);
  EXPECT_DOUBLE_EQ(mg::available_energy_discharge(1.0, 0.0, cell()), 0.0);
  EXPECT_THROW(mg::available_energy_discharge(30.0, 0.9, cell()), mg::DomainError);
}

TEST(Efficiency, Charge) {
  EXPECT_DOUBLE_EQ(mg::eta_c(0.0, table1()), 1.0);
  auto b = table1();
  b.alpha = 0.0;
  for (double p : {0.5, 2.0, 9.0}) EXPECT_DOUBLE_EQ(mg::eta_c(p, b), 1.0);
  EXPECT_NEAR(mg::eta_c(2.0, table1()), 0.990997145824, 1e-11);
  EXPECT_THROW(mg::eta_c(-1.0, table1()), mg::DomainError);
}

TEST(Efficiency, Discharge) {
  EXPECT_NEAR(mg::eta_d(0.0, table1()), 0.998042398598, 1e-11);
  EXPECT_NEAR(mg::eta_d(6.0, table1()), 0.888385561586, 1e-11);
  EXPECT_GT(mg::eta_d(12.0 - 1e-9, table1()), 0.0);
  EXPECT_LT(mg::eta_d(12.0 - 1e-9, table1()), 1e-4);
  EXPECT_THROW(mg::eta_d(12.0, table1()), mg::DomainError);
}

TEST(Cost, ChargeExact) {
  EXPECT_DOUBLE_EQ(mg::charge_cost_exact(0.0, table1()), 0.0);
  auto b = table1();
  b.alpha = 0.0;
  EXPECT_DOUBLE_EQ(mg::charge_cost_exact(3.7, b), 3.7);
  EXPECT_NEAR(mg::charge_cost_exact(2.0, table1()), 1.981994291648, 1e-11);
}

TEST(Cost, ChargeQuadratic) {
  EXPECT_DOUBLE_EQ(mg::charge_cost_quadratic(0.0, table1()), 0.0);
  EXPECT_NEAR(mg::charge_cost_quadratic(2.0, table1()), 1.98, 1e-14);
}

TEST(Cost, QuadraticTracksExactInValidRegime) {
  // Both forms drop the fade factor differently; in the small-alpha regime
  // the gap is of order alpha * p^2 * (u p + v p^2).
  auto b = table1();
  b.alpha = 1e-6;
  EXPECT_NEAR(mg::charge_cost_exact(2.0, b) - mg::charge_cost_quadratic(2.0, b), 1.816e-7, 1e-9);
}

TEST(Cost, Discharge) {
  EXPECT_DOUBLE_EQ(mg::discharge_cost(0.0, table1()), 0.0);
  EXPECT_NEAR(mg::discharge_cost(6.0, table1()), 6.753824307197, 1e-10);
  EXPECT_THROW(mg::discharge_cost(12.0, table1()), mg::DomainError);
}

TEST(Ragone, ValidityThreshold) {
  auto r = mg::ragone_parameter(0.0, table1());
  EXPECT_DOUBLE_EQ(r.value, 0.0);
  EXPECT_TRUE(r.concavity_valid);
  auto b = table1();
  b.alpha = 1e-7;
  r = mg::ragone_parameter(2.0, b);
  EXPECT_NEAR(r.value, 2e-7, 1e-20);
  EXPECT_TRUE(r.concavity_valid);
  r = mg::ragone_parameter(2.0, table1());
  EXPECT_NEAR(r.value, 0.02, 1e-15);
  EXPECT_FALSE(r.concavity_valid);
}

TEST(Derivatives, ChargeMatchesFiniteDifferences) {
  for (double alpha : {0.0, 1e-7, 0.01, 0.2}) {
    auto b = table1();
    b.alpha = alpha;
    for (double p : {0.3, 1.0, 4.0, 9.5}) {
      const double h = 1e-4;
      const auto d = mg::charge_cost_derivatives(p, b);
      const double f0 = mg::charge_cost_exact(p, b);
      const double fp = mg::charge_cost_exact(p + h, b);
      const double fm = mg::charge_cost_exact(p - h, b);
      EXPECT_NEAR(d.value, f0, 1e-13);
      EXPECT_NEAR(d.first, (fp - fm) / (2 * h), 1e-7) << "alpha " << alpha << " p " << p;
      EXPECT_NEAR(d.second, (fp - 2 * f0 + fm) / (h * h), 1e-5) << "alpha " << alpha << " p " << p;
    }
  }
}

TEST(Derivatives, DischargeMatchesFiniteDifferences) {
  for (double p : {0.0, 0.3, 2.0, 6.0, 10.0, 11.4}) {
    const double h = 1e-4;
    const auto d = mg::discharge_cost_derivatives(p, table1());
    const double f0 = mg::discharge_cost(p, table1());
    EXPECT_NEAR(d.value, f0, 1e-12);
    if (p == 0.0) {
      // One-sided at the boundary.
      const double f1 = mg::discharge_cost(h, table1());
      EXPECT_NEAR(d.first, f1 / h, 1e-3);
      continue;
    }
    const double fp = mg::discharge_cost(p + h, table1());
    const double fm = mg::discharge_cost(p - h, table1());
    EXPECT_NEAR(d.first, (fp - fm) / (2 * h), 1e-6 * (1 + std::abs(d.first))) << "p " << p;
    EXPECT_NEAR(d.second, (fp - 2 * f0 + fm) / (h * h), 1e-4 * (1 + std::abs(d.second)))
        << "p " << p;
  }
}

TEST(ConvexityAudit, PassesInValidRegime) {
  auto b = table1();
  b.alpha = 8e-8;
  const auto a = mg::convexity_audit(b, 201);
  EXPECT_TRUE(a.discharge_convex);
  EXPECT_TRUE(a.charge_concave);
  EXPECT_GE(a.min_discharge_second_diff, -1e-6);
  EXPECT_LE(a.max_charge_second_diff, 1e-6);
  EXPECT_TRUE(a.ragone_at_p_max.concavity_valid);
  EXPECT_NEAR(a.upper, 0.95 * 12.0, 1e-12);
}

TEST(ConvexityAudit, FlagsRagoneViolation) {
  auto b = table1();
  b.alpha = 1.0 / b.p_max;
  const auto a = mg::convexity_audit(b, 101);
  EXPECT_NEAR(a.ragone_at_p_max.value, 1.0, 1e-12);
  EXPECT_FALSE(a.ragone_at_p_max.concavity_valid);
}

TEST(ConvexityAudit, LinearChargeCostHasZeroCurvature) {
  auto b = table1();
  b.u = b.v = b.alpha = 0.0;
  const auto a = mg::convexity_audit(b, 101);
  EXPECT_LE(std::abs(a.max_charge_second_diff), 1e-9);
  // The discharge term stays strictly convex; only the charge side is linear.
  EXPECT_GT(a.min_discharge_second_diff, 0.0);
}

TEST(ConvexityAudit, DegenerateGridFails) {
  const auto a = mg::convexity_audit(table1(), 1);
  EXPECT_FALSE(a.passed());
}

TEST(BatteryParams, Validation) {
  EXPECT_NO_THROW(table1().validate());
  auto b = table1();
  b.dod = 1.5;
  EXPECT_THROW(b.validate(), mg::DomainError);
  b = table1();
  b.p_max = 0.0;
  EXPECT_THROW(b.validate(), mg::DomainError);
  b = table1();
  b.u = -0.1;
  EXPECT_THROW(b.validate(), mg::DomainError);
}
