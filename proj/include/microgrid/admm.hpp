#pragma once

// Sequential ADMM for the microgrid dispatch problem.
//
// Each step t contributes three equality rows:
//   balance   p_gl + p_pvl + p_esl                 = loss * load
//   PV limit          p_pvl + p_pves        + s1   = pv
//   regime          n1*p_pves + n2*p_esl    + s2   = h_max
// and two rows for the SOC band, written on the cumulative stored energy
// g(t) = dt * sum_{k<=t} (E_c(p_pves(k)) - E_d(p_esl(k))):
//   SOC upper         g(t)                  + s3   = soc_max - soc_initial
//   SOC lower        -g(t)                  + s4   = soc_initial - soc_min
// Rows are stored family by family (all balance rows, then all PV rows, ...),
// so the dual vector has length 5N. Flow boxes are enforced by clipping
// inside the block updates; slacks are clipped at zero.
//
// The SOC rows price storage capacity across the horizon: without them a
// step that fills the pack early cannot see that a later step would have put
// the same headroom to better use.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "microgrid/battery_model.hpp"
#include "microgrid/dispatch_objective.hpp"
#include "microgrid/dispatch_problem.hpp"
#include "microgrid/errors.hpp"
#include "microgrid/microgrid_model.hpp"

namespace microgrid {

// How the solver reacts when a step's SOC leaves [soc_min, soc_max].
enum class ProjectionRule {
  kZero,         // zero the offending storage flow outright
  kClipToBound,  // shrink it just enough to land on the violated bound
};

struct SolverOptions {
  double rho = 1.0;
  double tol_primal = 1e-4;  // kW, infinity norm of the equality residual
  double tol_dual = 1e-4;    // kW, infinity norm of the iterate change
  int max_iters = 5000;
  double newton_tol = 1e-10;
  int newton_max_iters = 50;
  int projection_interval = 1;
  ProjectionRule projection = ProjectionRule::kClipToBound;
  // Evaluate the augmented Lagrangian around every block update and record
  // the largest increase. Costs six extra evaluations per iteration.
  bool track_lagrangian = false;
  // After the projection loop converges, continue with the SOC rows active
  // and keep that result if it also converges, to a lower objective, within
  // the remaining iteration budget.
  bool soc_refinement = true;
  // Factor applied to the SOC rows (per hour of step length) during the
  // refinement; it balances their penalty against the per-step rows.
  double soc_row_scale = 0.3;

  void validate() const {
    if (!(rho > 0.0) || !(tol_primal > 0.0) || !(tol_dual > 0.0) || max_iters <= 0 ||
        !(newton_tol > 0.0) || newton_max_iters <= 0 || projection_interval <= 0 ||
        !(soc_row_scale > 0.0)) {
      throw DomainError("SolverOptions: all options must be positive");
    }
  }
};

enum class Block { kGenerator, kPvToLoad, kCharge, kDischarge, kSlack };

inline const char* block_name(Block b) {
  switch (b) {
    case Block::kGenerator: return "p_gl";
    case Block::kPvToLoad: return "p_pvl";
    case Block::kCharge: return "p_pves";
    case Block::kDischarge: return "p_esl";
    case Block::kSlack: return "slack";
  }
  return "?";
}

enum RowFamily : std::size_t {
  kBalanceRows = 0,
  kPvRows = 1,
  kRegimeRows = 2,
  kSocUpperRows = 3,
  kSocLowerRows = 4,
};
inline constexpr std::size_t kRowFamilies = 5;

// The per-step part of a flow's constraint matrix: a 3N x N block whose only
// nonzeros are diagonal entries within the balance, PV and regime families;
// coef[family][t] multiplies column t in row family*N + t. The cumulative
// SOC rows are handled separately.
struct DiagonalBlock {
  std::array<std::vector<double>, 3> coef;

  explicit DiagonalBlock(std::size_t n = 0) {
    for (auto& c : coef) c.assign(n, 0.0);
  }

  // Dense 3N x N view, for inspection and tests.
  std::vector<std::vector<double>> dense() const {
    const std::size_t n = coef[0].size();
    std::vector<std::vector<double>> m(3 * n, std::vector<double>(n, 0.0));
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t t = 0; t < n; ++t) m[f * n + t][t] = coef[f][t];
    }
    return m;
  }
};

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;
};

template <class Efficiency>
struct StandardProblem {
  std::size_t n = 0;
  DiagonalBlock A, B, C, D;  // p_gl, p_pvl, p_pves, p_esl
  DiagonalBlock E1, E2;      // PV-limit slack, regime slack
  std::vector<double> rhs;   // c, length 5N
  Box gl_box, pvl_box, pves_box, esl_box;
  std::vector<RegimeCoefficients> regimes;
  Efficiency efficiency;
  CostParams cost;
  double dt = 1.0;         // hours per step
  double soc_scale = 1.0;  // SOC rows are multiplied through by this factor
  double soc_headroom_upper = 0.0;  // soc_max - soc_initial, kWh
  double soc_headroom_lower = 0.0;  // soc_initial - soc_min, kWh

  double soc_row_coef() const { return soc_scale * dt; }

  // Rescales the SOC rows; zero switches them off (every row reads 0 = 0).
  void set_soc_scale(double k) {
    soc_scale = k;
    for (std::size_t t = 0; t < n; ++t) {
      rhs[kSocUpperRows * n + t] = k * soc_headroom_upper;
      rhs[kSocLowerRows * n + t] = k * soc_headroom_lower;
    }
  }

  std::size_t rows() const { return kRowFamilies * n; }
  std::size_t flow_columns() const { return 4 * n; }
  std::size_t slack_columns() const { return 4 * n; }

  // Block objectives f1..f4 at a single step.
  double f1(double p) const { return cost.w1 * generator_cost(p, cost); }
  double f2(double p) const { return -cost.w3 * pv_saving(p, cost); }
  double f3(double p) const { return -cost.w2 * cost.g3 * efficiency.charge_energy(p); }
  double f4(double p) const { return cost.w2 * cost.g4 * efficiency.discharge_energy(p); }

  void set_regime(std::size_t t, RegimeCoefficients r) {
    regimes[t] = r;
    C.coef[kRegimeRows][t] = r.n1;
    D.coef[kRegimeRows][t] = r.n2;
  }
};

// Builds the slack-augmented equality form. Regime rows start from the tie
// rule (all-zero iterate); the solver refreshes them every iteration.
template <class Efficiency>
StandardProblem<Efficiency> assemble_problem(const DispatchProblem& p, Efficiency eff) {
  if (p.pv_available.size() != p.load.size()) {
    throw DomainError("assemble_problem: load and PV series differ in length");
  }
  const std::size_t n = p.horizon();
  StandardProblem<Efficiency> sp;
  sp.n = n;
  sp.A = DiagonalBlock(n);
  sp.B = DiagonalBlock(n);
  sp.C = DiagonalBlock(n);
  sp.D = DiagonalBlock(n);
  sp.E1 = DiagonalBlock(n);
  sp.E2 = DiagonalBlock(n);
  sp.rhs.assign(kRowFamilies * n, 0.0);
  sp.dt = p.dt;
  sp.soc_headroom_upper = p.network.soc_max - p.network.soc_initial;
  sp.soc_headroom_lower = p.network.soc_initial - p.network.soc_min;
  sp.regimes.assign(n, regime_coefficients(0.0, 0.0));
  sp.efficiency = std::move(eff);
  sp.cost = p.cost;
  for (std::size_t t = 0; t < n; ++t) {
    sp.A.coef[kBalanceRows][t] = 1.0;
    sp.B.coef[kBalanceRows][t] = 1.0;
    sp.D.coef[kBalanceRows][t] = 1.0;
    sp.B.coef[kPvRows][t] = 1.0;
    sp.C.coef[kPvRows][t] = 1.0;
    sp.E1.coef[kPvRows][t] = 1.0;
    sp.E2.coef[kRegimeRows][t] = 1.0;
    sp.set_regime(t, sp.regimes[t]);
    sp.rhs[kBalanceRows * n + t] = p.network.loss_factor * p.load[t];
    sp.rhs[kPvRows * n + t] = p.pv_available[t];
    sp.rhs[kRegimeRows * n + t] = p.network.h_max;
  }
  sp.gl_box = {std::vector<double>(n, p.network.gen_min),
               std::vector<double>(n, p.network.gen_max)};
  sp.pvl_box = {std::vector<double>(n, 0.0), p.pv_available};
  sp.pves_box = {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t t = 0; t < n; ++t) {
    sp.pves_box.upper[t] = std::min(p.pv_available[t], p.battery.p_max);
  }
  sp.esl_box = {std::vector<double>(n, 0.0), std::vector<double>(n, p.discharge_bound())};
  sp.set_soc_scale(1.0);
  return sp;
}

inline StandardProblem<DynamicEfficiency> assemble_problem(const DispatchProblem& p) {
  return assemble_problem(p, DynamicEfficiency{p.battery});
}

struct IterationRecord {
  int iteration = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
};

struct AdmmState {
  std::vector<double> p_gl, p_pvl, p_pves, p_esl;
  std::vector<double> slack_pv, slack_regime;
  std::vector<double> slack_soc_upper, slack_soc_lower;
  std::vector<double> mu;  // length 5N
  double rho = 1.0;
  int iteration = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  std::vector<IterationRecord> history;

  AdmmState() = default;
  AdmmState(std::size_t n, double penalty)
      : p_gl(n, 0.0), p_pvl(n, 0.0), p_pves(n, 0.0), p_esl(n, 0.0), slack_pv(n, 0.0),
        slack_regime(n, 0.0), slack_soc_upper(n, 0.0), slack_soc_lower(n, 0.0),
        mu(kRowFamilies * n, 0.0), rho(penalty) {}

  std::size_t horizon() const { return p_gl.size(); }

  std::vector<double>& block(Block b) {
    switch (b) {
      case Block::kGenerator: return p_gl;
      case Block::kPvToLoad: return p_pvl;
      case Block::kCharge: return p_pves;
      case Block::kDischarge: return p_esl;
      case Block::kSlack: break;
    }
    throw DomainError("AdmmState::block: slacks span two vectors");
  }
};

// Cold start: flows at zero, slacks chosen so the PV-limit, regime and SOC
// rows hold exactly, multipliers at zero.
template <class Efficiency>
AdmmState initial_state(const StandardProblem<Efficiency>& sp, double rho) {
  AdmmState st(sp.n, rho);
  for (std::size_t t = 0; t < sp.n; ++t) {
    st.slack_pv[t] = std::max(0.0, sp.rhs[kPvRows * sp.n + t]);
    st.slack_regime[t] = std::max(0.0, sp.rhs[kRegimeRows * sp.n + t]);
    st.slack_soc_upper[t] = std::max(0.0, sp.rhs[kSocUpperRows * sp.n + t]);
    st.slack_soc_lower[t] = std::max(0.0, sp.rhs[kSocLowerRows * sp.n + t]);
  }
  return st;
}

// A*p_gl + B*p_pvl + C*p_pves + D*p_esl + E1*s1 + E2*s2 - c on the per-step
// rows, followed by the SOC upper and lower rows.
template <class Efficiency>
std::vector<double> equality_residual(const StandardProblem<Efficiency>& sp, const AdmmState& st) {
  const std::size_t n = sp.n;
  if (st.horizon() != n || st.mu.size() != sp.rows()) {
    throw DomainError("equality_residual: state does not match problem dimensions");
  }
  std::vector<double> r(sp.rows());
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t t = 0; t < n; ++t) {
      r[f * n + t] = sp.A.coef[f][t] * st.p_gl[t] + sp.B.coef[f][t] * st.p_pvl[t] +
                     sp.C.coef[f][t] * st.p_pves[t] + sp.D.coef[f][t] * st.p_esl[t] +
                     sp.E1.coef[f][t] * st.slack_pv[t] + sp.E2.coef[f][t] * st.slack_regime[t] -
                     sp.rhs[f * n + t];
    }
  }
  double g = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    g += sp.soc_row_coef() * (sp.efficiency.charge_energy(st.p_pves[t]) -
                  sp.efficiency.discharge_energy(st.p_esl[t]));
    r[kSocUpperRows * n + t] = g + st.slack_soc_upper[t] - sp.rhs[kSocUpperRows * n + t];
    r[kSocLowerRows * n + t] = -g + st.slack_soc_lower[t] - sp.rhs[kSocLowerRows * n + t];
  }
  return r;
}

template <class Efficiency>
double objective_value(const StandardProblem<Efficiency>& sp, const AdmmState& st) {
  double f = 0.0;
  for (std::size_t t = 0; t < sp.n; ++t) {
    f += sp.f1(st.p_gl[t]) + sp.f2(st.p_pvl[t]) + sp.f3(st.p_pves[t]) + sp.f4(st.p_esl[t]);
  }
  return f;
}

template <class Efficiency>
double augmented_lagrangian(const StandardProblem<Efficiency>& sp, const AdmmState& st) {
  const std::vector<double> r = equality_residual(sp, st);
  double linear = 0.0;
  double square = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    linear += st.mu[i] * r[i];
    square += r[i] * r[i];
  }
  return objective_value(sp, st) + linear + 0.5 * st.rho * square;
}

struct NewtonResult {
  double root = 0.0;
  bool converged = false;
  bool degenerate = false;  // |f''| fell below 1e-12
  int iterations = 0;
};

// Newton-Raphson on f'(x) = 0. Optional bounds abort the iteration (without
// convergence) as soon as an iterate leaves [lo, hi].
template <class FPrime, class FSecond>
NewtonResult newton_raphson_scalar(FPrime&& f_prime, FSecond&& f_second, double guess, double tol,
                                   int max_iters,
                                   double lo = -std::numeric_limits<double>::infinity(),
                                   double hi = std::numeric_limits<double>::infinity()) {
  NewtonResult res;
  double x = guess;
  for (int k = 0; k < max_iters; ++k) {
    const double g = f_prime(x);
    if (std::abs(g) <= tol) {
      res.root = x;
      res.converged = true;
      res.iterations = k;
      return res;
    }
    const double h = f_second(x);
    if (std::abs(h) < 1e-12 || !std::isfinite(h)) {
      res.root = x;
      res.degenerate = true;
      res.iterations = k;
      return res;
    }
    x -= g / h;
    res.iterations = k + 1;
    if (!(x >= lo && x <= hi)) {
      res.root = x;
      return res;
    }
  }
  res.root = x;
  res.converged = std::abs(f_prime(x)) <= tol;
  return res;
}

// Golden-section minimisation of a unimodal function on [lo, hi].
template <class F>
double golden_section_minimize(F&& f, double lo, double hi, double tol = 1e-12) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  // Compare the interior estimate with the end points; the minimum of a
  // convex function on a box may sit on the boundary.
  const double mid = 0.5 * (a + b);
  double best = mid;
  double fbest = f(mid);
  for (double x : {lo, hi}) {
    const double fx = f(x);
    if (fx < fbest) {
      best = x;
      fbest = fx;
    }
  }
  return best;
}

namespace detail {

// Penalty part of the augmented Lagrangian as seen by one scalar variable:
// P(x) = 0.5*rho*curvature*x^2 + linear*x + const.
struct ScalarPenalty {
  double curvature = 0.0;
  double linear = 0.0;
};

template <class Efficiency>
ScalarPenalty penalty_for(const StandardProblem<Efficiency>& sp, const AdmmState& st,
                          const DiagonalBlock& blk, std::size_t t, double x_current,
                          const std::vector<double>& residual) {
  ScalarPenalty p;
  for (std::size_t f = 0; f < 3; ++f) {
    const double a = blk.coef[f][t];
    if (a == 0.0) continue;
    const std::size_t row = f * sp.n + t;
    const double rest = residual[row] - a * x_current;
    p.curvature += a * a;
    p.linear += a * (st.mu[row] + st.rho * rest);
  }
  return p;
}

inline void apply_change(std::vector<double>& residual, const DiagonalBlock& blk, std::size_t n,
                         std::size_t t, double delta) {
  for (std::size_t f = 0; f < 3; ++f) residual[f * n + t] += blk.coef[f][t] * delta;
}

}  // namespace detail

// Exact minimisation of the augmented Lagrangian over p_gl, p_pvl or the
// slack pair, one step at a time (the block objectives are quadratic, linear
// and zero respectively), followed by clipping to the box.
template <class Efficiency>
void block_update_quadratic(Block block, AdmmState& st, const StandardProblem<Efficiency>& sp) {
  std::vector<double> r = equality_residual(sp, st);
  const std::size_t n = sp.n;
  const CostParams& c = sp.cost;
  switch (block) {
    case Block::kGenerator:
    case Block::kPvToLoad: {
      const bool gen = block == Block::kGenerator;
      const DiagonalBlock& blk = gen ? sp.A : sp.B;
      const Box& box = gen ? sp.gl_box : sp.pvl_box;
      // f(x) = q*x^2 + l*x
      const double q = gen ? c.w1 * c.g1 * c.a : 0.0;
      const double l = gen ? c.w1 * c.g1 * c.b : -c.w3 * c.g2;
      std::vector<double>& x = st.block(block);
      for (std::size_t t = 0; t < n; ++t) {
        const auto pen = detail::penalty_for(sp, st, blk, t, x[t], r);
        const double x_new =
            std::clamp(-(l + pen.linear) / (2.0 * q + st.rho * pen.curvature), box.lower[t],
                       box.upper[t]);
        detail::apply_change(r, blk, n, t, x_new - x[t]);
        x[t] = x_new;
      }
      return;
    }
    case Block::kSlack: {
      for (std::size_t t = 0; t < n; ++t) {
        const auto p1 = detail::penalty_for(sp, st, sp.E1, t, st.slack_pv[t], r);
        st.slack_pv[t] = std::max(0.0, -p1.linear / (st.rho * p1.curvature));
        const auto p2 = detail::penalty_for(sp, st, sp.E2, t, st.slack_regime[t], r);
        st.slack_regime[t] = std::max(0.0, -p2.linear / (st.rho * p2.curvature));
        // SOC slacks enter their rows with coefficient 1.
        for (auto [f, slack] : {std::pair{kSocUpperRows, &st.slack_soc_upper},
                                std::pair{kSocLowerRows, &st.slack_soc_lower}}) {
          const std::size_t row = f * n + t;
          const double rest = r[row] - (*slack)[t];
          (*slack)[t] = std::max(0.0, -(st.mu[row] / st.rho + rest));
          r[row] = rest + (*slack)[t];
        }
      }
      return;
    }
    case Block::kCharge:
    case Block::kDischarge:
      break;
  }
  throw DomainError(std::string("block_update_quadratic: ") + block_name(block) +
                    " is a storage block");
}

struct StorageUpdateStats {
  int newton_solves = 0;
  int fallbacks = 0;
};

namespace detail {

// A fixed set of row values V_i from which members can be removed, answering
// sums over the members with V_i + c > 0 of 1, (V_i + c) and (V_i + c)^2 in
// O(log n). Used for the hinge penalties max(0, V + c)^2 of the SOC rows.
class HingeSums {
 public:
  struct Moments {
    double count = 0.0;
    double linear = 0.0;  // sum of (V + c)
    double square = 0.0;  // sum of (V + c)^2
  };

  explicit HingeSums(const std::vector<double>& values) : n_(values.size()) {
    std::vector<std::size_t> order(n_);
    for (std::size_t i = 0; i < n_; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    sorted_.resize(n_);
    position_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      sorted_[k] = values[order[k]];
      position_[order[k]] = k;
    }
    for (auto& tree : trees_) tree.assign(n_ + 1, 0.0);
    for (std::size_t k = 0; k < n_; ++k) add(k, 1.0);
  }

  void remove(std::size_t member) { add(position_[member], -1.0); }

  Moments above(double c) const {
    const std::size_t first =
        static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), -c) -
                                 sorted_.begin());
    std::array<double, 3> tail{};
    for (std::size_t j = 0; j < 3; ++j) tail[j] = prefix(j, n_) - prefix(j, first);
    return {tail[0], tail[1] + c * tail[0], tail[2] + 2.0 * c * tail[1] + c * c * tail[0]};
  }

 private:
  void add(std::size_t k, double sign) {
    const double v = sorted_[k];
    const std::array<double, 3> d{sign, sign * v, sign * v * v};
    for (std::size_t i = k + 1; i <= n_; i += i & (~i + 1)) {
      for (std::size_t j = 0; j < 3; ++j) trees_[j][i] += d[j];
    }
  }

  double prefix(std::size_t j, std::size_t k) const {
    double s = 0.0;
    for (std::size_t i = k; i > 0; i -= i & (~i + 1)) s += trees_[j][i];
    return s;
  }

  std::size_t n_;
  std::vector<double> sorted_;
  std::vector<std::size_t> position_;
  std::array<std::vector<double>, 3> trees_;
};

}  // namespace detail

// Minimises the augmented Lagrangian over p_pves or p_esl together with the
// SOC-row slacks, one step at a time in time order.
//
// Besides its per-step rows, the flow at step t enters every SOC row from t
// onwards through its stored (or drawn) energy e = coef*E(p). Minimising
// over a row's slack s >= 0 turns mu*r + rho/2*r^2 into
// rho/2*max(0, x + mu/rho)^2 + const, with x the row value without slack, so
// a row contributes only while it is active and the subproblem stays scalar.
// Every row from t onwards has moved by the same amount since the block
// started, which lets HingeSums evaluate the whole tail in O(log N).
//
// The stationary point is found by Newton-Raphson from the previous iterate,
// with golden-section search on the box if Newton fails; the result is
// compared against both box ends and the current value, so an update never
// increases the augmented Lagrangian. The SOC slacks are reset to their
// minimisers at the end. Linear (static-efficiency) models take the same
// path: the hinge terms make their subproblem piecewise quadratic.
template <class Efficiency>
StorageUpdateStats block_update_storage(Block block, AdmmState& st,
                                        const StandardProblem<Efficiency>& sp,
                                        const SolverOptions& opts) {
  if (block != Block::kCharge && block != Block::kDischarge) {
    throw DomainError(std::string("block_update_storage: ") + block_name(block) +
                      " is not a storage block");
  }
  const bool charge = block == Block::kCharge;
  const DiagonalBlock& blk = charge ? sp.C : sp.D;
  const Box& box = charge ? sp.pves_box : sp.esl_box;
  const CostParams& c = sp.cost;
  const double scale = charge ? -c.w2 * c.g3 : c.w2 * c.g4;
  const double sigma = charge ? 1.0 : -1.0;  // sign of e in the SOC upper rows
  const double coef = sp.soc_row_coef();
  const std::size_t n = sp.n;
  const double rho = st.rho;
  std::vector<double>& x = st.block(block);
  std::vector<double> r = equality_residual(sp, st);
  StorageUpdateStats stats;

  auto derivs = [&](double p) {
    return charge ? sp.efficiency.charge_derivatives(p) : sp.efficiency.discharge_derivatives(p);
  };

  // Row values without slack, shifted by mu/rho, at block entry.
  std::vector<double> upper(n), lower(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t u = kSocUpperRows * n + t;
    const std::size_t l = kSocLowerRows * n + t;
    upper[t] = r[u] - st.slack_soc_upper[t] + st.mu[u] / rho;
    lower[t] = r[l] - st.slack_soc_lower[t] + st.mu[l] / rho;
  }
  detail::HingeSums upper_rows(upper), lower_rows(lower);
  double shift = 0.0;  // energy change applied at earlier steps

  for (std::size_t t = 0; t < n; ++t) {
    const auto pen = detail::penalty_for(sp, st, blk, t, x[t], r);
    const double lo = box.lower[t];
    const double hi = box.upper[t];
    const double curv = rho * pen.curvature;
    const double e_cur = coef * derivs(x[t]).value;

    // SOC penalty as a function of the shift c of the upper rows (the lower
    // rows move by -c): value, first and second derivative in c.
    auto soc_terms = [&](double e) {
      const double cs = sigma * (shift - e_cur + e);
      const auto up = upper_rows.above(cs);
      const auto dn = lower_rows.above(-cs);
      return std::array<double, 3>{0.5 * rho * (up.square + dn.square),
                                   rho * sigma * (up.linear - dn.linear),
                                   rho * (up.count + dn.count)};
    };
    auto phi = [&](double p) {
      const auto d = derivs(p);
      return scale * d.value + 0.5 * curv * p * p + pen.linear * p +
             soc_terms(coef * d.value)[0];
    };
    auto dphi = [&](double p) {
      const auto d = derivs(p);
      return scale * d.first + curv * p + pen.linear + soc_terms(coef * d.value)[1] * coef * d.first;
    };
    auto d2phi = [&](double p) {
      const auto d = derivs(p);
      const auto q = soc_terms(coef * d.value);
      return scale * d.second + curv + q[2] * coef * coef * d.first * d.first +
             q[1] * coef * d.second;
    };

    double x_new = lo;
    if (hi > lo) {
      if (dphi(lo) < 0.0 && dphi(hi) > 0.0) {
        ++stats.newton_solves;
        const NewtonResult nr = newton_raphson_scalar(
            dphi, d2phi, std::clamp(x[t], lo, hi), opts.newton_tol, opts.newton_max_iters, lo, hi);
        if (nr.converged) {
          x_new = nr.root;
        } else {
          ++stats.fallbacks;
          x_new = golden_section_minimize(phi, lo, hi);
        }
      }
      double f_best = phi(x_new);
      for (double alt : {lo, hi, std::clamp(x[t], lo, hi)}) {
        const double f_alt = phi(alt);
        if (f_alt < f_best) {
          x_new = alt;
          f_best = f_alt;
        }
      }
    }
    shift += coef * derivs(x_new).value - e_cur;
    detail::apply_change(r, blk, n, t, x_new - x[t]);
    x[t] = x_new;
    upper_rows.remove(t);
    lower_rows.remove(t);
  }

  r = equality_residual(sp, st);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t u = kSocUpperRows * n + t;
    const std::size_t l = kSocLowerRows * n + t;
    st.slack_soc_upper[t] =
        std::max(0.0, -(r[u] - st.slack_soc_upper[t] + st.mu[u] / rho));
    st.slack_soc_lower[t] =
        std::max(0.0, -(r[l] - st.slack_soc_lower[t] + st.mu[l] / rho));
  }
  return stats;
}

// Scaled dual ascent, mu += rho * residual. With rho = 1 this is the plain
// multiplier step.
template <class Efficiency>
void dual_update(AdmmState& st, const StandardProblem<Efficiency>& sp) {
  const std::vector<double> r = equality_residual(sp, st);
  for (std::size_t i = 0; i < r.size(); ++i) st.mu[i] += st.rho * r[i];
}

struct ConvergenceStatus {
  bool converged = false;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

inline ConvergenceStatus convergence_check(const AdmmState& st, const SolverOptions& opts) {
  if (st.iteration < 1) throw DomainError("convergence_check: no iteration completed");
  return {st.primal_residual <= opts.tol_primal && st.dual_residual <= opts.tol_dual,
          st.primal_residual, st.dual_residual};
}

struct SolveResult {
  Schedule schedule;
  CostBreakdown cost;  // under the solver's own efficiency model
  bool converged = false;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  std::vector<IterationRecord> history;
  std::vector<RegimeCoefficients> regimes;
  std::vector<std::string> warnings;
  // Largest increase of the augmented Lagrangian over any single block
  // update; only populated with SolverOptions::track_lagrangian.
  double max_lagrangian_increase = -std::numeric_limits<double>::infinity();
  std::size_t lagrangian_checks = 0;
  int newton_solves = 0;
  int newton_fallbacks = 0;
  // Whether the schedule comes from the SOC-row refinement, and the
  // iterations spent on a refinement that was discarded.
  bool refined = false;
  int discarded_iterations = 0;
};

// Runs the dispatch loop: block updates in the order p_gl, p_pvl, p_pves,
// p_esl, slacks; multiplier step; SOC recomputation and projection; regime
// refresh; convergence test.
//
// solve() works in two phases. The projection phase keeps the SOC rows
// switched off and enforces the band through the projection alone: when a
// step's SOC leaves the band the offending storage flow is reduced (to zero,
// or to the value that lands on the bound) and its upper bound is lowered to
// match for the remaining iterations, so the loop settles on a fixed point
// instead of re-raising the same flow. That rule is greedy in time: a step
// that fills the pack early keeps its charge even when a later step would put
// the headroom to better use.
//
// The refinement phase then restarts from that fixed point with the original
// bounds and the SOC rows active, which price capacity across the horizon;
// the projection still runs, but only as the exact guarantee of the band.
// Its result is kept if it converges to a lower objective within the
// remaining budget. Long, nearly flat horizons may not converge in the
// refinement, in which case the projection-phase schedule stands.
template <class Efficiency>
class AdmmSolver {
 public:
  AdmmSolver(const DispatchProblem& problem, const SolverOptions& opts, Efficiency eff)
      : problem_(problem), opts_(opts) {
    opts_.validate();
    problem_.validate();
    sp_ = assemble_problem(problem_, std::move(eff));
    sp_.set_soc_scale(0.0);
    pves_upper_ = sp_.pves_box.upper;
    esl_upper_ = sp_.esl_box.upper;
    st_ = initial_state(sp_, opts_.rho);
    prev_ = st_;
    best_ = st_;
  }

  const StandardProblem<Efficiency>& standard_problem() const { return sp_; }
  const AdmmState& state() const { return st_; }
  const DispatchProblem& problem() const { return problem_; }

  // One pass of the loop. Returns true once converged.
  bool iterate() {
    prev_ = st_;
    run_block(Block::kGenerator);
    run_block(Block::kPvToLoad);
    run_block(Block::kCharge);
    run_block(Block::kDischarge);
    run_block(Block::kSlack);
    dual_update(st_, sp_);
    ++st_.iteration;

    // Projection and regime refresh act on the iterate before the residual
    // and change are measured, so an iteration that still moves the
    // structure cannot pass the convergence test.
    if (st_.iteration % opts_.projection_interval == 0) project_soc();
    refresh_regimes();

    const std::vector<double> r = equality_residual(sp_, st_);
    st_.primal_residual = inf_norm(r);
    st_.dual_residual = iterate_change(prev_, st_);
    st_.history.push_back(
        {st_.iteration, st_.primal_residual, st_.dual_residual, objective_value(sp_, st_)});
    if (st_.primal_residual <= best_.primal_residual) best_ = st_;
    converged_ = convergence_check(st_, opts_).converged;
    return converged_;
  }

  SolveResult solve() {
    run();
    if (!opts_.soc_refinement || !converged_ || st_.iteration >= opts_.max_iters) {
      return result();
    }
    SolveResult first = result();
    start_refinement();
    run();
    if (converged_) {
      SolveResult second = result();
      if (second.cost.objective <= first.cost.objective) {
        second.refined = true;
        return second;
      }
    }
    first.discarded_iterations = st_.iteration - first.iterations;
    return first;
  }

  bool refining() const { return refining_; }

  SolveResult result() const {
    const AdmmState& out = converged_ ? st_ : best_;
    SolveResult res;
    res.converged = converged_;
    res.iterations = st_.iteration;
    res.primal_residual = out.primal_residual;
    res.dual_residual = out.dual_residual;
    res.history = st_.history;
    res.regimes = sp_.regimes;
    res.schedule = to_schedule(out);
    res.cost = total_objective(res.schedule, sp_.efficiency, sp_.cost);
    res.max_lagrangian_increase = max_lagrangian_increase_;
    res.lagrangian_checks = lagrangian_checks_;
    res.newton_solves = newton_solves_;
    res.newton_fallbacks = newton_fallbacks_;
    if (!converged_) {
      res.warnings.push_back("not converged after " + std::to_string(st_.iteration) +
                             " iterations");
    }
    if (!Efficiency::kLinear && !ragone_parameter(problem_.battery.p_max, problem_.battery)
                                     .concavity_valid) {
      res.warnings.push_back(
          "convexity regime violated: alpha*p_max exceeds 1e-6, global optimality not "
          "guaranteed");
    }
    return res;
  }

 private:
  static double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }

  static double iterate_change(const AdmmState& a, const AdmmState& b) {
    double m = 0.0;
    auto cmp = [&m](const std::vector<double>& x, const std::vector<double>& y) {
      for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
    };
    cmp(a.p_gl, b.p_gl);
    cmp(a.p_pvl, b.p_pvl);
    cmp(a.p_pves, b.p_pves);
    cmp(a.p_esl, b.p_esl);
    cmp(a.slack_pv, b.slack_pv);
    cmp(a.slack_regime, b.slack_regime);
    cmp(a.slack_soc_upper, b.slack_soc_upper);
    cmp(a.slack_soc_lower, b.slack_soc_lower);
    return m;
  }

  void run() {
    while (!converged_ && st_.iteration < opts_.max_iters) iterate();
  }

  // Switches on the SOC rows and restores the storage bounds lowered by the
  // projection phase. Flows, per-step multipliers and regimes carry over; the
  // SOC multipliers start at zero with slacks that satisfy their rows.
  void start_refinement() {
    refining_ = true;
    sp_.set_soc_scale(opts_.soc_row_scale);
    sp_.pves_box.upper = pves_upper_;
    sp_.esl_box.upper = esl_upper_;
    const std::size_t n = sp_.n;
    std::fill(st_.mu.begin() + kSocUpperRows * n, st_.mu.end(), 0.0);
    const std::vector<double> r = equality_residual(sp_, st_);
    for (std::size_t t = 0; t < n; ++t) {
      st_.slack_soc_upper[t] =
          std::max(0.0, st_.slack_soc_upper[t] - r[kSocUpperRows * n + t]);
      st_.slack_soc_lower[t] =
          std::max(0.0, st_.slack_soc_lower[t] - r[kSocLowerRows * n + t]);
    }
    converged_ = false;
    best_ = st_;
    best_.primal_residual = std::numeric_limits<double>::infinity();
  }

  void run_block(Block b) {
    double before = 0.0;
    if (opts_.track_lagrangian) before = augmented_lagrangian(sp_, st_);
    if (b == Block::kCharge || b == Block::kDischarge) {
      const StorageUpdateStats s = block_update_storage(b, st_, sp_, opts_);
      newton_solves_ += s.newton_solves;
      newton_fallbacks_ += s.fallbacks;
    } else {
      block_update_quadratic(b, st_, sp_);
    }
    if (opts_.track_lagrangian) {
      const double after = augmented_lagrangian(sp_, st_);
      max_lagrangian_increase_ = std::max(max_lagrangian_increase_, after - before);
      ++lagrangian_checks_;
    }
  }

  // Walks the horizon in time order, recomputing SOC with any flows already
  // reduced upstream. Returns true if some flow was reduced.
  bool project_soc() {
    const NetworkParams& net = problem_.network;
    const double dt = problem_.dt;
    const auto& eff = sp_.efficiency;
    bool changed = false;
    double soc = net.soc_initial;
    for (std::size_t t = 0; t < sp_.n; ++t) {
      const double soc_t =
          soc + dt * (eff.charge_energy(st_.p_pves[t]) - eff.discharge_energy(st_.p_esl[t]));
      const StepFlows before{st_.p_gl[t], st_.p_pvl[t], st_.p_pves[t], st_.p_esl[t]};
      StepFlows after = soc_projection(before, soc_t, net);
      if (opts_.projection == ProjectionRule::kClipToBound) {
        if (after.p_pves != before.p_pves) {
          // Largest charge keeping SOC(t) <= soc_max.
          const double drain = soc - dt * eff.discharge_energy(before.p_esl);
          after.p_pves = largest_below(
              [&](double p) { return drain + dt * eff.charge_energy(p) <= net.soc_max; },
              before.p_pves);
        } else if (after.p_esl != before.p_esl) {
          const double fill = soc + dt * eff.charge_energy(before.p_pves);
          after.p_esl = largest_below(
              [&](double p) { return fill - dt * eff.discharge_energy(p) >= net.soc_min; },
              before.p_esl);
        }
      }
      if (after.p_pves != before.p_pves) {
        st_.p_pves[t] = after.p_pves;
        if (!refining_) sp_.pves_box.upper[t] = std::min(sp_.pves_box.upper[t], after.p_pves);
        changed = true;
      }
      if (after.p_esl != before.p_esl) {
        st_.p_esl[t] = after.p_esl;
        if (!refining_) sp_.esl_box.upper[t] = std::min(sp_.esl_box.upper[t], after.p_esl);
        changed = true;
      }
      soc += dt * (eff.charge_energy(st_.p_pves[t]) - eff.discharge_energy(st_.p_esl[t]));
    }
    return changed;
  }

  // Bisection for the largest p in [0, hi] with ok(p), given ok is monotone
  // (true below a threshold). Returns the feasible end of the final bracket.
  template <class Pred>
  static double largest_below(Pred&& ok, double hi) {
    if (!ok(0.0)) return 0.0;
    double lo = 0.0;
    for (int k = 0; k < 200 && hi - lo > 1e-14 * (1.0 + hi); ++k) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? lo : hi) = mid;
    }
    return lo;
  }

  bool refresh_regimes() {
    bool changed = false;
    for (std::size_t t = 0; t < sp_.n; ++t) {
      const RegimeCoefficients r = regime_coefficients(st_.p_pves[t], st_.p_esl[t]);
      if (!(r == sp_.regimes[t])) {
        sp_.set_regime(t, r);
        changed = true;
      }
    }
    return changed;
  }

  Schedule to_schedule(const AdmmState& s) const {
    Schedule out(sp_.n, problem_.dt, problem_.network.soc_initial);
    out.p_gl = s.p_gl;
    out.p_pvl = s.p_pvl;
    out.p_pves = s.p_pves;
    out.p_esl = s.p_esl;
    out.soc = soc_trajectory(out.p_pves, out.p_esl, problem_.network.soc_initial, problem_.dt,
                             sp_.efficiency);
    return out;
  }

  DispatchProblem problem_;
  SolverOptions opts_;
  StandardProblem<Efficiency> sp_;
  AdmmState st_;
  AdmmState prev_;
  AdmmState best_;
  bool converged_ = false;
  bool refining_ = false;
  std::vector<double> pves_upper_, esl_upper_;  // storage bounds before projection
  double max_lagrangian_increase_ = -std::numeric_limits<double>::infinity();
  std::size_t lagrangian_checks_ = 0;
  int newton_solves_ = 0;
  int newton_fallbacks_ = 0;
};

// Degradation-aware dispatch with rate-dependent efficiencies.
inline SolveResult solve(const DispatchProblem& problem, const SolverOptions& opts = {}) {
  AdmmSolver<DynamicEfficiency> solver(problem, opts, DynamicEfficiency{problem.battery});
  return solver.solve();
}

}  // namespace microgrid
