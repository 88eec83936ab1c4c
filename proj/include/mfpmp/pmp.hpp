#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mfpmp/variations.hpp"

namespace mfpmp {

// Phase-space particle cloud nu(t) = sum_i w_i delta_{(x_i, r_i)} over the
// whole time grid. The x-components are copied verbatim from the forward
// trajectory (the backward pass never re-integrates them), so the first
// marginal matches the state curve bitwise.
struct CostateCloud {
  std::vector<double> times;
  std::vector<EmpiricalMeasure> states;      // x marginal per time
  std::vector<std::vector<Vec>> costates;    // r per time per particle

  std::size_t index_of(double t, double tol = 1e-9) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    if (it == times.end() || std::abs(*it - t) > tol)
      throw InvalidArgument("CostateCloud: time off the grid");
    return static_cast<std::size_t>(it - times.begin());
  }
};

// r_i(T) = -gradient of the terminal cost: the product-structure datum
// nu(T) = (I x (-grad phi))_# mu(T).
inline std::vector<Vec> terminal_costate(const EmpiricalMeasure& mu_t, const TerminalCost& cost) {
  auto g = terminal_gradient(cost, mu_t);
  for (auto& v : g) v = -v;
  return g;
}

// Backward integration of the costate system on the stored forward grid:
//   rdot_i = gamma_L(t, x_i) - [D_x u + D_x v[mu]]^T r_i
//            - sum_j w_j D_y H(t, x_j, x_i)^T r_j
// from r(T) = terminal down to t = 0. States at half-steps are linearly
// interpolated from the stored trajectory.
inline CostateCloud costate_backward(const NonlocalField& field, const ControlSignal& u,
                                     const Trajectory& traj, const RunningCost* running,
                                     std::vector<Vec> terminal) {
  const std::size_t steps = traj.steps();
  const std::size_t n = traj.initial().size();
  if (terminal.size() != n) throw InvalidArgument("costate_backward: terminal size mismatch");
  const auto& weights = traj.initial().weights();
  const double guard = 1e6 * (1.0 + [&] {
    double m = 0.0;
    for (const auto& r : terminal) m = std::max(m, r.norm());
    return m;
  }());

  std::vector<std::vector<Vec>> rs(steps);
  rs[steps - 1] = std::move(terminal);

  std::vector<Vec> y = rs[steps - 1];
  std::vector<Vec> ys(n), d1(n), d2(n), d3(n), d4(n);

  const auto deriv = [&](double t, const std::vector<Vec>& pos, const ControlField& omega,
                         const std::vector<Vec>& r, std::vector<Vec>& dr) {
    const EmpiricalMeasure stage_mu(pos, weights, EmpiricalMeasure::TrustedWeights{});
    parallel_for(n, [&](std::size_t i) {
      dr[i] = -velocity_jacobian(field, &omega, stage_mu, t, pos[i]).transpose() * r[i];
      if (running != nullptr) {
        const Vec w = omega.eval(pos[i]);
        dr[i] += running->grad_x(pos[i], w) + omega.jacobian(pos[i]).transpose() *
                                                  running->grad_v(pos[i], w);
      }
      if (!field.kernel.is_zero())
        for (std::size_t j = 0; j < n; ++j)
          dr[i] -= weights[j] *
                   (interaction_gamma(field, t, pos[j], pos[i]).transpose() * r[j]);
    });
  };

  for (std::size_t k = steps - 1; k > 0; --k) {
    const double t_hi = traj.times[k], t_lo = traj.times[k - 1];
    const double h = t_lo - t_hi;  // negative
    const ControlField& omega = u.field_at(0.5 * (t_lo + t_hi));
    const auto& x_hi = traj.states[k].points();
    const auto x_mid = traj.positions_between(k - 1, 0.5);
    const auto& x_lo = traj.states[k - 1].points();

    deriv(t_hi, x_hi, omega, y, d1);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + 0.5 * h * d1[i];
    deriv(t_hi + 0.5 * h, x_mid, omega, ys, d2);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + 0.5 * h * d2[i];
    deriv(t_hi + 0.5 * h, x_mid, omega, ys, d3);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + h * d3[i];
    deriv(t_lo, x_lo, omega, ys, d4);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += (h / 6.0) * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
      if (!y[i].allFinite() || y[i].norm() > guard)
        throw BlowupError("costate_backward: costate blew up at t=" + std::to_string(t_lo));
    }
    rs[k - 1] = y;
  }

  CostateCloud cloud;
  cloud.times = traj.times;
  cloud.states = traj.states;
  cloud.costates = std::move(rs);
  return cloud;
}

inline CostateCloud solve_costate(const NonlocalField& field, const ControlSignal& u,
                                  const Trajectory& traj, const TerminalCost& phi,
                                  const RunningCost* running) {
  return costate_backward(field, u, traj, running, terminal_costate(traj.terminal(), phi));
}

// H(t, nu, omega) = sum_i w_i <r_i, v[mu](t,x_i) + omega(x_i)> - L(mu, omega).
inline double hamiltonian(const EmpiricalMeasure& mu, const std::vector<Vec>& costates,
                          const NonlocalField& field, const RunningCost* running,
                          const ControlField& omega, double t) {
  double h = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    h += mu.weight(i) *
         costates[i].dot(eval_velocity(field, &omega, mu, t, mu.point(i)));
  if (running != nullptr) h -= eval_running(*running, mu, omega);
  return h;
}

struct KCurve {
  std::vector<double> times;
  std::vector<double> values;
};

// The needle-indexed map
//   K(t) = int <r, F_t> dnu(t) - int_tau^t int <gamma_L(s,.), F_s> dmu(s) ds
//          + [L(mu(tau), u*(tau)) - L(mu(tau), omega)],
// constant in t along extremals. Evaluated on the stored grid for t >= tau.
inline KCurve k_function(const NonlocalField& field, const ControlSignal& u,
                         const Trajectory& traj, const CostateCloud& costate,
                         const RunningCost* running, const NeedleParams& params) {
  const auto f = needle_first_order(field, u, traj, params);
  const std::size_t k0 = traj.index_of(params.tau);
  const auto& weights = traj.initial().weights();
  const std::size_t n = weights.size();

  double bracket = 0.0;
  if (running != nullptr) {
    const auto& mu_tau = traj.states[k0];
    bracket = eval_running(*running, mu_tau, u.field_at(params.tau)) -
              eval_running(*running, mu_tau, params.omega);
  }

  KCurve curve;
  double integral = 0.0;
  const auto pairing_l = [&](std::size_t k, const ControlField& omega) {
    const auto gl = running_gradient(*running, traj.states[k], omega);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += weights[i] * gl[i].dot(f.vectors[k - k0][i]);
    return acc;
  };

  for (std::size_t k = k0; k < traj.steps(); ++k) {
    if (running != nullptr && k > k0) {
      const ControlField& omega = u.field_at(0.5 * (traj.times[k - 1] + traj.times[k]));
      integral += 0.5 * (pairing_l(k - 1, omega) + pairing_l(k, omega)) *
                  (traj.times[k] - traj.times[k - 1]);
    }
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      phase += weights[i] * costate.costates[k][i].dot(f.vectors[k - k0][i]);
    curve.times.push_back(traj.times[k]);
    curve.values.push_back(phase - integral + bracket);
  }
  return curve;
}

struct MaximizationViolation {
  double t = 0.0;
  std::size_t candidate = 0;
  double margin = 0.0;  // H(u*) - H(candidate), negative = violated
};

struct MaximizationReport {
  std::vector<MaximizationViolation> violations;
  double worst_margin = 0.0;
  double reference_hamiltonian = 0.0;
  bool pass = true;
};

// Tensor grid over the parameter box [-span, span]^P of the prototype field,
// projected onto the C^1 ball. Axis resolution shrinks with the parameter
// count to keep the candidate set tractable.
inline std::vector<ControlField> default_candidate_grid(const ControlField& prototype, double span,
                                                        double projection_radius,
                                                        int per_axis = 5) {
  const int p = prototype.param_count();
  int axis = per_axis;
  while (axis > 2 && std::pow(static_cast<double>(axis), p) > 20000.0) --axis;
  long total = 1;
  for (int m = 0; m < p; ++m) total *= axis;
  std::vector<ControlField> grid;
  grid.reserve(static_cast<std::size_t>(total));
  Vec theta(p);
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    for (int m = 0; m < p; ++m) {
      const int k = static_cast<int>(rem % axis);
      rem /= axis;
      theta[m] = axis == 1 ? 0.0 : -span + 2.0 * span * k / (axis - 1);
    }
    grid.push_back(prototype.with_params(theta).projected(projection_radius));
  }
  return grid;
}

// Pontryagin maximization condition on a finite candidate set: at each
// sampled time, H(t, nu(t), u*(t)) must dominate every candidate up to
// rel_tol * (1 + |H|).
inline MaximizationReport maximization_check(const NonlocalField& field, const ControlSignal& u,
                                             const CostateCloud& costate,
                                             const RunningCost* running,
                                             const std::vector<ControlField>& candidates,
                                             const std::vector<std::size_t>& time_indices,
                                             double rel_tol = 1e-4) {
  MaximizationReport report;
  report.worst_margin = std::numeric_limits<double>::infinity();
  for (const std::size_t k : time_indices) {
    const double t = costate.times[k];
    const auto& mu = costate.states[k];
    const auto& r = costate.costates[k];
    const std::size_t n = mu.size();

    // the candidate sweep only changes the control term; precompute the rest
    std::vector<Vec> base_velocity(n);
    for (std::size_t i = 0; i < n; ++i)
      base_velocity[i] = eval_velocity(field, nullptr, mu, t, mu.point(i));
    const auto ham = [&](const ControlField& omega) {
      double h = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        h += mu.weight(i) * r[i].dot(base_velocity[i] + omega.eval(mu.point(i)));
      if (running != nullptr) h -= eval_running(*running, mu, omega);
      return h;
    };

    const double h_star = ham(u.field_at(t));
    report.reference_hamiltonian = std::max(report.reference_hamiltonian, std::abs(h_star));
    const double tol = rel_tol * (1.0 + std::abs(h_star));
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const double margin = h_star - ham(candidates[c]);
      report.worst_margin = std::min(report.worst_margin, margin);
      if (margin < -tol) {
        report.violations.push_back({t, c, margin});
        report.pass = false;
      }
    }
  }
  return report;
}

struct StationarityEntry {
  double t = 0.0;
  double max_derivative = 0.0;  // max |D_omega H . e_m| over parameter directions
  bool skipped = false;         // control on the C^1-bound boundary
};

struct StationarityReport {
  std::vector<StationarityEntry> entries;
  double worst = 0.0;  // over non-skipped entries, relative to 1 + |H|
  bool pass = true;
};

// First-order form of the maximization condition for differentiable control
// parameterizations: central-difference derivatives of omega -> H along every
// parameter direction vanish at an interior maximizer.
inline StationarityReport stationarity_check(const NonlocalField& field, const ControlSignal& u,
                                             const CostateCloud& costate,
                                             const RunningCost* running,
                                             const std::vector<std::size_t>& time_indices,
                                             double rel_tol = 1e-3, double ball_radius = 0.0) {
  StationarityReport report;
  for (const std::size_t k : time_indices) {
    StationarityEntry entry;
    entry.t = costate.times[k];
    const ControlField& omega = u.field_at(entry.t);
    const double radius =
        ball_radius > 0.0 ? ball_radius : 1.0 + support_radius(costate.states[k]);
    if (omega.sampled_c1_norm(radius) >= omega.c1_bound() * (1.0 - 1e-9)) {
      entry.skipped = true;  // interiority hypothesis fails on the boundary
      report.entries.push_back(entry);
      continue;
    }
    const auto& mu = costate.states[k];
    const auto& r = costate.costates[k];
    const Vec theta = omega.params();
    const double h = 1e-5 * (1.0 + theta.norm());
    double h_star = 0.0;
    for (int m = 0; m < omega.param_count(); ++m) {
      Vec lo = theta, hi = theta;
      lo[m] -= h;
      hi[m] += h;
      const double f_hi = hamiltonian(mu, r, field, running, omega.with_params(hi), entry.t);
      const double f_lo = hamiltonian(mu, r, field, running, omega.with_params(lo), entry.t);
      entry.max_derivative = std::max(entry.max_derivative, std::abs(f_hi - f_lo) / (2.0 * h));
      h_star = std::max(h_star, std::max(std::abs(f_hi), std::abs(f_lo)));
    }
    const double rel = entry.max_derivative / (1.0 + h_star);
    report.worst = std::max(report.worst, rel);
    if (rel > rel_tol) report.pass = false;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace mfpmp
