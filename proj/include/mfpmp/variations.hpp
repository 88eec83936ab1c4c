#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mfpmp/dynamics.hpp"
#include "mfpmp/functionals.hpp"

namespace mfpmp {

// Needle parameters (omega, tau, epsilon): replace the control by omega on
// [tau - epsilon, tau].
struct NeedleParams {
  ControlField omega;
  double tau = 0.0;
  double epsilon = 0.0;
};

// Per-time, per-particle first-order perturbation vectors along a stored
// trajectory. Entry [k][i] belongs to grid time times[k] and particle i.
struct PerturbationField {
  std::vector<double> times;
  std::vector<std::vector<Vec>> vectors;

  const std::vector<Vec>& at_time(double t) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t - 1e-9);
    if (it == times.end() || std::abs(*it - t) > 1e-9)
      throw InvalidArgument("PerturbationField: time off the stored grid");
    return vectors[static_cast<std::size_t>(it - times.begin())];
  }
};

// The control with omega spliced in on [tau - epsilon, tau); epsilon = 0
// returns the signal unchanged.
inline ControlSignal needle_control(const ControlSignal& u, const NeedleParams& params) {
  if (params.epsilon < 0.0 || params.tau - params.epsilon < -1e-12)
    throw InvalidArgument("needle_control: epsilon exceeds tau");
  if (params.tau > u.horizon() + 1e-12)
    throw InvalidArgument("needle_control: tau beyond the horizon");
  if (params.epsilon == 0.0) return u;

  const double lo = std::max(0.0, params.tau - params.epsilon);
  const double hi = params.tau;
  std::vector<double> grid = u.grid();
  for (double t : {lo, hi})
    if (t > 1e-12 && t < u.horizon() - 1e-12) grid.push_back(t);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             grid.end());

  std::vector<ControlField> fields;
  fields.reserve(grid.size() - 1);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double mid = 0.5 * (grid[k] + grid[k + 1]);
    fields.push_back(mid >= lo && mid < hi ? params.omega : u.field_at(mid));
  }
  return ControlSignal(std::move(grid), std::move(fields));
}

namespace detail {

// RK4 for a per-particle linear system along stored states, with linear
// interpolation of positions (and optionally Jacobians) at half-steps. The
// derivative callback gets the stage time, stage positions and stage values.
template <typename Deriv>
std::vector<std::vector<Vec>> integrate_linear_system(const Trajectory& traj, std::size_t k0,
                                                      std::vector<Vec> init, Deriv&& deriv) {
  const std::size_t n = init.size();
  std::vector<std::vector<Vec>> out;
  out.push_back(init);
  std::vector<Vec> y = std::move(init);
  std::vector<Vec> ys(n), d1(n), d2(n), d3(n), d4(n);

  for (std::size_t k = k0; k + 1 < traj.steps(); ++k) {
    const double t = traj.times[k];
    const double h = traj.times[k + 1] - t;
    const auto& x_lo = traj.states[k].points();
    const auto x_mid = traj.positions_between(k, 0.5);
    const auto& x_hi = traj.states[k + 1].points();

    deriv(t, k, 0.0, x_lo, y, d1);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + 0.5 * h * d1[i];
    deriv(t + 0.5 * h, k, 0.5, x_mid, ys, d2);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + 0.5 * h * d2[i];
    deriv(t + 0.5 * h, k, 0.5, x_mid, ys, d3);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + h * d3[i];
    deriv(t + h, k + 1, 0.0, x_hi, ys, d4);
    for (std::size_t i = 0; i < n; ++i)
      y[i] += (h / 6.0) * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
    out.push_back(y);
  }
  return out;
}

}  // namespace detail

// Directional derivative w(t,x_i) of the non-local flow with respect to a
// perturbation (I + eps F0)_# of the starting measure, holding the evaluation
// point fixed. Solves the coupled linear system
//   wdot_i = D_x(v+u)(t,x_i) w_i + sum_j w^wt_j Gamma(t,x_i,x_j) [W_j F0_j + w_j]
// with w(tau) = 0, where Gamma(t,z,y) = D_y H(t,z,y) and W_j is the
// frozen-measure Jacobian of the flow.
inline PerturbationField flow_directional_derivative(const NonlocalField& field,
                                                     const ControlSignal& u,
                                                     const EmpiricalMeasure& mu_tau,
                                                     const std::vector<Vec>& f0, double tau,
                                                     double horizon, double dt) {
  if (f0.size() != mu_tau.size())
    throw InvalidArgument("flow_directional_derivative: one seed vector per particle required");
  const auto sub = u.restricted(tau, horizon);
  const auto traj = jacobian_flow(field, sub, mu_tau, horizon - tau, dt);
  const std::size_t n = mu_tau.size();
  const auto& weights = mu_tau.weights();

  const auto deriv = [&](double t, std::size_t k, double theta, const std::vector<Vec>& pos,
                         const std::vector<Vec>& w, std::vector<Vec>& dw) {
    const auto jac = theta == 0.0 ? traj.jacobians[k] : traj.jacobians_between(k, theta);
    const EmpiricalMeasure stage_mu(pos, weights, EmpiricalMeasure::TrustedWeights{});
    const ControlField& omega = sub.field_at(t);
    parallel_for(n, [&](std::size_t i) {
      dw[i] = velocity_jacobian(field, &omega, stage_mu, tau + t, pos[i]) * w[i];
      if (!field.kernel.is_zero())
        for (std::size_t j = 0; j < n; ++j)
          dw[i] += weights[j] * (interaction_gamma(field, tau + t, pos[i], pos[j]) *
                                 (jac[j] * f0[j] + w[j]));
    });
  };

  auto values = detail::integrate_linear_system(traj, 0, std::vector<Vec>(n, Vec::Zero(mu_tau.dim())),
                                                deriv);
  PerturbationField out;
  out.times = traj.times;
  for (double& t : out.times) t += tau;
  out.vectors = std::move(values);
  return out;
}

// First-order needle perturbation field F^{omega,tau}_t along the stored
// optimal trajectory:
//   Fdot_i = sum_j w_j Gamma(t,x_i,x_j) F_j + [D_x u + D_x v[mu]](t,x_i) F_i,
//   F_i(tau) = omega(x_i(tau)) - u(tau, x_i(tau)).
inline PerturbationField needle_first_order(const NonlocalField& field, const ControlSignal& u,
                                            const Trajectory& traj, const NeedleParams& params) {
  const std::size_t k0 = traj.index_of(params.tau);
  const auto& mu_tau = traj.states[k0];
  const std::size_t n = mu_tau.size();
  const auto& weights = mu_tau.weights();

  std::vector<Vec> init(n);
  const ControlField& u_tau = u.field_at(params.tau);
  for (std::size_t i = 0; i < n; ++i)
    init[i] = params.omega.eval(mu_tau.point(i)) - u_tau.eval(mu_tau.point(i));

  const auto deriv = [&](double t, std::size_t /*k*/, double /*theta*/,
                         const std::vector<Vec>& pos, const std::vector<Vec>& f,
                         std::vector<Vec>& df) {
    const EmpiricalMeasure stage_mu(pos, weights, EmpiricalMeasure::TrustedWeights{});
    const ControlField& omega = u.field_at(t);
    parallel_for(n, [&](std::size_t i) {
      df[i] = velocity_jacobian(field, &omega, stage_mu, t, pos[i]) * f[i];
      if (!field.kernel.is_zero())
        for (std::size_t j = 0; j < n; ++j)
          df[i] += weights[j] * (interaction_gamma(field, t, pos[i], pos[j]) * f[j]);
    });
  };

  auto values = detail::integrate_linear_system(traj, k0, std::move(init), deriv);
  PerturbationField out;
  out.times.assign(traj.times.begin() + static_cast<std::ptrdiff_t>(k0), traj.times.end());
  out.vectors = std::move(values);
  return out;
}

// Left-hand side of the first-order optimality condition for the needle
// (omega, tau): terminal pairing + running-cost gap at tau + integrated
// running-cost pairing. Non-negative at an optimal control.
inline double first_order_condition(const NonlocalField& field, const ControlSignal& u,
                                    const Trajectory& traj, const TerminalCost& phi,
                                    const RunningCost* running, const NeedleParams& params) {
  const auto f = needle_first_order(field, u, traj, params);
  const std::size_t k0 = traj.index_of(params.tau);
  const auto& mu_t = traj.terminal();

  double value = 0.0;
  const auto gphi = terminal_gradient(phi, mu_t);
  const auto& f_t = f.vectors.back();
  for (std::size_t i = 0; i < mu_t.size(); ++i)
    value += mu_t.weight(i) * gphi[i].dot(f_t[i]);

  if (running != nullptr) {
    const auto& mu_tau = traj.states[k0];
    value += eval_running(*running, mu_tau, params.omega) -
             eval_running(*running, mu_tau, u.field_at(params.tau));

    // trapezoid of sum_i w_i <gamma_L(t, x_i), F_i(t)>; each step uses the
    // field acting on it, so control switches never smear across a node
    const auto pair_at = [&](std::size_t k, const ControlField& omega) {
      const auto& mu = traj.states[k];
      const auto gl = running_gradient(*running, mu, omega);
      double acc = 0.0;
      for (std::size_t i = 0; i < mu.size(); ++i)
        acc += mu.weight(i) * gl[i].dot(f.vectors[k - k0][i]);
      return acc;
    };
    for (std::size_t k = k0; k + 1 < traj.steps(); ++k) {
      const ControlField& omega = u.field_at(0.5 * (traj.times[k] + traj.times[k + 1]));
      value += 0.5 * (pair_at(k, omega) + pair_at(k + 1, omega)) *
               (traj.times[k + 1] - traj.times[k]);
    }
  }
  return value;
}

}  // namespace mfpmp
