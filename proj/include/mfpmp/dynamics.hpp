#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "mfpmp/controls.hpp"
#include "mfpmp/fields.hpp"
#include "mfpmp/transport.hpp"

namespace mfpmp {

// v[mu](t,x) + omega(x): kernel average over the cloud, local drift, control.
inline Vec eval_velocity(const NonlocalField& field, const ControlField* control,
                         const EmpiricalMeasure& mu, double t, const Vec& x) {
  Vec v = field.drift.eval(t, x);
  if (!field.kernel.is_zero())
    for (std::size_t j = 0; j < mu.size(); ++j)
      v += mu.weight(j) * field.kernel.eval(t, x, mu.point(j));
  if (control != nullptr) v += control->eval(x);
  return v;
}

// Frozen-measure space Jacobian D_x (v[mu] + omega)(t,x).
inline Mat velocity_jacobian(const NonlocalField& field, const ControlField* control,
                             const EmpiricalMeasure& mu, double t, const Vec& x) {
  Mat j = field.drift.jacobian(t, x);
  if (!field.kernel.is_zero())
    for (std::size_t jdx = 0; jdx < mu.size(); ++jdx)
      j += mu.weight(jdx) * field.kernel.jacobians(t, x, mu.point(jdx)).first;
  if (control != nullptr) j += control->jacobian(x);
  return j;
}

// Time-stamped particle states of one forward run. Weights never change along
// a flow; positions are recorded at every accepted step. When requested, the
// per-particle frozen-measure Jacobians D_x Phi ride along on the same grid.
struct Trajectory {
  std::vector<double> times;
  std::vector<EmpiricalMeasure> states;
  std::vector<std::vector<Mat>> jacobians;  // empty unless requested

  bool has_jacobians() const { return !jacobians.empty(); }
  std::size_t steps() const { return times.size(); }
  const EmpiricalMeasure& initial() const { return states.front(); }
  const EmpiricalMeasure& terminal() const { return states.back(); }
  double horizon() const { return times.back(); }

  std::size_t index_of(double t, double tol = 1e-9) const {
    const auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    if (it == times.end() || std::abs(*it - t) > tol)
      throw InvalidArgument("Trajectory: time " + std::to_string(t) + " is not on the grid");
    return static_cast<std::size_t>(it - times.begin());
  }

  // Linear interpolation of particle positions between grid nodes k and k+1.
  std::vector<Vec> positions_between(std::size_t k, double theta) const {
    const auto& lo = states[k].points();
    const auto& hi = states[k + 1].points();
    std::vector<Vec> out(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) out[i] = (1.0 - theta) * lo[i] + theta * hi[i];
    return out;
  }

  std::vector<Mat> jacobians_between(std::size_t k, double theta) const {
    const auto& lo = jacobians[k];
    const auto& hi = jacobians[k + 1];
    std::vector<Mat> out(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) out[i] = (1.0 - theta) * lo[i] + theta * hi[i];
    return out;
  }
};

struct SimulateOptions {
  bool with_jacobians = false;
  double guard_radius = 0.0;  // 0 = derive from the Gronwall bound
};

namespace detail {

inline double gronwall_radius(const NonlocalField& field, const ControlSignal& u, double r0,
                              double horizon) {
  double lu = 0.0;
  for (const auto& f : u.fields()) lu = std::max(lu, f.c1_bound());
  return (r0 + 1.0) * std::exp((field.lipschitz_bounds.m + lu) * horizon);
}

}  // namespace detail

// Forward integration of the coupled particle system
//   xdot_i = v[mu_n(t)](t, x_i) + u(t, x_i),  mu_n(t) = sum_j w_j delta_{x_j(t)}
// with classical RK4. The non-local term is re-evaluated at every stage from
// the stage positions. Steps are clipped to control-interval boundaries so a
// piecewise-constant control is never sampled across a switch; when dt
// divides every interval this reproduces the uniform grid exactly.
inline Trajectory simulate(const NonlocalField& field, const ControlSignal& u,
                           const EmpiricalMeasure& mu0, double horizon, double dt,
                           const SimulateOptions& opts = {}) {
  if (dt <= 0.0) throw InvalidArgument("simulate: dt must be positive");
  if (u.horizon() < horizon - 1e-12)
    throw InvalidArgument("simulate: control signal does not cover the horizon");

  const std::size_t n = mu0.size();
  const int d = mu0.dim();
  const double guard = opts.guard_radius > 0.0
                           ? opts.guard_radius
                           : 1e3 * std::max(1.0, detail::gronwall_radius(
                                                     field, u, support_radius(mu0), horizon));

  std::vector<Vec> x = mu0.points();
  std::vector<Mat> w;
  if (opts.with_jacobians) w.assign(n, Mat::Identity(d, d));

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(mu0);
  if (opts.with_jacobians) traj.jacobians.push_back(w);

  // Stage scratch.
  std::vector<Vec> xs(n), k1(n), k2(n), k3(n), k4(n);
  std::vector<Mat> ws, wk1, wk2, wk3, wk4;
  if (opts.with_jacobians) {
    ws.assign(n, Mat::Zero(d, d));
    wk1 = wk2 = wk3 = wk4 = ws;
  }

  const auto stage = [&](double t, const std::vector<Vec>& pos, const std::vector<Mat>* jac,
                         const ControlField& omega, std::vector<Vec>& dx, std::vector<Mat>* dw) {
    const EmpiricalMeasure stage_mu(pos, mu0.weights(), EmpiricalMeasure::TrustedWeights{});
    parallel_for(n, [&](std::size_t i) {
      dx[i] = eval_velocity(field, &omega, stage_mu, t, pos[i]);
      if (jac != nullptr)
        (*dw)[i] = velocity_jacobian(field, &omega, stage_mu, t, pos[i]) * (*jac)[i];
    });
  };

  double t = 0.0;
  for (std::size_t k = 0; k < u.intervals() && t < horizon - 1e-12; ++k) {
    const double seg_end = std::min(u.grid()[k + 1], horizon);
    const double seg_len = seg_end - t;
    if (seg_len <= 1e-15) continue;
    const auto m = std::max<long>(1, std::llround(seg_len / dt));
    const double h = seg_len / static_cast<double>(m);
    const ControlField& omega = u.fields()[k];

    for (long s = 0; s < m; ++s) {
      stage(t, x, opts.with_jacobians ? &w : nullptr, omega, k1, &wk1);
      for (std::size_t i = 0; i < n; ++i) xs[i] = x[i] + 0.5 * h * k1[i];
      if (opts.with_jacobians)
        for (std::size_t i = 0; i < n; ++i) ws[i] = w[i] + 0.5 * h * wk1[i];
      stage(t + 0.5 * h, xs, opts.with_jacobians ? &ws : nullptr, omega, k2, &wk2);
      for (std::size_t i = 0; i < n; ++i) xs[i] = x[i] + 0.5 * h * k2[i];
      if (opts.with_jacobians)
        for (std::size_t i = 0; i < n; ++i) ws[i] = w[i] + 0.5 * h * wk2[i];
      stage(t + 0.5 * h, xs, opts.with_jacobians ? &ws : nullptr, omega, k3, &wk3);
      for (std::size_t i = 0; i < n; ++i) xs[i] = x[i] + h * k3[i];
      if (opts.with_jacobians)
        for (std::size_t i = 0; i < n; ++i) ws[i] = w[i] + h * wk3[i];
      stage(t + h, xs, opts.with_jacobians ? &ws : nullptr, omega, k4, &wk4);

      for (std::size_t i = 0; i < n; ++i)
        x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (opts.with_jacobians)
        for (std::size_t i = 0; i < n; ++i)
          w[i] += (h / 6.0) * (wk1[i] + 2.0 * wk2[i] + 2.0 * wk3[i] + wk4[i]);
      t = (s + 1 == m) ? seg_end : t + h;

      for (std::size_t i = 0; i < n; ++i) {
        const double r = x[i].norm();
        if (!std::isfinite(r) || r > guard) {
          std::ostringstream msg;
          msg << "simulate: particle " << i << " blew up at t=" << t << " (|x|=" << r
              << ", guard=" << guard << ")";
          throw BlowupError(msg.str());
        }
      }

      traj.times.push_back(t);
      traj.states.emplace_back(x, mu0.weights(), EmpiricalMeasure::TrustedWeights{});
      if (opts.with_jacobians) traj.jacobians.push_back(w);
    }
  }
  return traj;
}

inline Trajectory simulate(const NonlocalField& field, const EmpiricalMeasure& mu0, double horizon,
                           double dt, const SimulateOptions& opts = {}) {
  return simulate(field, ControlSignal::zero(mu0.dim(), horizon), mu0, horizon, dt, opts);
}

// D_x Phi_(0,t) along the flow: the linearised system of the frozen-measure
// field (measure variations are handled by the variational machinery).
inline Trajectory jacobian_flow(const NonlocalField& field, const ControlSignal& u,
                                const EmpiricalMeasure& mu0, double horizon, double dt) {
  SimulateOptions opts;
  opts.with_jacobians = true;
  return simulate(field, u, mu0, horizon, dt, opts);
}

struct ContractivityCurve {
  std::vector<double> times;
  std::vector<double> ratios;  // W_1(mu(t), nu(t)) / W_1(mu0, nu0)
};

// Stability ratio of two flows of the same field against the Gronwall
// envelope exp((L1 + 2 L2) t).
inline ContractivityCurve contractivity_check(const NonlocalField& field, const ControlSignal& u,
                                              const EmpiricalMeasure& mu0,
                                              const EmpiricalMeasure& nu0, double horizon,
                                              double dt, int checkpoints = 20) {
  const double w0 = wasserstein(1, mu0, nu0).distance;
  if (w0 <= 0.0)
    throw InvalidArgument("contractivity_check: initial measures coincide, ratio undefined");
  const auto mu_traj = simulate(field, u, mu0, horizon, dt);
  const auto nu_traj = simulate(field, u, nu0, horizon, dt);

  ContractivityCurve curve;
  const std::size_t steps = mu_traj.steps();
  const std::size_t stride = std::max<std::size_t>(1, steps / checkpoints);
  for (std::size_t k = 0; k < steps; k += stride) {
    curve.times.push_back(mu_traj.times[k]);
    curve.ratios.push_back(wasserstein(1, mu_traj.states[k], nu_traj.states[k]).distance / w0);
  }
  if (curve.times.back() != mu_traj.times.back()) {
    curve.times.push_back(mu_traj.times.back());
    curve.ratios.push_back(wasserstein(1, mu_traj.terminal(), nu_traj.terminal()).distance / w0);
  }
  return curve;
}

}  // namespace mfpmp
