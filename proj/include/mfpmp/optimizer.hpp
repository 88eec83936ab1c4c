#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "mfpmp/problem.hpp"

namespace mfpmp {

namespace detail {

inline double running_cost_quadrature(const ControlProblem& problem, const ControlSignal& u,
                                      const Trajectory& traj) {
  const RunningCost* running = problem.running_ptr();
  if (running == nullptr) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < traj.steps(); ++k) {
    const ControlField& omega = u.field_at(0.5 * (traj.times[k] + traj.times[k + 1]));
    acc += 0.5 *
           (eval_running(*running, traj.states[k], omega) +
            eval_running(*running, traj.states[k + 1], omega)) *
           (traj.times[k + 1] - traj.times[k]);
  }
  return acc;
}

}  // namespace detail

inline double total_cost_from(const ControlProblem& problem, const ControlSignal& u,
                              const Trajectory& traj) {
  return detail::running_cost_quadrature(problem, u, traj) +
         eval_terminal(problem.terminal, traj.terminal());
}

inline double total_cost(const ControlProblem& problem, const ControlSignal& u) {
  const auto traj = simulate(problem.field, u, problem.mu0, problem.horizon, problem.dt);
  return total_cost_from(problem, u, traj);
}

// Adjoint gradient of the total cost over the control parameters, one block
// per control interval:
//   g_{k,m} = -int_{I_k} D_omega H(t, nu(t), omega_k).e_m dt
//           = -int_{I_k} sum_i w_i <r_i(t) - grad_v l(x_i, omega_k(x_i)), e_m(x_i)> dt.
inline std::vector<Vec> parameter_gradient(const ControlProblem& problem, const ControlSignal& u,
                                           const Trajectory& traj, const CostateCloud& costate) {
  const RunningCost* running = problem.running_ptr();
  const auto& weights = problem.mu0.weights();
  const std::size_t n = weights.size();

  std::vector<Vec> grad(u.intervals());
  for (std::size_t k = 0; k < u.intervals(); ++k)
    grad[k] = Vec::Zero(u.fields()[k].param_count());

  // integrand of -D_omega H per parameter of the field owning the step
  const auto node_term = [&](std::size_t node, std::size_t interval, Vec& out) {
    const ControlField& omega = u.fields()[interval];
    const auto& mu = traj.states[node];
    const auto& r = costate.costates[node];
    for (int m = 0; m < omega.param_count(); ++m) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec dir = omega.param_direction(m, mu.point(i));
        double term = r[i].dot(dir);
        if (running != nullptr)
          term -= running->grad_v(mu.point(i), omega.eval(mu.point(i))).dot(dir);
        acc += weights[i] * term;
      }
      out[m] = -acc;
    }
  };

  Vec lo, hi;
  for (std::size_t k = 0; k + 1 < traj.steps(); ++k) {
    const double mid = 0.5 * (traj.times[k] + traj.times[k + 1]);
    const std::size_t interval = u.interval_of(mid);
    const double h = traj.times[k + 1] - traj.times[k];
    lo.resize(u.fields()[interval].param_count());
    hi.resize(lo.size());
    node_term(k, interval, lo);
    node_term(k + 1, interval, hi);
    grad[interval] += 0.5 * h * (lo + hi);
  }
  return grad;
}

inline std::vector<Vec> parameter_gradient(const ControlProblem& problem, const ControlSignal& u) {
  const auto run = solve_extremal(problem, u);
  return parameter_gradient(problem, u, run.trajectory, run.costate);
}

struct OptimizerIterate {
  ControlSignal control;
  double cost = 0.0;
  double gradient_norm = 0.0;
  double step = 0.0;
};

struct OptimizationRun {
  std::vector<OptimizerIterate> iterates;
  ControlSignal control;
  Trajectory trajectory;
  CostateCloud costate;
  bool converged = false;

  double final_cost() const { return iterates.back().cost; }
};

struct OptimizeOptions {
  int max_iters = 500;
  double tol = 1e-5;      // gradient-norm stopping threshold
  double initial_step = 1.0;
  int max_halvings = 50;
};

// Projected gradient descent with backtracking line search. Every accepted
// iterate satisfies the sampled C^1 bound (projection onto the L_U ball) and
// strictly decreases the cost.
inline OptimizationRun optimize(const ControlProblem& problem, const ControlSignal& u0,
                                const OptimizeOptions& opts = {}) {
  const double radius = problem.working_radius();
  ControlSignal u = u0.projected(radius);

  OptimizationRun run{{}, u, {}, {}, false};
  double step = opts.initial_step;

  auto traj = simulate(problem.field, u, problem.mu0, problem.horizon, problem.dt);
  auto costate =
      solve_costate(problem.field, u, traj, problem.terminal, problem.running_ptr());
  double cost = total_cost_from(problem, u, traj);

  for (int iter = 0;; ++iter) {
    const auto grad = parameter_gradient(problem, u, traj, costate);
    double gnorm_sq = 0.0;
    for (const auto& g : grad) gnorm_sq += g.squaredNorm();
    const double gnorm = std::sqrt(gnorm_sq);
    run.iterates.push_back({u, cost, gnorm, step});

    if (gnorm <= opts.tol) {
      run.converged = true;
      break;
    }
    if (iter >= opts.max_iters) break;

    bool accepted = false;
    for (int halving = 0; halving < opts.max_halvings && !accepted; ++halving) {
      std::vector<ControlField> fields;
      fields.reserve(u.intervals());
      double decrease_ref = 0.0;
      for (std::size_t k = 0; k < u.intervals(); ++k) {
        const Vec theta = u.fields()[k].params();
        const Vec trial = theta - step * grad[k];
        fields.push_back(u.fields()[k].with_params(trial).projected(radius));
        decrease_ref += (theta - fields.back().params()).dot(grad[k]);
      }
      ControlSignal u_trial(u.grid(), std::move(fields));
      try {
        const auto traj_trial =
            simulate(problem.field, u_trial, problem.mu0, problem.horizon, problem.dt);
        const double cost_trial = total_cost_from(problem, u_trial, traj_trial);
        if (cost_trial <= cost - 1e-4 * decrease_ref && cost_trial < cost) {
          u = std::move(u_trial);
          traj = traj_trial;
          cost = cost_trial;
          accepted = true;
        }
      } catch (const BlowupError&) {
        // treat a diverged trial like a failed decrease and shrink the step
      }
      if (!accepted) step *= 0.5;
    }
    if (!accepted) break;  // line search exhausted; report best iterate

    costate = solve_costate(problem.field, u, traj, problem.terminal, problem.running_ptr());
    step = std::min(step * 2.0, 1e3);
  }

  run.control = u;
  run.trajectory = std::move(traj);
  run.costate = std::move(costate);
  if (run.iterates.empty()) run.iterates.push_back({u, cost, 0.0, step});
  return run;
}

}  // namespace mfpmp
