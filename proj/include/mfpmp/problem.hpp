#pragma once

#include <optional>
#include <utility>

#include "mfpmp/pmp.hpp"

namespace mfpmp {

// One optimal-control problem instance: minimise
//   int_0^T L(mu(t), u(t)) dt + phi(mu(T))
// over admissible control signals, subject to the non-local dynamics.
struct ControlProblem {
  NonlocalField field;
  EmpiricalMeasure mu0;
  double horizon = 1.0;
  double dt = 1e-3;
  TerminalCost terminal = TerminalCost::variance();
  std::optional<RunningCost> running;
  double control_bound = 5.0;           // L_U
  double control_sampling_radius = 0.0; // 0 = derive from the initial support

  const RunningCost* running_ptr() const { return running ? &*running : nullptr; }

  // Ball radius used for C^1-norm sampling and projection of controls. The
  // Gronwall support envelope exp((M + L_U) T) is far too conservative here:
  // sampling |A x + b| at that range forces A to ~0 and empties the affine
  // part of U. A fixed multiple of the initial support covers where the
  // particles of a desk-scale run actually live; the rigorous envelope stays
  // in use for the blow-up guard and the support-bound checks.
  double working_radius() const {
    if (control_sampling_radius > 0.0) return control_sampling_radius;
    return std::max(1.0, 2.0 * (support_radius(mu0) + 1.0));
  }
};

// Control, forward trajectory and backward costate of one solved run.
struct SolvedRun {
  ControlSignal control;
  Trajectory trajectory;
  CostateCloud costate;
};

inline SolvedRun solve_extremal(const ControlProblem& problem, const ControlSignal& u) {
  SolvedRun run{u, simulate(problem.field, u, problem.mu0, problem.horizon, problem.dt), {}};
  run.costate =
      solve_costate(problem.field, u, run.trajectory, problem.terminal, problem.running_ptr());
  return run;
}

}  // namespace mfpmp
