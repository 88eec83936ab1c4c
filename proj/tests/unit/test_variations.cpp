#include "mfpmp/variations.hpp"

#include <gtest/gtest.h>

#include <random>

#include "mfpmp/transport.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mfpmp;
using tst::cloud1d;
using tst::v1;

namespace {

// Finite-difference oracle for the flow directional derivative: transport
// zero-weight tracers at the unperturbed positions inside the perturbed
// cloud, so the flow map of the perturbed measure is evaluated at fixed x.
std::vector<Vec> fd_flow_derivative(const NonlocalField& field, const ControlSignal& u,
                                    const EmpiricalMeasure& mu, const std::vector<Vec>& f0,
                                    double horizon, double dt, double eps) {
  const std::size_t n = mu.size();
  std::vector<Vec> pts;
  std::vector<double> w;
  for (std::size_t j = 0; j < n; ++j) {
    pts.push_back(mu.point(j) + eps * f0[j]);
    w.push_back(mu.weight(j));
  }
  for (std::size_t j = 0; j < n; ++j) {
    pts.push_back(mu.point(j));
    w.push_back(0.0);
  }
  const EmpiricalMeasure augmented(std::move(pts), std::move(w),
                                   EmpiricalMeasure::TrustedWeights{});
  const auto perturbed = simulate(field, u, augmented, horizon, dt);
  const auto base = simulate(field, u, mu, horizon, dt);
  std::vector<Vec> d(n);
  for (std::size_t i = 0; i < n; ++i)
    d[i] = (perturbed.terminal().point(n + i) - base.terminal().point(i)) / eps;
  return d;
}

}  // namespace

TEST(Variations, NeedleControlConstruction) {
  const auto base = ControlField::constant(v1(0.3), 5.0);
  const auto u = ControlSignal::uniform(base, 1.0, 4);
  const auto omega = ControlField::constant(v1(-1.0), 5.0);

  // epsilon = 0 leaves the signal untouched
  const auto same = needle_control(u, {omega, 0.5, 0.0});
  EXPECT_EQ(same.grid(), u.grid());

  // omega equal to the running control: pointwise identical values
  const auto noop = needle_control(u, {base, 0.5, 0.1});
  for (double t : {0.05, 0.3, 0.45, 0.7, 0.99})
    EXPECT_DOUBLE_EQ(noop.field_at(t).eval(v1(0.0))[0], u.field_at(t).eval(v1(0.0))[0]);

  // generic needle replaces exactly [tau - eps, tau)
  const auto mod = needle_control(u, {omega, 0.5, 0.125});
  for (double t : {0.0, 0.2, 0.37, 0.5, 0.8, 0.99}) {
    const double got = mod.field_at(t).eval(v1(0.0))[0];
    const bool inside = t >= 0.375 && t < 0.5;
    EXPECT_DOUBLE_EQ(got, inside ? -1.0 : 0.3) << "t=" << t;
  }

  EXPECT_THROW(needle_control(u, {omega, 0.1, 0.2}), InvalidArgument);
}

TEST(Variations, FlowDerivativeVanishesWithoutCoupling) {
  const auto mu = cloud1d({-1.0, 0.0, 1.0});
  const auto u = ControlSignal::zero(1, 1.0);
  std::vector<Vec> f0(mu.size(), v1(0.7));
  {
    // zero kernel: no measure dependence at all
    const NonlocalField field(KernelSpec::zero(), LocalDriftSpec::linear(Mat::Constant(1, 1, 0.4), v1(0.1)));
    const auto w = flow_directional_derivative(field, u, mu, f0, 0.0, 1.0, 1e-2);
    for (const auto& slab : w.vectors)
      for (const auto& wi : slab) EXPECT_NEAR(wi.norm(), 0.0, 1e-14);
  }
  {
    // zero seed: linear homogeneous system stays at zero
    const NonlocalField field(KernelSpec::linear_attraction(1.0), LocalDriftSpec::zero());
    std::vector<Vec> zero_seed(mu.size(), Vec::Zero(1));
    const auto w = flow_directional_derivative(field, u, mu, zero_seed, 0.0, 1.0, 1e-2);
    for (const auto& slab : w.vectors)
      for (const auto& wi : slab) EXPECT_NEAR(wi.norm(), 0.0, 1e-14);
  }
}

TEST(Variations, FlowDerivativeMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  const auto mu = tst::random_cloud(rng, 6, 1, 1.0);
  const auto field_lin = NonlocalField(KernelSpec::linear_attraction(0.8), LocalDriftSpec::zero());
  const auto field_gauss =
      NonlocalField(KernelSpec::gaussian_gradient(1.1, 0.9), LocalDriftSpec::zero());
  const auto u =
      ControlSignal::single(ControlField::affine(Mat::Constant(1, 1, -0.3), v1(0.2), 5.0), 1.0);

  const auto sf = tst::random_smooth_field(rng, 1);
  std::vector<Vec> f0;
  for (std::size_t i = 0; i < mu.size(); ++i) f0.push_back(sf(mu.point(i)));

  for (const auto& field : {field_lin, field_gauss}) {
    const auto w = flow_directional_derivative(field, u, mu, f0, 0.0, 1.0, 1e-3);
    const auto d1 = fd_flow_derivative(field, u, mu, f0, 1.0, 1e-3, 1e-3);
    const auto d2 = fd_flow_derivative(field, u, mu, f0, 1.0, 1e-3, 1e-4);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const Vec richardson = (10.0 * d2[i] - d1[i]) / 9.0;
      EXPECT_LT((w.vectors.back()[i] - richardson).norm(), 1e-5);
    }
  }
}

TEST(Variations, FlowDerivativeReducesToJacobianWithoutKernel) {
  // measure-independent field: the moved-particle derivative is D_x Phi F0
  std::mt19937_64 rng(3);
  const auto mu = tst::random_cloud(rng, 4, 1, 1.0);
  const NonlocalField field(KernelSpec::zero(),
                            LocalDriftSpec::linear(Mat::Constant(1, 1, 0.5), v1(-0.1)));
  const auto u = ControlSignal::zero(1, 1.0);
  const auto sf = tst::random_smooth_field(rng, 1);
  std::vector<Vec> f0;
  for (std::size_t i = 0; i < mu.size(); ++i) f0.push_back(sf(mu.point(i)));

  const auto w = flow_directional_derivative(field, u, mu, f0, 0.0, 1.0, 1e-3);
  const auto traj = jacobian_flow(field, u, mu, 1.0, 1e-3);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    // w vanishes, and the total perturbation reduces to the jacobian action
    EXPECT_NEAR(w.vectors.back()[i].norm(), 0.0, 1e-12);
    const Vec total = traj.jacobians.back()[i] * f0[i] + w.vectors.back()[i];
    // moved-particle finite difference: perturb the particle itself
    const auto moved = pushforward(mu, [&](const Vec& x) { return Vec(x + 1e-6 * sf(x)); });
    const auto t_moved = simulate(field, u, moved, 1.0, 1e-3);
    const Vec fd = (t_moved.terminal().point(i) - traj.terminal().point(i)) / 1e-6;
    EXPECT_LT((total - fd).norm(), 1e-8);
  }
}

TEST(Variations, NeedleFieldTrivialCases) {
  const auto mu0 = cloud1d({-0.5, 0.2, 0.9});
  const auto base = ControlField::constant(v1(0.4), 5.0);
  const auto u = ControlSignal::uniform(base, 1.0, 2);
  {
    const auto field = NonlocalField(KernelSpec::linear_attraction(0.7), LocalDriftSpec::zero());
    const auto traj = simulate(field, u, mu0, 1.0, 1e-2);
    // omega identical to the running control: F stays zero
    const auto f = needle_first_order(field, u, traj, {base, 0.5, 0.0});
    for (const auto& slab : f.vectors)
      for (const auto& fi : slab) EXPECT_NEAR(fi.norm(), 0.0, 1e-13);
  }
  {
    // no kernel, no drift, constant controls: F frozen at its seed
    const NonlocalField field;
    const auto traj = simulate(field, u, mu0, 1.0, 1e-2);
    const auto omega = ControlField::constant(v1(-0.6), 5.0);
    const auto f = needle_first_order(field, u, traj, {omega, 0.5, 0.0});
    for (const auto& slab : f.vectors)
      for (std::size_t i = 0; i < mu0.size(); ++i)
        EXPECT_NEAR(slab[i][0], -0.6 - 0.4, 1e-13);
  }
}

TEST(Variations, NeedleFieldIsLinearInSeed) {
  std::mt19937_64 rng(23);
  const auto mu0 = tst::random_cloud(rng, 5, 1, 1.0);
  const auto field = NonlocalField(KernelSpec::gaussian_gradient(0.9, 1.0), LocalDriftSpec::zero());
  const auto u = ControlSignal::zero(1, 1.0, 5.0);
  const auto traj = simulate(field, u, mu0, 1.0, 1e-2);

  // superpose two needle controls at the same tau: the ODE is linear in F,
  // and the seed map omega -> omega - u*(tau) is affine
  const auto om1 = ControlField::constant(v1(0.5), 5.0);
  const auto om2 = ControlField::constant(v1(-0.3), 5.0);
  const auto om_sum = ControlField::constant(v1(0.5 + (-0.3) - 0.0), 5.0);  // u* = 0
  const auto f1 = needle_first_order(field, u, traj, {om1, 0.5, 0.0});
  const auto f2 = needle_first_order(field, u, traj, {om2, 0.5, 0.0});
  const auto fs = needle_first_order(field, u, traj, {om_sum, 0.5, 0.0});
  for (std::size_t k = 0; k < fs.vectors.size(); ++k)
    for (std::size_t i = 0; i < mu0.size(); ++i)
      EXPECT_NEAR((f1.vectors[k][i] + f2.vectors[k][i] - fs.vectors[k][i]).norm(), 0.0, 1e-10);
}

TEST(Variations, NeedleExpansionConvergence) {
  // W_1(perturbed terminal, (I + eps F_T)_# optimal terminal) = o(eps):
  // the log-log slope over a decade of eps must exceed 1.8
  const auto mu0 = cloud1d({-1.0, -0.4, 0.1, 0.6, 1.2});
  const auto field = NonlocalField(KernelSpec::linear_attraction(0.8), LocalDriftSpec::zero());
  const auto base = ControlField::affine(Mat::Constant(1, 1, -0.3), v1(0.2), 5.0);
  const auto u = ControlSignal::single(base, 1.0);
  const double dt = 1e-3, tau = 0.5;
  const auto traj = simulate(field, u, mu0, 1.0, dt);
  const auto omega = ControlField::constant(v1(0.9), 5.0);
  const auto f = needle_first_order(field, u, traj, {omega, tau, 0.0});

  std::vector<double> eps_list{1e-2, 3e-3, 1e-3, 3e-4};
  std::vector<double> gaps;
  for (double eps : eps_list) {
    const auto tilde_u = needle_control(u, {omega, tau, eps});
    const auto tilde = simulate(field, tilde_u, mu0, 1.0, dt);
    std::vector<Vec> pts;
    for (std::size_t i = 0; i < mu0.size(); ++i)
      pts.push_back(traj.terminal().point(i) + eps * f.vectors.back()[i]);
    const EmpiricalMeasure linearised(std::move(pts), mu0.weights(),
                                      EmpiricalMeasure::TrustedWeights{});
    gaps.push_back(wasserstein(1, tilde.terminal(), linearised).distance);
  }
  // least-squares slope in log-log coordinates
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(eps_list.size());
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    const double lx = std::log(eps_list[k]), ly = std::log(gaps[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_GE(slope, 1.8) << "gaps: " << gaps[0] << " " << gaps[1] << " " << gaps[2] << " "
                        << gaps[3];
}

TEST(Variations, FirstOrderConditionSignalsDescentDirection) {
  // single particle steered to a target: with the null control, pushing
  // toward the target is a descent direction, so some needle goes negative
  const auto mu0 = uniform_measure({v1(0.0)});
  const NonlocalField field;
  const auto u = ControlSignal::zero(1, 1.0, 5.0);
  const auto traj = simulate(field, u, mu0, 1.0, 1e-2);
  const auto phi = TerminalCost::target_attraction(v1(1.0));
  const auto running = RunningCost::control_energy(0.5);
  const auto toward = ControlField::constant(v1(0.5), 5.0);
  const double val = first_order_condition(field, u, traj, phi, &running, {toward, 0.5, 0.0});
  EXPECT_LT(val, -1e-3);
}

TEST(Variations, FirstOrderConditionVanishesOnNoopNeedle) {
  const auto mu0 = cloud1d({-0.5, 0.3, 1.0});
  const auto field = NonlocalField(KernelSpec::linear_attraction(0.6), LocalDriftSpec::zero());
  const auto base = ControlField::constant(v1(0.25), 5.0);
  const auto u = ControlSignal::single(base, 1.0);
  const auto traj = simulate(field, u, mu0, 1.0, 1e-2);
  const auto phi = TerminalCost::variance();
  const auto running = RunningCost::control_energy(0.5);
  const double val =
      first_order_condition(field, u, traj, phi, &running, {base, 0.5, 0.0});
  EXPECT_DOUBLE_EQ(val, 0.0);
}
