#include "mfpmp/functionals.hpp"

#include <gtest/gtest.h>

#include <random>

#include "mfpmp/transport.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mfpmp;
using tst::cloud1d;
using tst::v1;
using tst::v2;

namespace {

// d/deps cost((I + eps F)_# mu) at eps = 0, by 4th-order central differences.
double pushforward_derivative(const std::function<double(const EmpiricalMeasure&)>& cost,
                              const EmpiricalMeasure& mu, const tst::SmoothField& f,
                              double h = 1e-3) {
  return tst::central_diff4(
      [&](double eps) {
        return cost(pushforward(mu, [&](const Vec& x) { return Vec(x + eps * f(x)); }));
      },
      h);
}

double pairing(const EmpiricalMeasure& mu, const std::vector<Vec>& grad,
               const tst::SmoothField& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) acc += mu.weight(i) * grad[i].dot(f(mu.point(i)));
  return acc;
}

}  // namespace

TEST(Functionals, TerminalEvalExamples) {
  EXPECT_DOUBLE_EQ(eval_terminal(TerminalCost::variance(), uniform_measure({v1(3.0)})), 0.0);
  const auto quad = TerminalCost::potential(ScalarField::quadratic(Vec::Zero(1)), 1.0);
  EXPECT_DOUBLE_EQ(eval_terminal(quad, cloud1d({-1.0, 1.0})), 1.0);
  EXPECT_DOUBLE_EQ(eval_terminal(TerminalCost::variance(), cloud1d({0.0, 2.0})), 0.5);
}

TEST(Functionals, PowerRuleSingularitySignalled) {
  const auto frac = TerminalCost::potential(ScalarField::quadratic(Vec::Zero(1)), 0.5);
  const auto at_zero = uniform_measure({v1(0.0)});
  EXPECT_THROW(eval_terminal(frac, at_zero), std::domain_error);
  EXPECT_THROW(terminal_gradient(frac, at_zero), std::domain_error);
  // away from the singularity the power rule applies
  const auto mu = cloud1d({1.0, 2.0});
  EXPECT_NO_THROW(terminal_gradient(frac, mu));
  EXPECT_THROW(TerminalCost::potential(ScalarField::quadratic(Vec::Zero(1)), -1.0),
               InvalidArgument);
}

TEST(Functionals, TerminalGradientExamples) {
  {
    const auto g = terminal_gradient(TerminalCost::variance(), cloud1d({0.0, 2.0}));
    EXPECT_DOUBLE_EQ(g[0][0], -1.0);
    EXPECT_DOUBLE_EQ(g[1][0], 1.0);
  }
  {
    const auto quad = TerminalCost::potential(ScalarField::quadratic(Vec::Zero(1)), 1.0);
    const auto mu = cloud1d({-0.7, 1.2});
    const auto g = terminal_gradient(quad, mu);
    EXPECT_DOUBLE_EQ(g[0][0], 2.0 * -0.7);
    EXPECT_DOUBLE_EQ(g[1][0], 2.0 * 1.2);
  }
  {
    // power rule: alpha V(mu)^{alpha-1} grad V
    const auto mu = cloud1d({1.0, 3.0});
    const double base = eval_terminal(
        TerminalCost::potential(ScalarField::quadratic(Vec::Zero(1)), 1.0), mu);
    const auto pow2 = TerminalCost::potential(ScalarField::quadratic(Vec::Zero(1)), 2.0);
    const auto g = terminal_gradient(pow2, mu);
    EXPECT_NEAR(g[0][0], 2.0 * base * 2.0 * 1.0, 1e-12);
    EXPECT_NEAR(g[1][0], 2.0 * base * 2.0 * 3.0, 1e-12);
  }
}

TEST(Functionals, RunningEvalExamples) {
  const auto energy = RunningCost::control_energy(1.0);
  const auto mu = cloud1d({0.0, 1.0});
  EXPECT_DOUBLE_EQ(eval_running(energy, mu, ControlField::zero(1)), 0.0);
  const Vec b = v1(1.5);
  EXPECT_DOUBLE_EQ(eval_running(energy, mu, ControlField::constant(b, 10.0)), b.squaredNorm());
  const auto track = RunningCost::tracking(1.0, 2.0, v1(0.5));
  EXPECT_DOUBLE_EQ(eval_running(track, uniform_measure({v1(0.5)}), ControlField::zero(1)), 0.0);
}

TEST(Functionals, RunningGradientExamples) {
  const auto mu = cloud1d({-0.4, 0.9});
  {
    const auto energy = RunningCost::control_energy(0.7);
    const auto g = running_gradient(energy, mu, ControlField::constant(v1(2.0), 10.0));
    EXPECT_DOUBLE_EQ(g[0][0], 0.0);
    EXPECT_DOUBLE_EQ(g[1][0], 0.0);
  }
  {
    // omega(x) = A x gives 2 lambda A^T A x; cross-check by finite differences
    // of mu -> L((I + eps F)_# mu, omega) below in the chain-rule test
    const double lambda = 0.7;
    Mat a(1, 1);
    a << 1.3;
    const auto omega = ControlField::affine(a, Vec::Zero(1), 10.0);
    const auto g = running_gradient(RunningCost::control_energy(lambda), mu, omega);
    for (std::size_t i = 0; i < mu.size(); ++i)
      EXPECT_NEAR(g[i][0], 2.0 * lambda * 1.3 * 1.3 * mu.point(i)[0], 1e-13);
  }
  {
    const auto track = RunningCost::tracking(0.0, 1.5, v1(0.2));
    const auto g = running_gradient(track, mu, ControlField::zero(1));
    for (std::size_t i = 0; i < mu.size(); ++i)
      EXPECT_NEAR(g[i][0], 2.0 * 1.5 * (mu.point(i)[0] - 0.2), 1e-13);
  }
}

// Central property: the analytic barycenter pairing equals the derivative of
// the cost along pushforwards by smooth fields.
TEST(Functionals, ChainRuleAgainstFiniteDifferences) {
  std::mt19937_64 rng(314);
  Mat a(2, 2);
  a << 0.4, -0.2, 0.1, 0.6;
  const auto omega = ControlField::affine(a, v2(0.3, -0.1), 10.0);

  for (int trial = 0; trial < 50; ++trial) {
    const int dim = 1 + trial % 2;
    const auto mu = tst::random_cloud(rng, 3 + trial % 8, dim, 1.5, trial % 2 == 0);
    const auto f = tst::random_smooth_field(rng, dim);

    std::vector<std::pair<std::function<double(const EmpiricalMeasure&)>, std::vector<Vec>>> cases;
    cases.emplace_back([](const EmpiricalMeasure& m) { return variance(m); },
                       terminal_gradient(TerminalCost::variance(), mu));
    const auto pot = TerminalCost::potential(ScalarField::quadratic(Vec::Ones(dim)), 2.0);
    cases.emplace_back([&](const EmpiricalMeasure& m) { return eval_terminal(pot, m); },
                       terminal_gradient(pot, mu));
    const auto tgt = TerminalCost::target_attraction(Vec::Constant(dim, 0.5));
    cases.emplace_back([&](const EmpiricalMeasure& m) { return eval_terminal(tgt, m); },
                       terminal_gradient(tgt, mu));
    const auto run = RunningCost::tracking(0.8, 1.1, Vec::Zero(dim));
    const auto om = dim == 2 ? omega : ControlField::affine(Mat::Constant(1, 1, 0.5), v1(0.2), 10.0);
    cases.emplace_back([&](const EmpiricalMeasure& m) { return eval_running(run, m, om); },
                       running_gradient(run, mu, om));

    for (const auto& [cost, grad] : cases) {
      const double fd = pushforward_derivative(cost, mu, f);
      const double analytic = pairing(mu, grad, f);
      EXPECT_NEAR(analytic, fd, std::max(1e-6, 1e-4 * std::abs(cost(mu))))
          << "trial " << trial;
    }
  }
}

TEST(Functionals, VarianceGradientTranslationEquivariance) {
  std::mt19937_64 rng(55);
  const auto mu = tst::random_cloud(rng, 7, 2, 2.0);
  const Vec c = v2(1.3, -0.4);
  const auto shifted = pushforward(mu, [&](const Vec& x) { return Vec(x + c); });
  const auto g0 = terminal_gradient(TerminalCost::variance(), mu);
  const auto g1 = terminal_gradient(TerminalCost::variance(), shifted);
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_LT((g0[i] - g1[i]).norm(), 1e-12);
}

TEST(Functionals, VarianceLipschitzInW2) {
  // |Var(mu) - Var(nu)| <= C(K) W_2(mu, nu) on clouds inside a fixed ball
  std::mt19937_64 rng(77);
  const double radius = 2.0;
  const double lip = 2.0 * radius;  // sup |x - mean| over the ball
  for (int trial = 0; trial < 30; ++trial) {
    const auto mu = tst::random_cloud(rng, 5 + trial % 5, 2, radius, trial % 2 == 0);
    const auto nu = tst::random_cloud(rng, 4 + trial % 6, 2, radius, true);
    const double w2 = wasserstein(2, mu, nu).distance;
    EXPECT_LE(std::abs(variance(mu) - variance(nu)), lip * w2 + 1e-12);
  }
}
