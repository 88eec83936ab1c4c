#include "mfpmp/measures.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

using namespace mfpmp;
using tst::cloud1d;
using tst::v1;
using tst::v2;

TEST(Measures, UniformConstruction) {
  const auto mu = cloud1d({0.0, 2.0});
  EXPECT_DOUBLE_EQ(mu.weight(0), 0.5);
  EXPECT_DOUBLE_EQ(mu.weight(1), 0.5);

  const auto dirac = uniform_measure({v2(1.0, 1.0)});
  EXPECT_EQ(dirac.size(), 1u);
  EXPECT_DOUBLE_EQ(dirac.weight(0), 1.0);

  const auto five = cloud1d({0, 1, 2, 3, 4});
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(five.weight(i), 0.2);
}

TEST(Measures, ConstructionErrors) {
  EXPECT_THROW(uniform_measure({}), InvalidArgument);
  EXPECT_THROW(EmpiricalMeasure({v1(0.0), v2(0.0, 1.0)}, {0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(EmpiricalMeasure({v1(0.0)}, {0.5}), InvalidArgument);        // sum != 1
  EXPECT_THROW(EmpiricalMeasure({v1(0.0), v1(1.0)}, {1.5, -0.5}), InvalidArgument);
}

TEST(Measures, PushforwardExamples) {
  const auto mu = cloud1d({-1.0, 1.0});
  const auto same = pushforward(mu, [](const Vec& x) { return x; });
  EXPECT_EQ(same.point(0), mu.point(0));
  EXPECT_EQ(same.point(1), mu.point(1));

  const auto shifted = pushforward(mu, [](const Vec& x) { return Vec(x.array() + 3.0); });
  EXPECT_DOUBLE_EQ(mean(shifted)[0], mean(mu)[0] + 3.0);

  const auto doubled = pushforward(mu, [](const Vec& x) { return Vec(2.0 * x); });
  EXPECT_DOUBLE_EQ(doubled.point(0)[0], -2.0);
  EXPECT_DOUBLE_EQ(doubled.point(1)[0], 2.0);
}

TEST(Measures, IntegrateExamples) {
  const auto mu = cloud1d({0.0, 2.0});
  EXPECT_DOUBLE_EQ(integrate_scalar(mu, [](const Vec&) { return 1.0; }), 1.0);
  EXPECT_DOUBLE_EQ(integrate(mu, [](const Vec& x) { return x; })[0], 1.0);
  const auto pm = cloud1d({-1.0, 1.0});
  EXPECT_DOUBLE_EQ(integrate_scalar(pm, [](const Vec& x) { return x.squaredNorm(); }), 1.0);
}

TEST(Measures, Moments) {
  const auto dirac = uniform_measure({v2(3.0, -1.0)});
  EXPECT_EQ(mean(dirac), v2(3.0, -1.0));
  EXPECT_DOUBLE_EQ(variance(dirac), 0.0);

  EXPECT_DOUBLE_EQ(variance(cloud1d({-1.0, 1.0})), 0.5);

  // Cross-check the hand value 4/3 against the defining sum.
  const auto mu = cloud1d({0.0, 2.0, 4.0});
  EXPECT_DOUBLE_EQ(mean(mu)[0], 2.0);
  double brute = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    brute += 0.5 * mu.weight(i) * (mu.point(i) - mean(mu)).squaredNorm();
  EXPECT_DOUBLE_EQ(variance(mu), brute);
  EXPECT_NEAR(variance(mu), 4.0 / 3.0, 1e-15);

  EXPECT_DOUBLE_EQ(support_radius(cloud1d({-3.0, 1.0})), 3.0);
}

TEST(Measures, SupportRadiusIgnoresZeroWeight) {
  EmpiricalMeasure mu({v1(1.0), v1(100.0)}, {1.0, 0.0});
  EXPECT_DOUBLE_EQ(support_radius(mu), 1.0);
}

TEST(Measures, PlanBarycenterExamples) {
  const auto mu = cloud1d({0.0, 2.0});
  const auto dirac = uniform_measure({v1(5.0)});
  // Product plan mu (x) delta_c: every barycenter is c.
  Mat c(2, 1);
  c << 0.5, 0.5;
  const auto prod = plan_barycenter(DiscretePlan(mu, dirac, c));
  EXPECT_DOUBLE_EQ(prod.values[0][0], 5.0);
  EXPECT_DOUBLE_EQ(prod.values[1][0], 5.0);

  // Plan induced by the map f(x) = x + 1.
  const auto nu = pushforward(mu, [](const Vec& x) { return Vec(x.array() + 1.0); });
  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = diag(1, 1) = 0.5;
  const auto induced = plan_barycenter(DiscretePlan(mu, nu, diag));
  EXPECT_DOUBLE_EQ(induced.values[0][0], 1.0);
  EXPECT_DOUBLE_EQ(induced.values[1][0], 3.0);

  // Mass of x_0 split equally between y = 0 and y = 2.
  const auto tgt = cloud1d({0.0, 2.0});
  Mat split(1, 2);
  split << 0.5, 0.5;
  const auto bc = plan_barycenter(DiscretePlan(uniform_measure({v1(7.0)}), tgt, split));
  EXPECT_DOUBLE_EQ(bc.values[0][0], 1.0);
}

TEST(Measures, PlanBarycenterFlagsZeroWeightRows) {
  EmpiricalMeasure mu({v1(0.0), v1(1.0)}, {1.0, 0.0});
  const auto nu = uniform_measure({v1(2.0)});
  Mat c(2, 1);
  c << 1.0, 0.0;
  const auto bc = plan_barycenter(DiscretePlan(mu, nu, c));
  EXPECT_TRUE(bc.defined[0]);
  EXPECT_FALSE(bc.defined[1]);
}

TEST(Measures, PlanMarginalInvariantEnforced) {
  const auto mu = cloud1d({0.0, 2.0});
  const auto nu = cloud1d({1.0, 3.0});
  Mat bad(2, 2);
  bad << 0.5, 0.2, 0.0, 0.3;  // column sums off
  EXPECT_THROW(DiscretePlan(mu, nu, bad), InvalidArgument);
}

TEST(Measures, PushforwardPreservesMassAndChangeOfVariables) {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = tst::random_cloud(rng, 1 + trial % 7, 2, 2.0, trial % 2 == 0);
    const auto f = [](const Vec& x) { return Vec(x.array().sin() + 0.5 * x.array()); };
    const auto fmu = pushforward(mu, f);
    double total = 0.0;
    for (double w : fmu.weights()) total += w;
    EXPECT_NEAR(total, 1.0, 1e-15);
    const auto phi = [](const Vec& x) { return x.squaredNorm() + x[0]; };
    EXPECT_DOUBLE_EQ(integrate_scalar(fmu, phi),
                     integrate_scalar(mu, [&](const Vec& x) { return phi(f(x)); }));
  }
}
