#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mfpmp/controls.hpp"
#include "mfpmp/measures.hpp"

namespace mfpmp {

// C^1 scalar potentials V for integral terminal costs.
struct ScalarField {
  enum class Family { Quadratic };  // V(x) = |x - center|^2

  Family family = Family::Quadratic;
  Vec center;

  static ScalarField quadratic(Vec center) { return {Family::Quadratic, std::move(center)}; }

  double eval(const Vec& x) const { return (x - center).squaredNorm(); }
  Vec gradient(const Vec& x) const { return 2.0 * (x - center); }
};

// Terminal cost phi(mu) together with the barycenter map of the minimal
// selection in its subdifferential:
//   Variance          phi = 1/2 int |x - mean|^2 dmu,  gradient x - mean
//   Potential         phi = (int V dmu)^alpha,         gradient alpha (int V dmu)^(alpha-1) grad V
//   TargetAttraction  phi = int |x - target|^2 dmu,    gradient 2 (x - target)
class TerminalCost {
 public:
  enum class Kind { Variance, Potential, TargetAttraction };

  static TerminalCost variance() { return TerminalCost(Kind::Variance); }

  static TerminalCost potential(ScalarField v, double alpha) {
    if (alpha <= 0.0) throw InvalidArgument("potential cost: alpha must be positive");
    TerminalCost c(Kind::Potential);
    c.v_ = std::move(v);
    c.alpha_ = alpha;
    return c;
  }

  static TerminalCost target_attraction(Vec target) {
    TerminalCost c(Kind::TargetAttraction);
    c.v_ = ScalarField::quadratic(std::move(target));
    return c;
  }

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }

  double eval(const EmpiricalMeasure& mu) const {
    switch (kind_) {
      case Kind::Variance:
        return mfpmp::variance(mu);
      case Kind::TargetAttraction:
        return integral(mu);
      case Kind::Potential: {
        const double base = integral(mu);
        if (alpha_ == 1.0) return base;
        if (base <= 0.0 && alpha_ < 1.0)
          throw std::domain_error("potential cost: power rule undefined, integral vanishes");
        return std::pow(base, alpha_);
      }
    }
    throw InvalidArgument("unknown terminal cost");
  }

  // Per-particle barycenter gradient vectors.
  std::vector<Vec> gradient(const EmpiricalMeasure& mu) const {
    std::vector<Vec> g(mu.size());
    switch (kind_) {
      case Kind::Variance: {
        const Vec m = mean(mu);
        for (std::size_t i = 0; i < mu.size(); ++i) g[i] = mu.point(i) - m;
        return g;
      }
      case Kind::TargetAttraction: {
        for (std::size_t i = 0; i < mu.size(); ++i) g[i] = v_.gradient(mu.point(i));
        return g;
      }
      case Kind::Potential: {
        double factor = 1.0;
        if (alpha_ != 1.0) {
          const double base = integral(mu);
          if (base <= 0.0 && alpha_ < 1.0)
            throw std::domain_error("potential cost: power rule undefined, integral vanishes");
          factor = alpha_ * std::pow(base, alpha_ - 1.0);
        }
        for (std::size_t i = 0; i < mu.size(); ++i) g[i] = factor * v_.gradient(mu.point(i));
        return g;
      }
    }
    throw InvalidArgument("unknown terminal cost");
  }

 private:
  explicit TerminalCost(Kind kind) : kind_(kind) {}

  double integral(const EmpiricalMeasure& mu) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) acc += mu.weight(i) * v_.eval(mu.point(i));
    return acc;
  }

  Kind kind_;
  ScalarField v_ = ScalarField::quadratic(Vec::Zero(1));
  double alpha_ = 1.0;
};

// Running cost L(mu, omega) = int l(x, omega(x)) dmu with
//   control energy  l(x,v) = lambda |v|^2
//   tracking        l(x,v) = lambda |v|^2 + beta |x - target|^2
class RunningCost {
 public:
  enum class Kind { ControlEnergy, Tracking };

  static RunningCost control_energy(double lambda) {
    RunningCost c;
    c.kind_ = Kind::ControlEnergy;
    c.lambda_ = lambda;
    return c;
  }

  static RunningCost tracking(double lambda, double beta, Vec target) {
    RunningCost c;
    c.kind_ = Kind::Tracking;
    c.lambda_ = lambda;
    c.beta_ = beta;
    c.target_ = std::move(target);
    return c;
  }

  Kind kind() const { return kind_; }
  double lambda() const { return lambda_; }

  double integrand(const Vec& x, const Vec& v) const {
    double l = lambda_ * v.squaredNorm();
    if (kind_ == Kind::Tracking) l += beta_ * (x - target_).squaredNorm();
    return l;
  }

  Vec grad_x(const Vec& x, const Vec& /*v*/) const {
    if (kind_ == Kind::Tracking) return 2.0 * beta_ * (x - target_);
    return Vec::Zero(x.size());
  }

  Vec grad_v(const Vec& /*x*/, const Vec& v) const { return 2.0 * lambda_ * v; }

  double eval(const EmpiricalMeasure& mu, const ControlField& omega) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
      acc += mu.weight(i) * integrand(mu.point(i), omega.eval(mu.point(i)));
    return acc;
  }

  // Barycenter map grad_x l(x, w(x)) + D_x w(x)^T grad_v l(x, w(x)).
  std::vector<Vec> gradient(const EmpiricalMeasure& mu, const ControlField& omega) const {
    std::vector<Vec> g(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const Vec& x = mu.point(i);
      const Vec w = omega.eval(x);
      g[i] = grad_x(x, w) + omega.jacobian(x).transpose() * grad_v(x, w);
    }
    return g;
  }

 private:
  Kind kind_ = Kind::ControlEnergy;
  double lambda_ = 1.0;
  double beta_ = 0.0;
  Vec target_;
};

inline double eval_terminal(const TerminalCost& cost, const EmpiricalMeasure& mu) {
  return cost.eval(mu);
}

inline std::vector<Vec> terminal_gradient(const TerminalCost& cost, const EmpiricalMeasure& mu) {
  return cost.gradient(mu);
}

inline double eval_running(const RunningCost& cost, const EmpiricalMeasure& mu,
                           const ControlField& omega) {
  return cost.eval(mu, omega);
}

inline std::vector<Vec> running_gradient(const RunningCost& cost, const EmpiricalMeasure& mu,
                                         const ControlField& omega) {
  return cost.gradient(mu, omega);
}

}  // namespace mfpmp
