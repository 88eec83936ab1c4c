#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "mfpmp/measures.hpp"

namespace mfpmp {

// Interaction kernels H(t,x,y). All shipped families are autonomous and C^1
// with closed-form Jacobians in both arguments.
struct KernelSpec {
  enum class Family { Zero, LinearAttraction, GaussianGradient };

  Family family = Family::Zero;
  double strength = 1.0;  // linear attraction gain
  double sigma = 1.0;     // gaussian length scale
  double scale = 1.0;     // gaussian amplitude

  static KernelSpec zero() { return {}; }
  static KernelSpec linear_attraction(double a) {
    KernelSpec k;
    k.family = Family::LinearAttraction;
    k.strength = a;
    return k;
  }
  static KernelSpec gaussian_gradient(double sigma, double scale = 1.0) {
    if (sigma <= 0.0) throw InvalidArgument("gaussian kernel: sigma must be positive");
    KernelSpec k;
    k.family = Family::GaussianGradient;
    k.sigma = sigma;
    k.scale = scale;
    return k;
  }

  bool is_zero() const { return family == Family::Zero; }

  Vec eval(double /*t*/, const Vec& x, const Vec& y) const {
    switch (family) {
      case Family::Zero:
        return Vec::Zero(x.size());
      case Family::LinearAttraction:
        return strength * (y - x);
      case Family::GaussianGradient: {
        const Vec z = x - y;
        const double s2 = sigma * sigma;
        return (-2.0 * scale / s2) * std::exp(-z.squaredNorm() / s2) * z;
      }
    }
    throw InvalidArgument("unknown kernel family");
  }

  // (D_x H, D_y H) at (t,x,y).
  std::pair<Mat, Mat> jacobians(double /*t*/, const Vec& x, const Vec& y) const {
    const auto d = x.size();
    switch (family) {
      case Family::Zero:
        return {Mat::Zero(d, d), Mat::Zero(d, d)};
      case Family::LinearAttraction:
        return {-strength * Mat::Identity(d, d), strength * Mat::Identity(d, d)};
      case Family::GaussianGradient: {
        const Vec z = x - y;
        const double s2 = sigma * sigma;
        const double g = std::exp(-z.squaredNorm() / s2);
        const Mat dz = (-2.0 * scale / s2) * g *
                       (Mat::Identity(d, d) - (2.0 / s2) * z * z.transpose());
        return {dz, -dz};
      }
    }
    throw InvalidArgument("unknown kernel family");
  }

  // Lipschitz constant of H in each argument; for the gaussian family the
  // bound sup_z ||D_z H|| = 2*scale/sigma^2 is global, for linear attraction
  // it is the gain.
  double arg_lipschitz() const {
    switch (family) {
      case Family::Zero:
        return 0.0;
      case Family::LinearAttraction:
        return std::abs(strength);
      case Family::GaussianGradient:
        return 2.0 * std::abs(scale) / (sigma * sigma);
    }
    return 0.0;
  }

  // Sublinearity constant valid for measures supported in B(0, radius):
  // |H(t,x,y)| <= m * (1 + |x|).
  double sublinearity(double radius) const {
    switch (family) {
      case Family::Zero:
        return 0.0;
      case Family::LinearAttraction:
        return std::abs(strength) * (1.0 + radius);
      case Family::GaussianGradient:
        // |z| e^{-|z|^2/s^2} peaks at sigma/sqrt(2)
        return 2.0 * std::abs(scale) / (sigma * sigma) * sigma * std::exp(-0.5) / std::sqrt(2.0);
    }
    return 0.0;
  }
};

// Local (measure-independent) drift v_l(t,x).
struct LocalDriftSpec {
  enum class Family { Zero, Constant, Linear };

  Family family = Family::Zero;
  Vec offset;  // c
  Mat matrix;  // B

  static LocalDriftSpec zero() { return {}; }
  static LocalDriftSpec constant(Vec c) {
    LocalDriftSpec d;
    d.family = Family::Constant;
    d.offset = std::move(c);
    return d;
  }
  static LocalDriftSpec linear(Mat b, Vec c) {
    LocalDriftSpec d;
    d.family = Family::Linear;
    d.matrix = std::move(b);
    d.offset = std::move(c);
    return d;
  }

  Vec eval(double /*t*/, const Vec& x) const {
    switch (family) {
      case Family::Zero:
        return Vec::Zero(x.size());
      case Family::Constant:
        return offset;
      case Family::Linear:
        return matrix * x + offset;
    }
    throw InvalidArgument("unknown drift family");
  }

  Mat jacobian(double /*t*/, const Vec& x) const {
    if (family == Family::Linear) return matrix;
    return Mat::Zero(x.size(), x.size());
  }

  double lipschitz() const {
    if (family == Family::Linear) return matrix.norm();  // Frobenius upper-bounds the 2-norm
    return 0.0;
  }

  double sublinearity() const {
    switch (family) {
      case Family::Zero:
        return 0.0;
      case Family::Constant:
        return offset.norm();
      case Family::Linear:
        return std::max(matrix.norm(), offset.norm());
    }
    return 0.0;
  }
};

struct LipschitzBounds {
  double l1 = 0.0;  // |v[mu](t,x) - v[mu](t,y)| <= l1 |x-y|
  double l2 = 0.0;  // sup_x |v[mu](t,x) - v[nu](t,x)| <= l2 W_1(mu,nu)
  double m = 0.0;   // |v[mu](t,x)| <= m (1 + |x|)
};

// Non-local velocity field v[mu](t,x) = sum_j w_j H(t,x,y_j) + v_l(t,x).
// The stored bounds are derived from the families' closed forms and are valid
// for measures supported in B(0, reference_radius).
struct NonlocalField {
  KernelSpec kernel;
  LocalDriftSpec drift;
  double reference_radius = 10.0;
  LipschitzBounds lipschitz_bounds;

  NonlocalField() { lipschitz_bounds = derive_bounds(reference_radius); }
  NonlocalField(KernelSpec k, LocalDriftSpec d, double ref_radius = 10.0)
      : kernel(std::move(k)), drift(std::move(d)), reference_radius(ref_radius) {
    lipschitz_bounds = derive_bounds(reference_radius);
  }

  LipschitzBounds derive_bounds(double radius) const {
    LipschitzBounds b;
    b.l1 = kernel.arg_lipschitz() + drift.lipschitz();
    // |∫H(x,.)d(mu-nu)| <= Lip_y(H) W_1 by Kantorovich-Rubinstein.
    b.l2 = kernel.arg_lipschitz();
    b.m = kernel.sublinearity(radius) + drift.sublinearity();
    return b;
  }

  bool is_zero() const { return kernel.is_zero() && drift.family == LocalDriftSpec::Family::Zero; }
};

// D_y H as a function of (t, z, y): the barycenter matrix of the measure
// derivative of the kernel field, fed to the variational and costate systems.
inline Mat interaction_gamma(const NonlocalField& field, double t, const Vec& z, const Vec& y) {
  return field.kernel.jacobians(t, z, y).second;
}

inline std::pair<Mat, Mat> kernel_jacobians(const KernelSpec& kernel, double t, const Vec& x,
                                            const Vec& y) {
  return kernel.jacobians(t, x, y);
}

}  // namespace mfpmp
