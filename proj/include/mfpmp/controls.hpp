#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "mfpmp/common.hpp"

namespace mfpmp {

// One member of the fixed C^1 feature family used by basis-expansion controls.
struct FeatureSpec {
  enum class Type { ConstantDir, LinearEntry, GaussianBump };

  Type type = Type::ConstantDir;
  int out_axis = 0;  // which component the feature feeds
  int in_axis = 0;   // LinearEntry: which coordinate it reads
  Vec center;        // GaussianBump
  double sigma = 1.0;

  static FeatureSpec constant_dir(int k) { return {Type::ConstantDir, k, 0, {}, 1.0}; }
  static FeatureSpec linear_entry(int out, int in) {
    return {Type::LinearEntry, out, in, {}, 1.0};
  }
  static FeatureSpec gaussian_bump(Vec center, double sigma, int k) {
    if (sigma <= 0.0) throw InvalidArgument("gaussian bump: sigma must be positive");
    return {Type::GaussianBump, k, 0, std::move(center), sigma};
  }

  Vec eval(const Vec& x) const {
    Vec out = Vec::Zero(x.size());
    switch (type) {
      case Type::ConstantDir:
        out[out_axis] = 1.0;
        break;
      case Type::LinearEntry:
        out[out_axis] = x[in_axis];
        break;
      case Type::GaussianBump:
        out[out_axis] = std::exp(-(x - center).squaredNorm() / (sigma * sigma));
        break;
    }
    return out;
  }

  Mat jacobian(const Vec& x) const {
    Mat j = Mat::Zero(x.size(), x.size());
    switch (type) {
      case Type::ConstantDir:
        break;
      case Type::LinearEntry:
        j(out_axis, in_axis) = 1.0;
        break;
      case Type::GaussianBump: {
        const double s2 = sigma * sigma;
        const double g = std::exp(-(x - center).squaredNorm() / s2);
        j.row(out_axis) = (-2.0 / s2) * g * (x - center).transpose();
        break;
      }
    }
    return j;
  }
};

// A spatial control field omega in U. Three parameterizations: full affine
// omega(x) = A x + b, translation-only omega(x) = b, and an expansion over a
// fixed family of C^1 features. The C^1 bound L_U is part of the value and is
// enforced by `projected`.
class ControlField {
 public:
  enum class Kind { Affine, Constant, Basis };

  static ControlField affine(Mat a, Vec b, double c1_bound) {
    ControlField f;
    f.kind_ = Kind::Affine;
    f.dim_ = static_cast<int>(b.size());
    if (a.rows() != f.dim_ || a.cols() != f.dim_)
      throw InvalidArgument("affine control: matrix shape mismatch");
    f.a_ = std::move(a);
    f.b_ = std::move(b);
    f.c1_bound_ = c1_bound;
    return f;
  }

  static ControlField constant(Vec b, double c1_bound) {
    ControlField f;
    f.kind_ = Kind::Constant;
    f.dim_ = static_cast<int>(b.size());
    f.b_ = std::move(b);
    f.c1_bound_ = c1_bound;
    return f;
  }

  static ControlField basis(std::vector<FeatureSpec> features, Vec coeffs, int dim,
                            double c1_bound) {
    if (static_cast<Eigen::Index>(features.size()) != coeffs.size())
      throw InvalidArgument("basis control: feature/coefficient count mismatch");
    ControlField f;
    f.kind_ = Kind::Basis;
    f.dim_ = dim;
    f.features_ = std::move(features);
    f.coeffs_ = std::move(coeffs);
    f.c1_bound_ = c1_bound;
    return f;
  }

  static ControlField zero(int dim, double c1_bound = 1.0) {
    return constant(Vec::Zero(dim), c1_bound);
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double c1_bound() const { return c1_bound_; }

  Vec eval(const Vec& x) const {
    switch (kind_) {
      case Kind::Affine:
        return a_ * x + b_;
      case Kind::Constant:
        return b_;
      case Kind::Basis: {
        Vec out = Vec::Zero(dim_);
        for (std::size_t m = 0; m < features_.size(); ++m) out += coeffs_[m] * features_[m].eval(x);
        return out;
      }
    }
    throw InvalidArgument("unknown control kind");
  }

  Mat jacobian(const Vec& x) const {
    switch (kind_) {
      case Kind::Affine:
        return a_;
      case Kind::Constant:
        return Mat::Zero(dim_, dim_);
      case Kind::Basis: {
        Mat j = Mat::Zero(dim_, dim_);
        for (std::size_t m = 0; m < features_.size(); ++m)
          j += coeffs_[m] * features_[m].jacobian(x);
        return j;
      }
    }
    throw InvalidArgument("unknown control kind");
  }

  int param_count() const {
    switch (kind_) {
      case Kind::Affine:
        return dim_ * dim_ + dim_;
      case Kind::Constant:
        return dim_;
      case Kind::Basis:
        return static_cast<int>(coeffs_.size());
    }
    return 0;
  }

  Vec params() const {
    Vec p(param_count());
    switch (kind_) {
      case Kind::Affine: {
        int idx = 0;
        for (int r = 0; r < dim_; ++r)
          for (int c = 0; c < dim_; ++c) p[idx++] = a_(r, c);
        p.tail(dim_) = b_;
        break;
      }
      case Kind::Constant:
        p = b_;
        break;
      case Kind::Basis:
        p = coeffs_;
        break;
    }
    return p;
  }

  ControlField with_params(const Vec& p) const {
    if (p.size() != param_count()) throw InvalidArgument("with_params: size mismatch");
    ControlField f = *this;
    switch (kind_) {
      case Kind::Affine: {
        int idx = 0;
        for (int r = 0; r < dim_; ++r)
          for (int c = 0; c < dim_; ++c) f.a_(r, c) = p[idx++];
        f.b_ = p.tail(dim_);
        break;
      }
      case Kind::Constant:
        f.b_ = p;
        break;
      case Kind::Basis:
        f.coeffs_ = p;
        break;
    }
    return f;
  }

  // The field generated by the m-th parameter direction, x -> d(omega)/d(theta_m)(x).
  Vec param_direction(int m, const Vec& x) const {
    switch (kind_) {
      case Kind::Affine: {
        Vec out = Vec::Zero(dim_);
        if (m < dim_ * dim_)
          out[m / dim_] = x[m % dim_];
        else
          out[m - dim_ * dim_] = 1.0;
        return out;
      }
      case Kind::Constant: {
        Vec out = Vec::Zero(dim_);
        out[m] = 1.0;
        return out;
      }
      case Kind::Basis:
        return features_[m].eval(x);
    }
    throw InvalidArgument("unknown control kind");
  }

  // sup over a deterministic sample of the working ball of |w(x)| + ||D w(x)||.
  double sampled_c1_norm(double radius, int samples_per_axis = 9) const {
    double sup = 0.0;
    const auto probe = [&](const Vec& x) {
      const double val = eval(x).norm() + jacobian(x).operatorNorm();
      sup = std::max(sup, val);
    };
    probe(Vec::Zero(dim_));
    if (dim_ == 1) {
      for (int s = 0; s < samples_per_axis; ++s) {
        const double x = -radius + 2.0 * radius * s / (samples_per_axis - 1);
        probe(Vec::Constant(1, x));
      }
    } else {
      // axis-aligned grid restricted to the ball, plus the sphere directions
      Vec x = Vec::Zero(dim_);
      std::vector<int> idx(dim_, 0);
      const int spa = std::max(3, samples_per_axis / (dim_ > 2 ? dim_ : 1));
      long total = 1;
      for (int d = 0; d < dim_; ++d) total *= spa;
      for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        for (int d = 0; d < dim_; ++d) {
          const int k = static_cast<int>(rem % spa);
          rem /= spa;
          x[d] = -radius + 2.0 * radius * k / (spa - 1);
        }
        if (x.norm() <= radius) probe(x);
      }
      for (int d = 0; d < dim_; ++d) {
        Vec e = Vec::Zero(dim_);
        e[d] = radius;
        probe(e);
        probe(Vec(-e));
      }
    }
    return sup;
  }

  // Scale parameters until the sampled C^1 norm fits under the bound.
  ControlField projected(double radius) const {
    const double norm = sampled_c1_norm(radius);
    if (norm <= c1_bound_ || norm == 0.0) return *this;
    ControlField f = *this;
    const double s = c1_bound_ / norm;
    switch (kind_) {
      case Kind::Affine:
        f.a_ *= s;
        f.b_ *= s;
        break;
      case Kind::Constant:
        f.b_ *= s;
        break;
      case Kind::Basis:
        f.coeffs_ *= s;
        break;
    }
    return f;
  }

 private:
  Kind kind_ = Kind::Constant;
  int dim_ = 0;
  Mat a_;
  Vec b_;
  std::vector<FeatureSpec> features_;
  Vec coeffs_;
  double c1_bound_ = 1.0;
};

// Piecewise-constant-in-time schedule of control fields on a strictly
// increasing grid 0 = t_0 < ... < t_K = T; field k acts on [t_k, t_{k+1}).
class ControlSignal {
 public:
  ControlSignal(std::vector<double> grid, std::vector<ControlField> fields)
      : grid_(std::move(grid)), fields_(std::move(fields)) {
    if (grid_.size() < 2) throw InvalidArgument("ControlSignal: grid needs at least two points");
    if (fields_.size() + 1 != grid_.size())
      throw InvalidArgument("ControlSignal: need one field per interval");
    if (std::abs(grid_.front()) > 1e-12) throw InvalidArgument("ControlSignal: grid must start at 0");
    for (std::size_t k = 0; k + 1 < grid_.size(); ++k)
      if (!(grid_[k] < grid_[k + 1]))
        throw InvalidArgument("ControlSignal: grid must be strictly increasing");
  }

  static ControlSignal single(ControlField field, double horizon) {
    return ControlSignal({0.0, horizon}, {std::move(field)});
  }

  static ControlSignal zero(int dim, double horizon, double c1_bound = 1.0) {
    return single(ControlField::zero(dim, c1_bound), horizon);
  }

  static ControlSignal uniform(const ControlField& field, double horizon, int intervals) {
    std::vector<double> grid(intervals + 1);
    for (int k = 0; k <= intervals; ++k) grid[k] = horizon * k / intervals;
    return ControlSignal(std::move(grid), std::vector<ControlField>(intervals, field));
  }

  double horizon() const { return grid_.back(); }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<ControlField>& fields() const { return fields_; }
  std::size_t intervals() const { return fields_.size(); }

  // Right-continuous interval lookup; t = T maps to the last interval.
  std::size_t interval_of(double t) const {
    if (t <= grid_.front()) return 0;
    if (t >= grid_.back()) return fields_.size() - 1;
    const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    return static_cast<std::size_t>(it - grid_.begin()) - 1;
  }

  const ControlField& field_at(double t) const { return fields_[interval_of(t)]; }

  ControlSignal with_field(std::size_t k, ControlField field) const {
    auto fields = fields_;
    fields[k] = std::move(field);
    return ControlSignal(grid_, std::move(fields));
  }

  ControlSignal projected(double radius) const {
    auto fields = fields_;
    for (auto& f : fields) f = f.projected(radius);
    return ControlSignal(grid_, std::move(fields));
  }

  // The signal restricted to [t0, t1], shifted to start at 0.
  ControlSignal restricted(double t0, double t1) const {
    if (!(t0 < t1)) throw InvalidArgument("ControlSignal::restricted: empty window");
    std::vector<double> grid{0.0};
    std::vector<ControlField> fields;
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      const double hi = std::min(grid_[k + 1], t1);
      if (hi <= t0 + 1e-15) continue;
      if (grid_[k] >= t1 - 1e-15) break;
      grid.push_back(hi - t0);
      fields.push_back(fields_[k]);
    }
    if (std::abs(grid.back() - (t1 - t0)) > 1e-12) {
      grid.push_back(t1 - t0);
      fields.push_back(fields_.back());
    }
    return ControlSignal(std::move(grid), std::move(fields));
  }

 private:
  std::vector<double> grid_;
  std::vector<ControlField> fields_;
};

}  // namespace mfpmp
