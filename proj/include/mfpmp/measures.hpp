#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "mfpmp/common.hpp"

namespace mfpmp {

// Weighted particle cloud: a finitely supported probability measure on R^d.
// Weights are nonnegative and sum to one; they are renormalised exactly at
// construction once the provided sum is within 1e-12 of one. Zero-weight
// particles are allowed (they ride along flows without carrying mass).
class EmpiricalMeasure {
 public:
  // Tag for weights that were already validated and normalised (e.g. reused
  // from another measure): the constructor must not touch them, so clouds
  // sharing a weight vector stay bitwise identical.
  struct TrustedWeights {};

  EmpiricalMeasure(std::vector<Vec> points, std::vector<double> weights, TrustedWeights)
      : points_(std::move(points)),
        weights_(std::move(weights)),
        dim_(static_cast<int>(points_.front().size())) {}

  EmpiricalMeasure(std::vector<Vec> points, std::vector<double> weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.empty()) throw InvalidArgument("EmpiricalMeasure: no particles");
    if (weights_.size() != points_.size())
      throw InvalidArgument("EmpiricalMeasure: points/weights size mismatch");
    dim_ = static_cast<int>(points_.front().size());
    if (dim_ < 1) throw InvalidArgument("EmpiricalMeasure: empty point");
    double sum = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (points_[i].size() != dim_)
        throw InvalidArgument("EmpiricalMeasure: ragged point dimensions");
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i]))
        throw InvalidArgument("EmpiricalMeasure: negative or non-finite weight");
      sum += weights_[i];
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw InvalidArgument("EmpiricalMeasure: weights sum to " + std::to_string(sum) +
                            ", expected 1 within 1e-12");
    for (double& w : weights_) w /= sum;
  }

  int dim() const { return dim_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }
  const Vec& point(std::size_t i) const { return points_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }

 private:
  std::vector<Vec> points_;
  std::vector<double> weights_;
  int dim_ = 0;
};

inline EmpiricalMeasure uniform_measure(std::vector<Vec> points) {
  if (points.empty()) throw InvalidArgument("uniform_measure: no points");
  std::vector<double> w(points.size(), 1.0 / static_cast<double>(points.size()));
  return EmpiricalMeasure(std::move(points), std::move(w));
}

inline EmpiricalMeasure pushforward(const EmpiricalMeasure& mu,
                                    const std::function<Vec(const Vec&)>& f) {
  std::vector<Vec> mapped;
  mapped.reserve(mu.size());
  for (const Vec& x : mu.points()) mapped.push_back(f(x));
  return EmpiricalMeasure(std::move(mapped), mu.weights(), EmpiricalMeasure::TrustedWeights{});
}

inline Vec integrate(const EmpiricalMeasure& mu, const std::function<Vec(const Vec&)>& phi) {
  Vec acc = mu.weight(0) * phi(mu.point(0));
  for (std::size_t i = 1; i < mu.size(); ++i) acc += mu.weight(i) * phi(mu.point(i));
  return acc;
}

inline double integrate_scalar(const EmpiricalMeasure& mu,
                               const std::function<double(const Vec&)>& phi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) acc += mu.weight(i) * phi(mu.point(i));
  return acc;
}

inline Vec mean(const EmpiricalMeasure& mu) {
  Vec m = Vec::Zero(mu.dim());
  for (std::size_t i = 0; i < mu.size(); ++i) m += mu.weight(i) * mu.point(i);
  return m;
}

// Half the second central moment, matching the variance cost used elsewhere.
inline double variance(const EmpiricalMeasure& mu) {
  const Vec m = mean(mu);
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    acc += mu.weight(i) * (mu.point(i) - m).squaredNorm();
  return 0.5 * acc;
}

// Radius of the smallest origin-centred ball containing the mass-carrying
// particles. Zero-weight tracers are ignored.
inline double support_radius(const EmpiricalMeasure& mu) {
  double r = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu.weight(i) == 0.0) continue;
    r = std::max(r, mu.point(i).norm());
  }
  return r;
}

// Coupling matrix between two particle clouds with prescribed marginals.
class DiscretePlan {
 public:
  DiscretePlan(EmpiricalMeasure source, EmpiricalMeasure target, Mat coupling)
      : source_(std::move(source)), target_(std::move(target)), coupling_(std::move(coupling)) {
    const auto n = static_cast<Eigen::Index>(source_.size());
    const auto m = static_cast<Eigen::Index>(target_.size());
    if (coupling_.rows() != n || coupling_.cols() != m)
      throw InvalidArgument("DiscretePlan: coupling shape mismatch");
    if ((coupling_.array() < 0.0).any())
      throw InvalidArgument("DiscretePlan: negative coupling entry");
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(coupling_.row(i).sum() - source_.weight(i)) > 1e-10)
        throw InvalidArgument("DiscretePlan: row marginal violated at row " + std::to_string(i));
    for (Eigen::Index j = 0; j < m; ++j)
      if (std::abs(coupling_.col(j).sum() - target_.weight(j)) > 1e-10)
        throw InvalidArgument("DiscretePlan: column marginal violated at column " +
                              std::to_string(j));
  }

  const EmpiricalMeasure& source() const { return source_; }
  const EmpiricalMeasure& target() const { return target_; }
  const Mat& coupling() const { return coupling_; }

 private:
  EmpiricalMeasure source_;
  EmpiricalMeasure target_;
  Mat coupling_;
};

// Conditional expectation of the target point given each source particle.
// Entries for zero-weight source particles are undefined; `defined[i]` flags
// which rows carry meaning.
struct PlanBarycenter {
  std::vector<Vec> values;
  std::vector<bool> defined;
};

inline PlanBarycenter plan_barycenter(const DiscretePlan& plan) {
  const auto& src = plan.source();
  const auto& tgt = plan.target();
  PlanBarycenter out;
  out.values.assign(src.size(), Vec::Zero(tgt.dim()));
  out.defined.assign(src.size(), false);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double wi = src.weight(i);
    if (wi <= 0.0) continue;
    Vec acc = Vec::Zero(tgt.dim());
    for (std::size_t j = 0; j < tgt.size(); ++j)
      acc += plan.coupling()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
             tgt.point(j);
    out.values[i] = acc / wi;
    out.defined[i] = true;
  }
  return out;
}

}  // namespace mfpmp
