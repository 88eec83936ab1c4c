#pragma once

// Test-only oracles kept independent of the library code paths they check:
// finite-difference differentiation and smooth random perturbation fields.

#include <functional>
#include <random>
#include <vector>

#include "mfpmp/measures.hpp"

namespace tst {

// 4th-order central difference of a scalar map at 0.
inline double central_diff4(const std::function<double(double)>& f, double h) {
  return (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
}

// Smooth bounded random vector field: sum of a few sine modes per component.
struct SmoothField {
  std::vector<mfpmp::Vec> freq;     // one frequency vector per mode
  std::vector<mfpmp::Vec> amp;      // one amplitude vector per mode
  std::vector<double> phase;

  mfpmp::Vec operator()(const mfpmp::Vec& x) const {
    mfpmp::Vec out = mfpmp::Vec::Zero(x.size());
    for (std::size_t m = 0; m < freq.size(); ++m)
      out += amp[m] * std::sin(freq[m].dot(x) + phase[m]);
    return out;
  }
};

inline SmoothField random_smooth_field(std::mt19937_64& rng, int dim, int modes = 3,
                                       double amplitude = 1.0) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SmoothField f;
  for (int m = 0; m < modes; ++m) {
    mfpmp::Vec k(dim), a(dim);
    for (int d = 0; d < dim; ++d) {
      k[d] = 2.0 * unit(rng);
      a[d] = amplitude * unit(rng);
    }
    f.freq.push_back(k);
    f.amp.push_back(a);
    f.phase.push_back(3.0 * unit(rng));
  }
  return f;
}

}  // namespace tst
