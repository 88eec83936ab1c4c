#pragma once

#include <Eigen/Dense>

#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfpmp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Thrown when a particle escapes the working ball during integration.
struct BlowupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown on malformed inputs (dimension mismatches, invalid weights, ...).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline int thread_budget() {
  static const int budget = [] {
    const char* env = std::getenv("MFPMP_THREADS");
    if (env == nullptr) return 1;
    int v = std::atoi(env);
    if (v == 0) v = static_cast<int>(std::thread::hardware_concurrency());
    return v > 0 ? v : 1;
  }();
  return budget;
}

}  // namespace detail

// Deterministic data-parallel map: body(i) must only write state owned by
// index i. Falls back to a serial loop for small ranges or MFPMP_THREADS=1.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const int threads = detail::thread_budget();
  if (threads <= 1 || n < 8) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mfpmp
