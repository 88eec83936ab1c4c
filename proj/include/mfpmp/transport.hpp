#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <vector>

#include "mfpmp/measures.hpp"

namespace mfpmp {

// Exact solution of the discrete Kantorovich problem with cost |x-y|^p.
// `distance` is the p-th root of the optimal value. Dual potentials are
// exposed when the solver produces them (not for the brute-force oracle).
struct OtSolution {
  double distance = 0.0;
  int p = 2;
  double primal_value = 0.0;  // optimal transport cost, before the p-th root
  DiscretePlan plan;
  bool has_duals = false;
  std::vector<double> potential_source;
  std::vector<double> potential_target;
};

namespace detail {

inline Mat transport_cost_matrix(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int p) {
  Mat c(mu.size(), nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j) {
      const double d = (mu.point(i) - nu.point(j)).norm();
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (p == 1) ? d : d * d;
    }
  return c;
}

// Dense shortest-augmenting-path assignment solver (O(n^3)). Returns the
// column assigned to each row plus dual potentials with u_i + v_j <= c_ij.
struct AssignmentResult {
  std::vector<int> col_of_row;
  std::vector<double> u, v;
  double total_cost = 0.0;
};

inline AssignmentResult solve_assignment(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; p[j] is the row matched to column j, column 0 is a stub.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  AssignmentResult res;
  res.col_of_row.assign(n, -1);
  res.u.assign(n, 0.0);
  res.v.assign(n, 0.0);
  for (int j = 1; j <= n; ++j) res.col_of_row[p[j] - 1] = j - 1;
  for (int i = 1; i <= n; ++i) res.u[i - 1] = u[i];
  for (int j = 1; j <= n; ++j) res.v[j - 1] = v[j];
  for (int i = 0; i < n; ++i) res.total_cost += cost(i, res.col_of_row[i]);
  return res;
}

// Transportation simplex on the dense bipartite graph. Bland's entering rule
// keeps degenerate instances from cycling; the basis is a spanning tree of
// m + k - 1 arcs throughout.
struct TransportResult {
  Mat flow;
  std::vector<double> u, v;
  double total_cost = 0.0;
};

inline TransportResult solve_transport_simplex(const std::vector<double>& a,
                                               const std::vector<double>& b, const Mat& cost) {
  const int m = static_cast<int>(a.size());
  const int k = static_cast<int>(b.size());
  Mat flow = Mat::Zero(m, k);
  std::vector<std::vector<int>> basic_cols(m), basic_rows(k);
  auto add_basic = [&](int i, int j) {
    basic_cols[i].push_back(j);
    basic_rows[j].push_back(i);
  };
  auto drop_basic = [&](int i, int j) {
    auto& bc = basic_cols[i];
    bc.erase(std::find(bc.begin(), bc.end(), j));
    auto& br = basic_rows[j];
    br.erase(std::find(br.begin(), br.end(), i));
  };

  // North-west corner initial basis.
  {
    std::vector<double> ra = a, rb = b;
    int i = 0, j = 0;
    while (true) {
      const double f = std::max(0.0, std::min(ra[i], rb[j]));
      flow(i, j) = f;
      add_basic(i, j);
      ra[i] -= f;
      rb[j] -= f;
      if (i == m - 1 && j == k - 1) break;
      if (i + 1 < m && (j + 1 == k || ra[i] <= rb[j]))
        ++i;
      else
        ++j;
    }
  }

  const double scale = 1.0 + cost.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * scale;
  std::vector<double> u(m), v(k);
  std::vector<char> u_set(m), v_set(k);

  const long max_pivots = 200000L;
  for (long pivot = 0;; ++pivot) {
    if (pivot > max_pivots)
      throw std::runtime_error("transport simplex: pivot limit exceeded");

    // Duals from the spanning tree, rooted at source 0.
    std::fill(u_set.begin(), u_set.end(), 0);
    std::fill(v_set.begin(), v_set.end(), 0);
    u[0] = 0.0;
    u_set[0] = 1;
    std::queue<int> bfs;  // node ids: sources [0,m), sinks [m,m+k)
    bfs.push(0);
    while (!bfs.empty()) {
      const int node = bfs.front();
      bfs.pop();
      if (node < m) {
        for (int j : basic_cols[node])
          if (!v_set[j]) {
            v[j] = cost(node, j) - u[node];
            v_set[j] = 1;
            bfs.push(m + j);
          }
      } else {
        const int j = node - m;
        for (int i : basic_rows[j])
          if (!u_set[i]) {
            u[i] = cost(i, j) - v[j];
            u_set[i] = 1;
            bfs.push(i);
          }
      }
    }

    for (int i = 0; i < m; ++i)
      if (!u_set[i]) throw std::runtime_error("transport simplex: basis lost connectivity");
    for (int j = 0; j < k; ++j)
      if (!v_set[j]) throw std::runtime_error("transport simplex: basis lost connectivity");

    // Entering arc: first with negative reduced cost (Bland).
    int ei = -1, ej = -1;
    for (int i = 0; i < m && ei < 0; ++i)
      for (int j = 0; j < k; ++j)
        if (cost(i, j) - u[i] - v[j] < -tol) {
          ei = i;
          ej = j;
          break;
        }
    if (ei < 0) break;  // optimal

    // Unique tree path from source ei to sink ej.
    const int nodes = m + k;
    std::vector<int> parent(nodes, -2);
    parent[ei] = -1;
    std::queue<int> q;
    q.push(ei);
    while (!q.empty() && parent[m + ej] == -2) {
      const int node = q.front();
      q.pop();
      if (node < m) {
        for (int j : basic_cols[node])
          if (parent[m + j] == -2) {
            parent[m + j] = node;
            q.push(m + j);
          }
      } else {
        for (int i : basic_rows[node - m])
          if (parent[i] == -2) {
            parent[i] = node;
            q.push(i);
          }
      }
    }

    // Cycle = entering arc plus the tree path back; signs alternate with the
    // entering arc positive.
    std::vector<std::pair<int, int>> minus_arcs, plus_arcs;
    plus_arcs.emplace_back(ei, ej);
    int node = m + ej;
    bool arc_from_sink = true;  // next path arc is (parent source, this sink)
    while (parent[node] != -1) {
      const int par = parent[node];
      if (arc_from_sink)
        minus_arcs.emplace_back(par, node - m);
      else
        plus_arcs.emplace_back(node, par - m);
      node = par;
      arc_from_sink = !arc_from_sink;
    }

    double theta = std::numeric_limits<double>::infinity();
    std::pair<int, int> leave = minus_arcs.front();
    for (const auto& arc : minus_arcs)
      if (flow(arc.first, arc.second) < theta) {
        theta = flow(arc.first, arc.second);
        leave = arc;
      }
    for (const auto& arc : plus_arcs) flow(arc.first, arc.second) += theta;
    for (const auto& arc : minus_arcs) flow(arc.first, arc.second) -= theta;
    flow(leave.first, leave.second) = 0.0;
    drop_basic(leave.first, leave.second);
    add_basic(ei, ej);
  }

  TransportResult res;
  res.flow = flow.cwiseMax(0.0);  // pivots can leave -1e-18 residue
  res.u = u;
  res.v = v;
  res.total_cost = (res.flow.array() * cost.array()).sum();
  return res;
}

inline bool uniform_weights(const EmpiricalMeasure& mu) {
  const double w0 = 1.0 / static_cast<double>(mu.size());
  for (double w : mu.weights())
    if (std::abs(w - w0) > 1e-13) return false;
  return true;
}

}  // namespace detail

// Exact W_p between particle clouds, p in {1,2}. Equal-size uniform clouds go
// through the assignment solver, anything else through the transportation
// simplex; both are exact up to floating-point arithmetic.
inline OtSolution wasserstein(int p, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) throw InvalidArgument("wasserstein: dimension mismatch");
  if (p != 1 && p != 2) throw InvalidArgument("wasserstein: order must be 1 or 2");
  const Mat cost = detail::transport_cost_matrix(mu, nu, p);

  Mat flow;
  std::vector<double> u, v;
  double value = 0.0;
  if (mu.size() == nu.size() && detail::uniform_weights(mu) && detail::uniform_weights(nu)) {
    const auto res = detail::solve_assignment(cost);
    const double wn = 1.0 / static_cast<double>(mu.size());
    flow = Mat::Zero(mu.size(), nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
      flow(static_cast<Eigen::Index>(i), res.col_of_row[i]) = wn;
    u = res.u;
    v = res.v;
    value = res.total_cost * wn;
  } else {
    const auto res = detail::solve_transport_simplex(mu.weights(), nu.weights(), cost);
    flow = res.flow;
    u = res.u;
    v = res.v;
    value = res.total_cost;
  }

  OtSolution sol{.distance = (p == 1) ? value : std::sqrt(value),
                 .p = p,
                 .primal_value = value,
                 .plan = DiscretePlan(mu, nu, std::move(flow)),
                 .has_duals = true,
                 .potential_source = std::move(u),
                 .potential_target = std::move(v)};
  return sol;
}

// Permutation enumeration oracle for small equal-size uniform clouds. By
// Birkhoff's theorem some optimal coupling is a permutation in this case.
inline OtSolution brute_force_wasserstein(int p, const EmpiricalMeasure& mu,
                                          const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) throw InvalidArgument("brute_force_wasserstein: dimension mismatch");
  if (p != 1 && p != 2) throw InvalidArgument("brute_force_wasserstein: order must be 1 or 2");
  if (mu.size() != nu.size() || mu.size() > 8)
    throw InvalidArgument("brute_force_wasserstein: needs equal particle counts <= 8");
  if (!detail::uniform_weights(mu) || !detail::uniform_weights(nu))
    throw InvalidArgument("brute_force_wasserstein: needs uniform weights");

  const Mat cost = detail::transport_cost_matrix(mu, nu, p);
  const int n = static_cast<int>(mu.size());
  std::vector<int> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  const double wn = 1.0 / static_cast<double>(n);
  Mat flow = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) flow(i, best[i]) = wn;
  const double value = best_cost * wn;
  return OtSolution{.distance = (p == 1) ? value : std::sqrt(value),
                    .p = p,
                    .primal_value = value,
                    .plan = DiscretePlan(mu, nu, std::move(flow)),
                    .has_duals = false};
}

// Primal minus dual value after tightening the solver potentials by a double
// c-transform, so the reported dual is feasible for the Kantorovich dual LP.
// Strong duality of the exact solver keeps the gap at rounding level.
inline double kr_duality_gap(const OtSolution& sol) {
  if (sol.p != 1) throw InvalidArgument("kr_duality_gap: defined for p = 1 only");
  if (!sol.has_duals) throw InvalidArgument("kr_duality_gap: solver exposed no dual potentials");
  const auto& mu = sol.plan.source();
  const auto& nu = sol.plan.target();
  const Mat cost = detail::transport_cost_matrix(mu, nu, 1);
  std::vector<double> u = sol.potential_source;
  std::vector<double> v(nu.size());
  for (std::size_t j = 0; j < nu.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mu.size(); ++i)
      best = std::min(best, cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - u[i]);
    v[j] = best;
  }
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nu.size(); ++j)
      best = std::min(best, cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - v[j]);
    u[i] = best;
  }
  double dual = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) dual += mu.weight(i) * u[i];
  for (std::size_t j = 0; j < nu.size(); ++j) dual += nu.weight(j) * v[j];
  return sol.primal_value - dual;
}

}  // namespace mfpmp
