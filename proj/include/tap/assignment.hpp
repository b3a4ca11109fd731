#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tap/error.hpp"

namespace tap {

using CostMatrix = Eigen::MatrixXd;

/// Cells holding this value may never be matched.
inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

inline bool is_feasible(double c) { return c != kInfeasible; }

using Matching = std::vector<std::pair<int, int>>;

namespace detail {

// Square Hungarian method with row/column potentials (shortest augmenting
// path form). Returns col_of_row. Ties resolve toward the lowest column
// index found during each scan, so results are deterministic.
inline std::vector<int> hungarian_square(const std::vector<double>& a, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  auto cost = [&](int i, int j) { return a[static_cast<std::size_t>(i - 1) * n + (j - 1)]; };
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
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
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace detail

/// Optimal bipartite matching on a rectangular cost matrix. Among all
/// matchings that use the largest possible number of feasible cells, returns
/// one of minimum total cost. Pairs are (row, col), sorted by row.
inline Matching solve_assignment(const CostMatrix& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return {};

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double c = cost(i, j);
      if (!is_feasible(c)) continue;
      if (!std::isfinite(c)) throw Error(ErrorCode::InvalidArgument, "cost matrix holds NaN or -inf");
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  if (lo > hi) return {};

  // Shift feasible costs to [0, range]. A padding/infeasible penalty above
  // n * range makes every extra feasible pair worth more than any cost gap.
  const int n = std::max(rows, cols);
  const double range = hi - lo;
  const double penalty = (range + 1.0) * (n + 1);
  std::vector<double> square(static_cast<std::size_t>(n) * n, penalty);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double c = cost(i, j);
      if (is_feasible(c)) square[static_cast<std::size_t>(i) * n + j] = c - lo;
    }
  }

  const std::vector<int> col_of_row = detail::hungarian_square(square, n);
  Matching out;
  for (int i = 0; i < rows; ++i) {
    const int j = col_of_row[i];
    if (j >= 0 && j < cols && is_feasible(cost(i, j))) out.emplace_back(i, j);
  }
  return out;
}

inline double matching_cost(const CostMatrix& cost, const Matching& m) {
  double total = 0.0;
  for (auto [i, j] : m) total += cost(i, j);
  return total;
}

}  // namespace tap
