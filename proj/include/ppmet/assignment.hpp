#pragma once

// Minimum-cost assignment (Hungarian method with row potentials).

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace ppmet {

template <typename Cost>
using CostMatrix = std::vector<std::vector<Cost>>;

// Solves min sum cost[i][match[i]] over injective matchings of the smaller
// side into the larger one. Returns, for every row, the matched column or
// nullopt when rows outnumber columns and the row is left out.
template <typename Cost>
std::vector<std::optional<std::size_t>> min_cost_assignment(const CostMatrix<Cost>& cost) {
  const std::size_t rows = cost.size();
  if (rows == 0) return {};
  const std::size_t cols = cost[0].size();
  std::vector<std::optional<std::size_t>> result(rows);
  if (cols == 0) return result;

  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto at = [&](std::size_t i, std::size_t j) -> Cost {
    return transposed ? cost[j - 1][i - 1] : cost[i - 1][j - 1];
  };

  const Cost inf = std::numeric_limits<Cost>::has_infinity
                       ? std::numeric_limits<Cost>::infinity()
                       : std::numeric_limits<Cost>::max() / 4;
  std::vector<Cost> u(n + 1, Cost{}), v(m + 1, Cost{});
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<Cost> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      Cost delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Cost cur = at(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) {
      result[j - 1] = p[j] - 1;
    } else {
      result[p[j] - 1] = j - 1;
    }
  }
  return result;
}

// Maximum-weight variant; pairs with non-positive weight are dropped from the
// returned matching.
inline std::vector<std::optional<std::size_t>> max_weight_assignment(
    const CostMatrix<double>& weight) {
  CostMatrix<double> cost = weight;
  for (auto& row : cost) {
    for (auto& w : row) w = -w;
  }
  auto match = min_cost_assignment(cost);
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (match[i] && !(weight[i][*match[i]] > 0.0)) match[i].reset();
  }
  return match;
}

}  // namespace ppmet
