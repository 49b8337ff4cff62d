#include "trailmap/matching.hpp"

#include <cmath>
#include <limits>

#include "trailmap/errors.hpp"

namespace trailmap {

std::vector<int> Assignment::pred_to_gt(std::size_t num_preds) const {
  std::vector<int> out(num_preds, -1);
  for (std::size_t g = 0; g < gt_to_pred.size(); ++g) {
    if (gt_to_pred[g] >= 0) out[static_cast<std::size_t>(gt_to_pred[g])] = static_cast<int>(g);
  }
  return out;
}

double polyline_cost(std::span<const Vec2> pred, std::span<const Vec2> gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw ShapeError("polyline_cost: point counts differ (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) s += std::abs(pred[k].x - gt[k].x) + std::abs(pred[k].y - gt[k].y);
  return s / static_cast<double>(pred.size());
}

namespace {

// Rows <= cols. Returns, for every row, its assigned column.
std::vector<int> solve_rows_le_cols(std::size_t n, std::size_t m, const auto& cost) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] = row matched to column j (0 = free).
  std::vector<double> u(n + 1, 0.0);
  std::vector<double> v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0);
  std::vector<std::size_t> way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
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
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

}  // namespace

Assignment hungarian(const CostMatrix& costs) {
  for (double c : costs.values) {
    if (!std::isfinite(c)) throw DomainError("hungarian: cost matrix has non-finite entries");
  }
  Assignment a;
  a.gt_to_pred.assign(costs.cols, -1);
  if (costs.rows == 0 || costs.cols == 0) return a;

  if (costs.cols <= costs.rows) {
    // Rows of the solver are ground-truth items.
    const auto gt_rows = solve_rows_le_cols(costs.cols, costs.rows,
                                            [&](std::size_t g, std::size_t q) { return costs.at(q, g); });
    for (std::size_t g = 0; g < costs.cols; ++g) a.gt_to_pred[g] = gt_rows[g];
  } else {
    const auto pred_rows = solve_rows_le_cols(costs.rows, costs.cols,
                                              [&](std::size_t q, std::size_t g) { return costs.at(q, g); });
    for (std::size_t q = 0; q < costs.rows; ++q) a.gt_to_pred[static_cast<std::size_t>(pred_rows[q])] = static_cast<int>(q);
  }
  for (std::size_t g = 0; g < costs.cols; ++g) {
    if (a.gt_to_pred[g] >= 0) a.total_cost += costs.at(static_cast<std::size_t>(a.gt_to_pred[g]), g);
  }
  return a;
}

std::vector<std::size_t> one_to_many_indices(std::size_t count, int k) {
  if (k < 1) throw DomainError("one_to_many: K must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(count * static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < count; ++i) {
    for (int r = 0; r < k; ++r) out.push_back(i);
  }
  return out;
}

}  // namespace trailmap
