#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "trailmap/geometry.hpp"

namespace trailmap {

// Costs between Q predictions (rows) and N ground-truth items (columns).
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t pred, std::size_t gt) { return values[pred * cols + gt]; }
  double at(std::size_t pred, std::size_t gt) const { return values[pred * cols + gt]; }
};

struct Assignment {
  std::vector<int> gt_to_pred;  // -1 where a ground-truth item is left unmatched (Q < N)
  double total_cost = 0.0;

  // -1 for unmatched predictions.
  std::vector<int> pred_to_gt(std::size_t num_preds) const;
};

// Mean per-point L1 distance with index-aligned points (no reversal).
double polyline_cost(std::span<const Vec2> pred, std::span<const Vec2> gt);

// Optimal assignment (shortest augmenting paths, O(n^2 m)). Rectangular
// matrices are solved directly with the shorter side as rows. Among equal
// reduced costs the lowest column index is taken, which makes the result
// deterministic. Throws DomainError on non-finite entries.
Assignment hungarian(const CostMatrix& costs);

// Index of the source item for each slot of the K-fold expanded list; each
// item's K copies are adjacent.
std::vector<std::size_t> one_to_many_indices(std::size_t count, int k);

template <typename T>
std::vector<T> one_to_many_targets(std::span<const T> items, int k) {
  std::vector<T> out;
  for (std::size_t i : one_to_many_indices(items.size(), k)) out.push_back(items[i]);
  return out;
}

}  // namespace trailmap
