#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "oracles.hpp"
#include "trailmap/errors.hpp"
#include "trailmap/matching.hpp"

using namespace trailmap;

namespace {

CostMatrix random_matrix(Rng& rng, bool integer) {
  const std::size_t r = 1 + rng.below(6);
  const std::size_t c = 1 + rng.below(6);
  CostMatrix m(r, c);
  for (double& v : m.values) v = integer ? static_cast<double>(rng.below(5)) : rng.uniform(0, 10);
  return m;
}

void check_valid(const CostMatrix& c, const Assignment& a) {
  REQUIRE(a.gt_to_pred.size() == c.cols);
  std::vector<int> used;
  for (int p : a.gt_to_pred) {
    if (p >= 0) used.push_back(p);
    CHECK(p < static_cast<int>(c.rows));
  }
  std::sort(used.begin(), used.end());
  CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  CHECK(used.size() == std::min(c.rows, c.cols));
}

}  // namespace

TEST_SUITE("matching") {
  TEST_CASE("polyline cost examples") {
    const std::vector<Vec2> gt{{0, 0}, {1, 0}, {3, 1}};
    CHECK(polyline_cost(gt, gt) == 0.0);
    std::vector<Vec2> shifted = gt;
    for (Vec2& p : shifted) p.x += 1.0;
    CHECK(polyline_cost(shifted, gt) == 1.0);
    std::vector<Vec2> rev(gt.rbegin(), gt.rend());
    CHECK(polyline_cost(rev, gt) > polyline_cost(gt, gt));
    CHECK_THROWS_AS(polyline_cost(std::vector<Vec2>{{0, 0}}, gt), ShapeError);
  }

  TEST_CASE("hungarian small cases") {
    CostMatrix one(1, 1, 3.5);
    const auto a = hungarian(one);
    CHECK(a.gt_to_pred == std::vector<int>{0});
    CHECK(a.total_cost == 3.5);

    CostMatrix id(3, 3, 1.0);
    for (int i = 0; i < 3; ++i) id.at(i, i) = 0.0;
    const auto b = hungarian(id);
    CHECK(b.gt_to_pred == std::vector<int>{0, 1, 2});
    CHECK(b.total_cost == 0.0);

    CHECK(hungarian(CostMatrix(0, 3)).gt_to_pred == std::vector<int>{-1, -1, -1});
    CostMatrix bad(2, 2, 0.0);
    bad.at(1, 0) = std::nan("");
    CHECK_THROWS_AS(hungarian(bad), DomainError);
  }

  TEST_CASE("ties go to the lowest prediction index") {
    const auto a = hungarian(CostMatrix(4, 2, 1.0));
    CHECK(a.gt_to_pred == std::vector<int>{0, 1});
    const auto b = hungarian(CostMatrix(2, 3, 1.0));
    CHECK(b.pred_to_gt(2) == std::vector<int>{0, 1});
    CHECK(b.gt_to_pred[2] == -1);
  }

  TEST_CASE("hungarian equals the permutation minimum") {
    Rng rng(51);
    for (int k = 0; k < 500; ++k) {
      const bool integer = k % 2 == 0;
      const CostMatrix c = random_matrix(rng, integer);
      const Assignment a = hungarian(c);
      check_valid(c, a);
      if (integer) {
        CHECK(a.total_cost == oracle::assignment_by_permutation(c));
      } else {
        CHECK(testutil::rel_err(a.total_cost, oracle::assignment_by_permutation(c), 1e-12) < 1e-12);
      }
    }
  }

  TEST_CASE("hungarian is deterministic") {
    Rng rng(52);
    const CostMatrix c = random_matrix(rng, true);
    CHECK(hungarian(c).gt_to_pred == hungarian(c).gt_to_pred);
  }

  TEST_CASE("one-to-many expansion") {
    const std::vector<int> items{7, 9};
    CHECK(one_to_many_targets<int>(items, 1) == items);
    CHECK(one_to_many_targets<int>(items, 3) == std::vector<int>{7, 7, 7, 9, 9, 9});
    CHECK(one_to_many_indices(0, 4).empty());
    CHECK_THROWS_AS(one_to_many_indices(2, 0), DomainError);
  }
}
