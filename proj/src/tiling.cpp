#include "trailmap/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trailmap/errors.hpp"
#include "trailmap/rng.hpp"

namespace trailmap {

GridSpec TileLayout::spec(std::size_t i) const {
  GridSpec s = spec_template;
  s.origin = tile_origins.at(i);
  s.rotation = 0.0;
  return s;
}

std::string TileLayout::tile_id(std::size_t i) const {
  const Vec2 o = tile_origins.at(i);
  const auto ix = std::llround((o.x - grid_origin.x) / spec_template.w_glob);
  const auto iy = std::llround((o.y - grid_origin.y) / spec_template.h_glob);
  return "fixed_" + std::to_string(ix) + "_" + std::to_string(iy);
}

std::optional<std::size_t> TileLayout::tile_of(Vec2 p) const {
  if (!covered_bbox.contains(p)) return std::nullopt;
  const int ix = std::min(cols - 1, static_cast<int>(std::floor((p.x - grid_origin.x) / spec_template.w_glob)));
  const int iy = std::min(rows - 1, static_cast<int>(std::floor((p.y - grid_origin.y) / spec_template.h_glob)));
  const Vec2 o{grid_origin.x + ix * spec_template.w_glob, grid_origin.y + iy * spec_template.h_glob};
  for (std::size_t i = 0; i < tile_origins.size(); ++i) {
    if (tile_origins[i] == o) return i;
  }
  return std::nullopt;
}

void AugmentationPolicy::validate() const {
  if (!(keep_min > 0.0 && keep_min <= keep_max && keep_max <= 1.0)) {
    throw ValidationError("trail keep fraction interval must lie within (0, 1]");
  }
  if (!(rotation_min <= rotation_max)) throw ValidationError("rotation range is empty");
  if (!(samples_per_km2 >= 0.0)) throw ValidationError("samples_per_km2 must be >= 0");
}

bool trail_overlaps(const Trail& trail, const GridSpec& spec) {
  // Grown by half the trail width: a trail running just outside the edge
  // still stamps cells inside.
  const double pad = trail.width_m / 2.0;
  const Rect r{-pad, -pad, spec.w_glob + pad, spec.h_glob + pad};
  for (std::size_t i = 1; i < trail.poses.size(); ++i) {
    double t0 = 0.0;
    double t1 = 1.0;
    if (clip_segment(world_to_tile_m(spec, trail.poses[i - 1].xy()), world_to_tile_m(spec, trail.poses[i].xy()), r,
                     t0, t1)) {
      return true;
    }
  }
  return false;
}

std::vector<std::size_t> overlapping_trails(std::span<const Trail> trails, const GridSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trails.size(); ++i) {
    if (trail_overlaps(trails[i], spec)) out.push_back(i);
  }
  return out;
}

TileLayout fixed_tiles(std::span<const Trail> trails, const GridSpec& spec_template, std::optional<Vec2> anchor) {
  if (trails.empty()) throw ValidationError("fixed_tiles needs at least one trail");
  spec_template.validate();
  Rect box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Trail& t : trails) {
    for (const Pose& p : t.poses) {
      box.min_x = std::min(box.min_x, p.x);
      box.min_y = std::min(box.min_y, p.y);
      box.max_x = std::max(box.max_x, p.x);
      box.max_y = std::max(box.max_y, p.y);
    }
  }
  TileLayout layout;
  layout.spec_template = spec_template;
  layout.spec_template.origin = {};
  layout.spec_template.rotation = 0.0;
  layout.covered_bbox = box;
  const double w = spec_template.w_glob;
  const double h = spec_template.h_glob;
  layout.grid_origin = {box.min_x, box.min_y};
  if (anchor) {
    layout.grid_origin = {anchor->x + std::floor((box.min_x - anchor->x) / w) * w,
                          anchor->y + std::floor((box.min_y - anchor->y) / h) * h};
  }
  layout.cols = std::max(1, static_cast<int>(std::ceil((box.max_x - layout.grid_origin.x) / w)));
  layout.rows = std::max(1, static_cast<int>(std::ceil((box.max_y - layout.grid_origin.y) / h)));
  for (int ix = 0; ix < layout.cols; ++ix) {
    for (int iy = 0; iy < layout.rows; ++iy) {
      GridSpec s = layout.spec_template;
      s.origin = {layout.grid_origin.x + ix * w, layout.grid_origin.y + iy * h};
      const bool touched = std::any_of(trails.begin(), trails.end(), [&](const Trail& t) { return trail_overlaps(t, s); });
      if (touched) layout.tile_origins.push_back(s.origin);
    }
  }
  return layout;
}

std::vector<AugmentedTile> augmented_tiles(std::span<const Trail> trails, const AugmentationPolicy& policy,
                                           const GridSpec& spec_template) {
  return augmented_tiles(trails, policy, fixed_tiles(trails, spec_template));
}

std::vector<AugmentedTile> augmented_tiles(std::span<const Trail> trails, const AugmentationPolicy& policy,
                                           const TileLayout& layout) {
  policy.validate();
  const GridSpec& spec_template = layout.spec_template;
  if (layout.covered_bbox.width() == 0.0 && layout.covered_bbox.height() == 0.0) {
    throw ValidationError("trail-covered region is a single point");
  }
  const double tile_km2 = spec_template.w_glob * spec_template.h_glob * 1e-6;
  const double area_km2 = tile_km2 * static_cast<double>(layout.tile_origins.size());
  const auto count = static_cast<std::size_t>(std::llround(policy.samples_per_km2 * area_km2));

  std::vector<AugmentedTile> out(count);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < count; ++i) {
    AugmentedTile& a = out[i];
    a.sample_index = i;
    a.sample_seed = derive_seed(policy.seed, i);
    Rng rng(a.sample_seed);
    a.parent_tile = static_cast<std::size_t>(rng.below(layout.tile_origins.size()));
    const Vec2 o = layout.tile_origins[a.parent_tile];
    const Vec2 center{o.x + rng.uniform() * spec_template.w_glob, o.y + rng.uniform() * spec_template.h_glob};
    const double rot = policy.rotation_min == policy.rotation_max
                           ? policy.rotation_min
                           : wrap_angle(rng.uniform(policy.rotation_min, policy.rotation_max));
    a.keep_fraction =
        policy.keep_min == policy.keep_max ? policy.keep_min : rng.uniform(policy.keep_min, policy.keep_max);
    a.spec = centered_spec(layout.spec_template, center, rot);
    a.tile_id = "aug_" + std::to_string(i);

    std::vector<std::size_t> cand = overlapping_trails(trails, a.spec);
    if (!cand.empty()) {
      const auto keep = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(a.keep_fraction * static_cast<double>(cand.size()))), 1, cand.size());
      // Partial Fisher-Yates: the first `keep` slots are a uniform subset.
      for (std::size_t k = 0; k < keep; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(rng.below(cand.size() - k));
        std::swap(cand[k], cand[pick]);
      }
      cand.resize(keep);
      std::sort(cand.begin(), cand.end());
    }
    a.trail_indices = std::move(cand);
  }
  return out;
}

}  // namespace trailmap
