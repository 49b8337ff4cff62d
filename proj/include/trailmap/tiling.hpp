#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trailmap/grid_spec.hpp"
#include "trailmap/trails.hpp"

namespace trailmap {

struct TileLayout {
  GridSpec spec_template;  // origin / rotation ignored
  Rect covered_bbox;
  std::vector<Vec2> tile_origins;
  Vec2 grid_origin;  // lower-left corner of tile (0, 0)
  int cols = 1;
  int rows = 1;

  GridSpec spec(std::size_t i) const;
  std::string tile_id(std::size_t i) const;

  // Index of the layout cell holding p (half-open cells, last row/column
  // closed), or nullopt when p is outside the covered box or that tile was
  // dropped for having no trail overlap.
  std::optional<std::size_t> tile_of(Vec2 p) const;
};

struct AugmentationPolicy {
  std::uint64_t seed = 0;
  double rotation_min = -3.141592653589793;
  double rotation_max = 3.141592653589793;
  double keep_min = 0.3;
  double keep_max = 1.0;
  // 32 samples per 60 m x 60 m tile.
  double samples_per_km2 = 32.0 / (0.06 * 0.06);

  void validate() const;
};

struct AugmentedTile {
  std::string tile_id;
  GridSpec spec;
  std::vector<std::size_t> trail_indices;  // into the input trail list, ascending
  std::uint64_t sample_seed = 0;           // derive_seed(policy.seed, sample_index)
  std::size_t sample_index = 0;
  std::size_t parent_tile = 0;             // fixed tile the center was drawn from
  double keep_fraction = 1.0;
};

// Minimal axis-aligned grid that covers every pose. The grid starts at the
// pose bounding box's minimum corner, or on the lattice through `anchor`
// when given. Tiles no trail segment touches are dropped.
TileLayout fixed_tiles(std::span<const Trail> trails, const GridSpec& spec_template,
                       std::optional<Vec2> anchor = std::nullopt);

// Augmented tiles with random center (uniform over the union of fixed
// tiles), rotation and trail subset. Each sample draws from its own stream
// derived from the policy seed, so results do not depend on thread count.
std::vector<AugmentedTile> augmented_tiles(std::span<const Trail> trails, const AugmentationPolicy& policy,
                                           const GridSpec& spec_template);
// Same, sampling centers from an existing fixed layout.
std::vector<AugmentedTile> augmented_tiles(std::span<const Trail> trails, const AugmentationPolicy& policy,
                                           const TileLayout& layout);

// True when any segment of the trail passes within half the trail width of
// the tile rectangle, i.e. when the trail can stamp cells of the tile.
bool trail_overlaps(const Trail& trail, const GridSpec& spec);

std::vector<std::size_t> overlapping_trails(std::span<const Trail> trails, const GridSpec& spec);

}  // namespace trailmap
