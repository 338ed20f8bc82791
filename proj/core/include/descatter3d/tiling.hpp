#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "descatter3d/network.hpp"
#include "descatter3d/volume.hpp"

namespace descatter3d {

enum class BlendMode { kCenterCrop, kHann };

struct TileEntry {
  std::array<int, 3> src{};     // tile corner in the (padded) volume
  std::array<int, 3> dst_lo{};  // destination window, inclusive corner
  std::array<int, 3> dst_hi{};  // exclusive
};

/// Tile layout over a volume. In center_crop mode the destination windows
/// partition the volume exactly (interior edges trimmed at the overlap
/// midpoint); in hann mode destinations cover whole tiles and outputs are
/// blended with raised-cosine weights normalized to unit sum per voxel.
struct TilingPlan {
  std::array<int, 3> vol_dims{};
  std::array<int, 3> tile_dims{};
  std::array<int, 3> overlap{};
  BlendMode blend = BlendMode::kCenterCrop;
  std::vector<TileEntry> tiles;
};

/// Tiles stepped by (tile - overlap) with the last tile clamped flush to
/// the boundary. Requires overlap < tile/2 per axis (InvalidPlan) and
/// tile <= volume (InvalidDims; pad first if needed).
TilingPlan plan_tiles(std::array<int, 3> vol_dims, std::array<int, 3> tile_dims,
                      std::array<int, 3> overlap, BlendMode blend = BlendMode::kCenterCrop);

/// Mirror-pads (symmetric) up to target dims, centering the source.
Volume reflect_pad(const Volume& vol, std::array<int, 3> target_dims);

/// Runs the network tile by tile and stitches per the plan. The volume is
/// reflect-padded up to plan.vol_dims when smaller and the output cropped
/// back, so output dims always equal input dims. The volume is fed as-is:
/// normalize once, volume-globally, before calling (per-tile scales would
/// break intensity comparability across tiles). Negative network outputs
/// clamp to zero.
Volume reconstruct(const Volume& vol, Network& net, const TilingPlan& plan);

nlohmann::json plan_to_json(const TilingPlan& plan);

/// Accumulated raw blend weight per voxel for a hann plan (before the
/// normalization reconstruct applies); sums to 1 on regularly stepped
/// grids.
std::vector<double> hann_weight_field(const TilingPlan& plan);

}  // namespace descatter3d
