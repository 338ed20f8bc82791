#include "descatter3d/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "descatter3d/errors.hpp"

namespace descatter3d {

using nlohmann::json;

namespace {

std::vector<int> axis_positions(int vol, int tile, int overlap) {
  std::vector<int> pos{0};
  while (pos.back() + tile < vol) {
    pos.push_back(std::min(pos.back() + tile - overlap, vol - tile));
  }
  return pos;
}

}  // namespace

TilingPlan plan_tiles(std::array<int, 3> vol_dims, std::array<int, 3> tile_dims,
                      std::array<int, 3> overlap, BlendMode blend) {
  for (int a = 0; a < 3; ++a) {
    if (tile_dims[a] < 1 || vol_dims[a] < tile_dims[a]) {
      throw InvalidDims("plan_tiles: tile must fit inside the volume");
    }
    if (overlap[a] < 0 || 2 * overlap[a] >= tile_dims[a]) {
      throw InvalidPlan("plan_tiles: overlap must satisfy 0 <= overlap < tile/2");
    }
  }

  std::array<std::vector<int>, 3> pos;
  std::array<std::vector<std::array<int, 2>>, 3> windows;  // per-axis dst [lo, hi)
  for (int a = 0; a < 3; ++a) {
    pos[a] = axis_positions(vol_dims[a], tile_dims[a], overlap[a]);
    const std::size_t n = pos[a].size();
    windows[a].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (blend == BlendMode::kHann) {
        windows[a][i] = {pos[a][i], pos[a][i] + tile_dims[a]};
        continue;
      }
      // Interior boundaries sit at the midpoint of each overlap region.
      const int lo = i == 0 ? 0 : (pos[a][i - 1] + tile_dims[a] + pos[a][i]) / 2;
      const int hi =
          i + 1 == n ? vol_dims[a] : (pos[a][i] + tile_dims[a] + pos[a][i + 1]) / 2;
      windows[a][i] = {lo, hi};
    }
  }

  TilingPlan plan;
  plan.vol_dims = vol_dims;
  plan.tile_dims = tile_dims;
  plan.overlap = overlap;
  plan.blend = blend;
  for (std::size_t kz = 0; kz < pos[2].size(); ++kz) {
    for (std::size_t ky = 0; ky < pos[1].size(); ++ky) {
      for (std::size_t kx = 0; kx < pos[0].size(); ++kx) {
        TileEntry e;
        e.src = {pos[0][kx], pos[1][ky], pos[2][kz]};
        e.dst_lo = {windows[0][kx][0], windows[1][ky][0], windows[2][kz][0]};
        e.dst_hi = {windows[0][kx][1], windows[1][ky][1], windows[2][kz][1]};
        plan.tiles.push_back(e);
      }
    }
  }
  return plan;
}

Volume reflect_pad(const Volume& vol, std::array<int, 3> target_dims) {
  for (int a = 0; a < 3; ++a) {
    if (target_dims[a] < vol.dims[a]) {
      throw InvalidDims("reflect_pad: target smaller than volume");
    }
  }
  if (target_dims == vol.dims) return vol;

  std::array<int, 3> lo{};
  for (int a = 0; a < 3; ++a) lo[a] = (target_dims[a] - vol.dims[a]) / 2;

  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
  };

  Volume out(target_dims, vol.pitch, vol.depth_offset);
  std::size_t idx = 0;
  for (int z = 0; z < target_dims[2]; ++z) {
    const int sz = mirror(z - lo[2], vol.dims[2]);
    for (int y = 0; y < target_dims[1]; ++y) {
      const int sy = mirror(y - lo[1], vol.dims[1]);
      for (int x = 0; x < target_dims[0]; ++x, ++idx) {
        out.data[idx] = vol.at(mirror(x - lo[0], vol.dims[0]), sy, sz);
      }
    }
  }
  return out;
}

namespace {

// Raised-cosine ramp weight for position i within a tile of size n whose
// leading/trailing `ramp` voxels fade in/out.
double hann_weight(int i, int n, int ramp_lo, int ramp_hi) {
  if (ramp_lo > 0 && i < ramp_lo) {
    return 0.5 - 0.5 * std::cos(M_PI * (i + 0.5) / ramp_lo);
  }
  if (ramp_hi > 0 && i >= n - ramp_hi) {
    return 0.5 - 0.5 * std::cos(M_PI * (n - i - 0.5) / ramp_hi);
  }
  return 1.0;
}

}  // namespace

Volume reconstruct(const Volume& vol, Network& net, const TilingPlan& plan) {
  if (plan.tile_dims != net.config().input_dims) {
    throw ShapeError("reconstruct: plan tile dims do not match network input dims");
  }
  for (int a = 0; a < 3; ++a) {
    if (plan.vol_dims[a] < vol.dims[a]) {
      throw InvalidDims("reconstruct: plan smaller than the volume");
    }
  }

  const Volume padded = reflect_pad(vol, plan.vol_dims);
  const std::array<int, 3> lo{(plan.vol_dims[0] - vol.dims[0]) / 2,
                              (plan.vol_dims[1] - vol.dims[1]) / 2,
                              (plan.vol_dims[2] - vol.dims[2]) / 2};

  net.set_train_mode(false);
  Volume out(plan.vol_dims, padded.pitch, padded.depth_offset);
  std::vector<double> wsum;
  std::vector<double> acc;
  const bool hann = plan.blend == BlendMode::kHann;
  if (hann) {
    wsum.assign(out.size(), 0.0);
    acc.assign(out.size(), 0.0);
  }

  const auto& td = plan.tile_dims;
  for (const TileEntry& tile : plan.tiles) {
    Tensor5 in({1, 1, td[0], td[1], td[2]});
    const Volume cube = crop_volume(padded, tile.src, td);
    std::memcpy(in.slab(0, 0), cube.data.data(), cube.data.size() * sizeof(float));
    const Tensor5 pred = net.forward(in);
    const float* p = pred.slab(0, 0);

    if (!hann) {
      for (int z = tile.dst_lo[2]; z < tile.dst_hi[2]; ++z) {
        for (int y = tile.dst_lo[1]; y < tile.dst_hi[1]; ++y) {
          const int tz = z - tile.src[2], ty = y - tile.src[1], tx0 = tile.dst_lo[0] - tile.src[0];
          const float* src = p + (static_cast<std::size_t>(tz) * td[1] + ty) * td[0] + tx0;
          float* dst = &out.data[out.index(tile.dst_lo[0], y, z)];
          for (int x = 0; x < tile.dst_hi[0] - tile.dst_lo[0]; ++x) {
            dst[x] = src[x] < 0.f ? 0.f : src[x];
          }
        }
      }
    } else {
      for (int z = 0; z < td[2]; ++z) {
        const double wz = hann_weight(z, td[2], tile.src[2] > 0 ? plan.overlap[2] : 0,
                                      tile.src[2] + td[2] < plan.vol_dims[2] ? plan.overlap[2] : 0);
        for (int y = 0; y < td[1]; ++y) {
          const double wy = hann_weight(y, td[1], tile.src[1] > 0 ? plan.overlap[1] : 0,
                                        tile.src[1] + td[1] < plan.vol_dims[1] ? plan.overlap[1] : 0);
          for (int x = 0; x < td[0]; ++x) {
            const double wx = hann_weight(x, td[0], tile.src[0] > 0 ? plan.overlap[0] : 0,
                                          tile.src[0] + td[0] < plan.vol_dims[0] ? plan.overlap[0] : 0);
            const double w = wx * wy * wz;
            const std::size_t oi =
                out.index(tile.src[0] + x, tile.src[1] + y, tile.src[2] + z);
            const float v = p[(static_cast<std::size_t>(z) * td[1] + y) * td[0] + x];
            acc[oi] += w * (v < 0.f ? 0.f : v);
            wsum[oi] += w;
          }
        }
      }
    }
  }

  if (hann) {
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] = wsum[i] > 0.0 ? static_cast<float>(acc[i] / wsum[i]) : 0.f;
    }
  }

  if (plan.vol_dims == vol.dims) return out;
  Volume cropped = crop_volume(out, lo, vol.dims);
  cropped.depth_offset = vol.depth_offset;  // padding moved plane 0
  return cropped;
}

std::vector<double> hann_weight_field(const TilingPlan& plan) {
  std::vector<double> wsum(static_cast<std::size_t>(plan.vol_dims[0]) * plan.vol_dims[1] *
                               plan.vol_dims[2],
                           0.0);
  const auto& td = plan.tile_dims;
  for (const TileEntry& tile : plan.tiles) {
    for (int z = 0; z < td[2]; ++z) {
      const double wz = hann_weight(z, td[2], tile.src[2] > 0 ? plan.overlap[2] : 0,
                                    tile.src[2] + td[2] < plan.vol_dims[2] ? plan.overlap[2] : 0);
      for (int y = 0; y < td[1]; ++y) {
        const double wy = hann_weight(y, td[1], tile.src[1] > 0 ? plan.overlap[1] : 0,
                                      tile.src[1] + td[1] < plan.vol_dims[1] ? plan.overlap[1] : 0);
        for (int x = 0; x < td[0]; ++x) {
          const double wx = hann_weight(x, td[0], tile.src[0] > 0 ? plan.overlap[0] : 0,
                                        tile.src[0] + td[0] < plan.vol_dims[0] ? plan.overlap[0] : 0);
          const std::size_t oi =
              (static_cast<std::size_t>(tile.src[2] + z) * plan.vol_dims[1] + tile.src[1] + y) *
                  plan.vol_dims[0] +
              tile.src[0] + x;
          wsum[oi] += wx * wy * wz;
        }
      }
    }
  }
  return wsum;
}

json plan_to_json(const TilingPlan& plan) {
  json tiles = json::array();
  for (const auto& t : plan.tiles) {
    tiles.push_back({{"src", t.src}, {"dst_lo", t.dst_lo}, {"dst_hi", t.dst_hi}});
  }
  return json{{"vol_dims", plan.vol_dims},
              {"tile_dims", plan.tile_dims},
              {"overlap", plan.overlap},
              {"blend", plan.blend == BlendMode::kHann ? "hann" : "center_crop"},
              {"tiles", std::move(tiles)}};
}

}  // namespace descatter3d
