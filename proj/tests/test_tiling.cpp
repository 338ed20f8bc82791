#include <doctest.h>

#include "descatter3d/errors.hpp"
#include "descatter3d/tiling.hpp"
#include "test_helpers.hpp"

using namespace descatter3d;

namespace {

Network identity_net(std::array<int, 3> tile) {
  NetworkConfig c;
  c.n_stages = 1;
  c.base_channels = 2;
  c.input_dims = tile;
  return Network(c);  // zero final conv + residual == identity
}

}  // namespace

TEST_CASE("single tile plan covers everything") {
  const TilingPlan plan = plan_tiles({32, 32, 16}, {32, 32, 16}, {0, 0, 0});
  REQUIRE(plan.tiles.size() == 1);
  CHECK(plan.tiles[0].src == std::array<int, 3>{0, 0, 0});
  CHECK(plan.tiles[0].dst_lo == std::array<int, 3>{0, 0, 0});
  CHECK(plan.tiles[0].dst_hi == std::array<int, 3>{32, 32, 16});
}

TEST_CASE("destination windows partition the volume exactly") {
  // Coverage oracle: count how many destination windows claim each voxel.
  auto check_partition = [](std::array<int, 3> vol, std::array<int, 3> tile,
                            std::array<int, 3> ov) {
    const TilingPlan plan = plan_tiles(vol, tile, ov);
    std::vector<int> cover(static_cast<std::size_t>(vol[0]) * vol[1] * vol[2], 0);
    for (const TileEntry& t : plan.tiles) {
      for (int a = 0; a < 3; ++a) {
        CHECK(t.dst_lo[a] >= t.src[a]);
        CHECK(t.dst_hi[a] <= t.src[a] + tile[a]);
      }
      for (int z = t.dst_lo[2]; z < t.dst_hi[2]; ++z) {
        for (int y = t.dst_lo[1]; y < t.dst_hi[1]; ++y) {
          for (int x = t.dst_lo[0]; x < t.dst_hi[0]; ++x) {
            ++cover[(static_cast<std::size_t>(z) * vol[1] + y) * vol[0] + x];
          }
        }
      }
    }
    for (int c : cover) CHECK(c == 1);
    return plan.tiles.size();
  };

  CHECK(check_partition({192, 192, 64}, {128, 128, 64}, {64, 64, 0}) == 4);  // 2x2x1
  check_partition({48, 40, 16}, {16, 16, 8}, {4, 4, 2});
  check_partition({50, 41, 17}, {16, 16, 8}, {4, 4, 2});  // clamped tails
}

TEST_CASE("excessive overlap is rejected") {
  CHECK_THROWS_AS(plan_tiles({64, 64, 16}, {16, 16, 8}, {8, 0, 0}), InvalidPlan);
  CHECK_THROWS_AS(plan_tiles({64, 64, 16}, {16, 16, 8}, {0, 0, -1}), InvalidPlan);
  CHECK_THROWS_AS(plan_tiles({8, 8, 8}, {16, 16, 8}, {0, 0, 0}), InvalidDims);
}

TEST_CASE("identity network is transparent through any plan") {
  const std::array<int, 3> tile{16, 16, 8};
  Network net = identity_net(tile);

  struct Case {
    std::array<int, 3> vol;
    std::array<int, 3> ov;
  };
  const Case cases[] = {
      {{16, 16, 8}, {0, 0, 0}},    // single tile
      {{32, 32, 16}, {4, 4, 2}},   // regular grid
      {{40, 24, 9}, {4, 4, 2}},    // clamped tails
      {{23, 19, 9}, {6, 6, 3}},    // irregular
      {{9, 7, 5}, {2, 2, 1}},      // smaller than the tile: padding path
  };
  for (const Case& tc : cases) {
    const Volume vol = testutil::random_volume(tc.vol, 7 + tc.vol[0]);
    std::array<int, 3> padded{};
    for (int a = 0; a < 3; ++a) padded[a] = std::max(tc.vol[a], tile[a]);
    const TilingPlan plan = plan_tiles(padded, tile, tc.ov);
    const Volume out = reconstruct(vol, net, plan);
    CHECK(out.dims == vol.dims);
    CHECK(out.data == vol.data);
    CHECK(out.depth_offset == vol.depth_offset);
  }
}

TEST_CASE("single tile equals direct application") {
  const std::array<int, 3> tile{16, 16, 8};
  NetworkConfig c;
  c.n_stages = 1;
  c.base_channels = 2;
  c.input_dims = tile;
  c.init_seed = 3;
  Network net(c);
  // perturb the final conv so the network is not the identity
  for (auto& p : net.parameters()) {
    if (p.name == "final.weight") {
      CounterRng rng(4);
      for (float& w : *p.values) w = static_cast<float>(0.1 * (rng.next_double() - 0.5));
    }
  }

  const Volume vol = testutil::random_volume(tile, 11);
  const TilingPlan plan = plan_tiles(tile, tile, {0, 0, 0});
  const Volume tiled = reconstruct(vol, net, plan);

  net.set_train_mode(false);
  Tensor5 in({1, 1, tile[0], tile[1], tile[2]});
  std::memcpy(in.slab(0, 0), vol.data.data(), vol.data.size() * 4);
  const Tensor5 direct = net.forward(in);
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    const float want = direct.data[i] < 0.f ? 0.f : direct.data[i];
    CHECK(tiled.data[i] == want);
  }
}

TEST_CASE("hann blending") {
  SUBCASE("raw weights sum to one on a regular grid") {
    const TilingPlan plan = plan_tiles({40, 40, 8}, {16, 16, 8}, {4, 4, 0}, BlendMode::kHann);
    const auto wsum = hann_weight_field(plan);
    for (double w : wsum) CHECK(w == doctest::Approx(1.0).margin(1e-6));
  }
  SUBCASE("identity network passes through within 1e-6") {
    const std::array<int, 3> tile{16, 16, 8};
    Network net = identity_net(tile);
    const Volume vol = testutil::random_volume({40, 28, 8}, 9);
    const TilingPlan plan = plan_tiles({40, 28, 8}, tile, {4, 4, 0}, BlendMode::kHann);
    const Volume out = reconstruct(vol, net, plan);
    for (std::size_t i = 0; i < vol.data.size(); ++i) {
      CHECK(out.data[i] == doctest::Approx(vol.data[i]).margin(1e-6));
    }
  }
}

TEST_CASE("plan serializes for audit") {
  const TilingPlan plan = plan_tiles({32, 32, 16}, {16, 16, 8}, {4, 4, 2});
  const auto j = plan_to_json(plan);
  CHECK(j.at("tiles").size() == plan.tiles.size());
  CHECK(j.at("blend") == "center_crop");
  CHECK(j.at("vol_dims") == std::vector<int>{32, 32, 16});
}

TEST_CASE("reflect padding mirrors content") {
  Volume vol({3, 2, 1}, {1.f, 1.f, 1.f});
  vol.data = {1, 2, 3, 4, 5, 6};
  const Volume out = reflect_pad(vol, {5, 2, 1});
  CHECK(out.dims == std::array<int, 3>{5, 2, 1});
  // centered: lo = 1; row [1,2,3] -> [1,1,2,3,3] (symmetric)
  CHECK(out.at(0, 0, 0) == 1.f);
  CHECK(out.at(1, 0, 0) == 1.f);
  CHECK(out.at(2, 0, 0) == 2.f);
  CHECK(out.at(3, 0, 0) == 3.f);
  CHECK(out.at(4, 0, 0) == 3.f);
}
