#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "descatter3d/errors.hpp"
#include "descatter3d/phantom.hpp"
#include "test_helpers.hpp"

using namespace descatter3d;

namespace {

PhantomSpec desk_spec() {
  PhantomSpec s;
  s.dims = {64, 64, 24};
  s.pitch = {0.35f, 0.35f, 1.f};
  s.n_dendrites = 2;
  s.n_spines = 12;
  s.seed = 17;
  return s;
}

}  // namespace

TEST_CASE("phantom generation is deterministic per seed") {
  const PhantomSpec spec = desk_spec();
  auto [va, aa] = generate_phantom(spec);
  auto [vb, ab] = generate_phantom(spec);
  CHECK(va.data == vb.data);
  REQUIRE(aa.spines.size() == ab.spines.size());
  for (std::size_t i = 0; i < aa.spines.size(); ++i) {
    CHECK(aa.spines[i].attachment == ab.spines[i].attachment);
    CHECK(aa.spines[i].tip == ab.spines[i].tip);
  }

  PhantomSpec other = spec;
  other.seed = 18;
  auto [vc, ac] = generate_phantom(other);
  (void)ac;
  CHECK(va.data != vc.data);
}

TEST_CASE("spine-free phantom has an empty annotation set") {
  PhantomSpec spec = desk_spec();
  spec.n_spines = 0;
  auto [vol, ann] = generate_phantom(spec);
  CHECK(ann.spines.empty());
  CHECK(ann.dendrites.size() == 2);
  float peak = 0.f;
  for (float v : vol.data) peak = std::max(peak, v);
  CHECK(peak == doctest::Approx(1.f).margin(1e-6));
}

TEST_CASE("annotations satisfy their structural invariants") {
  const PhantomSpec spec = desk_spec();
  auto [vol, ann] = generate_phantom(spec);
  REQUIRE(ann.spines.size() == 12);

  const std::array<double, 3> ext{(spec.dims[0] - 1) * 0.35, (spec.dims[1] - 1) * 0.35,
                                  (spec.dims[2] - 1) * 1.0};
  for (const SpineRecord& s : ann.spines) {
    const double dx = s.tip[0] - s.attachment[0];
    const double dy = s.tip[1] - s.attachment[1];
    const double dz = s.tip[2] - s.attachment[2];
    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
    CHECK(s.length_um == doctest::Approx(dist).margin(1e-6));
    CHECK(s.length_um >= 0.75);
    for (int a = 0; a < 3; ++a) {
      CHECK(s.attachment[a] >= 0.0);
      CHECK(s.attachment[a] <= ext[a]);
      CHECK(s.tip[a] >= 0.0);
      CHECK(s.tip[a] <= ext[a]);
    }
    CHECK(s.parent_dendrite >= 0);
    CHECK(s.parent_dendrite < 2);

    // Scored portion must cross at least two plane depths.
    const double t0 = std::min(0.75 / s.length_um, 1.0);
    const double z_at = s.attachment[2] + t0 * dz;
    const double zlo = std::min(z_at, s.tip[2]);
    const double zhi = std::max(z_at, s.tip[2]);
    const int crossings =
        static_cast<int>(std::floor(zhi + 1e-9)) - static_cast<int>(std::ceil(zlo - 1e-9)) + 1;
    CHECK(crossings >= 2);
  }
  (void)vol;
}

TEST_CASE("spines are bright against the background") {
  // Mask-based oracle: the mean along each spine's segment must beat the
  // volume median background by 10x.
  const PhantomSpec spec = desk_spec();
  auto [vol, ann] = generate_phantom(spec);

  std::vector<float> all(vol.data);
  std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
  const double median_bg = all[all.size() / 2];

  for (const SpineRecord& s : ann.spines) {
    double mean = 0.0;
    int count = 0;
    const double dx = vol.pitch[0], dy = vol.pitch[1], dz = vol.pitch[2];
    for (int z = 0; z < vol.dims[2]; ++z) {
      for (int y = 0; y < vol.dims[1]; ++y) {
        for (int x = 0; x < vol.dims[0]; ++x) {
          const std::array<double, 3> p{x * dx, y * dy, z * dz};
          double t = 0.0;
          std::array<double, 3> d{s.tip[0] - s.attachment[0], s.tip[1] - s.attachment[1],
                                  s.tip[2] - s.attachment[2]};
          const double len2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
          if (len2 > 0) {
            t = ((p[0] - s.attachment[0]) * d[0] + (p[1] - s.attachment[1]) * d[1] +
                 (p[2] - s.attachment[2]) * d[2]) /
                len2;
            t = std::clamp(t, 0.0, 1.0);
          }
          const double qx = s.attachment[0] + t * d[0] - p[0];
          const double qy = s.attachment[1] + t * d[1] - p[1];
          const double qz = s.attachment[2] + t * d[2] - p[2];
          if (qx * qx + qy * qy + qz * qz <= s.radius_um * s.radius_um) {
            mean += vol.at(x, y, z);
            ++count;
          }
        }
      }
    }
    REQUIRE(count > 0);
    mean /= count;
    CHECK(mean > std::max(10.0 * median_bg, 0.05));
  }
}

TEST_CASE("render_tube basics") {
  SUBCASE("empty path leaves the volume untouched") {
    Volume vol = testutil::random_volume({8, 8, 8}, 2);
    const Volume before = vol;
    render_tube(vol, {}, 1.0, 1.0);
    CHECK(vol.data == before.data);
  }
  SUBCASE("gaussian cross-section at half radius") {
    Volume vol({64, 33, 33}, {0.25f, 0.25f, 0.25f});
    const double radius = 1.0;
    render_tube(vol, {{2.0, 4.0, 4.0}, {14.0, 4.0, 4.0}}, radius, 1.0);
    // perpendicular distance radius/2 -> peak * exp(-1/2), within 2%
    const double expected = std::exp(-0.5);
    const float got = vol.at(32, 16 + 2, 16);  // 0.5 um off axis in y
    CHECK(got == doctest::Approx(expected).epsilon(0.02));
    CHECK(vol.at(32, 16, 16) == doctest::Approx(1.0).epsilon(0.01));
  }
  SUBCASE("overlapping tubes saturate at the cap") {
    Volume vol({32, 32, 9}, {0.5f, 0.5f, 0.5f});
    const double peak = 0.7;
    render_tube(vol, {{1.0, 8.0, 2.0}, {15.0, 8.0, 2.0}}, 1.5, peak);
    render_tube(vol, {{1.0, 8.2, 2.0}, {15.0, 8.2, 2.0}}, 1.5, peak);
    render_tube(vol, {{1.0, 7.8, 2.0}, {15.0, 7.8, 2.0}}, 1.5, peak);
    for (float v : vol.data) CHECK(v <= 2.0 * peak + 1e-6);
  }
}

TEST_CASE("impossible placement fails loudly") {
  PhantomSpec spec;
  spec.dims = {6, 6, 3};
  spec.pitch = {0.3f, 0.3f, 1.f};
  spec.n_dendrites = 1;
  spec.n_spines = 40;
  spec.spine_length_um = {4.0, 5.0};  // cannot fit with margins
  CHECK_THROWS_AS(generate_phantom(spec), PlacementFailure);
}

TEST_CASE("invalid specs are rejected") {
  PhantomSpec spec = desk_spec();
  spec.spine_length_um = {0.5, 2.0};  // below the 0.75 floor
  CHECK_THROWS_AS(generate_phantom(spec), InvalidDims);
  spec = desk_spec();
  spec.n_dendrites = 0;  // spines need a shaft
  CHECK_THROWS_AS(generate_phantom(spec), InvalidDims);
}

TEST_CASE("annotation csv round-trip") {
  testutil::TempDir tmp("ann");
  const PhantomSpec spec = desk_spec();
  auto [vol, ann] = generate_phantom(spec);
  (void)vol;

  save_annotations(ann, tmp.file("annotations.csv"), tmp.file("dendrites.csv"));
  const AnnotationSet back = load_annotations(tmp.file("annotations.csv"), tmp.file("dendrites.csv"));

  REQUIRE(back.spines.size() == ann.spines.size());
  for (std::size_t i = 0; i < ann.spines.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      CHECK(back.spines[i].attachment[a] ==
            doctest::Approx(ann.spines[i].attachment[a]).margin(5e-7));
      CHECK(back.spines[i].tip[a] == doctest::Approx(ann.spines[i].tip[a]).margin(5e-7));
    }
    CHECK(back.spines[i].parent_dendrite == ann.spines[i].parent_dendrite);
  }
  REQUIRE(back.dendrites.size() == ann.dendrites.size());
  for (std::size_t i = 0; i < ann.dendrites.size(); ++i) {
    CHECK(back.dendrites[i].path.size() == ann.dendrites[i].path.size());
    CHECK(back.dendrites[i].radius_um == doctest::Approx(ann.dendrites[i].radius_um).margin(5e-7));
  }
}
