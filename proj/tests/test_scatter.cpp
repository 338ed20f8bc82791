#include <doctest.h>

#include <cmath>
#include <numeric>

#include "descatter3d/errors.hpp"
#include "descatter3d/phantom.hpp"
#include "descatter3d/scatter.hpp"
#include "test_helpers.hpp"

using namespace descatter3d;

namespace {

// Independent dense evaluation of the two-Gaussian mixture on the kernel
// grid, normalized the same way.
std::vector<double> spsf_oracle(double z, const ScatterParams& p, double pitch, int radius) {
  const double w_b = std::exp(-z / p.ell_s);
  const double sigma_s = p.sigma_s0 + p.k_s * z;
  std::vector<double> taps;
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i) {
      const double r2 = (i * i + j * j) * pitch * pitch;
      const double g_b =
          std::exp(-r2 / (2 * p.sigma_b * p.sigma_b)) / (2 * M_PI * p.sigma_b * p.sigma_b);
      const double g_s = std::exp(-r2 / (2 * sigma_s * sigma_s)) / (2 * M_PI * sigma_s * sigma_s);
      taps.push_back(w_b * g_b + (1 - w_b) * g_s);
      sum += taps.back();
    }
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// O(n^2 k^2) reference convolution with zero padding.
std::vector<float> conv_oracle(const std::vector<float>& plane, int nx, int ny,
                               const Kernel2D& k) {
  std::vector<float> out(plane.size(), 0.f);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      double acc = 0.0;
      for (int j = -k.radius; j <= k.radius; ++j) {
        for (int i = -k.radius; i <= k.radius; ++i) {
          const int sx = x - i, sy = y - j;
          if (sx < 0 || sx >= nx || sy < 0 || sy >= ny) continue;
          acc += k.at(i, j) * plane[static_cast<std::size_t>(sy) * nx + sx];
        }
      }
      out[static_cast<std::size_t>(y) * nx + x] = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("spsf at z=0 is the pure ballistic component") {
  ScatterParams p;
  const Kernel2D k = build_spsf(0.0, p, 0.25);
  CHECK(std::exp(-0.0 / p.ell_s) == 1.0);

  const auto oracle = spsf_oracle(0.0, p, 0.25, k.radius);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.weights.size(); ++i) {
    CHECK(k.weights[i] == doctest::Approx(oracle[i]).epsilon(0.0).margin(1e-6));
    sum += k.weights[i];
  }
  CHECK(sum == doctest::Approx(1.0).margin(1e-6));
}

TEST_CASE("ballistic weight at one scattering length is 1/e") {
  CHECK(std::exp(-50.0 / 50.0) == doctest::Approx(0.36788).margin(5e-6));
  ScatterParams p;
  const Kernel2D k = build_spsf(p.ell_s, p, 0.5);
  const auto oracle = spsf_oracle(p.ell_s, p, 0.5, k.radius);
  for (std::size_t i = 0; i < k.weights.size(); ++i) {
    CHECK(k.weights[i] == doctest::Approx(oracle[i]).epsilon(0.0).margin(1e-6));
  }
}

TEST_CASE("spsf kernels are unit-sum and centrally symmetric over a parameter grid") {
  const ScatterParams sets[5] = {
      {},
      {30.0, 0.25, 1.0, 0.05, 3.0, 512},
      {80.0, 0.5, 3.0, 0.3, 4.0, 512},
      {50.0, 0.3, 2.0, 0.0, 5.0, 512},
      {10.0, 0.4, 0.4, 0.12, 3.5, 512},
  };
  for (const auto& p : sets) {
    for (int d = 0; d < 20; ++d) {
      const double z = 5.0 * d;
      const Kernel2D k = build_spsf(z, p, 0.5);
      CHECK_NOTHROW(k.validate());  // validates unit sum and symmetry
      const double sum = std::accumulate(k.weights.begin(), k.weights.end(), 0.0);
      CHECK(sum == doctest::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("ballistic weight decays and halo width grows with depth") {
  ScatterParams p;
  double prev_w = 2.0, prev_s = -1.0;
  for (int d = 0; d < 20; ++d) {
    const double z = 7.5 * d;
    const double w_b = std::exp(-z / p.ell_s);
    const double sigma_s = p.sigma_s0 + p.k_s * z;
    CHECK(w_b < prev_w);
    CHECK(sigma_s >= prev_s);
    prev_w = w_b;
    prev_s = sigma_s;
  }
}

TEST_CASE("oversized kernels are rejected") {
  ScatterParams p;
  p.max_kernel_radius = 16;
  CHECK_THROWS_AS(build_spsf(300.0, p, 0.1), KernelTooLarge);
}

TEST_CASE("delta kernel convolution is the identity") {
  Kernel2D delta;
  delta.radius = 0;
  delta.weights = {1.0};
  delta.pitch = 0.25;
  const Volume vol = testutil::random_volume({17, 9, 1}, 4);
  for (ConvBackend backend : {ConvBackend::kDirect, ConvBackend::kFft}) {
    const auto out = convolve_plane(vol.plane(0), 17, 9, delta, backend);
    if (backend == ConvBackend::kDirect) {
      CHECK(out == std::vector<float>(vol.data.begin(), vol.data.begin() + 17 * 9));
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] == doctest::Approx(vol.data[i]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("impulse reproduces the kernel") {
  ScatterParams p;
  const Kernel2D k = build_spsf(20.0, p, 0.5);
  const int nx = 4 * k.radius + 9, ny = 4 * k.radius + 5;
  std::vector<float> plane(static_cast<std::size_t>(nx) * ny, 0.f);
  const int cx = nx / 2, cy = ny / 2;
  plane[static_cast<std::size_t>(cy) * nx + cx] = 1.f;
  const auto out = convolve_plane(plane.data(), nx, ny, k, ConvBackend::kDirect);
  for (int j = -k.radius; j <= k.radius; ++j) {
    for (int i = -k.radius; i <= k.radius; ++i) {
      CHECK(out[static_cast<std::size_t>(cy + j) * nx + cx + i] ==
            doctest::Approx(k.at(i, j)).margin(1e-9));
    }
  }
}

TEST_CASE("fft and direct backends agree with the loop oracle") {
  CounterRng rng(33);
  Kernel2D k;
  k.radius = 4;
  k.pitch = 0.5;
  k.weights.resize(81);
  // random symmetric nonnegative kernel, normalized
  for (int j = -4; j <= 4; ++j) {
    for (int i = -4; i <= 4; ++i) {
      if (j < 0 || (j == 0 && i < 0)) continue;
      const double w = rng.next_double();
      k.weights[static_cast<std::size_t>(j + 4) * 9 + (i + 4)] = w;
      k.weights[static_cast<std::size_t>(-j + 4) * 9 + (-i + 4)] = w;
    }
  }
  const double sum = std::accumulate(k.weights.begin(), k.weights.end(), 0.0);
  for (double& w : k.weights) w /= sum;

  const Volume vol = testutil::random_volume({32, 32, 1}, 77);
  const auto direct = convolve_plane(vol.plane(0), 32, 32, k, ConvBackend::kDirect);
  const auto fft = convolve_plane(vol.plane(0), 32, 32, k, ConvBackend::kFft);
  const auto oracle = conv_oracle({vol.data.begin(), vol.data.begin() + 32 * 32}, 32, 32, k);

  float peak = 0.f;
  for (float v : oracle) peak = std::max(peak, v);
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(std::fabs(direct[i] - oracle[i]) <= 1e-4f * peak);
    CHECK(std::fabs(fft[i] - direct[i]) <= 1e-4f * peak);
  }
}

TEST_CASE("forward model maps zero to zero") {
  Volume vol({16, 16, 4}, {0.5f, 0.5f, 1.f});
  ScatterParams p;
  NoiseParams n;
  const Volume out = apply_forward_model(vol, p, n);
  for (float v : out.data) CHECK(v == 0.f);
}

TEST_CASE("single bright voxel reproduces the spsf under mild noise") {
  ScatterParams p;
  p.sigma_s0 = 1.0;
  p.k_s = 0.05;
  NoiseParams n;
  n.gain = 1e6;
  n.seed = 8;

  Volume vol({41, 41, 1}, {0.5f, 0.5f, 1.f}, 25.f);
  vol.at(20, 20, 0) = 1.f;
  const Kernel2D k = build_spsf(25.0, p, 0.5);
  REQUIRE(2 * k.radius + 1 <= 41);

  const Volume out = apply_forward_model(vol, p, n);
  // Per-voxel Poisson bound: |out - mu| <= 5 sqrt(mu/gain).
  for (int j = -k.radius; j <= k.radius; ++j) {
    for (int i = -k.radius; i <= k.radius; ++i) {
      const double mu = k.at(i, j);
      if (mu * n.gain < 25.0) continue;  // too few photons for a z-bound
      const double sd = std::sqrt(mu / n.gain);
      CHECK(std::fabs(out.at(20 + i, 20 + j, 0) - mu) <= 5.0 * sd);
    }
  }
}

TEST_CASE("noiseless forward conserves interior flux") {
  ScatterParams p;
  p.sigma_s0 = 1.0;
  p.k_s = 0.02;
  Volume vol({64, 64, 2}, {0.5f, 0.5f, 1.f}, 10.f);
  const Kernel2D deepest = build_spsf(vol.plane_depth(1), p, 0.5);
  const int r = deepest.radius;
  REQUIRE(4 * r < 64);

  CounterRng rng(5);
  for (int z = 0; z < 2; ++z) {
    for (int y = 2 * r; y < 64 - 2 * r; ++y) {
      for (int x = 2 * r; x < 64 - 2 * r; ++x) {
        vol.at(x, y, z) = static_cast<float>(rng.next_double());
      }
    }
  }

  const Volume out = scatter_volume(vol, p);
  for (int z = 0; z < 2; ++z) {
    double in_sum = 0.0, out_sum = 0.0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) in_sum += vol.at(x, y, z);
    }
    for (int y = r; y < 64 - r; ++y) {
      for (int x = r; x < 64 - r; ++x) out_sum += out.at(x, y, z);
    }
    CHECK(out_sum == doctest::Approx(in_sum).epsilon(1e-4));
  }
}

TEST_CASE("noiseless forward is linear in the input") {
  ScatterParams p;
  Volume vol = testutil::random_volume({24, 24, 3}, 21);
  const Volume base = scatter_volume(vol, p);
  for (float a : {0.5f, 2.f}) {
    Volume scaled = vol;
    for (float& v : scaled.data) v *= a;
    const Volume out = scatter_volume(scaled, p);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      CHECK(out.data[i] == doctest::Approx(a * base.data[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("forward model is bit-deterministic per seed") {
  ScatterParams p;
  NoiseParams n;
  n.gain = 20.0;
  n.seed = 99;
  const Volume vol = testutil::random_volume({20, 20, 3}, 13);
  const Volume a = apply_forward_model(vol, p, n);
  const Volume b = apply_forward_model(vol, p, n);
  CHECK(a.data == b.data);
  n.seed = 100;
  const Volume c = apply_forward_model(vol, p, n);
  CHECK(a.data != c.data);
}

TEST_CASE("surface plane passes nearly unchanged") {
  // depth 0, near-delta ballistic kernel, huge photon budget
  PhantomSpec spec;
  spec.dims = {48, 48, 4};
  spec.pitch = {0.5f, 0.5f, 1.f};
  spec.n_dendrites = 2;
  spec.n_spines = 0;
  spec.seed = 3;
  auto [vol, ann] = generate_phantom(spec);
  (void)ann;

  ScatterParams p;
  p.sigma_b = 0.3 * 0.5;  // 0.3 * pitch
  NoiseParams n;
  n.gain = 1e8;
  const Volume out = apply_forward_model(vol, p, n);

  double num = 0.0, den = 0.0;
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) {
      const double d = out.at(x, y, 0) - vol.at(x, y, 0);
      num += d * d;
      den += static_cast<double>(vol.at(x, y, 0)) * vol.at(x, y, 0);
    }
  }
  REQUIRE(den > 0.0);
  CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("anisotropic xy pitch is rejected") {
  Volume vol({8, 8, 2}, {0.25f, 0.5f, 1.f});
  vol.data[0] = 1.f;
  CHECK_THROWS_AS(scatter_volume(vol, ScatterParams{}), InvalidDims);
}
