#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "descatter3d/errors.hpp"
#include "descatter3d/layers.hpp"
#include "descatter3d/network.hpp"
#include "descatter3d/rng.hpp"

using namespace descatter3d;

namespace {

Tensor5 random_tensor(std::array<int, 5> shape, std::uint64_t seed, float scale = 1.f) {
  Tensor5 t(shape);
  CounterRng rng(seed);
  for (float& v : t.data) v = scale * static_cast<float>(rng.next_double() - 0.5);
  return t;
}

// Double-precision reference conv3d (same padding, cross-correlation).
std::vector<double> conv3d_reference(const Tensor5& x, const std::vector<double>& w,
                                     const std::vector<double>& bias, int out_c, int k) {
  const int B = x.batch(), IC = x.channels(), X = x.nx(), Y = x.ny(), Z = x.nz();
  const int P = k / 2;
  std::vector<double> out(static_cast<std::size_t>(B) * out_c * X * Y * Z);
  std::size_t oi = 0;
  for (int b = 0; b < B; ++b) {
    for (int oc = 0; oc < out_c; ++oc) {
      for (int z = 0; z < Z; ++z) {
        for (int y = 0; y < Y; ++y) {
          for (int xx = 0; xx < X; ++xx, ++oi) {
            double acc = bias[oc];
            for (int ic = 0; ic < IC; ++ic) {
              for (int kz = 0; kz < k; ++kz) {
                for (int ky = 0; ky < k; ++ky) {
                  for (int kx = 0; kx < k; ++kx) {
                    const int sx = xx + kx - P, sy = y + ky - P, sz = z + kz - P;
                    if (sx < 0 || sx >= X || sy < 0 || sy >= Y || sz < 0 || sz >= Z) continue;
                    const double wv =
                        w[((((static_cast<std::size_t>(oc) * IC + ic) * k + kz) * k + ky) * k) +
                          kx];
                    acc += wv * x.at(b, ic, sx, sy, sz);
                  }
                }
              }
            }
            out[oi] = acc;
          }
        }
      }
    }
  }
  return out;
}

double sum_all(const Tensor5& t) {
  double s = 0.0;
  for (float v : t.data) s += v;
  return s;
}

}  // namespace

TEST_CASE("conv3d identity kernel reproduces the input") {
  Conv3d conv(2, 2, 3);
  // centered delta per matching channel
  for (int oc = 0; oc < 2; ++oc) {
    const std::size_t center = ((static_cast<std::size_t>(oc) * 2 + oc) * 3 + 1) * 9 + 1 * 3 + 1;
    conv.weight[center] = 1.f;
  }
  const Tensor5 x = random_tensor({1, 2, 5, 4, 3}, 1);
  const Tensor5 y = conv.forward(x, false);
  CHECK(y.data == x.data);
}

TEST_CASE("conv3d shape contract") {
  Conv3d conv(1, 8, 3);
  const Tensor5 x = random_tensor({1, 1, 4, 4, 4}, 2);
  const Tensor5 y = conv.forward(x, false);
  CHECK(y.shape == std::array<int, 5>{1, 8, 4, 4, 4});

  Conv3d bad(3, 8, 3);
  CHECK_THROWS_AS(bad.forward(x, false), ShapeError);
}

TEST_CASE("conv3d forward matches the nested-loop oracle") {
  Conv3d conv(2, 2, 3);
  CounterRng rng(5);
  for (float& w : conv.weight) w = static_cast<float>(rng.next_double() - 0.5);
  for (float& b : conv.bias) b = static_cast<float>(rng.next_double() - 0.5);

  const Tensor5 x = random_tensor({1, 2, 3, 3, 3}, 6);
  const Tensor5 y = conv.forward(x, false);

  const std::vector<double> w64(conv.weight.begin(), conv.weight.end());
  const std::vector<double> b64(conv.bias.begin(), conv.bias.end());
  const auto ref = conv3d_reference(x, w64, b64, 2, 3);
  REQUIRE(ref.size() == y.data.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(y.data[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv3d backward") {
  SUBCASE("zero upstream gradient zeroes every gradient") {
    Conv3d conv(2, 3, 3);
    CounterRng rng(7);
    for (float& w : conv.weight) w = static_cast<float>(rng.next_double());
    const Tensor5 x = random_tensor({2, 2, 4, 4, 4}, 8);
    Tensor5 y = conv.forward(x, true);
    Tensor5 gout(y.shape);
    const Tensor5 gx = conv.backward(gout);
    for (float v : gx.data) CHECK(v == 0.f);
    for (float v : conv.grad_weight) CHECK(v == 0.f);
    for (float v : conv.grad_bias) CHECK(v == 0.f);
  }
  SUBCASE("sum loss gives bias gradients equal to the voxel count") {
    Conv3d conv(1, 2, 3);
    const Tensor5 x = random_tensor({2, 1, 4, 3, 2}, 9);
    Tensor5 y = conv.forward(x, true);
    Tensor5 gout(y.shape);
    gout.fill(1.f);
    conv.backward(gout);
    const float count = 2 * 4 * 3 * 2;  // batch * spatial
    for (float g : conv.grad_bias) CHECK(g == doctest::Approx(count));
  }
  SUBCASE("grad_x and grad_w match central finite differences") {
    Conv3d conv(2, 3, 3);
    CounterRng rng(11);
    for (float& w : conv.weight) w = static_cast<float>(0.5 * (rng.next_double() - 0.5));
    for (float& b : conv.bias) b = static_cast<float>(0.1 * rng.next_double());
    Tensor5 x = random_tensor({1, 2, 4, 4, 4}, 12);

    // loss = sum(forward(x))
    Tensor5 y = conv.forward(x, true);
    Tensor5 gout(y.shape);
    gout.fill(1.f);
    const Tensor5 gx = conv.backward(gout);

    std::vector<double> w64(conv.weight.begin(), conv.weight.end());
    std::vector<double> b64(conv.bias.begin(), conv.bias.end());
    auto loss64 = [&](const Tensor5& input, const std::vector<double>& w) {
      const auto out = conv3d_reference(input, w, b64, 3, 3);
      double s = 0.0;
      for (double v : out) s += v;
      return s;
    };

    const double h = 1e-3;
    double max_rel_x = 0.0;
    for (std::size_t i = 0; i < x.data.size(); i += 7) {
      Tensor5 xp = x, xm = x;
      xp.data[i] += static_cast<float>(h);
      xm.data[i] -= static_cast<float>(h);
      const double fd = (loss64(xp, w64) - loss64(xm, w64)) / (2 * h);
      max_rel_x = std::max(max_rel_x, std::fabs(fd - gx.data[i]) / std::max(1.0, std::fabs(fd)));
    }
    CHECK(max_rel_x < 1e-3);

    double max_rel_w = 0.0;
    for (std::size_t i = 0; i < w64.size(); i += 5) {
      std::vector<double> wp = w64, wm = w64;
      wp[i] += h;
      wm[i] -= h;
      const double fd = (loss64(x, wp) - loss64(x, wm)) / (2 * h);
      max_rel_w =
          std::max(max_rel_w, std::fabs(fd - conv.grad_weight[i]) / std::max(1.0, std::fabs(fd)));
    }
    CHECK(max_rel_w < 1e-3);
  }
}

TEST_CASE("maxpool3d") {
  SUBCASE("constant input routes ties to the lowest index") {
    MaxPool3d pool;
    Tensor5 x({1, 1, 4, 4, 4});
    x.fill(2.5f);
    const Tensor5 y = pool.forward(x, true);
    CHECK(y.shape == std::array<int, 5>{1, 1, 2, 2, 2});
    for (float v : y.data) CHECK(v == 2.5f);

    Tensor5 gout(y.shape);
    gout.fill(1.f);
    const Tensor5 gx = pool.backward(gout);
    // gradient goes to block index 0, i.e. even coordinates only
    for (int z = 0; z < 4; ++z) {
      for (int yy = 0; yy < 4; ++yy) {
        for (int xx = 0; xx < 4; ++xx) {
          const float want = (z % 2 == 0 && yy % 2 == 0 && xx % 2 == 0) ? 1.f : 0.f;
          CHECK(gx.at(0, 0, xx, yy, z) == want);
        }
      }
    }
  }
  SUBCASE("odd dims are rejected") {
    MaxPool3d pool;
    Tensor5 x({1, 1, 3, 4, 4});
    CHECK_THROWS_AS(pool.forward(x, false), ShapeError);
  }
  SUBCASE("forward/backward match a per-block scan") {
    MaxPool3d pool;
    const Tensor5 x = random_tensor({2, 3, 4, 6, 2}, 21);
    const Tensor5 y = pool.forward(x, true);
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 3; ++c) {
        for (int oz = 0; oz < 1; ++oz) {
          for (int oy = 0; oy < 3; ++oy) {
            for (int ox = 0; ox < 2; ++ox) {
              float best = -1e30f;
              for (int dz = 0; dz < 2; ++dz) {
                for (int dy = 0; dy < 2; ++dy) {
                  for (int dx = 0; dx < 2; ++dx) {
                    best = std::max(best, x.at(b, c, 2 * ox + dx, 2 * oy + dy, 2 * oz + dz));
                  }
                }
              }
              CHECK(y.at(b, c, ox, oy, oz) == best);
            }
          }
        }
      }
    }
    Tensor5 gout(y.shape);
    CounterRng rng(22);
    for (float& v : gout.data) v = static_cast<float>(rng.next_double());
    const Tensor5 gx = pool.backward(gout);
    CHECK(sum_all(gx) == doctest::Approx(sum_all(gout)).epsilon(1e-6));
  }
}

TEST_CASE("conv transpose 3d") {
  SUBCASE("shape doubles") {
    ConvTranspose3d up(1, 1);
    const Tensor5 x = random_tensor({1, 1, 2, 2, 2}, 31);
    const Tensor5 y = up.forward(x, false);
    CHECK(y.shape == std::array<int, 5>{1, 1, 4, 4, 4});
  }
  SUBCASE("all-ones kernel spreads an impulse into a 2x2x2 block") {
    ConvTranspose3d up(1, 1);
    std::fill(up.weight.begin(), up.weight.end(), 1.f);
    Tensor5 x({1, 1, 2, 2, 2});
    x.at(0, 0, 1, 0, 1) = 1.f;
    const Tensor5 y = up.forward(x, false);
    double total = 0.0;
    for (int z = 0; z < 4; ++z) {
      for (int yy = 0; yy < 4; ++yy) {
        for (int xx = 0; xx < 4; ++xx) {
          const bool in_block = xx >= 2 && xx < 4 && yy < 2 && z >= 2;
          CHECK(y.at(0, 0, xx, yy, z) == (in_block ? 1.f : 0.f));
          total += y.at(0, 0, xx, yy, z);
        }
      }
    }
    CHECK(total == doctest::Approx(8.0));
  }
  SUBCASE("adjoint identity <T x, y> == <x, T^T y>") {
    ConvTranspose3d up(3, 2);
    CounterRng rng(41);
    for (float& w : up.weight) w = static_cast<float>(rng.next_double() - 0.5);

    Tensor5 x = random_tensor({2, 3, 3, 2, 2}, 42);
    const Tensor5 tx = up.forward(x, true);
    const Tensor5 y = random_tensor(tx.shape, 43);

    double lhs = 0.0;
    for (std::size_t i = 0; i < tx.data.size(); ++i) lhs += static_cast<double>(tx.data[i]) * y.data[i];

    const Tensor5 tty = up.backward(y);  // grad wrt input == T^T y (bias ignored)
    double rhs = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) rhs += static_cast<double>(x.data[i]) * tty.data[i];

    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
  }
}

TEST_CASE("batchnorm3d") {
  SUBCASE("train mode normalizes per channel") {
    BatchNorm3d bn(3);
    const Tensor5 x = random_tensor({2, 3, 4, 4, 2}, 51, 3.f);
    const Tensor5 y = bn.forward(x, true, false);
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0, sum2 = 0.0;
      std::size_t n = 0;
      for (int b = 0; b < 2; ++b) {
        const float* s = y.slab(b, c);
        for (std::size_t i = 0; i < y.spatial(); ++i, ++n) {
          sum += s[i];
          sum2 += static_cast<double>(s[i]) * s[i];
        }
      }
      const double mean = sum / n;
      const double var = sum2 / n - mean * mean;
      CHECK(std::fabs(mean) < 1e-5);
      CHECK(var == doctest::Approx(1.0).margin(1e-3));
    }
  }
  SUBCASE("eval mode with unit running stats is the identity") {
    BatchNorm3d bn(2);
    const Tensor5 x = random_tensor({1, 2, 4, 4, 4}, 52);
    const Tensor5 y = bn.forward(x, false, false);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      CHECK(y.data[i] == doctest::Approx(x.data[i]).margin(1e-5));
    }
  }
  SUBCASE("degenerate train batch is rejected") {
    BatchNorm3d bn(1);
    Tensor5 x({1, 1, 1, 1, 1});
    CHECK_THROWS_AS(bn.forward(x, true, false), ShapeError);
  }
  SUBCASE("backward matches finite differences") {
    BatchNorm3d bn(2);
    bn.gamma = {1.3f, 0.8f};
    bn.beta = {0.2f, -0.1f};
    Tensor5 x = random_tensor({2, 2, 2, 2, 2}, 53);

    Tensor5 y = bn.forward(x, true, true);
    Tensor5 gout = random_tensor(y.shape, 54);
    const Tensor5 gx = bn.backward(gout);

    // Double reference of train-mode batch norm for the loss sum(out * gout).
    auto loss64 = [&](const Tensor5& input) {
      const int B = input.batch();
      const std::size_t S = input.spatial();
      double loss = 0.0;
      for (int c = 0; c < 2; ++c) {
        double sum = 0.0;
        for (int b = 0; b < B; ++b) {
          const float* s = input.slab(b, c);
          for (std::size_t i = 0; i < S; ++i) sum += s[i];
        }
        const double n = static_cast<double>(B) * S;
        const double mean = sum / n;
        double var = 0.0;
        for (int b = 0; b < B; ++b) {
          const float* s = input.slab(b, c);
          for (std::size_t i = 0; i < S; ++i) var += (s[i] - mean) * (s[i] - mean);
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + BatchNorm3d::kEps);
        for (int b = 0; b < B; ++b) {
          const float* s = input.slab(b, c);
          const float* g = gout.slab(b, c);
          for (std::size_t i = 0; i < S; ++i) {
            loss += (bn.gamma[c] * ((s[i] - mean) * inv) + bn.beta[c]) * g[i];
          }
        }
      }
      return loss;
    };

    const double h = 1e-3;
    for (std::size_t i = 0; i < x.data.size(); i += 3) {
      Tensor5 xp = x, xm = x;
      xp.data[i] += static_cast<float>(h);
      xm.data[i] -= static_cast<float>(h);
      const double fd = (loss64(xp) - loss64(xm)) / (2 * h);
      CHECK(gx.data[i] == doctest::Approx(fd).epsilon(1e-3).scale(std::max(1.0, std::fabs(fd))));
    }
  }
}

TEST_CASE("mse loss") {
  SUBCASE("identical tensors give zero loss and gradient") {
    const Tensor5 x = random_tensor({1, 1, 3, 3, 3}, 61);
    const auto [loss, grad] = mse_loss(x, x);
    CHECK(loss == 0.0);
    for (float g : grad.data) CHECK(g == 0.f);
  }
  SUBCASE("constant difference has closed form") {
    Tensor5 pred({1, 1, 2, 2, 2});
    Tensor5 target(pred.shape);
    pred.fill(3.f);
    target.fill(1.f);
    const auto [loss, grad] = mse_loss(pred, target);
    CHECK(loss == doctest::Approx(4.0).epsilon(1e-12));
    for (float g : grad.data) CHECK(g == doctest::Approx(4.0 / 8.0).epsilon(1e-6));
  }
  SUBCASE("random case matches a 64-bit reference") {
    const Tensor5 pred = random_tensor({2, 1, 3, 4, 2}, 62);
    const Tensor5 target = random_tensor(pred.shape, 63);
    const auto [loss, grad] = mse_loss(pred, target);
    (void)grad;
    double ref = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      const double d = static_cast<double>(pred.data[i]) - target.data[i];
      ref += d * d;
    }
    ref /= static_cast<double>(pred.data.size());
    CHECK(loss == doctest::Approx(ref).epsilon(1e-6));
  }
  SUBCASE("shape mismatch is rejected") {
    const Tensor5 a = random_tensor({1, 1, 2, 2, 2}, 64);
    const Tensor5 b = random_tensor({1, 1, 2, 2, 4}, 65);
    CHECK_THROWS_AS(mse_loss(a, b), ShapeError);
  }
}

TEST_CASE("adam") {
  std::vector<float> p{1.f}, g{1.f};
  std::vector<ParamRef> params{{"p", &p, &g, {1}}};
  AdamState state;
  state.lr = 1e-4;
  state.init(params);

  SUBCASE("zero gradients leave parameters unchanged") {
    g[0] = 0.f;
    adam_step(params, state);
    CHECK(p[0] == 1.f);
  }
  SUBCASE("first step closed form") {
    adam_step(params, state);
    CHECK(p[0] == doctest::Approx(1.0 - 1e-4 / (1.0 + 1e-8)).epsilon(1e-9));
    CHECK(state.t == 1);
  }
  SUBCASE("three steps match a 64-bit scalar reference") {
    double rp = 1.0, rm = 0.0, rv = 0.0;
    const double grads[3] = {1.0, -0.5, 0.25};
    for (int t = 1; t <= 3; ++t) {
      g[0] = static_cast<float>(grads[t - 1]);
      adam_step(params, state);
      rm = 0.9 * rm + 0.1 * grads[t - 1];
      rv = 0.999 * rv + 0.001 * grads[t - 1] * grads[t - 1];
      const double mhat = rm / (1.0 - std::pow(0.9, t));
      const double vhat = rv / (1.0 - std::pow(0.999, t));
      rp -= 1e-4 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(p[0] == doctest::Approx(rp).epsilon(1e-9));
    }
  }
  SUBCASE("non-finite gradients abort before mutating state") {
    g[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(params, state), NonFiniteGradient);
    CHECK(p[0] == 1.f);
    CHECK(state.t == 0);
  }
}

TEST_CASE("relu caches its mask") {
  ReLU relu;
  Tensor5 x({1, 1, 2, 2, 1});
  x.data = {-1.f, 0.f, 2.f, -0.5f};
  const Tensor5 y = relu.forward(x, true);
  CHECK(y.data == std::vector<float>{0.f, 0.f, 2.f, 0.f});
  Tensor5 gout(x.shape);
  gout.fill(3.f);
  const Tensor5 gx = relu.backward(gout);
  CHECK(gx.data == std::vector<float>{0.f, 0.f, 3.f, 0.f});
}

TEST_CASE("concat and split are inverse") {
  const Tensor5 a = random_tensor({2, 2, 3, 3, 3}, 71);
  const Tensor5 b = random_tensor({2, 3, 3, 3, 3}, 72);
  const Tensor5 cat = concat_channels(a, b);
  CHECK(cat.channels() == 5);
  Tensor5 ga, gb;
  split_channels(cat, 2, ga, gb);
  CHECK(ga.data == a.data);
  CHECK(gb.data == b.data);
}
