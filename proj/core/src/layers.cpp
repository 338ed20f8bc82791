#include "descatter3d/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "descatter3d/errors.hpp"
#include "descatter3d/rng.hpp"
#include "descatter3d/threading.hpp"

namespace descatter3d {

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(int in_c, int out_c, int ksize)
    : in_c_(in_c), out_c_(out_c), ksize_(ksize), pad_(ksize / 2) {
  if (in_c < 1 || out_c < 1) throw ShapeError("Conv3d: channel counts must be >= 1");
  if (ksize < 1 || ksize % 2 == 0) throw ShapeError("Conv3d: kernel size must be odd");
  const std::size_t n = static_cast<std::size_t>(out_c) * in_c * ksize * ksize * ksize;
  weight.assign(n, 0.f);
  grad_weight.assign(n, 0.f);
  bias.assign(out_c, 0.f);
  grad_bias.assign(out_c, 0.f);
}

void Conv3d::init_he(CounterRng& rng) {
  const double fan_in = static_cast<double>(in_c_) * ksize_ * ksize_ * ksize_;
  const double std = std::sqrt(2.0 / fan_in);
  for (float& w : weight) w = static_cast<float>(std * rng.next_normal());
  std::fill(bias.begin(), bias.end(), 0.f);
}

void Conv3d::init_zero() {
  std::fill(weight.begin(), weight.end(), 0.f);
  std::fill(bias.begin(), bias.end(), 0.f);
}

Tensor5 Conv3d::forward(const Tensor5& x, bool cache_for_backward) {
  if (x.channels() != in_c_) {
    throw ShapeError("Conv3d: input has " + std::to_string(x.channels()) +
                     " channels, expected " + std::to_string(in_c_));
  }
  const int B = x.batch(), X = x.nx(), Y = x.ny(), Z = x.nz();
  const int K = ksize_, P = pad_;
  const std::size_t XY = static_cast<std::size_t>(X) * Y;

  Tensor5 out({B, out_c_, X, Y, Z});
  parallel_for(static_cast<std::int64_t>(B) * out_c_, [&](std::int64_t job) {
    const int b = static_cast<int>(job / out_c_);
    const int oc = static_cast<int>(job % out_c_);
    float* o = out.slab(b, oc);
    std::fill(o, o + out.spatial(), bias[oc]);
    for (int ic = 0; ic < in_c_; ++ic) {
      const float* in = x.slab(b, ic);
      const float* wk = &weight[(static_cast<std::size_t>(oc) * in_c_ + ic) * K * K * K];
      for (int kz = 0; kz < K; ++kz) {
        const int dz = kz - P;
        const int z0 = std::max(0, -dz), z1 = std::min(Z, Z - dz);
        for (int ky = 0; ky < K; ++ky) {
          const int dy = ky - P;
          const int y0 = std::max(0, -dy), y1 = std::min(Y, Y - dy);
          for (int kx = 0; kx < K; ++kx) {
            const int dx = kx - P;
            const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
            const float w = wk[(static_cast<std::size_t>(kz) * K + ky) * K + kx];
            if (w == 0.f) continue;
            for (int z = z0; z < z1; ++z) {
              const float* irow = in + (static_cast<std::size_t>(z + dz)) * XY + dx;
              float* orow = o + static_cast<std::size_t>(z) * XY;
              for (int y = y0; y < y1; ++y) {
                const float* ir = irow + static_cast<std::size_t>(y + dy) * X;
                float* orw = orow + static_cast<std::size_t>(y) * X;
                for (int xx = x0; xx < x1; ++xx) orw[xx] += w * ir[xx];
              }
            }
          }
        }
      }
    }
  });

  if (cache_for_backward) cached_input_ = x;
  return out;
}

Tensor5 Conv3d::backward(const Tensor5& grad_out) {
  const Tensor5& x = cached_input_;
  if (x.data.empty()) throw ShapeError("Conv3d::backward: no cached input");
  if (grad_out.channels() != out_c_ || grad_out.batch() != x.batch() ||
      grad_out.nx() != x.nx() || grad_out.ny() != x.ny() || grad_out.nz() != x.nz()) {
    throw ShapeError("Conv3d::backward: grad_out shape mismatch");
  }
  const int B = x.batch(), X = x.nx(), Y = x.ny(), Z = x.nz();
  const int K = ksize_, P = pad_;
  const std::size_t XY = static_cast<std::size_t>(X) * Y;

  // Parameter gradients, one output channel per job.
  parallel_for(out_c_, [&](std::int64_t oc) {
    double bacc = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* g = grad_out.slab(b, static_cast<int>(oc));
      for (std::size_t i = 0; i < grad_out.spatial(); ++i) bacc += g[i];
    }
    grad_bias[oc] = static_cast<float>(bacc);

    for (int ic = 0; ic < in_c_; ++ic) {
      float* gw = &grad_weight[(static_cast<std::size_t>(oc) * in_c_ + ic) * K * K * K];
      for (int kz = 0; kz < K; ++kz) {
        const int dz = kz - P;
        const int z0 = std::max(0, -dz), z1 = std::min(Z, Z - dz);
        for (int ky = 0; ky < K; ++ky) {
          const int dy = ky - P;
          const int y0 = std::max(0, -dy), y1 = std::min(Y, Y - dy);
          for (int kx = 0; kx < K; ++kx) {
            const int dx = kx - P;
            const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
            double acc = 0.0;
            for (int b = 0; b < B; ++b) {
              const float* g = grad_out.slab(b, static_cast<int>(oc));
              const float* in = x.slab(b, ic);
              for (int z = z0; z < z1; ++z) {
                const float* ir = in + static_cast<std::size_t>(z + dz) * XY + dx;
                const float* gr = g + static_cast<std::size_t>(z) * XY;
                for (int y = y0; y < y1; ++y) {
                  const float* irr = ir + static_cast<std::size_t>(y + dy) * X;
                  const float* grr = gr + static_cast<std::size_t>(y) * X;
                  for (int xx = x0; xx < x1; ++xx) acc += static_cast<double>(grr[xx]) * irr[xx];
                }
              }
            }
            gw[(static_cast<std::size_t>(kz) * K + ky) * K + kx] = static_cast<float>(acc);
          }
        }
      }
    }
  });

  // Input gradient, one (batch, in-channel) slab per job.
  Tensor5 grad_x(x.shape);
  parallel_for(static_cast<std::int64_t>(B) * in_c_, [&](std::int64_t job) {
    const int b = static_cast<int>(job / in_c_);
    const int ic = static_cast<int>(job % in_c_);
    float* gi = grad_x.slab(b, ic);
    for (int oc = 0; oc < out_c_; ++oc) {
      const float* g = grad_out.slab(b, oc);
      const float* wk = &weight[(static_cast<std::size_t>(oc) * in_c_ + ic) * K * K * K];
      for (int kz = 0; kz < K; ++kz) {
        const int dz = kz - P;
        const int z0 = std::max(0, -dz), z1 = std::min(Z, Z - dz);
        for (int ky = 0; ky < K; ++ky) {
          const int dy = ky - P;
          const int y0 = std::max(0, -dy), y1 = std::min(Y, Y - dy);
          for (int kx = 0; kx < K; ++kx) {
            const int dx = kx - P;
            const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
            const float w = wk[(static_cast<std::size_t>(kz) * K + ky) * K + kx];
            if (w == 0.f) continue;
            for (int z = z0; z < z1; ++z) {
              float* gir = gi + static_cast<std::size_t>(z + dz) * XY + dx;
              const float* gr = g + static_cast<std::size_t>(z) * XY;
              for (int y = y0; y < y1; ++y) {
                float* girr = gir + static_cast<std::size_t>(y + dy) * X;
                const float* grr = gr + static_cast<std::size_t>(y) * X;
                for (int xx = x0; xx < x1; ++xx) girr[xx] += w * grr[xx];
              }
            }
          }
        }
      }
    }
  });
  return grad_x;
}

// ---------------------------------------------------------------------------
// BatchNorm3d

BatchNorm3d::BatchNorm3d(int channels) : channels_(channels) {
  if (channels < 1) throw ShapeError("BatchNorm3d: channels must be >= 1");
  gamma.assign(channels, 1.f);
  beta.assign(channels, 0.f);
  grad_gamma.assign(channels, 0.f);
  grad_beta.assign(channels, 0.f);
  running_mean.assign(channels, 0.f);
  running_var.assign(channels, 1.f);
}

Tensor5 BatchNorm3d::forward(const Tensor5& x, bool train_mode, bool cache_for_backward) {
  if (x.channels() != channels_) throw ShapeError("BatchNorm3d: channel mismatch");
  const int B = x.batch();
  const std::size_t S = x.spatial();
  const std::size_t count = static_cast<std::size_t>(B) * S;

  Tensor5 out(x.shape);
  if (!train_mode) {
    parallel_for(channels_, [&](std::int64_t c) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + kEps);
      const double m = running_mean[c];
      const double g = gamma[c], bb = beta[c];
      for (int b = 0; b < B; ++b) {
        const float* in = x.slab(b, static_cast<int>(c));
        float* o = out.slab(b, static_cast<int>(c));
        for (std::size_t i = 0; i < S; ++i) {
          o[i] = static_cast<float>(g * ((in[i] - m) * inv) + bb);
        }
      }
    });
    return out;
  }

  if (count < 2) throw ShapeError("BatchNorm3d: train mode needs batch*spatial >= 2");
  Tensor5 xhat(x.shape);
  std::vector<double> invstd(channels_);
  parallel_for(channels_, [&](std::int64_t c) {
    double sum = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* in = x.slab(b, static_cast<int>(c));
      for (std::size_t i = 0; i < S; ++i) sum += in[i];
    }
    const double mean = sum / static_cast<double>(count);
    double var_sum = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* in = x.slab(b, static_cast<int>(c));
      for (std::size_t i = 0; i < S; ++i) {
        const double d = in[i] - mean;
        var_sum += d * d;
      }
    }
    const double var = var_sum / static_cast<double>(count);
    const double inv = 1.0 / std::sqrt(var + kEps);
    invstd[c] = inv;

    const double g = gamma[c], bb = beta[c];
    for (int b = 0; b < B; ++b) {
      const float* in = x.slab(b, static_cast<int>(c));
      float* xh = xhat.slab(b, static_cast<int>(c));
      float* o = out.slab(b, static_cast<int>(c));
      for (std::size_t i = 0; i < S; ++i) {
        const double h = (in[i] - mean) * inv;
        xh[i] = static_cast<float>(h);
        o[i] = static_cast<float>(g * h + bb);
      }
    }

    const double unbiased = count > 1 ? var * static_cast<double>(count) /
                                            static_cast<double>(count - 1)
                                      : var;
    running_mean[c] = static_cast<float>((1.0 - kMomentum) * running_mean[c] + kMomentum * mean);
    running_var[c] = static_cast<float>((1.0 - kMomentum) * running_var[c] + kMomentum * unbiased);
  });

  if (cache_for_backward) {
    cached_xhat_ = std::move(xhat);
    cached_invstd_ = std::move(invstd);
  }
  return out;
}

Tensor5 BatchNorm3d::backward(const Tensor5& grad_out) {
  if (cached_xhat_.data.empty()) throw ShapeError("BatchNorm3d::backward: no cached batch");
  if (!grad_out.same_shape(cached_xhat_)) {
    throw ShapeError("BatchNorm3d::backward: grad_out shape mismatch");
  }
  const int B = grad_out.batch();
  const std::size_t S = grad_out.spatial();
  const double n = static_cast<double>(B) * static_cast<double>(S);

  Tensor5 grad_x(grad_out.shape);
  parallel_for(channels_, [&](std::int64_t c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* g = grad_out.slab(b, static_cast<int>(c));
      const float* xh = cached_xhat_.slab(b, static_cast<int>(c));
      for (std::size_t i = 0; i < S; ++i) {
        sum_g += g[i];
        sum_gx += static_cast<double>(g[i]) * xh[i];
      }
    }
    grad_beta[c] = static_cast<float>(sum_g);
    grad_gamma[c] = static_cast<float>(sum_gx);

    const double gmm = gamma[c];
    const double inv = cached_invstd_[c];
    // dx = invstd/n * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)),
    // with dxhat = gamma * dout.
    const double k1 = gmm * inv;
    const double k2 = gmm * sum_g / n;
    const double k3 = gmm * sum_gx / n;
    for (int b = 0; b < B; ++b) {
      const float* g = grad_out.slab(b, static_cast<int>(c));
      const float* xh = cached_xhat_.slab(b, static_cast<int>(c));
      float* gx = grad_x.slab(b, static_cast<int>(c));
      for (std::size_t i = 0; i < S; ++i) {
        gx[i] = static_cast<float>(k1 * g[i] - inv * (k2 + k3 * xh[i]));
      }
    }
  });
  return grad_x;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor5 ReLU::forward(const Tensor5& x, bool cache_for_backward) {
  Tensor5 out(x.shape);
  if (cache_for_backward) mask_.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const bool pos = x.data[i] > 0.f;
    out.data[i] = pos ? x.data[i] : 0.f;
    if (cache_for_backward && pos) mask_[i] = 1;
  }
  return out;
}

Tensor5 ReLU::backward(const Tensor5& grad_out) {
  if (mask_.size() != grad_out.size()) throw ShapeError("ReLU::backward: no cached mask");
  Tensor5 grad_x(grad_out.shape);
  for (std::size_t i = 0; i < grad_out.data.size(); ++i) {
    grad_x.data[i] = mask_[i] ? grad_out.data[i] : 0.f;
  }
  return grad_x;
}

// ---------------------------------------------------------------------------
// MaxPool3d

Tensor5 MaxPool3d::forward(const Tensor5& x, bool cache_for_backward) {
  const int X = x.nx(), Y = x.ny(), Z = x.nz();
  if (X % 2 || Y % 2 || Z % 2) throw ShapeError("MaxPool3d: spatial dims must be even");
  const int B = x.batch(), C = x.channels();
  Tensor5 out({B, C, X / 2, Y / 2, Z / 2});
  if (cache_for_backward) {
    in_shape_ = x.shape;
    argmax_.assign(out.size(), 0);
  }

  const std::size_t XY = static_cast<std::size_t>(X) * Y;
  parallel_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t job) {
    const int b = static_cast<int>(job / C);
    const int c = static_cast<int>(job % C);
    const float* in = x.slab(b, c);
    const std::size_t slab_base = x.offset(b, c);
    float* o = out.slab(b, c);
    std::int64_t* am = cache_for_backward ? &argmax_[out.offset(b, c)] : nullptr;
    std::size_t oi = 0;
    for (int oz = 0; oz < Z / 2; ++oz) {
      for (int oy = 0; oy < Y / 2; ++oy) {
        for (int ox = 0; ox < X / 2; ++ox, ++oi) {
          const std::size_t base =
              static_cast<std::size_t>(2 * oz) * XY + static_cast<std::size_t>(2 * oy) * X + 2 * ox;
          float best = in[base];
          std::size_t best_idx = base;
          // Ascending linear scan; strict > keeps the lowest index on ties.
          for (int dz = 0; dz < 2; ++dz) {
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t idx = base + static_cast<std::size_t>(dz) * XY +
                                        static_cast<std::size_t>(dy) * X + dx;
                if (in[idx] > best) {
                  best = in[idx];
                  best_idx = idx;
                }
              }
            }
          }
          o[oi] = best;
          if (am) am[oi] = static_cast<std::int64_t>(slab_base + best_idx);
        }
      }
    }
  });
  return out;
}

Tensor5 MaxPool3d::backward(const Tensor5& grad_out) {
  if (argmax_.size() != grad_out.size()) throw ShapeError("MaxPool3d::backward: no cached argmax");
  Tensor5 grad_x(in_shape_);
  for (std::size_t i = 0; i < grad_out.data.size(); ++i) {
    grad_x.data[static_cast<std::size_t>(argmax_[i])] += grad_out.data[i];
  }
  return grad_x;
}

// ---------------------------------------------------------------------------
// ConvTranspose3d

ConvTranspose3d::ConvTranspose3d(int in_c, int out_c) : in_c_(in_c), out_c_(out_c) {
  if (in_c < 1 || out_c < 1) throw ShapeError("ConvTranspose3d: channel counts must be >= 1");
  const std::size_t n = static_cast<std::size_t>(in_c) * out_c * 8;
  weight.assign(n, 0.f);
  grad_weight.assign(n, 0.f);
  bias.assign(out_c, 0.f);
  grad_bias.assign(out_c, 0.f);
}

void ConvTranspose3d::init_he(CounterRng& rng) {
  // Stride 2 with a 2-cube kernel touches each output once per in-channel.
  const double std = std::sqrt(2.0 / static_cast<double>(in_c_));
  for (float& w : weight) w = static_cast<float>(std * rng.next_normal());
  std::fill(bias.begin(), bias.end(), 0.f);
}

Tensor5 ConvTranspose3d::forward(const Tensor5& x, bool cache_for_backward) {
  if (x.channels() != in_c_) throw ShapeError("ConvTranspose3d: channel mismatch");
  const int B = x.batch(), X = x.nx(), Y = x.ny(), Z = x.nz();
  const int OX = 2 * X, OY = 2 * Y, OZ = 2 * Z;
  Tensor5 out({B, out_c_, OX, OY, OZ});
  const std::size_t OXY = static_cast<std::size_t>(OX) * OY;

  parallel_for(static_cast<std::int64_t>(B) * out_c_, [&](std::int64_t job) {
    const int b = static_cast<int>(job / out_c_);
    const int oc = static_cast<int>(job % out_c_);
    float* o = out.slab(b, oc);
    std::fill(o, o + out.spatial(), bias[oc]);
    for (int ic = 0; ic < in_c_; ++ic) {
      const float* in = x.slab(b, ic);
      const float* wk = &weight[(static_cast<std::size_t>(ic) * out_c_ + oc) * 8];
      std::size_t ii = 0;
      for (int z = 0; z < Z; ++z) {
        for (int y = 0; y < Y; ++y) {
          for (int xx = 0; xx < X; ++xx, ++ii) {
            const float v = in[ii];
            if (v == 0.f) continue;
            float* obase = o + static_cast<std::size_t>(2 * z) * OXY +
                           static_cast<std::size_t>(2 * y) * OX + 2 * xx;
            for (int kz = 0; kz < 2; ++kz) {
              for (int ky = 0; ky < 2; ++ky) {
                float* orow = obase + static_cast<std::size_t>(kz) * OXY +
                              static_cast<std::size_t>(ky) * OX;
                const float* wrow = wk + 4 * kz + 2 * ky;
                orow[0] += v * wrow[0];
                orow[1] += v * wrow[1];
              }
            }
          }
        }
      }
    }
  });

  if (cache_for_backward) cached_input_ = x;
  return out;
}

Tensor5 ConvTranspose3d::backward(const Tensor5& grad_out) {
  const Tensor5& x = cached_input_;
  if (x.data.empty()) throw ShapeError("ConvTranspose3d::backward: no cached input");
  if (grad_out.channels() != out_c_ || grad_out.nx() != 2 * x.nx() ||
      grad_out.ny() != 2 * x.ny() || grad_out.nz() != 2 * x.nz() ||
      grad_out.batch() != x.batch()) {
    throw ShapeError("ConvTranspose3d::backward: grad_out shape mismatch");
  }
  const int B = x.batch(), X = x.nx(), Y = x.ny(), Z = x.nz();
  const int OX = 2 * X, OY = 2 * Y;
  const std::size_t OXY = static_cast<std::size_t>(OX) * OY;

  parallel_for(out_c_, [&](std::int64_t oc) {
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
      const float* g = grad_out.slab(b, static_cast<int>(oc));
      for (std::size_t i = 0; i < grad_out.spatial(); ++i) acc += g[i];
    }
    grad_bias[oc] = static_cast<float>(acc);
  });

  parallel_for(in_c_, [&](std::int64_t ic) {
    for (int oc = 0; oc < out_c_; ++oc) {
      float* gw = &grad_weight[(static_cast<std::size_t>(ic) * out_c_ + oc) * 8];
      for (int kz = 0; kz < 2; ++kz) {
        for (int ky = 0; ky < 2; ++ky) {
          for (int kx = 0; kx < 2; ++kx) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b) {
              const float* in = x.slab(b, static_cast<int>(ic));
              const float* g = grad_out.slab(b, oc);
              std::size_t ii = 0;
              for (int z = 0; z < Z; ++z) {
                const float* gz = g + static_cast<std::size_t>(2 * z + kz) * OXY;
                for (int y = 0; y < Y; ++y) {
                  const float* gy = gz + static_cast<std::size_t>(2 * y + ky) * OX + kx;
                  for (int xx = 0; xx < X; ++xx, ++ii) {
                    acc += static_cast<double>(in[ii]) * gy[2 * xx];
                  }
                }
              }
            }
            gw[4 * kz + 2 * ky + kx] = static_cast<float>(acc);
          }
        }
      }
    }
  });

  Tensor5 grad_x(x.shape);
  parallel_for(static_cast<std::int64_t>(B) * in_c_, [&](std::int64_t job) {
    const int b = static_cast<int>(job / in_c_);
    const int ic = static_cast<int>(job % in_c_);
    float* gi = grad_x.slab(b, ic);
    for (int oc = 0; oc < out_c_; ++oc) {
      const float* g = grad_out.slab(b, oc);
      const float* wk = &weight[(static_cast<std::size_t>(ic) * out_c_ + oc) * 8];
      std::size_t ii = 0;
      for (int z = 0; z < Z; ++z) {
        for (int y = 0; y < Y; ++y) {
          for (int xx = 0; xx < X; ++xx, ++ii) {
            double acc = 0.0;
            const float* gbase = g + static_cast<std::size_t>(2 * z) * OXY +
                                 static_cast<std::size_t>(2 * y) * OX + 2 * xx;
            for (int kz = 0; kz < 2; ++kz) {
              for (int ky = 0; ky < 2; ++ky) {
                const float* grow = gbase + static_cast<std::size_t>(kz) * OXY +
                                    static_cast<std::size_t>(ky) * OX;
                const float* wrow = wk + 4 * kz + 2 * ky;
                acc += static_cast<double>(grow[0]) * wrow[0] +
                       static_cast<double>(grow[1]) * wrow[1];
              }
            }
            gi[ii] += static_cast<float>(acc);
          }
        }
      }
    }
  });
  return grad_x;
}

// ---------------------------------------------------------------------------
// Concat / split / loss

Tensor5 concat_channels(const Tensor5& a, const Tensor5& b) {
  if (a.batch() != b.batch() || a.nx() != b.nx() || a.ny() != b.ny() || a.nz() != b.nz()) {
    throw ShapeError("concat_channels: spatial/batch shape mismatch");
  }
  Tensor5 out({a.batch(), a.channels() + b.channels(), a.nx(), a.ny(), a.nz()});
  const std::size_t S = a.spatial();
  for (int bb = 0; bb < a.batch(); ++bb) {
    for (int c = 0; c < a.channels(); ++c) {
      std::memcpy(out.slab(bb, c), a.slab(bb, c), S * sizeof(float));
    }
    for (int c = 0; c < b.channels(); ++c) {
      std::memcpy(out.slab(bb, a.channels() + c), b.slab(bb, c), S * sizeof(float));
    }
  }
  return out;
}

void split_channels(const Tensor5& grad, int a_channels, Tensor5& grad_a, Tensor5& grad_b) {
  const int bc = grad.channels() - a_channels;
  if (a_channels < 1 || bc < 1) throw ShapeError("split_channels: bad channel split");
  grad_a = Tensor5({grad.batch(), a_channels, grad.nx(), grad.ny(), grad.nz()});
  grad_b = Tensor5({grad.batch(), bc, grad.nx(), grad.ny(), grad.nz()});
  const std::size_t S = grad.spatial();
  for (int b = 0; b < grad.batch(); ++b) {
    for (int c = 0; c < a_channels; ++c) {
      std::memcpy(grad_a.slab(b, c), grad.slab(b, c), S * sizeof(float));
    }
    for (int c = 0; c < bc; ++c) {
      std::memcpy(grad_b.slab(b, c), grad.slab(b, a_channels + c), S * sizeof(float));
    }
  }
}

std::pair<double, Tensor5> mse_loss(const Tensor5& pred, const Tensor5& target) {
  if (!pred.same_shape(target)) throw ShapeError("mse_loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  Tensor5 grad(pred.shape);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - target.data[i];
    acc += d * d;
    grad.data[i] = static_cast<float>(2.0 * d / n);
  }
  return {acc / n, std::move(grad)};
}

}  // namespace descatter3d
