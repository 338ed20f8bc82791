#include "descatter3d/scatter.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>

#include "descatter3d/errors.hpp"
#include "descatter3d/rng.hpp"
#include "descatter3d/threading.hpp"

namespace descatter3d {

void ScatterParams::validate() const {
  if (!(ell_s > 0.0)) throw InvalidDims("ScatterParams: ell_s must be > 0");
  if (!(sigma_b > 0.0)) throw InvalidDims("ScatterParams: sigma_b must be > 0");
  if (!(sigma_s0 >= sigma_b)) throw InvalidDims("ScatterParams: sigma_s0 must be >= sigma_b");
  if (!(k_s >= 0.0)) throw InvalidDims("ScatterParams: k_s must be >= 0");
  if (!(truncation >= 3.0)) throw InvalidDims("ScatterParams: truncation must be >= 3");
  if (max_kernel_radius < 1) throw InvalidDims("ScatterParams: max_kernel_radius must be >= 1");
}

void Kernel2D::validate() const {
  if (radius < 0) throw InvalidDims("Kernel2D: radius must be >= 0");
  const std::size_t n = static_cast<std::size_t>(width()) * width();
  if (weights.size() != n) throw InvalidDims("Kernel2D: weight count mismatch");
  if (!(pitch > 0.0)) throw InvalidDims("Kernel2D: pitch must be > 0");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidDims("Kernel2D: weights must be >= 0");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-6) throw InvalidDims("Kernel2D: weights must sum to 1");
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i) {
      if (at(i, j) != at(-i, -j)) throw InvalidDims("Kernel2D: not centrally symmetric");
    }
  }
}

void NoiseParams::validate() const {
  if (!(gain > 0.0)) throw InvalidDims("NoiseParams: gain must be > 0");
}

Kernel2D build_spsf(double z_depth, const ScatterParams& params, double pitch_xy) {
  params.validate();
  if (!(z_depth >= 0.0)) throw InvalidDims("build_spsf: z_depth must be >= 0");
  if (!(pitch_xy > 0.0)) throw InvalidDims("build_spsf: pitch_xy must be > 0");

  const double w_b = std::exp(-z_depth / params.ell_s);
  const double sigma_s = params.sigma_s0 + params.k_s * z_depth;
  const int radius = static_cast<int>(std::ceil(params.truncation * sigma_s / pitch_xy));
  if (radius > params.max_kernel_radius) {
    throw KernelTooLarge("build_spsf: kernel radius " + std::to_string(radius) +
                         " exceeds maximum " + std::to_string(params.max_kernel_radius));
  }

  Kernel2D k;
  k.radius = radius;
  k.pitch = pitch_xy;
  k.weights.resize(static_cast<std::size_t>(k.width()) * k.width());

  const double nb = 1.0 / (2.0 * M_PI * params.sigma_b * params.sigma_b);
  const double ns = 1.0 / (2.0 * M_PI * sigma_s * sigma_s);
  const double ib = -0.5 / (params.sigma_b * params.sigma_b);
  const double is = -0.5 / (sigma_s * sigma_s);

  double sum = 0.0;
  std::size_t idx = 0;
  for (int j = -radius; j <= radius; ++j) {
    for (int i = -radius; i <= radius; ++i, ++idx) {
      const double r2 = (static_cast<double>(i) * i + static_cast<double>(j) * j) *
                        pitch_xy * pitch_xy;
      const double w = w_b * nb * std::exp(ib * r2) + (1.0 - w_b) * ns * std::exp(is * r2);
      k.weights[idx] = w;
      sum += w;
    }
  }
  for (double& w : k.weights) w /= sum;
  return k;
}

namespace {

std::vector<float> convolve_direct(const float* plane, int nx, int ny, const Kernel2D& kernel) {
  const int r = kernel.radius;
  std::vector<float> out(static_cast<std::size_t>(nx) * ny);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      double acc = 0.0;
      const int jlo = std::max(-r, y - ny + 1), jhi = std::min(r, y);
      const int ilo = std::max(-r, x - nx + 1), ihi = std::min(r, x);
      for (int j = jlo; j <= jhi; ++j) {
        const float* row = plane + static_cast<std::size_t>(y - j) * nx;
        const double* krow =
            kernel.weights.data() + static_cast<std::size_t>(j + r) * kernel.width() + r;
        for (int i = ilo; i <= ihi; ++i) {
          acc += krow[i] * row[x - i];
        }
      }
      out[static_cast<std::size_t>(y) * nx + x] = static_cast<float>(acc < 0.0 ? 0.0 : acc);
    }
  }
  return out;
}

// Smallest size >= n with no prime factor above 7 (FFTW stays fast there).
int next_fast_size(int n) {
  for (int s = n;; ++s) {
    int m = s;
    for (int f : {2, 3, 5, 7}) {
      while (m % f == 0) m /= f;
    }
    if (m == 1) return s;
  }
}

std::mutex g_fftw_plan_mutex;  // FFTW planning is not thread-safe

struct FftwBuffer {
  double* p = nullptr;
  explicit FftwBuffer(std::size_t n) : p(fftw_alloc_real(n)) { std::memset(p, 0, n * sizeof(double)); }
  ~FftwBuffer() { fftw_free(p); }
};
struct FftwComplexBuffer {
  fftw_complex* p = nullptr;
  explicit FftwComplexBuffer(std::size_t n) : p(fftw_alloc_complex(n)) {}
  ~FftwComplexBuffer() { fftw_free(p); }
};

std::vector<float> convolve_fft(const float* plane, int nx, int ny, const Kernel2D& kernel) {
  const int r = kernel.radius;
  const int px = next_fast_size(nx + 2 * r);
  const int py = next_fast_size(ny + 2 * r);
  const std::size_t real_n = static_cast<std::size_t>(px) * py;
  const std::size_t cplx_n = static_cast<std::size_t>(py) * (px / 2 + 1);

  FftwBuffer in(real_n), ker(real_n), res(real_n);
  FftwComplexBuffer fin(cplx_n), fker(cplx_n);

  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      in.p[static_cast<std::size_t>(y) * px + x] = plane[static_cast<std::size_t>(y) * nx + x];
    }
  }
  // Kernel center sits at (0, 0) with negative taps wrapped around.
  for (int j = -r; j <= r; ++j) {
    const int wy = (j + py) % py;
    for (int i = -r; i <= r; ++i) {
      const int wx = (i + px) % px;
      ker.p[static_cast<std::size_t>(wy) * px + wx] = kernel.at(i, j);
    }
  }

  fftw_plan pf_in, pf_ker, pb;
  {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    pf_in = fftw_plan_dft_r2c_2d(py, px, in.p, fin.p, FFTW_ESTIMATE);
    pf_ker = fftw_plan_dft_r2c_2d(py, px, ker.p, fker.p, FFTW_ESTIMATE);
    pb = fftw_plan_dft_c2r_2d(py, px, fin.p, res.p, FFTW_ESTIMATE);
  }
  fftw_execute(pf_in);
  fftw_execute(pf_ker);
  const double scale = 1.0 / static_cast<double>(real_n);
  for (std::size_t i = 0; i < cplx_n; ++i) {
    const double re = fin.p[i][0] * fker.p[i][0] - fin.p[i][1] * fker.p[i][1];
    const double im = fin.p[i][0] * fker.p[i][1] + fin.p[i][1] * fker.p[i][0];
    fin.p[i][0] = re * scale;
    fin.p[i][1] = im * scale;
  }
  fftw_execute(pb);
  {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fftw_destroy_plan(pf_in);
    fftw_destroy_plan(pf_ker);
    fftw_destroy_plan(pb);
  }

  std::vector<float> out(static_cast<std::size_t>(nx) * ny);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      const double v = res.p[static_cast<std::size_t>(y) * px + x];
      out[static_cast<std::size_t>(y) * nx + x] = static_cast<float>(v < 0.0 ? 0.0 : v);
    }
  }
  return out;
}

}  // namespace

std::vector<float> convolve_plane(const float* plane, int nx, int ny, const Kernel2D& kernel,
                                  ConvBackend backend) {
  if (nx < 1 || ny < 1) throw InvalidDims("convolve_plane: plane dims must be >= 1");
  kernel.validate();
  if (backend == ConvBackend::kAuto) {
    backend = kernel.radius > 8 ? ConvBackend::kFft : ConvBackend::kDirect;
  }
  return backend == ConvBackend::kFft ? convolve_fft(plane, nx, ny, kernel)
                                      : convolve_direct(plane, nx, ny, kernel);
}

Volume scatter_volume(const Volume& truth, const ScatterParams& params, ConvBackend backend) {
  truth.validate();
  params.validate();
  if (std::fabs(truth.pitch[0] - truth.pitch[1]) > 1e-9f) {
    throw InvalidDims("scatter_volume: XY pitch must be isotropic");
  }
  const int nx = truth.dims[0], ny = truth.dims[1], nz = truth.dims[2];

  Volume out(truth.dims, truth.pitch, truth.depth_offset);
  // Kernel build can throw KernelTooLarge: probe the deepest plane up front
  // so a failure surfaces before any parallel work starts.
  build_spsf(truth.plane_depth(nz - 1), params, truth.pitch[0]);

  parallel_for(nz, [&](std::int64_t z) {
    const Kernel2D k = build_spsf(truth.plane_depth(static_cast<int>(z)), params, truth.pitch[0]);
    const std::vector<float> conv = convolve_plane(truth.plane(static_cast<int>(z)), nx, ny, k, backend);
    std::memcpy(out.plane(static_cast<int>(z)), conv.data(), conv.size() * sizeof(float));
  });
  return out;
}

Volume apply_forward_model(const Volume& truth, const ScatterParams& params,
                           const NoiseParams& noise, ConvBackend backend) {
  noise.validate();
  Volume out = scatter_volume(truth, params, backend);
  const int nx = out.dims[0], ny = out.dims[1], nz = out.dims[2];
  const std::size_t plane_n = static_cast<std::size_t>(nx) * ny;
  const double gain = noise.gain;

  parallel_for(nz, [&](std::int64_t z) {
    CounterRng rng = CounterRng::stream(noise.seed, static_cast<std::uint64_t>(z));
    float* p = out.plane(static_cast<int>(z));
    for (std::size_t i = 0; i < plane_n; ++i) {
      const double lambda = gain * static_cast<double>(p[i]);
      p[i] = static_cast<float>(static_cast<double>(poisson_sample(lambda, rng)) / gain);
    }
  });
  return out;
}

}  // namespace descatter3d
