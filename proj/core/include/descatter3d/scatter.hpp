#pragma once

#include <cstdint>
#include <vector>

#include "descatter3d/volume.hpp"

namespace descatter3d {

/// Parameters of the depth-dependent scattering PSF.
///
/// The sPSF at depth z is a two-component mixture
///   P_s(r; z) = w_b * G(r; sigma_b) + (1 - w_b) * G(r; sigma_s(z))
/// with ballistic weight w_b = exp(-z / ell_s) and halo width
/// sigma_s(z) = sigma_s0 + k_s * z. G is an isotropic 2D Gaussian density.
struct ScatterParams {
  double ell_s = 50.0;      // um, scattering length of the ballistic decay
  double sigma_b = 0.3;     // um, ballistic (diffraction-limited) width
  double sigma_s0 = 2.0;    // um, halo width at z = 0
  double k_s = 0.15;        // halo width growth per um of depth
  double truncation = 4.0;  // kernel support cutoff, in multiples of sigma_s
  int max_kernel_radius = 256;  // voxels

  void validate() const;
};

/// A square centrally-symmetric convolution kernel with unit sum.
struct Kernel2D {
  int radius = 0;               // taps span [-radius, radius] per axis
  std::vector<double> weights;  // (2r+1)^2, row-major, unit sum
  double pitch = 1.0;           // um per tap

  int width() const { return 2 * radius + 1; }
  double at(int i, int j) const {  // i, j in [-radius, radius]
    return weights[static_cast<std::size_t>(j + radius) * width() + (i + radius)];
  }
  void validate() const;
};

struct NoiseParams {
  double gain = 50.0;  // expected photons per unit of normalized intensity
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ConvBackend { kAuto, kDirect, kFft };

/// Discretizes the sPSF at tissue depth z_depth on an XY grid of the given
/// pitch, truncated at truncation * sigma_s(z) and renormalized to unit sum.
/// Throws KernelTooLarge when the support exceeds max_kernel_radius.
Kernel2D build_spsf(double z_depth, const ScatterParams& params, double pitch_xy);

/// Linear convolution of one plane with zero-padded boundary; output dims
/// equal input dims. The direct backend is an explicit O(n^2 k^2) loop; the
/// fft backend multiplies in the frequency domain (FFTW, double precision).
/// kAuto picks fft when radius > 8.
std::vector<float> convolve_plane(const float* plane, int nx, int ny,
                                  const Kernel2D& kernel,
                                  ConvBackend backend = ConvBackend::kAuto);

/// The noiseless forward map: every z-plane convolved with the sPSF built
/// for its own tissue depth. Preserves dims, pitch, and depth_offset.
Volume scatter_volume(const Volume& truth, const ScatterParams& params,
                      ConvBackend backend = ConvBackend::kAuto);

/// The full forward model I_T(z) = P[I_P(z) * P_s(z)]: per-plane sPSF
/// convolution, then per-voxel Poisson sampling at the given gain (counts
/// scaled back to intensity units). One counter RNG stream per plane keyed
/// by (seed, plane index) keeps the result bit-identical under any
/// plane-parallel schedule.
Volume apply_forward_model(const Volume& truth, const ScatterParams& params,
                           const NoiseParams& noise,
                           ConvBackend backend = ConvBackend::kAuto);

}  // namespace descatter3d
