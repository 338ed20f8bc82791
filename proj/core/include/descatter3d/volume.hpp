#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace descatter3d {

/// A 3D scalar field on a regular voxel grid with physical metadata.
///
/// data is stored x-fastest row-major: index = x + nx*(y + ny*z).
/// pitch is the voxel size in micrometers per axis; depth_offset is the
/// tissue depth of plane z = 0, so plane k sits at depth_offset + k*dz.
/// Values are nonnegative 32-bit floats; every public operation in this
/// library keeps them finite and >= 0.
struct Volume {
  std::array<int, 3> dims{1, 1, 1};        // nx, ny, nz
  std::array<float, 3> pitch{1.f, 1.f, 1.f};  // um per voxel
  float depth_offset = 0.f;                // um
  std::vector<float> data;

  Volume() = default;
  Volume(std::array<int, 3> d, std::array<float, 3> p, float off = 0.f);

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(z) * dims[0] * dims[1] +
           static_cast<std::size_t>(y) * dims[0] + x;
  }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }

  float plane_depth(int z) const { return depth_offset + z * pitch[2]; }

  const float* plane(int z) const { return data.data() + index(0, 0, z); }
  float* plane(int z) { return data.data() + index(0, 0, z); }

  // Throws InvalidDims / DegenerateVolume if an invariant is broken.
  void validate() const;
};

/// Trilinear resampling to new_dims with corner alignment and edge clamp.
/// The output pitch is rescaled so the physical extent pitch*(dims-1) is
/// preserved per axis. Resampling to identical dims copies bit-exactly.
Volume trilinear_resample(const Volume& vol, std::array<int, 3> new_dims);

/// Divides the volume by the given percentile of its positive voxel values
/// and clamps to [0, 2]. Returns the normalized volume and the scale.
/// Throws DegenerateVolume when no voxel is positive.
std::pair<Volume, float> normalize_volume(const Volume& vol, double percentile = 99.9);

/// Percentile of the positive voxel values (rank ceil(q/100*n)-1 of the
/// ascending sort). Throws DegenerateVolume when no voxel is positive.
float positive_percentile(const Volume& vol, double percentile);

/// Percentile over all voxel values, zeros included.
float value_percentile(const Volume& vol, double percentile);

// .dvol binary container: 40-byte header ("DVOL", version 1, dims, pitch,
// depth_offset, dtype 0 = LE f32) followed by the raw voxel payload.
// save followed by load is bit-identical.
void save_volume(const Volume& vol, const std::string& path);
Volume load_volume(const std::string& path);

/// Extracts the cube at the given corner (inclusive) with the given dims.
/// The cube inherits pitch and the depth of its top plane.
Volume crop_volume(const Volume& vol, std::array<int, 3> corner, std::array<int, 3> cube_dims);

}  // namespace descatter3d
