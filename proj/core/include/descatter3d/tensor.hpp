#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace descatter3d {

/// Dense 5D activation tensor, shape (batch, channels, x, y, z), 32-bit
/// float, x-fastest within each (batch, channel) slab and z slowest — the
/// same spatial layout as Volume.
struct Tensor5 {
  std::array<int, 5> shape{1, 1, 1, 1, 1};  // b, c, x, y, z
  std::vector<float> data;

  Tensor5() = default;
  explicit Tensor5(std::array<int, 5> s);

  int batch() const { return shape[0]; }
  int channels() const { return shape[1]; }
  int nx() const { return shape[2]; }
  int ny() const { return shape[3]; }
  int nz() const { return shape[4]; }

  std::size_t spatial() const {
    return static_cast<std::size_t>(shape[2]) * shape[3] * shape[4];
  }
  std::size_t size() const {
    return static_cast<std::size_t>(shape[0]) * shape[1] * spatial();
  }

  std::size_t offset(int b, int c) const {
    return (static_cast<std::size_t>(b) * shape[1] + c) * spatial();
  }
  std::size_t index(int b, int c, int x, int y, int z) const {
    return offset(b, c) + (static_cast<std::size_t>(z) * shape[3] + y) * shape[2] + x;
  }
  float at(int b, int c, int x, int y, int z) const { return data[index(b, c, x, y, z)]; }
  float& at(int b, int c, int x, int y, int z) { return data[index(b, c, x, y, z)]; }

  const float* slab(int b, int c) const { return data.data() + offset(b, c); }
  float* slab(int b, int c) { return data.data() + offset(b, c); }

  void fill(float v);
  bool same_shape(const Tensor5& o) const { return shape == o.shape; }
};

}  // namespace descatter3d
