#include "descatter3d/tensor.hpp"

#include <algorithm>

#include "descatter3d/errors.hpp"

namespace descatter3d {

Tensor5::Tensor5(std::array<int, 5> s) : shape(s) {
  for (int d : s) {
    if (d < 1) throw ShapeError("Tensor5: all dims must be >= 1");
  }
  data.assign(size(), 0.f);
}

void Tensor5::fill(float v) { std::fill(data.begin(), data.end(), v); }

}  // namespace descatter3d
