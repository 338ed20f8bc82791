#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "descatter3d/volume.hpp"

namespace descatter3d {

/// Writes an 8-bit grayscale PNG (width x height, row-major). The encoder
/// always emits filter-0 scanlines at a fixed zlib level, so the container
/// bytes are deterministic.
void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& pixels, int width,
                     int height);

/// Decodes PNGs written by write_png_gray8 (8-bit gray, filter 0 only).
std::vector<std::uint8_t> read_png_gray8(const std::string& path, int& width, int& height);

/// Renders one z-slice to PNG: intensities map linearly from the volume's
/// [lo_pct, hi_pct] percentiles to [0, 255] with clamping. A zero-range
/// window (constant volume) maps everything to 255.
void render_slice(const Volume& vol, int z_index, const std::string& out_path,
                  double lo_pct = 0.1, double hi_pct = 99.9);

/// The quantized pixels render_slice would write, for callers that want
/// the array rather than the file.
std::vector<std::uint8_t> slice_pixels(const Volume& vol, int z_index, double lo_pct = 0.1,
                                       double hi_pct = 99.9);

}  // namespace descatter3d
