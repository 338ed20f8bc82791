#include "descatter3d/image_png.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "descatter3d/errors.hpp"

namespace descatter3d {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

constexpr std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace

void write_png_gray8(const std::string& path, const std::vector<std::uint8_t>& pixels, int width,
                     int height) {
  if (width < 1 || height < 1) throw InvalidDims("write_png_gray8: bad dimensions");
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidDims("write_png_gray8: pixel count mismatch");
  }

  // Scanlines with a leading filter-0 byte.
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (width + 1));
  for (int y = 0; y < height; ++y) {
    raw[static_cast<std::size_t>(y) * (width + 1)] = 0;
    std::memcpy(&raw[static_cast<std::size_t>(y) * (width + 1) + 1],
                &pixels[static_cast<std::size_t>(y) * width], width);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(comp_len);
  if (compress2(compressed.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK) {
    throw FormatError("write_png_gray8: deflate failed");
  }
  compressed.resize(comp_len);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace

  std::vector<std::uint8_t> png(kSignature, kSignature + 8);
  append_chunk(png, "IHDR", ihdr);
  append_chunk(png, "IDAT", compressed);
  append_chunk(png, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("write_png_gray8: cannot open " + path);
  f.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!f) throw FormatError("write_png_gray8: write failed for " + path);
}

std::vector<std::uint8_t> read_png_gray8(const std::string& path, int& width, int& height) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_png_gray8: cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 8 || std::memcmp(buf.data(), kSignature, 8) != 0) {
    throw FormatError("read_png_gray8: not a PNG");
  }

  auto be32 = [&](std::size_t off) {
    return (static_cast<std::uint32_t>(buf[off]) << 24) |
           (static_cast<std::uint32_t>(buf[off + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[off + 2]) << 8) | buf[off + 3];
  };

  width = height = 0;
  std::vector<std::uint8_t> idat;
  std::size_t off = 8;
  while (off + 8 <= buf.size()) {
    const std::uint32_t len = be32(off);
    const char* type = reinterpret_cast<const char*>(&buf[off + 4]);
    const std::size_t data = off + 8;
    if (data + len + 4 > buf.size()) throw FormatError("read_png_gray8: truncated chunk");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      width = static_cast<int>(be32(data));
      height = static_cast<int>(be32(data + 4));
      if (buf[data + 8] != 8 || buf[data + 9] != 0) {
        throw FormatError("read_png_gray8: only 8-bit grayscale supported");
      }
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), buf.begin() + data, buf.begin() + data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    off = data + len + 4;
  }
  if (width < 1 || height < 1 || idat.empty()) throw FormatError("read_png_gray8: missing data");

  std::vector<std::uint8_t> raw(static_cast<std::size_t>(height) * (width + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size()) {
    throw FormatError("read_png_gray8: inflate failed");
  }

  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    if (raw[static_cast<std::size_t>(y) * (width + 1)] != 0) {
      throw FormatError("read_png_gray8: unsupported scanline filter");
    }
    std::memcpy(&pixels[static_cast<std::size_t>(y) * width],
                &raw[static_cast<std::size_t>(y) * (width + 1) + 1], width);
  }
  return pixels;
}

std::vector<std::uint8_t> slice_pixels(const Volume& vol, int z_index, double lo_pct,
                                       double hi_pct) {
  if (z_index < 0 || z_index >= vol.dims[2]) {
    throw InvalidDims("slice_pixels: z index out of range");
  }
  const float lo = value_percentile(vol, lo_pct);
  const float hi = value_percentile(vol, hi_pct);

  const int nx = vol.dims[0], ny = vol.dims[1];
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(nx) * ny);
  if (!(hi > lo)) {
    std::fill(pixels.begin(), pixels.end(), 255);
    return pixels;
  }
  const double inv = 255.0 / (static_cast<double>(hi) - lo);
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      const double v = (vol.at(x, y, z_index) - lo) * inv;
      const double q = std::lround(std::clamp(v, 0.0, 255.0));
      pixels[static_cast<std::size_t>(y) * nx + x] = static_cast<std::uint8_t>(q);
    }
  }
  return pixels;
}

void render_slice(const Volume& vol, int z_index, const std::string& out_path, double lo_pct,
                  double hi_pct) {
  const auto pixels = slice_pixels(vol, z_index, lo_pct, hi_pct);
  write_png_gray8(out_path, pixels, vol.dims[0], vol.dims[1]);
}

}  // namespace descatter3d
