#include "descatter3d/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "descatter3d/errors.hpp"

namespace descatter3d {

Volume::Volume(std::array<int, 3> d, std::array<float, 3> p, float off)
    : dims(d), pitch(p), depth_offset(off) {
  if (d[0] < 1 || d[1] < 1 || d[2] < 1) {
    throw InvalidDims("Volume: all dims must be >= 1");
  }
  if (!(p[0] > 0.f && p[1] > 0.f && p[2] > 0.f)) {
    throw InvalidDims("Volume: all pitches must be > 0");
  }
  if (off < 0.f) {
    throw InvalidDims("Volume: depth_offset must be >= 0");
  }
  data.assign(size(), 0.f);
}

void Volume::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
    throw InvalidDims("Volume: all dims must be >= 1");
  }
  if (!(pitch[0] > 0.f && pitch[1] > 0.f && pitch[2] > 0.f)) {
    throw InvalidDims("Volume: all pitches must be > 0");
  }
  if (depth_offset < 0.f) {
    throw InvalidDims("Volume: depth_offset must be >= 0");
  }
  if (data.size() != size()) {
    throw InvalidDims("Volume: data length does not match dims");
  }
  for (float v : data) {
    if (!std::isfinite(v) || v < 0.f) {
      throw DegenerateVolume("Volume: values must be finite and >= 0");
    }
  }
}

Volume trilinear_resample(const Volume& vol, std::array<int, 3> new_dims) {
  if (new_dims[0] < 1 || new_dims[1] < 1 || new_dims[2] < 1) {
    throw InvalidDims("trilinear_resample: target dims must be >= 1");
  }
  if (new_dims == vol.dims) {
    return vol;
  }

  // Corner-aligned: output sample i maps to source coordinate
  // i * (n_old - 1) / (n_new - 1); extent pitch*(dims-1) is preserved.
  std::array<float, 3> new_pitch{};
  std::array<double, 3> step{};
  for (int a = 0; a < 3; ++a) {
    const double extent = static_cast<double>(vol.pitch[a]) * (vol.dims[a] - 1);
    if (new_dims[a] > 1) {
      step[a] = static_cast<double>(vol.dims[a] - 1) / (new_dims[a] - 1);
      new_pitch[a] = static_cast<float>(extent / (new_dims[a] - 1));
      if (new_pitch[a] <= 0.f) new_pitch[a] = vol.pitch[a];  // source was a single plane
    } else {
      step[a] = 0.0;
      new_pitch[a] = vol.pitch[a];
    }
  }

  Volume out(new_dims, new_pitch, vol.depth_offset);
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  auto clamp = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };

  std::size_t idx = 0;
  for (int z = 0; z < new_dims[2]; ++z) {
    const double fz = z * step[2];
    const int z0 = clamp(static_cast<int>(fz), nz - 1);
    const int z1 = clamp(z0 + 1, nz - 1);
    const double tz = fz - z0;
    for (int y = 0; y < new_dims[1]; ++y) {
      const double fy = y * step[1];
      const int y0 = clamp(static_cast<int>(fy), ny - 1);
      const int y1 = clamp(y0 + 1, ny - 1);
      const double ty = fy - y0;
      for (int x = 0; x < new_dims[0]; ++x, ++idx) {
        const double fx = x * step[0];
        const int x0 = clamp(static_cast<int>(fx), nx - 1);
        const int x1 = clamp(x0 + 1, nx - 1);
        const double tx = fx - x0;

        const double c000 = vol.at(x0, y0, z0), c100 = vol.at(x1, y0, z0);
        const double c010 = vol.at(x0, y1, z0), c110 = vol.at(x1, y1, z0);
        const double c001 = vol.at(x0, y0, z1), c101 = vol.at(x1, y0, z1);
        const double c011 = vol.at(x0, y1, z1), c111 = vol.at(x1, y1, z1);

        const double c00 = c000 + (c100 - c000) * tx;
        const double c10 = c010 + (c110 - c010) * tx;
        const double c01 = c001 + (c101 - c001) * tx;
        const double c11 = c011 + (c111 - c011) * tx;
        const double c0 = c00 + (c10 - c00) * ty;
        const double c1 = c01 + (c11 - c01) * ty;
        double v = c0 + (c1 - c0) * tz;
        if (v < 0.0) v = 0.0;
        out.data[idx] = static_cast<float>(v);
      }
    }
  }
  return out;
}

float positive_percentile(const Volume& vol, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw InvalidDims("percentile must be in (0, 100]");
  }
  std::vector<float> pos;
  pos.reserve(vol.data.size());
  for (float v : vol.data) {
    if (v > 0.f) pos.push_back(v);
  }
  if (pos.empty()) {
    throw DegenerateVolume("positive_percentile: volume has no positive voxel");
  }
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(percentile / 100.0 * static_cast<double>(pos.size())));
  rank = std::min(std::max<std::size_t>(rank, 1), pos.size()) - 1;
  std::nth_element(pos.begin(), pos.begin() + rank, pos.end());
  return pos[rank];
}

float value_percentile(const Volume& vol, double percentile) {
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    throw InvalidDims("percentile must be in [0, 100]");
  }
  std::vector<float> vals(vol.data);
  if (vals.empty()) {
    throw DegenerateVolume("value_percentile: empty volume");
  }
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(percentile / 100.0 * static_cast<double>(vals.size())));
  rank = std::min(std::max<std::size_t>(rank, 1), vals.size()) - 1;
  std::nth_element(vals.begin(), vals.begin() + rank, vals.end());
  return vals[rank];
}

std::pair<Volume, float> normalize_volume(const Volume& vol, double percentile) {
  const float scale = positive_percentile(vol, percentile);
  Volume out = vol;
  const float inv = 1.f / scale;
  for (float& v : out.data) {
    v = std::min(std::max(v * inv, 0.f), 2.f);
  }
  return {std::move(out), scale};
}

namespace {

constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kDtypeF32 = 0;
constexpr std::size_t kHeaderSize = 40;

void put_u16(unsigned char* p, std::uint16_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>(v >> 8);
}
void put_u32(unsigned char* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}
void put_f32(unsigned char* p, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(p, bits);
}
std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_volume(const Volume& vol, const std::string& path) {
  vol.validate();
  unsigned char hdr[kHeaderSize] = {};
  std::memcpy(hdr, "DVOL", 4);
  put_u16(hdr + 4, kVersion);
  for (int a = 0; a < 3; ++a) put_u32(hdr + 6 + 4 * a, static_cast<std::uint32_t>(vol.dims[a]));
  for (int a = 0; a < 3; ++a) put_f32(hdr + 18 + 4 * a, vol.pitch[a]);
  put_f32(hdr + 30, vol.depth_offset);
  put_u16(hdr + 34, kDtypeF32);
  // bytes 36-39 reserved zero

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw FormatError("save_volume: cannot open " + path);
  }
  f.write(reinterpret_cast<const char*>(hdr), kHeaderSize);

  // Host little-endian float payload maps directly; serialize per-voxel
  // otherwise.
  std::vector<unsigned char> buf(vol.data.size() * 4);
  for (std::size_t i = 0; i < vol.data.size(); ++i) {
    put_f32(buf.data() + 4 * i, vol.data[i]);
  }
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) {
    throw FormatError("save_volume: write failed for " + path);
  }
}

Volume load_volume(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw FormatError("load_volume: cannot open " + path);
  }
  unsigned char hdr[kHeaderSize];
  f.read(reinterpret_cast<char*>(hdr), kHeaderSize);
  if (f.gcount() != static_cast<std::streamsize>(kHeaderSize)) {
    throw FormatError("load_volume: truncated header in " + path);
  }
  if (std::memcmp(hdr, "DVOL", 4) != 0) {
    throw FormatError("load_volume: bad magic in " + path);
  }
  if (get_u16(hdr + 4) != kVersion) {
    throw FormatError("load_volume: unsupported version in " + path);
  }
  if (get_u16(hdr + 34) != kDtypeF32) {
    throw FormatError("load_volume: unsupported dtype in " + path);
  }

  Volume vol;
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t d = get_u32(hdr + 6 + 4 * a);
    if (d < 1 || d > (1u << 24)) {
      throw FormatError("load_volume: bad dims in " + path);
    }
    vol.dims[a] = static_cast<int>(d);
  }
  for (int a = 0; a < 3; ++a) vol.pitch[a] = get_f32(hdr + 18 + 4 * a);
  vol.depth_offset = get_f32(hdr + 30);

  const std::size_t n = vol.size();
  std::vector<unsigned char> buf(n * 4);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw FormatError("load_volume: truncated payload in " + path);
  }
  vol.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    vol.data[i] = get_f32(buf.data() + 4 * i);
  }

  try {
    vol.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("load_volume: invalid content: ") + e.what());
  }
  return vol;
}

Volume crop_volume(const Volume& vol, std::array<int, 3> corner, std::array<int, 3> cube_dims) {
  for (int a = 0; a < 3; ++a) {
    if (corner[a] < 0 || cube_dims[a] < 1 || corner[a] + cube_dims[a] > vol.dims[a]) {
      throw InvalidDims("crop_volume: cube exceeds volume bounds");
    }
  }
  Volume out(cube_dims, vol.pitch, vol.plane_depth(corner[2]));
  for (int z = 0; z < cube_dims[2]; ++z) {
    for (int y = 0; y < cube_dims[1]; ++y) {
      const float* src = &vol.data[vol.index(corner[0], corner[1] + y, corner[2] + z)];
      float* dst = &out.data[out.index(0, y, z)];
      std::memcpy(dst, src, sizeof(float) * cube_dims[0]);
    }
  }
  return out;
}

}  // namespace descatter3d
