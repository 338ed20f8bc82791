#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "descatter3d/rng.hpp"
#include "descatter3d/volume.hpp"

namespace testutil {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("descatter3d_" + tag + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
  static inline int counter_ = 0;
};

inline descatter3d::Volume random_volume(std::array<int, 3> dims, std::uint64_t seed,
                                         float scale = 1.f) {
  descatter3d::Volume vol(dims, {0.25f, 0.25f, 1.f});
  descatter3d::CounterRng rng(seed);
  for (float& v : vol.data) v = scale * static_cast<float>(rng.next_double());
  return vol;
}

inline bool bytes_equal(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return da == db;
}

}  // namespace testutil
