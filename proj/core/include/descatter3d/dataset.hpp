#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "descatter3d/volume.hpp"

namespace descatter3d {

/// A matched (scattered input, ground truth) training sample with the
/// provenance needed to reproduce it.
struct CubePair {
  Volume input;
  Volume target;
  int source_id = 0;
  std::array<int, 3> corner{0, 0, 0};
  std::uint64_t seed = 0;
};

struct CubeRecord {
  int source = 0;
  std::array<int, 3> corner{0, 0, 0};
  bool train = true;
};

struct DatasetManifest {
  std::array<int, 3> cube_dims{0, 0, 0};
  std::uint64_t seed = 0;
  double percentile = 99.9;
  std::vector<CubeRecord> records;
  std::string warning;  // nonempty when the split is degenerate

  std::size_t train_count() const;
  std::size_t val_count() const;
};

/// Uniformly random cube corners such that every cube lies fully inside the
/// volume (corner axis range [0, vol - cube] inclusive). Deterministic per
/// seed. Throws InvalidDims when the cube exceeds the volume.
std::vector<std::array<int, 3>> random_cube_corners(std::array<int, 3> vol_dims,
                                                    std::array<int, 3> cube_dims, int n,
                                                    std::uint64_t seed);

/// Crops n random matched cubes out of a co-registered (input, target) pair.
/// Both volumes must share dims.
std::vector<CubePair> extract_cubes(const Volume& input, const Volume& target, int n,
                                    std::array<int, 3> cube_dims, std::uint64_t seed,
                                    int source_id = 0);

/// Deterministic shuffle, then the first floor(fraction * n) cubes are
/// tagged train and the remainder val. Returns one flag per index in the
/// original order. Throws EmptyDataset for n == 0.
std::vector<bool> split_tags(std::size_t n, double train_fraction, std::uint64_t seed);

/// Builds the manifest for a cube list: applies split_tags and records
/// provenance. Sets .warning when the train split comes out empty.
DatasetManifest make_manifest(const std::vector<CubePair>& cubes, std::array<int, 3> cube_dims,
                              double train_fraction, std::uint64_t seed, double percentile);

// Dataset directory layout: manifest.json plus cube_<idx>_in.dvol /
// cube_<idx>_gt.dvol pairs, idx being the record position.
void save_dataset(const std::string& dir, const DatasetManifest& manifest,
                  const std::vector<CubePair>& cubes);
DatasetManifest load_manifest(const std::string& dir);
void save_manifest(const std::string& dir, const DatasetManifest& manifest);
std::pair<Volume, Volume> load_cube(const std::string& dir, std::size_t idx);

}  // namespace descatter3d
