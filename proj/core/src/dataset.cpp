#include "descatter3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "descatter3d/errors.hpp"
#include "descatter3d/rng.hpp"

namespace descatter3d {

namespace fs = std::filesystem;
using nlohmann::json;

std::size_t DatasetManifest::train_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.train ? 1 : 0;
  return n;
}

std::size_t DatasetManifest::val_count() const { return records.size() - train_count(); }

std::vector<std::array<int, 3>> random_cube_corners(std::array<int, 3> vol_dims,
                                                    std::array<int, 3> cube_dims, int n,
                                                    std::uint64_t seed) {
  for (int a = 0; a < 3; ++a) {
    if (cube_dims[a] < 1 || cube_dims[a] > vol_dims[a]) {
      throw InvalidDims("random_cube_corners: cube larger than volume");
    }
  }
  if (n < 0) throw InvalidDims("random_cube_corners: n must be >= 0");

  CounterRng rng = CounterRng::stream(seed, 0x636f726eull);  // corner stream
  std::vector<std::array<int, 3>> corners(n);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      const std::uint64_t span = static_cast<std::uint64_t>(vol_dims[a] - cube_dims[a]) + 1;
      corners[i][a] = static_cast<int>(rng.next_below(span));
    }
  }
  return corners;
}

std::vector<CubePair> extract_cubes(const Volume& input, const Volume& target, int n,
                                    std::array<int, 3> cube_dims, std::uint64_t seed,
                                    int source_id) {
  if (input.dims != target.dims) {
    throw InvalidDims("extract_cubes: input and target dims differ");
  }
  const auto corners = random_cube_corners(input.dims, cube_dims, n, seed);
  std::vector<CubePair> cubes;
  cubes.reserve(corners.size());
  for (const auto& c : corners) {
    CubePair p;
    p.input = crop_volume(input, c, cube_dims);
    p.target = crop_volume(target, c, cube_dims);
    p.source_id = source_id;
    p.corner = c;
    p.seed = seed;
    cubes.push_back(std::move(p));
  }
  return cubes;
}

std::vector<bool> split_tags(std::size_t n, double train_fraction, std::uint64_t seed) {
  if (n == 0) throw EmptyDataset("split_tags: no cubes to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidDims("split_tags: train_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng = CounterRng::stream(seed, 0x73706c69ull);  // split stream
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng.next_below(i + 1);
    std::swap(order[i], order[j]);
  }
  const std::size_t n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n)));
  std::vector<bool> tags(n, false);
  for (std::size_t k = 0; k < n_train; ++k) tags[order[k]] = true;
  return tags;
}

DatasetManifest make_manifest(const std::vector<CubePair>& cubes, std::array<int, 3> cube_dims,
                              double train_fraction, std::uint64_t seed, double percentile) {
  const auto tags = split_tags(cubes.size(), train_fraction, seed);
  DatasetManifest m;
  m.cube_dims = cube_dims;
  m.seed = seed;
  m.percentile = percentile;
  m.records.reserve(cubes.size());
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    m.records.push_back({cubes[i].source_id, cubes[i].corner, tags[i]});
  }
  if (m.train_count() == 0) {
    m.warning = "ConfigurationWarning: train split is empty";
  }
  return m;
}

namespace {

json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["cube_dims"] = m.cube_dims;
  j["seed"] = m.seed;
  j["percentile"] = m.percentile;
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back({{"source", r.source},
                       {"corner", r.corner},
                       {"split", r.train ? "train" : "val"}});
  }
  j["records"] = std::move(records);
  if (!m.warning.empty()) j["warning"] = m.warning;
  return j;
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  j.at("cube_dims").get_to(m.cube_dims);
  j.at("seed").get_to(m.seed);
  j.at("percentile").get_to(m.percentile);
  for (const auto& r : j.at("records")) {
    CubeRecord rec;
    r.at("source").get_to(rec.source);
    r.at("corner").get_to(rec.corner);
    const std::string split = r.at("split").get<std::string>();
    if (split != "train" && split != "val") {
      throw FormatError("manifest: split must be train or val");
    }
    rec.train = split == "train";
    m.records.push_back(rec);
  }
  if (j.contains("warning")) j.at("warning").get_to(m.warning);
  return m;
}

}  // namespace

void save_manifest(const std::string& dir, const DatasetManifest& manifest) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
  if (!f) throw FormatError("save_manifest: cannot open manifest.json in " + dir);
  f << manifest_to_json(manifest).dump(2) << "\n";
}

void save_dataset(const std::string& dir, const DatasetManifest& manifest,
                  const std::vector<CubePair>& cubes) {
  if (cubes.size() != manifest.records.size()) {
    throw InvalidDims("save_dataset: cube count does not match manifest");
  }
  save_manifest(dir, manifest);
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const std::string stem = "cube_" + std::to_string(i);
    save_volume(cubes[i].input, (fs::path(dir) / (stem + "_in.dvol")).string());
    save_volume(cubes[i].target, (fs::path(dir) / (stem + "_gt.dvol")).string());
  }
}

DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw FormatError("load_manifest: cannot open manifest.json in " + dir);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_manifest: parse error: ") + e.what());
  }
  try {
    return manifest_from_json(j);
  } catch (const json::exception& e) {
    throw FormatError(std::string("load_manifest: bad manifest: ") + e.what());
  }
}

std::pair<Volume, Volume> load_cube(const std::string& dir, std::size_t idx) {
  const std::string stem = "cube_" + std::to_string(idx);
  Volume in = load_volume((fs::path(dir) / (stem + "_in.dvol")).string());
  Volume gt = load_volume((fs::path(dir) / (stem + "_gt.dvol")).string());
  return {std::move(in), std::move(gt)};
}

}  // namespace descatter3d
