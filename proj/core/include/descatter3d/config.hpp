#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "descatter3d/dataset.hpp"
#include "descatter3d/metrics.hpp"
#include "descatter3d/network.hpp"
#include "descatter3d/phantom.hpp"
#include "descatter3d/scatter.hpp"
#include "descatter3d/tiling.hpp"
#include "descatter3d/trainer.hpp"

namespace descatter3d {

struct DatasetConfig {
  int cubes_per_volume = 134;
  std::array<int, 3> cube_dims{128, 128, 64};
  double train_fraction = 0.95;
  double normalize_percentile = 99.9;
  std::uint64_t seed = 3;
  std::vector<std::pair<std::string, std::string>> sources;  // (truth, input) paths
};

struct TilingConfig {
  std::array<int, 3> overlap{16, 16, 8};
  BlendMode blend = BlendMode::kCenterCrop;
};

/// The experiment record: a JSON document with sections phantom, scatter,
/// noise, dataset, network, train, tiling, eval. Missing fields take the
/// documented defaults; unknown keys are rejected naming the key path; a
/// parsed config re-serializes canonically (sorted keys, resolved
/// defaults), so echo(echo(x)) == echo(x) byte for byte.
class PipelineConfig {
 public:
  static PipelineConfig defaults();
  static PipelineConfig from_text(const std::string& json_text);
  static PipelineConfig from_file(const std::string& path);

  /// Applies a `--set section.key=value` override. The key must exist and
  /// the value must parse to the same JSON type.
  void apply_override(const std::string& assignment);

  std::string echo() const;
  const nlohmann::json& doc() const { return doc_; }

  PhantomSpec phantom() const;
  ScatterParams scatter() const;
  ConvBackend scatter_backend() const;
  NoiseParams noise() const;
  DatasetConfig dataset() const;
  NetworkConfig network() const;
  TrainConfig train() const;
  TilingConfig tiling() const;
  SpineCriteria eval_criteria() const;

 private:
  explicit PipelineConfig(nlohmann::json doc) : doc_(std::move(doc)) {}
  nlohmann::json doc_;
};

}  // namespace descatter3d
