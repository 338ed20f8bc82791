#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "descatter3d/dataset.hpp"
#include "descatter3d/network.hpp"

namespace descatter3d {

struct TrainConfig {
  int max_epochs = 30;
  int steps_per_epoch = 300;
  int batch_size = 3;
  double lr = 1e-4;
  int early_stop_patience = 3;
  double early_stop_min_delta = 1e-4;  // relative improvement threshold
  std::uint64_t seed = 0;
  std::string checkpoint_dir;

  void validate() const;
};

struct TrainLogEntry {
  std::uint64_t step = 0;
  int epoch = 0;
  bool validation = false;
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  std::string stop_reason;  // max_epochs | early_stop | error
};

/// In-memory dataset view; cubes load lazily from the dataset directory
/// and stay cached.
class CubeStore {
 public:
  CubeStore(std::string dir, DatasetManifest manifest);
  static CubeStore open(const std::string& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<std::size_t>& train_indices() const { return train_; }
  const std::vector<std::size_t>& val_indices() const { return val_; }
  const CubePair& cube(std::size_t idx) const;

 private:
  std::string dir_;
  DatasetManifest manifest_;
  std::vector<std::size_t> train_, val_;
  mutable std::vector<CubePair> cache_;
  mutable std::vector<bool> loaded_;
};

struct TrainOutcome {
  TrainLog log;
  double best_val = 0.0;
  int best_epoch = -1;
  std::string best_checkpoint;
};

/// Runs the optimization loop: every step samples batch_size training cubes
/// uniformly with replacement (streams keyed by (seed, step), so resuming
/// replays the identical sequence), runs forward/MSE/backward/Adam; after
/// each epoch evaluates the validation split in eval mode, checkpoints, and
/// early-stops when the best validation loss fails to improve by
/// min_delta (relative) for patience consecutive epochs.
TrainOutcome train(const CubeStore& store, Network& net, const TrainConfig& cfg);

/// Continues training from a checkpoint written by train(); the combined
/// run is bit-identical to an uninterrupted one.
TrainOutcome resume_train(const CubeStore& store, const std::string& checkpoint_path,
                          const TrainConfig& cfg, Network* net_out = nullptr);

/// Eval-mode mean MSE over the validation split.
double evaluate_validation(const CubeStore& store, Network& net);

void write_train_log_csv(const TrainLog& log, const std::string& path);

}  // namespace descatter3d
