#include "descatter3d/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "descatter3d/errors.hpp"
#include "descatter3d/rng.hpp"

namespace descatter3d {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (max_epochs < 1 || steps_per_epoch < 1 || batch_size < 1) {
    throw InvalidDims("TrainConfig: counts must be >= 1");
  }
  if (early_stop_patience < 1) throw InvalidDims("TrainConfig: patience must be >= 1");
  if (!(early_stop_min_delta > 0.0 && early_stop_min_delta < 1.0)) {
    throw InvalidDims("TrainConfig: min_delta must be in (0, 1)");
  }
  if (!(lr > 0.0)) throw InvalidDims("TrainConfig: lr must be > 0");
}

CubeStore::CubeStore(std::string dir, DatasetManifest manifest)
    : dir_(std::move(dir)), manifest_(std::move(manifest)) {
  for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
    (manifest_.records[i].train ? train_ : val_).push_back(i);
  }
  cache_.resize(manifest_.records.size());
  loaded_.assign(manifest_.records.size(), false);
}

CubeStore CubeStore::open(const std::string& dir) {
  return CubeStore(dir, load_manifest(dir));
}

const CubePair& CubeStore::cube(std::size_t idx) const {
  if (idx >= cache_.size()) throw InvalidDims("CubeStore: cube index out of range");
  if (!loaded_[idx]) {
    auto [in, gt] = load_cube(dir_, idx);
    cache_[idx].input = std::move(in);
    cache_[idx].target = std::move(gt);
    cache_[idx].source_id = manifest_.records[idx].source;
    cache_[idx].corner = manifest_.records[idx].corner;
    loaded_[idx] = true;
  }
  return cache_[idx];
}

namespace {

void copy_cube_to_slab(const Volume& v, Tensor5& t, int batch_slot) {
  std::memcpy(t.slab(batch_slot, 0), v.data.data(), v.data.size() * sizeof(float));
}

struct TrainerState {
  int next_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_improve = 0;
  std::uint64_t global_step = 0;
};

json trainer_state_to_json(const TrainerState& s) {
  json j{{"next_epoch", s.next_epoch},
         {"best_epoch", s.best_epoch},
         {"epochs_since_improve", s.epochs_since_improve},
         {"global_step", s.global_step}};
  if (std::isfinite(s.best_val)) {
    j["best_val"] = s.best_val;
  }
  return j;
}

TrainerState trainer_state_from_json(const json& j) {
  TrainerState s;
  j.at("next_epoch").get_to(s.next_epoch);
  j.at("best_epoch").get_to(s.best_epoch);
  j.at("epochs_since_improve").get_to(s.epochs_since_improve);
  j.at("global_step").get_to(s.global_step);
  if (j.contains("best_val")) j.at("best_val").get_to(s.best_val);
  return s;
}

double run_validation(const CubeStore& store, Network& net) {
  const auto& val = store.val_indices();
  if (val.empty()) throw EmptyDataset("evaluate_validation: validation split is empty");
  const bool was_train = net.train_mode();
  net.set_train_mode(false);
  double acc = 0.0;
  for (std::size_t idx : val) {
    const CubePair& cp = store.cube(idx);
    Tensor5 in({1, 1, cp.input.dims[0], cp.input.dims[1], cp.input.dims[2]});
    Tensor5 gt({1, 1, cp.target.dims[0], cp.target.dims[1], cp.target.dims[2]});
    copy_cube_to_slab(cp.input, in, 0);
    copy_cube_to_slab(cp.target, gt, 0);
    const Tensor5 pred = net.forward(in);
    acc += mse_loss(pred, gt).first;
  }
  net.set_train_mode(was_train);
  return acc / static_cast<double>(val.size());
}

TrainOutcome train_loop(const CubeStore& store, Network& net, const TrainConfig& cfg,
                        AdamState& adam, TrainerState& st) {
  cfg.validate();
  const auto& train_idx = store.train_indices();
  if (train_idx.empty()) throw EmptyDataset("train: training split is empty");

  const auto cube_dims = store.manifest().cube_dims;
  if (cube_dims != net.config().input_dims) {
    throw ShapeError("train: network input dims do not match dataset cube dims");
  }

  if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);
  auto checkpoint_path = [&](const std::string& stem) {
    return (fs::path(cfg.checkpoint_dir) / (stem + ".dnet")).string();
  };

  TrainOutcome out;
  out.best_val = st.best_val;
  out.best_epoch = st.best_epoch;
  out.log.stop_reason = "max_epochs";

  const int B = cfg.batch_size;
  Tensor5 in({B, 1, cube_dims[0], cube_dims[1], cube_dims[2]});
  Tensor5 gt(in.shape);

  for (int epoch = st.next_epoch; epoch < cfg.max_epochs; ++epoch) {
    net.set_train_mode(true);
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      CounterRng sampler = CounterRng::stream(cfg.seed, 0x73616d70ull, st.global_step);
      for (int b = 0; b < B; ++b) {
        const std::size_t pick = train_idx[sampler.next_below(train_idx.size())];
        const CubePair& cp = store.cube(pick);
        copy_cube_to_slab(cp.input, in, b);
        copy_cube_to_slab(cp.target, gt, b);
      }

      const Tensor5 pred = net.forward(in);
      auto [loss, grad] = mse_loss(pred, gt);
      net.backward(grad);
      try {
        adam_step(net.parameters(), adam);
      } catch (const NonFiniteGradient&) {
        out.log.stop_reason = "error";
        if (!cfg.checkpoint_dir.empty()) {
          write_train_log_csv(out.log, (fs::path(cfg.checkpoint_dir) / "log.csv").string());
        }
        throw;
      }
      net.release_caches();

      const auto t1 = std::chrono::steady_clock::now();
      const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      out.log.entries.push_back({st.global_step, epoch, false, loss, ms});
      ++st.global_step;
    }

    const auto v0 = std::chrono::steady_clock::now();
    const double val_loss = run_validation(store, net);
    const auto v1 = std::chrono::steady_clock::now();
    out.log.entries.push_back({st.global_step, epoch, true, val_loss,
                               std::chrono::duration<double, std::milli>(v1 - v0).count()});

    const bool improved = val_loss < st.best_val * (1.0 - cfg.early_stop_min_delta) ||
                          !std::isfinite(st.best_val);
    if (improved) {
      st.best_val = val_loss;
      st.best_epoch = epoch;
      st.epochs_since_improve = 0;
    } else {
      ++st.epochs_since_improve;
    }

    st.next_epoch = epoch + 1;
    if (!cfg.checkpoint_dir.empty()) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "epoch_%03d", epoch);
      const json extra{{"trainer", trainer_state_to_json(st)}};
      save_checkpoint(checkpoint_path(stem), net, &adam, cfg.seed, extra);
      if (improved) {
        save_checkpoint(checkpoint_path("best"), net, &adam, cfg.seed, extra);
      }
    }

    if (st.epochs_since_improve >= cfg.early_stop_patience) {
      out.log.stop_reason = "early_stop";
      break;
    }
  }

  out.best_val = st.best_val;
  out.best_epoch = st.best_epoch;
  if (!cfg.checkpoint_dir.empty()) {
    out.best_checkpoint = checkpoint_path("best");
    write_train_log_csv(out.log, (fs::path(cfg.checkpoint_dir) / "log.csv").string());
  }
  return out;
}

}  // namespace

TrainOutcome train(const CubeStore& store, Network& net, const TrainConfig& cfg) {
  AdamState adam;
  adam.lr = cfg.lr;
  adam.init(net.parameters());
  TrainerState st;
  return train_loop(store, net, cfg, adam, st);
}

TrainOutcome resume_train(const CubeStore& store, const std::string& checkpoint_path,
                          const TrainConfig& cfg, Network* net_out) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  if (!ck.adam) throw FormatError("resume_train: checkpoint has no optimizer state");
  if (!ck.extra.contains("trainer")) {
    throw FormatError("resume_train: checkpoint has no trainer state");
  }
  TrainerState st = trainer_state_from_json(ck.extra.at("trainer"));
  AdamState adam = std::move(*ck.adam);
  adam.lr = cfg.lr;
  TrainOutcome out = train_loop(store, ck.net, cfg, adam, st);
  if (net_out) *net_out = std::move(ck.net);
  return out;
}

double evaluate_validation(const CubeStore& store, Network& net) {
  return run_validation(store, net);
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("write_train_log_csv: cannot open " + path);
  f << "step,epoch,split,loss,wall_ms\n";
  char line[160];
  for (const auto& e : log.entries) {
    std::snprintf(line, sizeof(line), "%llu,%d,%s,%.9g,%.3f\n",
                  static_cast<unsigned long long>(e.step), e.epoch,
                  e.validation ? "val" : "train", e.loss, e.wall_ms);
    f << line;
  }
  f << "# stop_reason," << log.stop_reason << "\n";
}

}  // namespace descatter3d
