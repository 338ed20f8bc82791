#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "descatter3d/layers.hpp"
#include "descatter3d/tensor.hpp"

namespace descatter3d {

/// Shape of the encoder-decoder. Stage s of the encoder runs at
/// base_channels * 2^(s-1) channels; the middle stage doubles once more;
/// the decoder mirrors the encoder with concat skips. Input spatial dims
/// must be divisible by 2^n_stages.
struct NetworkConfig {
  int n_stages = 4;
  int base_channels = 16;
  int convs_per_stage = 2;  // 2 or 3
  std::array<int, 3> input_dims{128, 128, 64};
  bool residual = true;
  std::uint64_t init_seed = 0;

  void validate() const;
  int stage_channels(int stage) const;  // 1-based
  bool operator==(const NetworkConfig&) const = default;
};

/// One conv -> batchnorm -> relu unit.
struct ConvBlock {
  ConvBlock(int in_c, int out_c, int ksize) : conv(in_c, out_c, ksize), bn(out_c) {}
  Conv3d conv;
  BatchNorm3d bn;
  ReLU relu;

  Tensor5 forward(const Tensor5& x, bool train, bool cache);
  Tensor5 backward(const Tensor5& grad_out);
  void release_cache();
};

/// The volumetric encoder-decoder with concat skips and a long residual
/// connection from input to output. The final 1x1x1 convolution starts at
/// zero, so a freshly built residual network is exactly the identity map.
class Network {
 public:
  explicit Network(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }

  void set_train_mode(bool train) { train_mode_ = train; }
  bool train_mode() const { return train_mode_; }

  /// Runs the graph. In train mode, activations needed by backward are
  /// cached and batchnorm running statistics are updated.
  Tensor5 forward(const Tensor5& x);

  /// Backpropagates the loss gradient through the cached graph, filling
  /// every layer's parameter gradients.
  void backward(const Tensor5& grad_out);

  /// Drops cached activations (after an optimizer step).
  void release_caches();

  std::vector<ParamRef> parameters();
  std::vector<StateRef> running_state();

  std::size_t parameter_count();

 private:
  void check_input(const Tensor5& x) const;

  NetworkConfig config_;
  bool train_mode_ = false;

  struct EncoderStage {
    std::vector<ConvBlock> blocks;
    MaxPool3d pool;
    Tensor5 skip;  // pre-pool activation, consumed by the decoder concat
  };
  struct DecoderStage {
    DecoderStage(int in_c, int out_c) : up(in_c, out_c) {}
    ConvTranspose3d up;
    std::vector<ConvBlock> blocks;
    int skip_channels = 0;
  };

  std::vector<EncoderStage> encoder_;
  std::vector<ConvBlock> middle_;
  std::vector<DecoderStage> decoder_;
  std::unique_ptr<Conv3d> final_conv_;
};

Network build_network(const NetworkConfig& config);

/// Bias-corrected Adam over a parameter list. Moment buffers are addressed
/// by position, so the parameter list must come from the same network in
/// the same order every step.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  void init(const std::vector<ParamRef>& params);
};

/// One Adam step. Scans all gradients first and throws NonFiniteGradient
/// naming the offending tensor before any parameter is touched.
void adam_step(const std::vector<ParamRef>& params, AdamState& state);

// .dnet checkpoint: "DNET" magic, LE u32 header length, JSON header
// (config, tensor manifest, step counter, RNG seed, flags, free-form extra
// state), then the manifest's tensors as LE f32. Round-trip is bit-exact.
void save_checkpoint(const std::string& path, Network& net, const AdamState* adam,
                     std::uint64_t rng_seed, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  Network net;
  std::optional<AdamState> adam;
  std::uint64_t rng_seed = 0;
  nlohmann::json extra;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace descatter3d
