#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "descatter3d/tensor.hpp"

namespace descatter3d {

class CounterRng;

/// A named view over a parameter tensor and its gradient buffer. The
/// optimizer and the checkpoint writer both walk these in network order.
struct ParamRef {
  std::string name;
  std::vector<float>* values = nullptr;
  std::vector<float>* grads = nullptr;
  std::vector<int> shape;
};

/// A named view over non-learned state (batchnorm running statistics).
struct StateRef {
  std::string name;
  std::vector<float>* values = nullptr;
  std::vector<int> shape;
};

/// Same-padding 3D convolution (cross-correlation) with an odd cubic
/// kernel. Weight layout (out_c, in_c, kz, ky, kx), x fastest.
class Conv3d {
 public:
  Conv3d(int in_c, int out_c, int ksize);

  Tensor5 forward(const Tensor5& x, bool cache_for_backward);
  // Returns grad wrt the cached input and fills grad_weight/grad_bias.
  Tensor5 backward(const Tensor5& grad_out);

  void init_he(CounterRng& rng);
  void init_zero();
  void release_cache() { cached_input_ = Tensor5(); }

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int ksize() const { return ksize_; }

  std::vector<float> weight, bias;
  std::vector<float> grad_weight, grad_bias;

 private:
  int in_c_, out_c_, ksize_, pad_;
  Tensor5 cached_input_;
};

/// Per-channel batch normalization over (batch, x, y, z); eps 1e-5,
/// running-stat momentum 0.1 (running variance kept unbiased).
class BatchNorm3d {
 public:
  explicit BatchNorm3d(int channels);

  Tensor5 forward(const Tensor5& x, bool train_mode, bool cache_for_backward);
  Tensor5 backward(const Tensor5& grad_out);
  void release_cache() { cached_xhat_ = Tensor5(); }

  int channels() const { return channels_; }

  std::vector<float> gamma, beta;
  std::vector<float> grad_gamma, grad_beta;
  std::vector<float> running_mean, running_var;

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  int channels_;
  Tensor5 cached_xhat_;
  std::vector<double> cached_invstd_;
};

class ReLU {
 public:
  Tensor5 forward(const Tensor5& x, bool cache_for_backward);
  Tensor5 backward(const Tensor5& grad_out);
  void release_cache() { mask_.clear(); mask_.shrink_to_fit(); }

 private:
  std::vector<std::uint8_t> mask_;
};

/// 2x2x2 max pooling, stride 2. Requires even spatial dims. Ties go to the
/// lowest linear index so the backward routing is deterministic.
class MaxPool3d {
 public:
  Tensor5 forward(const Tensor5& x, bool cache_for_backward);
  Tensor5 backward(const Tensor5& grad_out);
  void release_cache() { argmax_.clear(); argmax_.shrink_to_fit(); }

 private:
  std::vector<std::int64_t> argmax_;
  std::array<int, 5> in_shape_{};
};

/// Transposed 3D convolution with 2x2x2 kernel and stride 2: spatial dims
/// exactly double. Weight layout (in_c, out_c, kz, ky, kx).
class ConvTranspose3d {
 public:
  ConvTranspose3d(int in_c, int out_c);

  Tensor5 forward(const Tensor5& x, bool cache_for_backward);
  Tensor5 backward(const Tensor5& grad_out);

  void init_he(CounterRng& rng);
  void release_cache() { cached_input_ = Tensor5(); }

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

  std::vector<float> weight, bias;
  std::vector<float> grad_weight, grad_bias;

 private:
  int in_c_, out_c_;
  Tensor5 cached_input_;
};

/// Channel concatenation: (a, b) -> a's channels first.
Tensor5 concat_channels(const Tensor5& a, const Tensor5& b);
void split_channels(const Tensor5& grad, int a_channels, Tensor5& grad_a, Tensor5& grad_b);

/// Mean squared error over all elements and its gradient wrt pred,
/// accumulated in double.
std::pair<double, Tensor5> mse_loss(const Tensor5& pred, const Tensor5& target);

}  // namespace descatter3d
