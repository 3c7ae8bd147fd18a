#pragma once

#include <cstddef>
#include <vector>

#include "gmseg/rng.hpp"
#include "gmseg/tensor.hpp"

namespace gmseg {

enum class PaddingMode {
  Zeros,
  /// Wrap-around indexing. Only meaningful for stride-1 same-size stacks;
  /// used to check shift equivariance without border effects.
  Circular,
};

struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};

/// 2-D cross-correlation with dilation. Kernel taps are centred, so a k x k
/// kernel (k odd) with dilation r and padding r*(k-1)/2 per side keeps the
/// spatial size at stride 1.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_height = 3;
  std::size_t kernel_width = 3;
  int dilation = 1;
  int stride = 1;
  Padding padding;
  bool has_bias = true;
  PaddingMode padding_mode = PaddingMode::Zeros;

  /// Same-padded, stride-1 square kernel.
  static ConvSpec same(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                       int dilation = 1, bool has_bias = true);

  void validate() const;
  Shape weight_shape() const {
    return {out_channels, in_channels, kernel_height, kernel_width};
  }
  std::size_t output_height(std::size_t input_height) const;
  std::size_t output_width(std::size_t input_width) const;
  std::size_t param_count() const;
};

template <Scalar T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>* bias = nullptr);

template <Scalar T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  bool training = true;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels, double momentum = 0.1, double epsilon = 1e-5);
  std::size_t channels() const { return running_mean.size(); }
};

/// Per-channel normalisation over (batch, height, width). In training mode
/// the running statistics move by `momentum` toward the batch statistics
/// (biased variance); in eval mode they are used as-is.
template <Scalar T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BatchNormState<T>& state);

/// Inverted dropout. Identity when `training` is false or `rate` is 0.
template <Scalar T>
Tensor<T> dropout(const Tensor<T>& input, double rate, bool training, Rng& rng);

template <Scalar T>
Tensor<T> relu(const Tensor<T>& input);
template <Scalar T>
Tensor<T> sigmoid(const Tensor<T>& input);

template <Scalar T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& inputs);

/// Replaces each position of every channel with that channel's spatial mean.
template <Scalar T>
Tensor<T> global_avg_pool_broadcast(const Tensor<T>& input);

/// 2x2 max pooling, stride 2. H and W must be even.
template <Scalar T>
Tensor<T> maxpool2(const Tensor<T>& input);
template <Scalar T>
Tensor<T> upsample_nearest2(const Tensor<T>& input);

/// Zero padding of the two spatial axes.
template <Scalar T>
Tensor<T> pad2d(const Tensor<T>& input, const Padding& padding);
/// Spatial window [top, top+height) x [left, left+width).
template <Scalar T>
Tensor<T> crop2d(const Tensor<T>& input, std::size_t top, std::size_t left, std::size_t height,
                 std::size_t width);

template <Scalar T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <Scalar T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <Scalar T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <Scalar T>
Tensor<T> sum(const Tensor<T>& a);

template <Scalar T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <Scalar T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

}  // namespace gmseg
