#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gmseg/ops.hpp"
#include "gmseg/optim.hpp"
#include "gmseg/rng.hpp"
#include "gmseg/tensor.hpp"

namespace gmseg {

/// Dilated multi-branch network. Widths are free; the defaults land the
/// parameter count near the published model size.
struct AsppConfig {
  std::size_t base_width = 32;    // blocks (a) and (b)
  std::size_t branch_width = 32;  // each parallel conv branch
  std::size_t head_width = 32;    // first 1x1 layer of the head
  double dropout_rate = 0.4;
  std::vector<int> dilations{6, 12, 18, 24};
  int block_b_dilation = 2;
  double bn_momentum = 0.1;

  void validate() const;
};

/// Encoder/decoder baseline. Reference configuration (depth 3, base 24) has
/// 14 convolutions: two per encoder level, one bottleneck, and per decoder
/// level an upsample+conv followed by one conv after the skip concat, plus
/// the 1x1 classifier.
struct UnetConfig {
  std::size_t depth = 3;
  std::size_t base_width = 24;
  double dropout_rate = 0.4;
  double bn_momentum = 0.1;

  void validate() const;
};

using ModelConfig = std::variant<AsppConfig, UnetConfig>;

std::string model_kind(const ModelConfig& config);
/// Canonical `key = value` text; parse(to_text(c)) == c.
std::string model_config_to_text(const ModelConfig& config);
ModelConfig model_config_from_text(std::string_view text);

struct Layer;

struct ConvLayer {
  ConvSpec spec;
  std::size_t weight = 0;             // index into Network::parameters()
  std::optional<std::size_t> bias;
};
struct BatchNormLayer {
  std::size_t state = 0;              // index into Network::batch_norms()
};
struct ReluLayer {};
struct SigmoidLayer {};
struct DropoutLayer {
  double rate = 0.0;
};
struct GlobalPoolLayer {};
struct MaxPoolLayer {};
struct UpsampleLayer {};
/// Runs every branch on the same input and concatenates the results along
/// channels. An empty branch passes its input through (skip connection).
struct ParallelLayer {
  std::vector<std::vector<Layer>> branches;
};

struct Layer {
  std::variant<ConvLayer, BatchNormLayer, ReluLayer, SigmoidLayer, DropoutLayer, GlobalPoolLayer,
               MaxPoolLayer, UpsampleLayer, ParallelLayer>
      op;
};

template <Scalar T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* values;
};

/// Ordered layer description plus its parameter table. Parameter names are
/// unique and derive only from the layer structure, so they are stable
/// across save/load.
template <Scalar T>
class Network {
 public:
  Network() = default;
  // Parameters are shared handles; copying would alias them.
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Registers a convolution initialised He-uniform (fan-in) with zero bias.
  Layer add_conv(const std::string& name, const ConvSpec& spec, Rng& init);
  Layer add_batchnorm(const std::string& name, std::size_t channels, double momentum);

  std::span<const NamedParameter<T>> parameters() const { return params_; }
  Tensor<T> parameter(std::string_view name) const;
  std::vector<BatchNormState<T>>& batch_norms() { return batch_norms_; }
  const std::vector<BatchNormState<T>>& batch_norms() const { return batch_norms_; }
  /// Running statistics, named `<bn>.running_mean` / `<bn>.running_var`.
  std::vector<NamedBuffer<T>> buffers();

  std::size_t param_count() const;
  std::size_t conv_count() const;

  void set_training(bool training);
  bool training() const { return training_; }
  void zero_grad();

  /// Rounds spatial extents up to a multiple of `multiple` with symmetric zero
  /// padding before the layers run, and crops the output back.
  void set_spatial_multiple(std::size_t multiple) { spatial_multiple_ = multiple; }
  std::size_t spatial_multiple() const { return spatial_multiple_; }
  /// Padding applied by the most recent forward().
  const Padding& last_padding() const { return last_padding_; }

  void set_input_channels(std::size_t channels) { input_channels_ = channels; }
  Rng& dropout_rng() { return dropout_rng_; }
  void seed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  Tensor<T> forward(const Tensor<T>& batch);

  const std::optional<ModelConfig>& config() const { return config_; }
  void set_config(ModelConfig config) { config_ = std::move(config); }

 private:
  Tensor<T> run(const std::vector<Layer>& layers, Tensor<T> x);
  std::size_t add_parameter(std::string name, Tensor<T> tensor);

  std::optional<ModelConfig> config_;
  std::vector<Layer> layers_;
  std::vector<NamedParameter<T>> params_;
  std::vector<BatchNormState<T>> batch_norms_;
  std::vector<std::string> batch_norm_names_;
  bool training_ = true;
  std::size_t spatial_multiple_ = 1;
  std::size_t input_channels_ = 1;
  Padding last_padding_;
  Rng dropout_rng_{0};
};

template <Scalar T>
Network<T> build_aspp(const AsppConfig& config, std::uint64_t seed);
template <Scalar T>
Network<T> build_unet(const UnetConfig& config, std::uint64_t seed);
template <Scalar T>
Network<T> build_network(const ModelConfig& config, std::uint64_t seed);

template <Scalar T>
std::size_t param_count(const Network<T>& network) {
  return network.param_count();
}

/// Analytic parameter count of a configuration, computed from the layer
/// recipe without building tensors.
std::size_t analytic_param_count(const ModelConfig& config);

}  // namespace gmseg
