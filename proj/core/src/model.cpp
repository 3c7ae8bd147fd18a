#include "gmseg/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>

#include "gmseg/errors.hpp"

namespace gmseg {

// ---------------------------------------------------------------------------
// Configurations

void AsppConfig::validate() const {
  if (base_width == 0 || branch_width == 0 || head_width == 0) {
    throw InvalidConfigError("aspp widths must be positive");
  }
  if (dilations.size() != 4) {
    throw InvalidConfigError("aspp needs exactly 4 branch dilations, got " +
                             std::to_string(dilations.size()));
  }
  for (int d : dilations) {
    if (d < 1) throw InvalidConfigError("aspp dilation must be >= 1");
  }
  if (block_b_dilation < 1) throw InvalidConfigError("aspp block (b) dilation must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InvalidConfigError("dropout rate must lie in [0, 1)");
  }
}

void UnetConfig::validate() const {
  if (depth == 0) throw InvalidConfigError("unet depth must be >= 1");
  if (base_width == 0) throw InvalidConfigError("unet base width must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InvalidConfigError("dropout rate must lie in [0, 1)");
  }
}

std::string model_kind(const ModelConfig& config) {
  return std::holds_alternative<AsppConfig>(config) ? "aspp" : "unet";
}

namespace {

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SchemaError("model config line without '=': " + line);
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw SchemaError("model config missing field '" + key + "'");
  return it->second;
}

std::size_t to_size(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw SchemaError("model config field '" + key + "' is not a non-negative integer: " + s);
  }
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("model config field '" + key + "' is not a number: " + s);
  }
}

}  // namespace

std::string model_config_to_text(const ModelConfig& config) {
  std::ostringstream out;
  if (const auto* a = std::get_if<AsppConfig>(&config)) {
    out << "model = aspp\n"
        << "base_width = " << a->base_width << '\n'
        << "branch_width = " << a->branch_width << '\n'
        << "head_width = " << a->head_width << '\n'
        << "dropout_rate = " << format_double(a->dropout_rate) << '\n'
        << "dilations = ";
    for (std::size_t i = 0; i < a->dilations.size(); ++i) {
      out << (i ? "," : "") << a->dilations[i];
    }
    out << '\n'
        << "block_b_dilation = " << a->block_b_dilation << '\n'
        << "bn_momentum = " << format_double(a->bn_momentum) << '\n';
  } else {
    const auto& u = std::get<UnetConfig>(config);
    out << "model = unet\n"
        << "depth = " << u.depth << '\n'
        << "base_width = " << u.base_width << '\n'
        << "dropout_rate = " << format_double(u.dropout_rate) << '\n'
        << "bn_momentum = " << format_double(u.bn_momentum) << '\n';
  }
  return out.str();
}

ModelConfig model_config_from_text(std::string_view text) {
  const auto kv = parse_key_values(text);
  const std::string& kind = require(kv, "model");
  if (kind == "aspp") {
    AsppConfig c;
    c.base_width = to_size(require(kv, "base_width"), "base_width");
    c.branch_width = to_size(require(kv, "branch_width"), "branch_width");
    c.head_width = to_size(require(kv, "head_width"), "head_width");
    c.dropout_rate = to_double(require(kv, "dropout_rate"), "dropout_rate");
    c.dilations.clear();
    std::istringstream list(require(kv, "dilations"));
    std::string item;
    while (std::getline(list, item, ',')) {
      c.dilations.push_back(static_cast<int>(to_size(item, "dilations")));
    }
    c.block_b_dilation = static_cast<int>(to_size(require(kv, "block_b_dilation"), "block_b_dilation"));
    c.bn_momentum = to_double(require(kv, "bn_momentum"), "bn_momentum");
    c.validate();
    return c;
  }
  if (kind == "unet") {
    UnetConfig c;
    c.depth = to_size(require(kv, "depth"), "depth");
    c.base_width = to_size(require(kv, "base_width"), "base_width");
    c.dropout_rate = to_double(require(kv, "dropout_rate"), "dropout_rate");
    c.bn_momentum = to_double(require(kv, "bn_momentum"), "bn_momentum");
    c.validate();
    return c;
  }
  throw SchemaError("unknown model kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Network

template <Scalar T>
std::size_t Network<T>::add_parameter(std::string name, Tensor<T> tensor) {
  for (const auto& p : params_) {
    if (p.name == name) throw InternalError("duplicate parameter name '" + name + "'");
  }
  params_.push_back({std::move(name), std::move(tensor)});
  return params_.size() - 1;
}

template <Scalar T>
Layer Network<T>::add_conv(const std::string& name, const ConvSpec& spec, Rng& init) {
  spec.validate();
  const std::size_t fan_in = spec.in_channels * spec.kernel_height * spec.kernel_width;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  const Shape shape = spec.weight_shape();
  std::vector<T> w(shape_numel(shape));
  for (auto& v : w) v = static_cast<T>(init.uniform(-bound, bound));
  ConvLayer layer;
  layer.spec = spec;
  layer.weight = add_parameter(name + ".weight", Tensor<T>(shape, std::move(w), true));
  if (spec.has_bias) {
    layer.bias = add_parameter(name + ".bias", Tensor<T>::full({spec.out_channels}, T{0}, true));
  }
  return Layer{layer};
}

template <Scalar T>
Layer Network<T>::add_batchnorm(const std::string& name, std::size_t channels, double momentum) {
  BatchNormState<T> state(channels, momentum);
  state.training = training_;
  add_parameter(name + ".gamma", state.gamma);
  add_parameter(name + ".beta", state.beta);
  batch_norms_.push_back(std::move(state));
  batch_norm_names_.push_back(name);
  return Layer{BatchNormLayer{batch_norms_.size() - 1}};
}

template <Scalar T>
Tensor<T> Network<T>::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw InvalidConfigError("no parameter named '" + std::string(name) + "'");
}

template <Scalar T>
std::vector<NamedBuffer<T>> Network<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  for (std::size_t i = 0; i < batch_norms_.size(); ++i) {
    out.push_back({batch_norm_names_[i] + ".running_mean", &batch_norms_[i].running_mean});
    out.push_back({batch_norm_names_[i] + ".running_var", &batch_norms_[i].running_var});
  }
  return out;
}

template <Scalar T>
std::size_t Network<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

namespace {

std::size_t count_convs(const std::vector<Layer>& layers) {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    if (std::holds_alternative<ConvLayer>(layer.op)) ++n;
    if (const auto* p = std::get_if<ParallelLayer>(&layer.op)) {
      for (const auto& branch : p->branches) n += count_convs(branch);
    }
  }
  return n;
}

}  // namespace

template <Scalar T>
std::size_t Network<T>::conv_count() const {
  return count_convs(layers_);
}

template <Scalar T>
void Network<T>::set_training(bool training) {
  training_ = training;
  for (auto& bn : batch_norms_) bn.training = training;
}

template <Scalar T>
void Network<T>::zero_grad() {
  for (auto& p : params_) {
    Tensor<T> t = p.tensor;
    t.zero_grad();
  }
}

template <Scalar T>
Tensor<T> Network<T>::run(const std::vector<Layer>& layers, Tensor<T> x) {
  for (const auto& layer : layers) {
    x = std::visit(
        [&](const auto& op) -> Tensor<T> {
          using Op = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<Op, ConvLayer>) {
            if (op.bias) return conv2d(x, op.spec, params_[op.weight].tensor, &params_[*op.bias].tensor);
            return conv2d(x, op.spec, params_[op.weight].tensor);
          } else if constexpr (std::is_same_v<Op, BatchNormLayer>) {
            return batchnorm2d(x, batch_norms_[op.state]);
          } else if constexpr (std::is_same_v<Op, ReluLayer>) {
            return relu(x);
          } else if constexpr (std::is_same_v<Op, SigmoidLayer>) {
            return sigmoid(x);
          } else if constexpr (std::is_same_v<Op, DropoutLayer>) {
            return dropout(x, op.rate, training_, dropout_rng_);
          } else if constexpr (std::is_same_v<Op, GlobalPoolLayer>) {
            return global_avg_pool_broadcast(x);
          } else if constexpr (std::is_same_v<Op, MaxPoolLayer>) {
            return maxpool2(x);
          } else if constexpr (std::is_same_v<Op, UpsampleLayer>) {
            return upsample_nearest2(x);
          } else {
            std::vector<Tensor<T>> outs;
            outs.reserve(op.branches.size());
            for (const auto& branch : op.branches) outs.push_back(run(branch, x));
            return concat_channels(outs);
          }
        },
        layer.op);
  }
  return x;
}

template <Scalar T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch) {
  if (batch.rank() != 4) {
    throw DimensionError("network input must be [B,C,H,W], got " + shape_to_string(batch.shape()));
  }
  if (batch.dim(1) != input_channels_) {
    throw DimensionError("network expects " + std::to_string(input_channels_) +
                         " input channel(s), got " + std::to_string(batch.dim(1)));
  }
  const std::size_t h = batch.dim(2), w = batch.dim(3), m = spatial_multiple_;
  const std::size_t extra_h = (m - h % m) % m, extra_w = (m - w % m) % m;
  last_padding_ = {static_cast<int>(extra_h / 2), static_cast<int>(extra_h - extra_h / 2),
                   static_cast<int>(extra_w / 2), static_cast<int>(extra_w - extra_w / 2)};
  if (extra_h == 0 && extra_w == 0) return run(layers_, batch);
  Tensor<T> out = run(layers_, pad2d(batch, last_padding_));
  return crop2d(out, static_cast<std::size_t>(last_padding_.top),
                static_cast<std::size_t>(last_padding_.left), h, w);
}

// ---------------------------------------------------------------------------
// Builders

namespace {

// conv -> BN -> ReLU -> dropout
template <Scalar T>
void conv_block(Network<T>& net, std::vector<Layer>& into, const std::string& name,
                const ConvSpec& spec, double dropout_rate, double momentum, Rng& init) {
  into.push_back(net.add_conv(name + ".conv", spec, init));
  into.push_back(net.add_batchnorm(name + ".bn", spec.out_channels, momentum));
  into.push_back(Layer{ReluLayer{}});
  into.push_back(Layer{DropoutLayer{dropout_rate}});
}

template <Scalar T>
std::vector<Layer> unet_level(Network<T>& net, const UnetConfig& c, std::size_t level,
                              std::size_t in_channels, Rng& init) {
  const std::size_t width = c.base_width << level;
  const std::string tag = "enc" + std::to_string(level);
  std::vector<Layer> layers;
  conv_block(net, layers, tag + ".0", ConvSpec::same(in_channels, width, 3), c.dropout_rate,
             c.bn_momentum, init);
  conv_block(net, layers, tag + ".1", ConvSpec::same(width, width, 3), c.dropout_rate,
             c.bn_momentum, init);

  std::vector<Layer> down;
  down.push_back(Layer{MaxPoolLayer{}});
  std::size_t inner_channels;
  if (level + 1 < c.depth) {
    auto inner = unet_level(net, c, level + 1, width, init);
    down.insert(down.end(), std::make_move_iterator(inner.begin()),
                std::make_move_iterator(inner.end()));
    inner_channels = width * 2;
  } else {
    inner_channels = c.base_width << c.depth;
    conv_block(net, down, "bottleneck", ConvSpec::same(width, inner_channels, 3), c.dropout_rate,
               c.bn_momentum, init);
  }
  down.push_back(Layer{UpsampleLayer{}});
  conv_block(net, down, "up" + std::to_string(level), ConvSpec::same(inner_channels, width, 3),
             c.dropout_rate, c.bn_momentum, init);

  ParallelLayer skip;
  skip.branches.emplace_back();  // identity
  skip.branches.push_back(std::move(down));
  layers.push_back(Layer{std::move(skip)});
  conv_block(net, layers, "dec" + std::to_string(level), ConvSpec::same(2 * width, width, 3),
             c.dropout_rate, c.bn_momentum, init);
  return layers;
}

}  // namespace

template <Scalar T>
Network<T> build_aspp(const AsppConfig& c, std::uint64_t seed) {
  c.validate();
  Network<T> net;
  net.set_config(c);
  Rng root(seed);
  Rng init = root.split(1);
  net.seed_dropout(root.split(2).next_u64());
  auto& layers = net.layers();
  const double p = c.dropout_rate, mom = c.bn_momentum;
  const std::size_t w = c.base_width, b = c.branch_width, h = c.head_width;

  conv_block(net, layers, "a0", ConvSpec::same(1, w, 3), p, mom, init);
  conv_block(net, layers, "a1", ConvSpec::same(w, w, 3), p, mom, init);
  conv_block(net, layers, "b0", ConvSpec::same(w, w, 3, c.block_b_dilation), p, mom, init);
  conv_block(net, layers, "b1", ConvSpec::same(w, w, 3, c.block_b_dilation), p, mom, init);

  ParallelLayer pyramid;
  {
    std::vector<Layer> branch;
    conv_block(net, branch, "c0.0", ConvSpec::same(w, b, 1), p, mom, init);
    conv_block(net, branch, "c0.1", ConvSpec::same(b, b, 1), p, mom, init);
    pyramid.branches.push_back(std::move(branch));
  }
  for (std::size_t i = 0; i < c.dilations.size(); ++i) {
    const int r = c.dilations[i];
    const std::string tag = "c" + std::to_string(i + 1);
    std::vector<Layer> branch;
    conv_block(net, branch, tag + ".0", ConvSpec::same(w, b, 3, r), p, mom, init);
    conv_block(net, branch, tag + ".1", ConvSpec::same(b, b, 3, r), p, mom, init);
    pyramid.branches.push_back(std::move(branch));
  }
  pyramid.branches.push_back({Layer{GlobalPoolLayer{}}});
  layers.push_back(Layer{std::move(pyramid)});

  const std::size_t concat = (c.dilations.size() + 1) * b + w;
  conv_block(net, layers, "d0", ConvSpec::same(concat, h, 1), p, mom, init);
  layers.push_back(net.add_conv("d1.conv", ConvSpec::same(h, 1, 1), init));
  layers.push_back(Layer{SigmoidLayer{}});
  return net;
}

template <Scalar T>
Network<T> build_unet(const UnetConfig& c, std::uint64_t seed) {
  c.validate();
  Network<T> net;
  net.set_config(c);
  Rng root(seed);
  Rng init = root.split(1);
  net.seed_dropout(root.split(2).next_u64());
  net.set_spatial_multiple(std::size_t{1} << c.depth);
  auto body = unet_level(net, c, 0, 1, init);
  auto& layers = net.layers();
  layers.insert(layers.end(), std::make_move_iterator(body.begin()),
                std::make_move_iterator(body.end()));
  layers.push_back(net.add_conv("head.conv", ConvSpec::same(c.base_width, 1, 1), init));
  layers.push_back(Layer{SigmoidLayer{}});
  return net;
}

template <Scalar T>
Network<T> build_network(const ModelConfig& config, std::uint64_t seed) {
  if (const auto* a = std::get_if<AsppConfig>(&config)) return build_aspp<T>(*a, seed);
  return build_unet<T>(std::get<UnetConfig>(config), seed);
}

std::size_t analytic_param_count(const ModelConfig& config) {
  // k*k*cin*cout weights + cout bias, plus 2*cout when followed by BN.
  auto block = [](std::size_t k, std::size_t cin, std::size_t cout) {
    return k * k * cin * cout + 3 * cout;
  };
  if (const auto* a = std::get_if<AsppConfig>(&config)) {
    const std::size_t w = a->base_width, b = a->branch_width, h = a->head_width;
    std::size_t n = block(3, 1, w) + 3 * block(3, w, w);
    n += block(1, w, b) + block(1, b, b);
    n += a->dilations.size() * (block(3, w, b) + block(3, b, b));
    n += block(1, (a->dilations.size() + 1) * b + w, h);
    n += h + 1;
    return n;
  }
  const auto& u = std::get<UnetConfig>(config);
  std::size_t n = 0, in = 1;
  for (std::size_t l = 0; l < u.depth; ++l) {
    const std::size_t width = u.base_width << l;
    n += block(3, in, width) + block(3, width, width);
    in = width;
  }
  std::size_t below = u.base_width << u.depth;
  n += block(3, in, below);
  for (std::size_t l = u.depth; l-- > 0;) {
    const std::size_t width = u.base_width << l;
    n += block(3, below, width) + block(3, 2 * width, width);
    below = width;
  }
  return n + u.base_width + 1;
}

template class Network<float>;
template class Network<double>;
template Network<float> build_aspp<float>(const AsppConfig&, std::uint64_t);
template Network<double> build_aspp<double>(const AsppConfig&, std::uint64_t);
template Network<float> build_unet<float>(const UnetConfig&, std::uint64_t);
template Network<double> build_unet<double>(const UnetConfig&, std::uint64_t);
template Network<float> build_network<float>(const ModelConfig&, std::uint64_t);
template Network<double> build_network<double>(const ModelConfig&, std::uint64_t);

}  // namespace gmseg
