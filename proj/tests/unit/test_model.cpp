#include <doctest.h>

#include <set>

#include "gmseg/errors.hpp"
#include "gmseg/model.hpp"
#include "oracles/conv_reference.hpp"
#include "support/generators.hpp"

using namespace gmseg;
using gmseg::testing::random_tensor;

namespace {

// Param count written out layer by layer for the reference ASPP recipe:
// conv(k, in, out) = k*k*in*out + out, BN(c) = 2c.
std::size_t aspp_count_by_hand(std::size_t a, std::size_t br, std::size_t hd) {
  auto conv = [](std::size_t k, std::size_t in, std::size_t out) { return k * k * in * out + out; };
  auto bn = [](std::size_t c) { return 2 * c; };
  std::size_t n = conv(3, 1, a) + bn(a) + conv(3, a, a) + bn(a);  // block a
  n += 2 * (conv(3, a, a) + bn(a));                                // block b
  n += conv(1, a, br) + bn(br) + conv(1, br, br) + bn(br);         // 1x1 branch
  n += 4 * (conv(3, a, br) + bn(br) + conv(3, br, br) + bn(br));   // dilated branches
  const std::size_t cat = 5 * br + a;                              // + pooled input
  n += conv(1, cat, hd) + bn(hd) + conv(1, hd, 1);
  return n;
}

}  // namespace

TEST_CASE("reference ASPP parameter count") {
  AsppConfig c;
  auto net = build_aspp<float>(c, 0);
  CHECK(net.param_count() == aspp_count_by_hand(32, 32, 32));
  CHECK(net.param_count() == analytic_param_count(c));
  CHECK(net.param_count() >= 100000);
  CHECK(net.param_count() <= 150000);
}

TEST_CASE("reference U-Net parameter count and ratio") {
  UnetConfig u;
  auto unet = build_unet<float>(u, 0);
  auto aspp = build_aspp<float>(AsppConfig{}, 0);
  CHECK(unet.param_count() == analytic_param_count(u));
  CHECK(unet.param_count() >= 700000);
  CHECK(unet.param_count() <= 850000);
  CHECK(unet.conv_count() == 14);
  CHECK(static_cast<double>(unet.param_count()) / static_cast<double>(aspp.param_count()) >= 6.0);
}

TEST_CASE("analytic count matches built networks across widths") {
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    AsppConfig c;
    c.base_width = 1 + rng.uniform_index(6);
    c.branch_width = 1 + rng.uniform_index(6);
    c.head_width = 1 + rng.uniform_index(6);
    auto net = build_aspp<double>(c, 1);
    CHECK(net.param_count() == analytic_param_count(c));
    CHECK(net.param_count() == aspp_count_by_hand(c.base_width, c.branch_width, c.head_width));
    UnetConfig u;
    u.depth = 1 + rng.uniform_index(3);
    u.base_width = 1 + rng.uniform_index(5);
    CHECK(build_unet<double>(u, 1).param_count() == analytic_param_count(u));
  }
}

TEST_CASE("parameter names are unique and seed independent") {
  auto a = build_aspp<float>(AsppConfig{}, 1);
  auto b = build_aspp<float>(AsppConfig{}, 2);
  std::set<std::string> names;
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    names.insert(a.parameters()[i].name);
    CHECK(a.parameters()[i].name == b.parameters()[i].name);
  }
  CHECK(names.size() == a.parameters().size());
}

TEST_CASE("ASPP has sixteen convolutions") {
  AsppConfig c;
  auto net = build_aspp<float>(c, 0);
  CHECK(net.conv_count() == 16);  // 2 + 2 + 5 branches x 2 + 2
  CHECK_THROWS_AS(build_aspp<float>(AsppConfig{.dilations = {6, 12, 18}}, 0), InvalidConfigError);
}

TEST_CASE("forward keeps spatial size and outputs probabilities") {
  AsppConfig c{.base_width = 3, .branch_width = 2, .head_width = 2};
  auto net = build_aspp<double>(c, 3);
  Rng rng(1);
  auto x = random_tensor<double>({2, 1, 13, 17}, rng);
  auto y = net.forward(x);
  CHECK(y.shape() == Shape{2, 1, 13, 17});
  for (double v : y.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(net.forward(random_tensor<double>({1, 2, 5, 5}, rng)), DimensionError);
}

TEST_CASE("U-Net pads odd sizes and crops back") {
  UnetConfig u{.depth = 2, .base_width = 2};
  auto net = build_unet<float>(u, 3);
  Rng rng(2);
  auto y = net.forward(random_tensor<float>({1, 1, 11, 9}, rng));
  CHECK(y.shape() == Shape{1, 1, 11, 9});
}

TEST_CASE("eval mode is deterministic and leaves BN statistics alone") {
  AsppConfig c{.base_width = 2, .branch_width = 2, .head_width = 2};
  auto net = build_aspp<float>(c, 4);
  Rng rng(3);
  auto x = random_tensor<float>({1, 1, 8, 8}, rng);
  net.forward(x);  // training pass moves running stats
  net.set_training(false);
  const auto before = net.batch_norms()[0].running_mean;
  auto y1 = net.forward(x);
  auto y2 = net.forward(x);
  CHECK(net.batch_norms()[0].running_mean == before);
  for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}

TEST_CASE("training forward draws dropout masks") {
  AsppConfig c{.base_width = 2, .branch_width = 2, .head_width = 2};
  auto net = build_aspp<double>(c, 4);
  Rng rng(3);
  auto x = random_tensor<double>({1, 1, 8, 8}, rng);
  auto y1 = net.forward(x);
  auto y2 = net.forward(x);
  bool differ = false;
  for (std::size_t i = 0; i < y1.numel(); ++i) differ = differ || y1.data()[i] != y2.data()[i];
  CHECK(differ);
}

TEST_CASE("same seed builds identical weights") {
  auto a = build_aspp<float>(AsppConfig{}, 9);
  auto b = build_aspp<float>(AsppConfig{}, 9);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto da = a.parameters()[i].tensor.data(), db = b.parameters()[i].tensor.data();
    CHECK(std::equal(da.begin(), da.end(), db.begin()));
  }
}

TEST_CASE("model config text round-trips") {
  AsppConfig a{.base_width = 5, .branch_width = 7, .head_width = 3, .dropout_rate = 0.25, .dilations = {2, 3, 5, 7}};
  const ModelConfig mc = a;
  auto back = std::get<AsppConfig>(model_config_from_text(model_config_to_text(mc)));
  CHECK(back.base_width == 5);
  CHECK(back.dilations == a.dilations);
  CHECK(back.dropout_rate == 0.25);
  UnetConfig u{.depth = 2, .base_width = 9};
  auto ub = std::get<UnetConfig>(model_config_from_text(model_config_to_text(ModelConfig{u})));
  CHECK(ub.depth == 2);
  CHECK(ub.base_width == 9);
  CHECK_THROWS_AS(model_config_from_text("kind = resnet\n"), SchemaError);
}

// Stack of circular convolutions with ReLU between them commutes with a
// cyclic shift of the input, bit for bit.
TEST_CASE("circular conv stacks are shift equivariant") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = 6 + rng.uniform_index(8), w = 6 + rng.uniform_index(8);
    std::vector<ConvSpec> specs;
    std::vector<Tensor<double>> weights, biases;
    std::size_t ch = 1;
    for (int l = 0; l < 3; ++l) {
      auto s = ConvSpec::same(ch, 2, 3, 1 + static_cast<int>(rng.uniform_index(3)), true);
      s.padding_mode = PaddingMode::Circular;
      weights.push_back(random_tensor<double>(s.weight_shape(), rng));
      biases.push_back(random_tensor<double>({2}, rng));
      specs.push_back(s);
      ch = 2;
    }
    auto run = [&](const Tensor<double>& x) {
      Tensor<double> y = x;
      for (std::size_t l = 0; l < specs.size(); ++l) y = relu(conv2d(y, specs[l], weights[l], &biases[l]));
      return y;
    };
    auto shift = [](const Tensor<double>& t, std::size_t dy, std::size_t dx) {
      const std::size_t c = t.dim(1), hh = t.dim(2), ww = t.dim(3);
      std::vector<double> out(t.numel());
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < hh; ++y)
          for (std::size_t x = 0; x < ww; ++x)
            out[(k * hh + (y + dy) % hh) * ww + (x + dx) % ww] = t.data()[(k * hh + y) * ww + x];
      return Tensor<double>(t.shape(), out);
    };
    auto x = random_tensor<double>({1, 1, h, w}, rng);
    const std::size_t dy = rng.uniform_index(h), dx = rng.uniform_index(w);
    auto a = run(shift(x, dy, dx));
    auto b = shift(run(x), dy, dx);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }
}
