#include <doctest.h>

#include "gmseg/objective.hpp"
#include "oracles/finite_difference.hpp"
#include "support/gradient_cases.hpp"

using namespace gmseg;
using gmseg::testing::gradient_cases;

namespace {

template <Scalar T>
void run_suite(double h, double tolerance, std::uint64_t seed) {
  for (auto& [name, make] : gradient_cases<T>()) {
    Rng rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      auto c = make(rng);
      const auto res = oracle::check_gradients<T>(c.leaves, c.f, h);
      worst = std::max(worst, res.max_rel_error);
    }
    INFO(name << " max relative error " << worst);
    CHECK(worst < tolerance);
  }
}

}  // namespace

TEST_CASE("finite differences, 64-bit") { run_suite<double>(1e-5, 1e-6, 101); }

TEST_CASE("finite differences, 32-bit") { run_suite<float>(1e-2, 1e-3, 202); }

TEST_CASE("dice loss on a 2-pixel prediction") {
  Tensor<double> p({1, 1, 1, 2}, {0.3, 0.8}, true);
  Tensor<double> r({1, 1, 1, 2}, {1.0, 0.0});
  std::vector<Tensor<double>> leaves{p};
  auto res = oracle::check_gradients<double>(leaves, [&] { return dice_loss(p, r); });
  CHECK(res.max_rel_error < 1e-6);
  // L = -(2*0.3 + 1) / (1.1 + 1 + 1); dL/dp0 = -(2*3.1 - 1.6)/3.1^2
  CHECK(p.grad()[0] == doctest::Approx(-(2 * 3.1 - 1.6) / (3.1 * 3.1)));
}
