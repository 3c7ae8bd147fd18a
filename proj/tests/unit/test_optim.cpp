#include <doctest.h>

#include <cmath>
#include <limits>

#include "gmseg/errors.hpp"
#include "gmseg/log.hpp"
#include "gmseg/ops.hpp"
#include "gmseg/optim.hpp"

using namespace gmseg;

namespace {

std::vector<NamedParameter<double>> one_param(double value) {
  return {{"theta", Tensor<double>({1}, {value}, true)}};
}

}  // namespace

TEST_CASE("first Adam step moves by about lr") {
  auto params = one_param(1.0);
  AdamState<double> st;
  auto& theta = params[0].tensor;
  sum(mul(theta, theta)).backward();  // grad = 2
  adam_step<double>(params, st, 0.1);
  // m = 0.2, v = 0.004; m_hat = 2, v_hat = 4; step = 0.1 * 2 / (2 + 1e-8)
  CHECK(theta.item() == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  theta.zero_grad();
  sum(mul(theta, theta)).backward();  // grad = 2*0.9
  const double g = 2.0 * theta.item();
  const double m = 0.9 * 0.2 + 0.1 * g, v = 0.999 * 0.004 + 0.001 * g * g;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double expected = theta.item() - 0.1 * mh / (std::sqrt(vh) + 1e-8);
  adam_step<double>(params, st, 0.1);
  CHECK(theta.item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(st.step_count == 2);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  auto params = one_param(0.7);
  AdamState<double> st;
  params[0].tensor.zero_grad();
  adam_step<double>(params, st, 0.01);
  CHECK(params[0].tensor.item() == 0.7);
}

TEST_CASE("non-finite gradient aborts without touching parameters") {
  auto params = one_param(0.5);
  params.push_back({"second", Tensor<double>({1}, {2.0}, true)});
  AdamState<double> st;
  params[0].tensor.zero_grad();
  params[1].tensor.zero_grad();
  params[1].tensor.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  params[0].tensor.grad()[0] = 1.0;
  try {
    adam_step<double>(params, st, 0.01);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("second") != std::string::npos);
  }
  CHECK(params[0].tensor.item() == 0.5);
  CHECK_THROWS_AS(adam_step<double>(one_param(1.0), st, 0.0), ContractError);
}

TEST_CASE("poly schedule") {
  PolySchedule s{1e-3, 1000, 0.9};
  CHECK(s.rate(0) == 1e-3);
  CHECK(s.rate(1000) == 0.0);
  CHECK(std::abs(s.rate(500) - 1e-3 * std::pow(0.5, 0.9)) < 1e-12);
  CHECK(s.rate(500) == doctest::Approx(5.359e-4).epsilon(1e-3));
  for (std::size_t n = 1; n <= 1000; ++n) CHECK(s.rate(n) <= s.rate(n - 1));
  ScopedWarningCapture capture;
  CHECK(s.rate(1001) == 0.0);
  CHECK(capture.count() == 1);
}
