#include "gmseg/optim.hpp"

#include <cmath>
#include <string>

#include "gmseg/errors.hpp"
#include "gmseg/log.hpp"

namespace gmseg {

template <Scalar T>
void adam_step(std::span<const NamedParameter<T>> params, AdamState<T>& state, double lr) {
  if (!(lr > 0.0)) throw ContractError("adam_step requires lr > 0, got " + std::to_string(lr));

  if (!state.initialized()) {
    for (const auto& p : params) {
      state.names.push_back(p.name);
      state.first_moment.emplace_back(p.tensor.numel(), T{0});
      state.second_moment.emplace_back(p.tensor.numel(), T{0});
    }
  }
  if (state.names.size() != params.size()) {
    throw DimensionError("adam state tracks " + std::to_string(state.names.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (state.names[k] != p.name || state.first_moment[k].size() != p.tensor.numel()) {
      throw DimensionError("adam state entry '" + state.names[k] +
                           "' does not match parameter '" + p.name + "'");
    }
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }

  const std::uint64_t t = ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T> tensor = params[k].tensor;
    auto data = tensor.data();
    const auto grad = tensor.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + state.epsilon);
      data[i] = static_cast<T>(data[i] - update);
    }
  }
}

template void adam_step<float>(std::span<const NamedParameter<float>>, AdamState<float>&,
                               double);
template void adam_step<double>(std::span<const NamedParameter<double>>, AdamState<double>&,
                                double);

double PolySchedule::rate(std::size_t epoch) const {
  if (epoch >= total_epochs) {
    if (epoch > total_epochs) {
      warn("poly schedule: epoch " + std::to_string(epoch) + " beyond total " +
           std::to_string(total_epochs) + ", learning rate clamped to 0");
    }
    return 0.0;
  }
  const double progress = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return eta0 * std::pow(1.0 - progress, power);
}

}  // namespace gmseg
