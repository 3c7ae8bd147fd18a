#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gmseg/tensor.hpp"

namespace gmseg {

template <Scalar T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

/// Bias-corrected Adam moments. Accumulators are created on the first step
/// and keyed by parameter name, in parameter order.
template <Scalar T>
struct AdamState {
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::string> names;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  bool initialized() const { return !names.empty(); }
};

/// One in-place Adam update with learning rate `lr`. Parameters without an
/// allocated gradient are treated as having a zero gradient. Throws
/// NumericalError naming the first parameter whose gradient is not finite;
/// nothing is modified in that case.
template <Scalar T>
void adam_step(std::span<const NamedParameter<T>> params, AdamState<T>& state, double lr);

/// eta = eta0 * (1 - n/N)^power, evaluated per epoch.
struct PolySchedule {
  double eta0 = 1e-3;
  std::size_t total_epochs = 1000;
  double power = 0.9;

  /// Epochs past the end clamp to 0 with a warning.
  double rate(std::size_t epoch) const;
};

}  // namespace gmseg
