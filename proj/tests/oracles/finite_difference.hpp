#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gmseg/tensor.hpp"

namespace gmseg::oracle {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares backward() against central differences for every element of every
// leaf. Error per element: |a - n| / max(1, |a|, |n|).
template <Scalar T>
GradCheck check_gradients(std::vector<Tensor<T>>& leaves, const std::function<Tensor<T>()>& f, double h = 1e-5) {
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  f().backward();
  NoGradGuard no_grad;
  GradCheck result;
  for (auto& leaf : leaves) {
    std::vector<T> analytic(leaf.grad().begin(), leaf.grad().end());
    if (analytic.empty()) analytic.assign(leaf.numel(), T{0});
    auto data = leaf.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T saved = data[i];
      data[i] = saved + static_cast<T>(h);
      const double up = static_cast<double>(f().item());
      data[i] = saved - static_cast<T>(h);
      const double down = static_cast<double>(f().item());
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = static_cast<double>(analytic[i]);
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      result.max_rel_error = std::max(result.max_rel_error, err);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace gmseg::oracle
