#include "gmseg/objective.hpp"

#include <cmath>
#include <string>

#include "gmseg/errors.hpp"

namespace gmseg {

template <Scalar T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& gold, const DiceLossParams& params) {
  if (!(params.epsilon > 0.0)) throw ContractError("dice epsilon must be positive");
  if (pred.shape() != gold.shape()) {
    throw DimensionError("dice_loss prediction " + shape_to_string(pred.shape()) +
                         " vs gold " + shape_to_string(gold.shape()));
  }
  const auto p = pred.data();
  const auto r = gold.data();
  double inter = 0, sum_p = 0, sum_r = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(static_cast<double>(p[i]))) {
      throw NumericalError("dice_loss prediction is " + std::to_string(p[i]) + " at index " + std::to_string(i));
    }
    if (!(p[i] >= -1e-6 && p[i] <= 1.0 + 1e-6)) {
      throw ContractError("dice_loss prediction " + std::to_string(p[i]) + " outside [0,1] at " +
                          std::to_string(i));
    }
    if (r[i] != T{0} && r[i] != T{1}) {
      throw ContractError("dice_loss gold value " + std::to_string(r[i]) + " is not binary");
    }
    inter += static_cast<double>(p[i]) * r[i];
    sum_p += p[i];
    sum_r += r[i];
  }
  const double eps = params.epsilon;
  const double num = 2.0 * inter + eps;
  const double den = sum_p + sum_r + eps;
  const double loss = -num / den;
  return make_result<T>({1}, {static_cast<T>(loss)}, {pred.node()},
                        [num, den, gold](detail::Node<T>& self) {
                          auto& pn = *self.inputs[0];
                          const auto r = gold.data();
                          const double g = self.grad[0];
                          const double den2 = den * den;
                          for (std::size_t i = 0; i < pn.grad.size(); ++i) {
                            const double d = -(2.0 * r[i] * den - num) / den2;
                            pn.grad[i] += static_cast<T>(g * d);
                          }
                        });
}

template <Scalar T>
std::vector<std::uint8_t> threshold_binarize(std::span<const T> pred, double tau) {
  std::vector<std::uint8_t> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] >= tau ? 1 : 0;
  return out;
}

template <Scalar T>
Mask threshold_plane(const Tensor<T>& pred, std::size_t batch_index, double tau) {
  if (pred.rank() != 4 || pred.dim(1) != 1 || batch_index >= pred.dim(0)) {
    throw DimensionError("threshold_plane expects [B,1,H,W] with index < B, got " +
                         shape_to_string(pred.shape()));
  }
  const std::size_t h = pred.dim(2), w = pred.dim(3);
  auto plane = pred.data().subspan(batch_index * h * w, h * w);
  return Mask(h, w, threshold_binarize<T>(plane, tau));
}

template Tensor<float> dice_loss(const Tensor<float>&, const Tensor<float>&, const DiceLossParams&);
template Tensor<double> dice_loss(const Tensor<double>&, const Tensor<double>&,
                                  const DiceLossParams&);
template std::vector<std::uint8_t> threshold_binarize<float>(std::span<const float>, double);
template std::vector<std::uint8_t> threshold_binarize<double>(std::span<const double>, double);
template Mask threshold_plane(const Tensor<float>&, std::size_t, double);
template Mask threshold_plane(const Tensor<double>&, std::size_t, double);

}  // namespace gmseg
