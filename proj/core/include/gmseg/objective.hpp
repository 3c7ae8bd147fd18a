#pragma once

#include "gmseg/grid.hpp"
#include "gmseg/tensor.hpp"

namespace gmseg {

struct DiceLossParams {
  double epsilon = 1.0;
};

/// L = -(2 sum(p*r) + eps) / (sum(p) + sum(r) + eps), summed over every
/// element of the batch. Differentiable with respect to `pred` only.
/// Throws DimensionError on shape mismatch and ContractError when `pred`
/// leaves [0,1] by more than 1e-6 or `gold` is not binary.
template <Scalar T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& gold, const DiceLossParams& params = {});

/// 1 where pred >= tau, else 0.
template <Scalar T>
std::vector<std::uint8_t> threshold_binarize(std::span<const T> pred, double tau);

/// Binarises one [H,W] plane of a prediction tensor.
template <Scalar T>
Mask threshold_plane(const Tensor<T>& pred, std::size_t batch_index, double tau);

}  // namespace gmseg
