#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gmseg/augment.hpp"
#include "gmseg/metrics.hpp"
#include "gmseg/model.hpp"
#include "gmseg/optim.hpp"
#include "gmseg/preprocess.hpp"

namespace gmseg {

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean batch loss
  std::optional<double> val_dsc;
};

struct TrainLoopOptions {
  std::size_t epochs = 1000;
  std::size_t batches_per_epoch = 32;
  std::size_t batch_size = 11;
  PolySchedule schedule;
  double dice_epsilon = 1.0;
  double tau = 0.999;
  bool augment_enabled = true;
  AugmentConfig augment;
  std::uint64_t seed = 0;
};

/// Called after each epoch with the record and the current model state.
template <Scalar T>
using EpochCallback = std::function<void(const EpochRecord&, Network<T>&, AdamState<T>&)>;

/// Per epoch: batches_per_epoch x (sample_batch -> augment -> forward ->
/// dice_loss -> backward -> adam_step at schedule.rate(epoch)), then
/// validation DSC when a validation set is given. Random streams derive from
/// `seed` by counter-based splitting, so results depend only on the inputs.
/// A non-finite loss throws NumericalError naming epoch and batch.
template <Scalar T>
std::vector<EpochRecord> train_loop(Network<T>& network, AdamState<T>& optimizer,
                                    std::span<const TrainingSlice> train, std::span<const TrainingSlice> validation,
                                    const TrainLoopOptions& options, const EpochCallback<T>& on_epoch = {});

/// Stacks equally sized images into a [B,1,H,W] tensor.
template <Scalar T>
Tensor<T> images_to_tensor(std::span<const Image> images);

/// Eval-mode inference, `batch_size` slices at a time, binarized at tau.
template <Scalar T>
std::vector<Mask> predict_masks(Network<T>& network, std::span<const Image> images, double tau,
                                std::size_t batch_size = 1);

/// DSC of the confusion counts pooled over every (slice, rater mask) pair.
/// Missing when both prediction and gold are empty everywhere.
template <Scalar T>
std::optional<double> pooled_dsc(Network<T>& network, std::span<const TrainingSlice> slices, double tau,
                                 std::size_t batch_size = 1);

}  // namespace gmseg
