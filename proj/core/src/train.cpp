#include "gmseg/train.hpp"

#include <cmath>
#include <string>

#include "gmseg/errors.hpp"
#include "gmseg/objective.hpp"

namespace gmseg {

namespace {

// Stream ids for counter-based splitting of the run seed.
constexpr std::uint64_t kSamplerStream = 10;
constexpr std::uint64_t kAugmentStream = 11;

}  // namespace

template <Scalar T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ContractError("cannot stack an empty image list");
  const std::size_t h = images.front().height, w = images.front().width;
  std::vector<T> data;
  data.reserve(images.size() * h * w);
  for (const auto& img : images) {
    if (img.height != h || img.width != w) {
      throw DimensionError("batch images differ in size: " + dims_string(img.height, img.width) + " vs " +
                           dims_string(h, w));
    }
    for (float v : img.values) data.push_back(static_cast<T>(v));
  }
  return Tensor<T>({images.size(), 1, h, w}, std::move(data));
}

template <Scalar T>
std::vector<Mask> predict_masks(Network<T>& network, std::span<const Image> images, double tau,
                                std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  const bool was_training = network.training();
  network.set_training(false);
  NoGradGuard no_grad;
  std::vector<Mask> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const auto chunk = images.subspan(start, std::min(batch_size, images.size() - start));
    const auto pred = network.forward(images_to_tensor<T>(chunk));
    for (std::size_t b = 0; b < chunk.size(); ++b) out.push_back(threshold_plane(pred, b, tau));
  }
  network.set_training(was_training);
  return out;
}

template <Scalar T>
std::optional<double> pooled_dsc(Network<T>& network, std::span<const TrainingSlice> slices, double tau,
                                 std::size_t batch_size) {
  if (slices.empty()) return std::nullopt;
  std::vector<Image> images;
  images.reserve(slices.size());
  for (const auto& s : slices) images.push_back(s.image);
  const auto pred = predict_masks(network, std::span<const Image>(images), tau, batch_size);
  ConfusionCounts counts;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    for (const auto& m : slices[i].masks) counts += confusion(pred[i], m);
  }
  return overlap_metrics(counts).dsc;
}

template <Scalar T>
std::vector<EpochRecord> train_loop(Network<T>& network, AdamState<T>& optimizer,
                                    std::span<const TrainingSlice> train, std::span<const TrainingSlice> validation,
                                    const TrainLoopOptions& o, const EpochCallback<T>& on_epoch) {
  if (o.epochs > 0 && train.empty()) throw DegenerateInputError("training set is empty");
  if (o.batch_size == 0 || o.batches_per_epoch == 0) throw InvalidConfigError("batch counts must be positive");
  if (o.augment_enabled) o.augment.validate();
  const Rng root(o.seed);
  Rng sampler = root.split(kSamplerStream);
  const Rng augment_root = root.split(kAugmentStream).split(o.augment.seed);
  const DiceLossParams dice{o.dice_epsilon};

  std::vector<EpochRecord> curve;
  std::uint64_t sample_counter = 0;
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    const double lr = o.schedule.rate(epoch);
    network.set_training(true);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < o.batches_per_epoch; ++b) {
      const auto batch = sample_batch(train, o.batch_size, sampler);
      std::vector<Image> images;
      std::vector<T> gold;
      images.reserve(batch.size());
      for (const auto& s : batch) {
        Image img = s.image;
        Mask mask = s.mask;
        if (o.augment_enabled) {
          Rng r = augment_root.split(sample_counter);
          std::tie(img, mask) = augment_pair(img, mask, o.augment, r);
        }
        ++sample_counter;
        for (auto v : mask.values) gold.push_back(static_cast<T>(v));
        images.push_back(std::move(img));
      }
      const auto input = images_to_tensor<T>(std::span<const Image>(images));
      const Tensor<T> gold_t(input.shape(), std::move(gold));
      network.zero_grad();
      const auto pred = network.forward(input);
      Tensor<T> loss;
      try {
        loss = dice_loss(pred, gold_t, dice);
      } catch (const NumericalError& e) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                             ": " + e.what());
      }
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(b) + " (lr " + std::to_string(lr) + ")");
      }
      loss.backward();
      try {
        adam_step(network.parameters(), optimizer, lr);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(b));
      }
      loss_sum += value;
    }
    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(o.batches_per_epoch), std::nullopt};
    if (!validation.empty()) rec.val_dsc = pooled_dsc(network, validation, o.tau, o.batch_size);
    curve.push_back(rec);
    if (on_epoch) on_epoch(rec, network, optimizer);
  }
  network.zero_grad();
  return curve;
}

#define GMSEG_INSTANTIATE_TRAIN(T)                                                                       \
  template Tensor<T> images_to_tensor<T>(std::span<const Image>);                                       \
  template std::vector<Mask> predict_masks(Network<T>&, std::span<const Image>, double, std::size_t);   \
  template std::optional<double> pooled_dsc(Network<T>&, std::span<const TrainingSlice>, double,        \
                                            std::size_t);                                               \
  template std::vector<EpochRecord> train_loop(Network<T>&, AdamState<T>&, std::span<const TrainingSlice>, \
                                               std::span<const TrainingSlice>, const TrainLoopOptions&, \
                                               const EpochCallback<T>&);

GMSEG_INSTANTIATE_TRAIN(float)
GMSEG_INSTANTIATE_TRAIN(double)

}  // namespace gmseg
