#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gmseg/grid.hpp"
#include "gmseg/rng.hpp"
#include "gmseg/volume.hpp"

namespace gmseg {

// ---- resampling ----

/// Output extent for a resample from `pixel_mm` to `target_mm`:
/// max(1, round(n * pixel_mm / target_mm)).
std::size_t resampled_extent(std::size_t n, double pixel_mm, double target_mm);

/// Bilinear resize. Output pixel centre o maps to source coordinate
/// (o + 0.5) * in / out - 0.5, clamped to the image (edge replicate).
Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w);
/// Bilinear warp of a 0/1 mask followed by a >= 0.5 threshold.
Mask resize_mask_linear(const Mask& mask, std::size_t out_h, std::size_t out_w);
/// Nearest-neighbour resize; source index floor((o + 0.5) * in / out).
Mask resize_mask_nearest(const Mask& mask, std::size_t out_h, std::size_t out_w);

/// Resamples every slice and rater mask in-plane. Inputs already at the
/// target spacing are returned unchanged.
Volume resample_inplane(const Volume& volume, double target_row_mm, double target_col_mm);

// ---- cropping ----

/// Placement of an (in_h x in_w) slice inside an (out_h x out_w) window.
/// Offsets are floor((in - out) / 2) and are negative when the input is
/// smaller than the window (zero padding).
struct CropWindow {
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  long top = 0;
  long left = 0;
};

CropWindow center_crop_window(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w);

template <typename V>
Grid<V> apply_crop(const Grid<V>& grid, const CropWindow& window);
/// Inverse placement: returns an (in_h x in_w) grid, zero where the window
/// did not cover the input.
template <typename V>
Grid<V> undo_crop(const Grid<V>& cropped, const CropWindow& window);

template <typename V>
Grid<V> center_crop(const Grid<V>& grid, std::size_t out_h = 200, std::size_t out_w = 200) {
  return apply_crop(grid, center_crop_window(grid.height, grid.width, out_h, out_w));
}

// ---- intensity normalization ----

struct IntensityStats {
  double mean = 0.0;
  double std = 1.0;  // population standard deviation
};

/// Mean and std over every pixel of every slice. Zero variance throws
/// DegenerateInputError.
IntensityStats intensity_stats(std::span<const Image> slices);
Image normalize(const Image& slice, const IntensityStats& stats);
/// Normalizes a single slice by its own statistics.
Image normalize(const Image& slice);

// ---- full pipeline ----

struct PreprocessConfig {
  bool resample = true;
  double target_row_mm = 0.25;
  double target_col_mm = 0.25;
  std::size_t crop_height = 200;
  std::size_t crop_width = 200;
};

/// Volume after resample -> crop -> normalize, with the geometry needed to
/// map predictions back onto the input grid.
struct PreparedVolume {
  Volume volume;
  std::size_t original_height = 0;
  std::size_t original_width = 0;
  std::size_t resampled_height = 0;
  std::size_t resampled_width = 0;
  CropWindow window;
  IntensityStats stats;
};

PreparedVolume prepare_volume(const Volume& volume, const PreprocessConfig& config);

/// Undo crop then nearest-resample back to the original geometry.
Mask restore_geometry(const Mask& cropped, const PreparedVolume& prepared);

// ---- splitting ----

/// round(i * (n - 1) / (k - 1)) for i in [0, k); k == 1 picks the centre
/// index. Requires 1 <= k <= n.
std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t k);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Holds out the last `holdout_per_site` subjects of each site (in input
/// order) for validation.
DatasetSplit split_by_subject(std::span<const std::string> sites, std::size_t holdout_per_site);

/// Evenly spaced training slices over [0, n); validation and test are each
/// spread evenly over the slices not yet taken, so all sets are disjoint.
DatasetSplit split_evenly_spaced(std::size_t n, std::size_t train_count, std::size_t validation_count,
                                 std::size_t test_count);

// ---- sampling ----

/// A preprocessed slice with every rater mask available for it.
struct TrainingSlice {
  Image image;
  std::vector<Mask> masks;
  std::vector<std::size_t> rater_ids;  // rater index of each entry in masks
  std::string subject;
  std::size_t slice_index = 0;
};

struct SliceSample {
  Image image;
  Mask mask;
  std::string subject;
  std::size_t slice_index = 0;
  std::size_t rater = 0;
};

/// Collects the slices of a prepared volume that have at least one mask.
/// Slices with no masks are skipped with a warning.
std::vector<TrainingSlice> training_slices(const Volume& prepared);

/// Draws slices uniformly with replacement, then one of each slice's raters
/// uniformly. Slices with no masks are skipped with a warning.
std::vector<SliceSample> sample_batch(std::span<const TrainingSlice> train_set, std::size_t batch_size,
                                      Rng& rng);

}  // namespace gmseg
