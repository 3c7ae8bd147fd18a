#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmseg/grid.hpp"
#include "gmseg/volume.hpp"

namespace gmseg {

/// Missing when a denominator is zero.
using MaybeValue = std::optional<double>;

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gold);

/// DSC and JI in [0,1]; TPR, TNR, PPV and CC in percent.
struct OverlapMetrics {
  MaybeValue dsc, ji, tpr, tnr, ppv, cc;
};
OverlapMetrics overlap_metrics(const ConfusionCounts& counts);

/// Two-class (foreground/background) scores, all in [0,1].
struct Table3Metrics {
  MaybeValue dice, mean_accuracy, pixel_accuracy, recall, precision, freq_weighted_iu, mean_iu;
};
Table3Metrics table3_metrics(const ConfusionCounts& counts);
Table3Metrics table3_metrics(const Mask& pred, const Mask& gold);

// ---- morphology ----

/// Integer pixel position.
struct PixelPoint {
  std::int64_t y = 0;
  std::int64_t x = 0;
  std::int64_t z = 0;  // slice index, used only when distances pool slices
  bool operator==(const PixelPoint&) const = default;
};

/// Mask pixels with at least one 4-neighbour outside the mask (the image
/// border counts as outside).
Mask boundary_mask(const Mask& mask);
/// Foreground pixels in raster order.
std::vector<PixelPoint> mask_points(const Mask& mask, std::int64_t z = 0);
std::vector<PixelPoint> boundary(const Mask& mask);

/// Zhang-Suen thinning to a fixpoint. When a sub-iteration would delete every
/// pixel of an 8-connected component, the component's first pixel in raster
/// order is kept so no component vanishes.
Mask skeletonize(const Mask& mask);

// ---- distances ----

/// Euclidean distance in mm between pixel points given the spacing.
double point_distance(const PixelPoint& a, const PixelPoint& b, const PixelSize& spacing);

/// d(a, B) for every a in A, exact pairwise.
std::vector<double> directed_distances(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b,
                                       const PixelSize& spacing);

struct SurfaceDistances {
  MaybeValue mean;    // pooled symmetric mean
  MaybeValue max;     // Hausdorff
  MaybeValue median;  // median of the pooled list
};

/// Statistics of the pooled list {d(a,B)} ∪ {d(b,A)}. Missing when either set
/// is empty. An even-length median averages the two middle values.
SurfaceDistances point_set_distances(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b,
                                     const PixelSize& spacing);

struct BoundaryMetrics {
  MaybeValue msd, hsd;
};
BoundaryMetrics surface_distances(const Mask& pred, const Mask& gold, const PixelSize& spacing);

struct SkeletonMetrics {
  MaybeValue shd, smd;
};
SkeletonMetrics skeleton_distances(const Mask& pred, const Mask& gold, const PixelSize& spacing);

// ---- full battery ----

enum class Metric : std::size_t {
  DSC,
  MSD,
  HSD,
  SHD,
  SMD,
  TPR,
  TNR,
  PPV,
  JI,
  CC,
  Dice,
  MeanAccuracy,
  PixelAccuracy,
  Recall,
  Precision,
  FreqWeightedIU,
  MeanIU,
};
inline constexpr std::size_t kMetricCount = 17;
/// Column names in report order.
const std::array<std::string_view, kMetricCount>& metric_names();

using MetricValues = std::array<MaybeValue, kMetricCount>;

/// All 17 metrics for one 2-D pair.
MetricValues slice_metrics(const Mask& pred, const Mask& gold, const PixelSize& spacing);

enum class DistanceMode {
  PerSlice,  // distances per axial slice, averaged over slices where both masks are nonempty
  Pooled,    // one 3-D point set per volume, slice spacing from pixel_size.slice
};

struct MetricRow {
  std::string subject;
  std::size_t rater = 0;
  MetricValues values;
  std::size_t slices_evaluated = 0;
  /// Slices where exactly one of pred/gold was empty, so distances were skipped.
  std::size_t distance_skips = 0;

  MaybeValue& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  const MaybeValue& operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
  std::size_t missing = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::array<std::optional<Aggregate>, kMetricCount> aggregates;
  std::vector<std::string> notes;
};

/// One row per rater that has at least one mask. Overlap and statistical
/// metrics pool confusion counts over the slices the rater annotated.
std::vector<MetricRow> evaluate_volume(const std::vector<Mask>& pred,
                                       const std::vector<std::vector<std::optional<Mask>>>& gold_raters,
                                       const PixelSize& spacing, const std::string& subject,
                                       DistanceMode mode = DistanceMode::PerSlice);

/// Mean/std per metric over rows with a value; missing values are excluded
/// with a warning.
void compute_aggregates(MetricReport& report);

}  // namespace gmseg
