#include "gmseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gmseg/errors.hpp"
#include "gmseg/log.hpp"

namespace gmseg {

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": prediction is " + dims_string(a.height, a.width) +
                         ", gold is " + dims_string(b.height, b.width));
  }
}

MaybeValue ratio(double num, double den, double scale = 1.0) {
  if (den == 0.0) return std::nullopt;
  return scale * num / den;
}

}  // namespace

ConfusionCounts confusion(const Mask& pred, const Mask& gold) {
  require_same_shape(pred, gold, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.values[i] != 0, g = gold.values[i] != 0;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

OverlapMetrics overlap_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  OverlapMetrics m;
  m.dsc = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  m.ji = ratio(tp, tp + fp + fn);
  m.tpr = ratio(tp, tp + fn, 100.0);
  m.tnr = ratio(tn, tn + fp, 100.0);
  m.ppv = ratio(tp, tp + fp, 100.0);
  if (c.tp > 0) m.cc = 100.0 * (1.0 - (fp + fn) / tp);
  return m;
}

Table3Metrics table3_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const auto tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double n = tp + fp + tn + fn;
  Table3Metrics m;
  m.dice = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  m.pixel_accuracy = ratio(tp + tn, n);
  m.recall = ratio(tp, tp + fn);
  m.precision = ratio(tp, tp + fp);
  const MaybeValue acc_fg = ratio(tp, tp + fn), acc_bg = ratio(tn, tn + fp);
  if (acc_fg && acc_bg) m.mean_accuracy = (*acc_fg + *acc_bg) / 2.0;
  const MaybeValue iu_fg = ratio(tp, tp + fp + fn), iu_bg = ratio(tn, tn + fn + fp);
  if (iu_fg && iu_bg) m.mean_iu = (*iu_fg + *iu_bg) / 2.0;
  if (n > 0.0) {
    // A class absent from gold has zero weight, so its IU does not matter.
    const double fg = iu_fg ? (tp + fn) * *iu_fg : 0.0;
    const double bg = iu_bg ? (tn + fp) * *iu_bg : 0.0;
    m.freq_weighted_iu = (fg + bg) / n;
  }
  return m;
}

Table3Metrics table3_metrics(const Mask& pred, const Mask& gold) { return table3_metrics(confusion(pred, gold)); }

Mask boundary_mask(const Mask& mask) {
  Mask out(mask.height, mask.width);
  const std::size_t h = mask.height, w = mask.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || !mask(y - 1, x) || !mask(y + 1, x) ||
                        !mask(y, x - 1) || !mask(y, x + 1);
      out(y, x) = edge ? 1 : 0;
    }
  }
  return out;
}

std::vector<PixelPoint> mask_points(const Mask& mask, std::int64_t z) {
  std::vector<PixelPoint> pts;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (mask(y, x)) pts.push_back({static_cast<std::int64_t>(y), static_cast<std::int64_t>(x), z});
    }
  }
  return pts;
}

std::vector<PixelPoint> boundary(const Mask& mask) { return mask_points(boundary_mask(mask)); }

namespace {

// 8-connected component labels (0 = background), numbered from 1 in raster
// order of each component's first pixel.
std::vector<std::size_t> label_components(const Mask& m, std::size_t& count) {
  const std::size_t h = m.height, w = m.width;
  std::vector<std::size_t> label(m.size(), 0);
  std::vector<std::size_t> stack;
  count = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m.values[i] || label[i]) continue;
    label[i] = ++count;
    stack.push_back(i);
    while (!stack.empty()) {
      const std::size_t j = stack.back();
      stack.pop_back();
      const long y = static_cast<long>(j / w), x = static_cast<long>(j % w);
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
          const std::size_t k = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
          if (m.values[k] && !label[k]) {
            label[k] = count;
            stack.push_back(k);
          }
        }
      }
    }
  }
  return label;
}

}  // namespace

Mask skeletonize(const Mask& mask) {
  Mask img = mask;
  for (auto& v : img.values) v = v ? 1 : 0;
  const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  auto px = [&img, h, w](long y, long x) -> int {
    if (y < 0 || x < 0 || y >= h || x >= w) return 0;
    return img(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  std::vector<std::size_t> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      candidates.clear();
      for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
          if (!px(y, x)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {px(y - 1, x), px(y - 1, x + 1), px(y, x + 1), px(y + 1, x + 1),
                            px(y + 1, x), px(y + 1, x - 1), px(y, x - 1), px(y - 1, x - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const int p2 = p[0], p4 = p[2], p6 = p[4], p8 = p[6];
          const bool ok = pass == 0 ? (p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0)
                                    : (p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0);
          if (ok) candidates.push_back(static_cast<std::size_t>(y * w + x));
        }
      }
      if (candidates.empty()) continue;
      std::size_t ncomp = 0;
      const auto label = label_components(img, ncomp);
      std::vector<std::size_t> size(ncomp + 1, 0), marked(ncomp + 1, 0);
      for (std::size_t i = 0; i < img.size(); ++i) ++size[label[i]];
      for (auto i : candidates) ++marked[label[i]];
      std::vector<bool> keep_first(ncomp + 1, false);
      for (std::size_t c = 1; c <= ncomp; ++c) keep_first[c] = marked[c] == size[c];
      for (auto i : candidates) {
        const std::size_t c = label[i];
        if (keep_first[c]) {
          // candidates are in raster order, so the first one seen is the component's first pixel
          keep_first[c] = false;
          continue;
        }
        img.values[i] = 0;
        changed = true;
      }
    }
  }
  return img;
}

double point_distance(const PixelPoint& a, const PixelPoint& b, const PixelSize& s) {
  const double dy = static_cast<double>(a.y - b.y) * s.row;
  const double dx = static_cast<double>(a.x - b.x) * s.col;
  const double dz = static_cast<double>(a.z - b.z) * s.slice;
  return std::sqrt(dy * dy + dx * dx + dz * dz);
}

std::vector<double> directed_distances(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b,
                                       const PixelSize& s) {
  std::vector<double> out(a.size(), std::numeric_limits<double>::infinity());
  if (b.empty()) return out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const double dy = static_cast<double>(a[i].y - q.y) * s.row;
      const double dx = static_cast<double>(a[i].x - q.x) * s.col;
      const double dz = static_cast<double>(a[i].z - q.z) * s.slice;
      best = std::min(best, dy * dy + dx * dx + dz * dz);
    }
    out[i] = std::sqrt(best);
  }
  return out;
}

SurfaceDistances point_set_distances(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b,
                                     const PixelSize& s) {
  SurfaceDistances r;
  if (a.empty() || b.empty()) return r;
  auto pooled = directed_distances(a, b, s);
  const auto back = directed_distances(b, a, s);
  pooled.insert(pooled.end(), back.begin(), back.end());
  double sum = 0.0, mx = 0.0;
  for (double d : pooled) {
    sum += d;
    mx = std::max(mx, d);
  }
  r.mean = sum / static_cast<double>(pooled.size());
  r.max = mx;
  std::sort(pooled.begin(), pooled.end());
  const std::size_t n = pooled.size();
  r.median = n % 2 == 1 ? pooled[n / 2] : (pooled[n / 2 - 1] + pooled[n / 2]) / 2.0;
  return r;
}

BoundaryMetrics surface_distances(const Mask& pred, const Mask& gold, const PixelSize& s) {
  require_same_shape(pred, gold, "surface_distances");
  const auto d = point_set_distances(boundary(pred), boundary(gold), s);
  return {d.mean, d.max};
}

SkeletonMetrics skeleton_distances(const Mask& pred, const Mask& gold, const PixelSize& s) {
  require_same_shape(pred, gold, "skeleton_distances");
  const auto d = point_set_distances(mask_points(skeletonize(pred)), mask_points(skeletonize(gold)), s);
  return {d.max, d.median};
}

const std::array<std::string_view, kMetricCount>& metric_names() {
  static const std::array<std::string_view, kMetricCount> names{
      "DSC",  "MSD",          "HSD",           "SHD",    "SMD",       "TPR",
      "TNR",  "PPV",          "JI",            "CC",     "Dice",      "MeanAccuracy",
      "PixelAccuracy", "Recall", "Precision", "FreqWeightedIU", "MeanIU"};
  return names;
}

namespace {

void fill_counts(MetricValues& v, const ConfusionCounts& c) {
  const auto o = overlap_metrics(c);
  const auto t = table3_metrics(c);
  auto set = [&v](Metric m, MaybeValue x) { v[static_cast<std::size_t>(m)] = x; };
  set(Metric::DSC, o.dsc);
  set(Metric::TPR, o.tpr);
  set(Metric::TNR, o.tnr);
  set(Metric::PPV, o.ppv);
  set(Metric::JI, o.ji);
  set(Metric::CC, o.cc);
  set(Metric::Dice, t.dice);
  set(Metric::MeanAccuracy, t.mean_accuracy);
  set(Metric::PixelAccuracy, t.pixel_accuracy);
  set(Metric::Recall, t.recall);
  set(Metric::Precision, t.precision);
  set(Metric::FreqWeightedIU, t.freq_weighted_iu);
  set(Metric::MeanIU, t.mean_iu);
}

}  // namespace

MetricValues slice_metrics(const Mask& pred, const Mask& gold, const PixelSize& s) {
  MetricValues v;
  fill_counts(v, confusion(pred, gold));
  const auto b = surface_distances(pred, gold, s);
  const auto k = skeleton_distances(pred, gold, s);
  v[static_cast<std::size_t>(Metric::MSD)] = b.msd;
  v[static_cast<std::size_t>(Metric::HSD)] = b.hsd;
  v[static_cast<std::size_t>(Metric::SHD)] = k.shd;
  v[static_cast<std::size_t>(Metric::SMD)] = k.smd;
  return v;
}

std::vector<MetricRow> evaluate_volume(const std::vector<Mask>& pred,
                                       const std::vector<std::vector<std::optional<Mask>>>& gold_raters,
                                       const PixelSize& s, const std::string& subject, DistanceMode mode) {
  if (gold_raters.empty()) throw ContractError("evaluate_volume needs at least one gold rater");
  if (gold_raters.size() > 4) throw ContractError("evaluate_volume supports at most 4 raters");
  std::vector<MetricRow> rows;
  for (std::size_t r = 0; r < gold_raters.size(); ++r) {
    const auto& gold = gold_raters[r];
    if (gold.size() != pred.size()) {
      throw DimensionError("rater " + std::to_string(r) + " has " + std::to_string(gold.size()) +
                           " slices, prediction has " + std::to_string(pred.size()));
    }
    MetricRow row;
    row.subject = subject;
    row.rater = r;
    ConfusionCounts counts;
    double sum_msd = 0, sum_hsd = 0, sum_shd = 0, sum_smd = 0;
    std::size_t n_dist = 0;
    std::vector<PixelPoint> pb, gb, ps, gs;
    for (std::size_t z = 0; z < pred.size(); ++z) {
      if (!gold[z]) continue;
      const Mask& g = *gold[z];
      require_same_shape(pred[z], g, "evaluate_volume");
      ++row.slices_evaluated;
      counts += confusion(pred[z], g);
      const auto iz = static_cast<std::int64_t>(z);
      if (mode == DistanceMode::Pooled) {
        for (const auto& p : mask_points(boundary_mask(pred[z]), iz)) pb.push_back(p);
        for (const auto& p : mask_points(boundary_mask(g), iz)) gb.push_back(p);
        for (const auto& p : mask_points(skeletonize(pred[z]), iz)) ps.push_back(p);
        for (const auto& p : mask_points(skeletonize(g), iz)) gs.push_back(p);
        continue;
      }
      const bool pe = std::none_of(pred[z].values.begin(), pred[z].values.end(), [](auto v) { return v != 0; });
      const bool ge = std::none_of(g.values.begin(), g.values.end(), [](auto v) { return v != 0; });
      if (pe && ge) continue;
      if (pe != ge) {
        ++row.distance_skips;
        continue;
      }
      const auto b = surface_distances(pred[z], g, s);
      const auto k = skeleton_distances(pred[z], g, s);
      sum_msd += *b.msd;
      sum_hsd += *b.hsd;
      sum_shd += *k.shd;
      sum_smd += *k.smd;
      ++n_dist;
    }
    if (row.slices_evaluated == 0) continue;
    fill_counts(row.values, counts);
    auto set = [&row](Metric m, MaybeValue x) { row[m] = x; };
    if (mode == DistanceMode::Pooled) {
      const auto b = point_set_distances(pb, gb, s);
      const auto k = point_set_distances(ps, gs, s);
      set(Metric::MSD, b.mean);
      set(Metric::HSD, b.max);
      set(Metric::SHD, k.max);
      set(Metric::SMD, k.median);
      if (pb.empty() != gb.empty()) row.distance_skips = 1;
    } else if (n_dist > 0) {
      const auto n = static_cast<double>(n_dist);
      set(Metric::MSD, sum_msd / n);
      set(Metric::HSD, sum_hsd / n);
      set(Metric::SHD, sum_shd / n);
      set(Metric::SMD, sum_smd / n);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void compute_aggregates(MetricReport& report) {
  const auto& names = metric_names();
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    Aggregate a;
    double sum = 0.0;
    for (const auto& row : report.rows) {
      if (row.values[m]) {
        sum += *row.values[m];
        ++a.count;
      } else {
        ++a.missing;
      }
    }
    if (a.missing > 0) {
      const std::string note = std::string(names[m]) + ": " + std::to_string(a.missing) +
                               " missing value(s) excluded from the aggregate";
      warn(note);
      report.notes.push_back(note);
    }
    if (a.count == 0) {
      report.aggregates[m].reset();
      continue;
    }
    a.mean = sum / static_cast<double>(a.count);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& row : report.rows) {
      if (row.values[m]) {
        lo = std::min(lo, *row.values[m]);
        hi = std::max(hi, *row.values[m]);
      }
    }
    if (lo == hi) {
      // exact for identical rows; summation could otherwise leave rounding residue
      a.mean = lo;
      a.std = 0.0;
      report.aggregates[m] = a;
      continue;
    }
    double ss = 0.0;
    for (const auto& row : report.rows) {
      if (row.values[m]) ss += (*row.values[m] - a.mean) * (*row.values[m] - a.mean);
    }
    a.std = std::sqrt(ss / static_cast<double>(a.count));
    report.aggregates[m] = a;
  }
}

}  // namespace gmseg
