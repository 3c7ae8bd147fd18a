#include "gmseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gmseg/errors.hpp"
#include "gmseg/log.hpp"

namespace gmseg {

namespace {

void require_resizable(std::size_t h, std::size_t w, const char* what) {
  if (h <= 1 || w <= 1) {
    throw DegenerateInputError(std::string(what) + " of size " + dims_string(h, w) +
                               " cannot be resampled");
  }
}

struct Tap {
  std::size_t i0;
  std::size_t i1;
  double f;
};

std::vector<Tap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double hi = static_cast<double>(in - 1);
  for (std::size_t o = 0; o < out; ++o) {
    const double s = std::clamp((static_cast<double>(o) + 0.5) * scale - 0.5, 0.0, hi);
    const double fl = std::floor(s);
    const auto i0 = static_cast<std::size_t>(fl);
    taps[o] = {i0, std::min(i0 + 1, in - 1), s - fl};
  }
  return taps;
}

template <typename V>
std::vector<double> bilinear(const Grid<V>& g, std::size_t out_h, std::size_t out_w) {
  const auto ty = linear_taps(g.height, out_h);
  const auto tx = linear_taps(g.width, out_w);
  std::vector<double> out(out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto& a = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& b = tx[x];
      const double v00 = g(a.i0, b.i0), v01 = g(a.i0, b.i1);
      const double v10 = g(a.i1, b.i0), v11 = g(a.i1, b.i1);
      const double top = v00 + (v01 - v00) * b.f;
      const double bottom = v10 + (v11 - v10) * b.f;
      out[y * out_w + x] = top + (bottom - top) * a.f;
    }
  }
  return out;
}

}  // namespace

std::size_t resampled_extent(std::size_t n, double pixel_mm, double target_mm) {
  if (!(target_mm > 0.0) || !(pixel_mm > 0.0)) throw ContractError("pixel sizes must be positive");
  const double e = std::round(static_cast<double>(n) * pixel_mm / target_mm);
  return e < 1.0 ? 1 : static_cast<std::size_t>(e);
}

Image resize_bilinear(const Image& image, std::size_t out_h, std::size_t out_w) {
  require_resizable(image.height, image.width, "image");
  const auto v = bilinear(image, out_h, out_w);
  Image out(out_h, out_w);
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = static_cast<float>(v[i]);
  return out;
}

Mask resize_mask_linear(const Mask& mask, std::size_t out_h, std::size_t out_w) {
  require_resizable(mask.height, mask.width, "mask");
  const auto v = bilinear(mask, out_h, out_w);
  Mask out(out_h, out_w);
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = v[i] >= 0.5 ? 1 : 0;
  return out;
}

Mask resize_mask_nearest(const Mask& mask, std::size_t out_h, std::size_t out_w) {
  if (mask.empty()) throw DegenerateInputError("cannot resize an empty mask");
  auto index = [](std::size_t o, std::size_t in, std::size_t out) {
    const auto i = static_cast<std::size_t>(std::floor((static_cast<double>(o) + 0.5) *
                                                       static_cast<double>(in) / static_cast<double>(out)));
    return std::min(i, in - 1);
  };
  Mask out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const std::size_t sy = index(y, mask.height, out_h);
    for (std::size_t x = 0; x < out_w; ++x) out(y, x) = mask(sy, index(x, mask.width, out_w));
  }
  return out;
}

Volume resample_inplane(const Volume& volume, double target_row_mm, double target_col_mm) {
  if (!(target_row_mm > 0.0) || !(target_col_mm > 0.0)) {
    throw ContractError("resample target spacing must be strictly positive");
  }
  volume.validate();
  if (volume.pixel_size.row == target_row_mm && volume.pixel_size.col == target_col_mm) return volume;
  require_resizable(volume.height(), volume.width(), "volume");
  const std::size_t out_h = resampled_extent(volume.height(), volume.pixel_size.row, target_row_mm);
  const std::size_t out_w = resampled_extent(volume.width(), volume.pixel_size.col, target_col_mm);
  Volume out;
  out.subject = volume.subject;
  out.site = volume.site;
  out.pixel_size = {target_row_mm, target_col_mm, volume.pixel_size.slice};
  out.slices.reserve(volume.num_slices());
  for (const auto& s : volume.slices) out.slices.push_back(resize_bilinear(s, out_h, out_w));
  for (const auto& rater : volume.raters) {
    std::vector<std::optional<Mask>> r;
    for (const auto& m : rater) {
      if (m) {
        r.emplace_back(resize_mask_linear(*m, out_h, out_w));
      } else {
        r.emplace_back();
      }
    }
    out.raters.push_back(std::move(r));
  }
  return out;
}

CropWindow center_crop_window(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw ContractError("crop size must be positive");
  auto offset = [](std::size_t in, std::size_t out) {
    const long d = static_cast<long>(in) - static_cast<long>(out);
    return d >= 0 ? d / 2 : -((-d + 1) / 2);  // floor(d / 2)
  };
  return {in_h, in_w, out_h, out_w, offset(in_h, out_h), offset(in_w, out_w)};
}

template <typename V>
Grid<V> apply_crop(const Grid<V>& grid, const CropWindow& w) {
  if (grid.height != w.in_h || grid.width != w.in_w) {
    throw DimensionError("crop window built for " + dims_string(w.in_h, w.in_w) + ", input is " +
                         dims_string(grid.height, grid.width));
  }
  Grid<V> out(w.out_h, w.out_w);
  for (std::size_t y = 0; y < w.out_h; ++y) {
    const long sy = static_cast<long>(y) + w.top;
    if (sy < 0 || sy >= static_cast<long>(w.in_h)) continue;
    for (std::size_t x = 0; x < w.out_w; ++x) {
      const long sx = static_cast<long>(x) + w.left;
      if (sx < 0 || sx >= static_cast<long>(w.in_w)) continue;
      out(y, x) = grid(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
    }
  }
  return out;
}

template <typename V>
Grid<V> undo_crop(const Grid<V>& cropped, const CropWindow& w) {
  if (cropped.height != w.out_h || cropped.width != w.out_w) {
    throw DimensionError("cropped grid is " + dims_string(cropped.height, cropped.width) +
                         ", window is " + dims_string(w.out_h, w.out_w));
  }
  Grid<V> out(w.in_h, w.in_w);
  for (std::size_t y = 0; y < w.out_h; ++y) {
    const long sy = static_cast<long>(y) + w.top;
    if (sy < 0 || sy >= static_cast<long>(w.in_h)) continue;
    for (std::size_t x = 0; x < w.out_w; ++x) {
      const long sx = static_cast<long>(x) + w.left;
      if (sx < 0 || sx >= static_cast<long>(w.in_w)) continue;
      out(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) = cropped(y, x);
    }
  }
  return out;
}

template Image apply_crop(const Image&, const CropWindow&);
template Mask apply_crop(const Mask&, const CropWindow&);
template Image undo_crop(const Image&, const CropWindow&);
template Mask undo_crop(const Mask&, const CropWindow&);

IntensityStats intensity_stats(std::span<const Image> slices) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const auto& s : slices) {
    for (float v : s.values) sum += v;
    n += s.size();
  }
  if (n == 0) throw DegenerateInputError("cannot normalize an empty volume");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : slices) {
    for (float v : s.values) ss += (v - mean) * (v - mean);
  }
  const double var = ss / static_cast<double>(n);
  if (!(var > 0.0) || std::sqrt(var) <= 1e-12 * std::max(1.0, std::abs(mean))) {
    throw DegenerateInputError("intensity variance is zero; cannot normalize a constant volume");
  }
  return {mean, std::sqrt(var)};
}

Image normalize(const Image& slice, const IntensityStats& stats) {
  Image out(slice.height, slice.width);
  for (std::size_t i = 0; i < slice.size(); ++i) {
    out.values[i] = static_cast<float>((slice.values[i] - stats.mean) / stats.std);
  }
  return out;
}

Image normalize(const Image& slice) { return normalize(slice, intensity_stats(std::span(&slice, 1))); }

PreparedVolume prepare_volume(const Volume& volume, const PreprocessConfig& config) {
  volume.validate();
  if (volume.num_slices() == 0) throw DegenerateInputError("volume has no slices");
  PreparedVolume p;
  p.original_height = volume.height();
  p.original_width = volume.width();
  Volume v = config.resample ? resample_inplane(volume, config.target_row_mm, config.target_col_mm) : volume;
  p.resampled_height = v.height();
  p.resampled_width = v.width();
  p.window = center_crop_window(v.height(), v.width(), config.crop_height, config.crop_width);
  for (auto& s : v.slices) s = apply_crop(s, p.window);
  for (auto& rater : v.raters) {
    for (auto& m : rater) {
      if (m) m = apply_crop(*m, p.window);
    }
  }
  p.stats = intensity_stats(v.slices);
  for (auto& s : v.slices) s = normalize(s, p.stats);
  p.volume = std::move(v);
  return p;
}

Mask restore_geometry(const Mask& cropped, const PreparedVolume& p) {
  Mask m = undo_crop(cropped, p.window);
  if (m.height != p.original_height || m.width != p.original_width) {
    m = resize_mask_nearest(m, p.original_height, p.original_width);
  }
  if (m.height != p.original_height || m.width != p.original_width) {
    throw InternalError("geometry round-trip produced " + dims_string(m.height, m.width) + ", expected " +
                        dims_string(p.original_height, p.original_width));
  }
  return m;
}

std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t k) {
  if (k == 0 || k > n) {
    throw InvalidConfigError("cannot select " + std::to_string(k) + " evenly spaced items out of " +
                             std::to_string(n));
  }
  if (k == 1) return {(n - 1) / 2};
  std::vector<std::size_t> idx(k);
  const std::size_t den = k - 1;
  for (std::size_t i = 0; i < k; ++i) {
    // round-half-up of i * (n - 1) / (k - 1) in integer arithmetic
    idx[i] = (2 * i * (n - 1) + den) / (2 * den);
  }
  return idx;
}

DatasetSplit split_by_subject(std::span<const std::string> sites, std::size_t holdout_per_site) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> by_site;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    auto [it, inserted] = by_site.try_emplace(sites[i]);
    if (inserted) order.push_back(sites[i]);
    it->second.push_back(i);
  }
  std::vector<bool> held(sites.size(), false);
  for (const auto& site : order) {
    const auto& members = by_site[site];
    if (holdout_per_site > members.size()) {
      throw InvalidConfigError("site '" + site + "' has " + std::to_string(members.size()) +
                               " subjects, cannot hold out " + std::to_string(holdout_per_site));
    }
    for (std::size_t j = members.size() - holdout_per_site; j < members.size(); ++j) held[members[j]] = true;
  }
  DatasetSplit split;
  for (std::size_t i = 0; i < sites.size(); ++i) (held[i] ? split.validation : split.train).push_back(i);
  if (split.train.empty()) throw InvalidConfigError("validation holdout leaves no training subjects");
  return split;
}

DatasetSplit split_evenly_spaced(std::size_t n, std::size_t train_count, std::size_t validation_count,
                                 std::size_t test_count) {
  if (train_count + validation_count + test_count > n) {
    throw InvalidConfigError("requested " + std::to_string(train_count) + "/" +
                             std::to_string(validation_count) + "/" + std::to_string(test_count) +
                             " slices but only " + std::to_string(n) + " are available");
  }
  std::vector<std::size_t> remaining(n);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = i;
  auto take = [&remaining](std::size_t k) {
    std::vector<std::size_t> chosen;
    if (k == 0) return chosen;
    for (std::size_t j : evenly_spaced(remaining.size(), k)) chosen.push_back(remaining[j]);
    std::vector<std::size_t> rest;
    std::set_difference(remaining.begin(), remaining.end(), chosen.begin(), chosen.end(),
                        std::back_inserter(rest));
    remaining = std::move(rest);
    return chosen;
  };
  DatasetSplit split;
  split.train = take(train_count);
  split.validation = take(validation_count);
  split.test = take(test_count);
  return split;
}

std::vector<TrainingSlice> training_slices(const Volume& prepared) {
  std::vector<TrainingSlice> out;
  std::size_t skipped = 0;
  for (std::size_t s = 0; s < prepared.num_slices(); ++s) {
    TrainingSlice ts;
    ts.image = prepared.slices[s];
    ts.subject = prepared.subject;
    ts.slice_index = s;
    for (std::size_t r = 0; r < prepared.raters.size(); ++r) {
      if (prepared.raters[r][s]) {
        ts.masks.push_back(*prepared.raters[r][s]);
        ts.rater_ids.push_back(r);
      }
    }
    if (ts.masks.empty()) {
      ++skipped;
      continue;
    }
    out.push_back(std::move(ts));
  }
  if (skipped > 0) {
    warn("subject '" + prepared.subject + "': skipped " + std::to_string(skipped) +
         " slice(s) without any rater mask");
  }
  return out;
}

std::vector<SliceSample> sample_batch(std::span<const TrainingSlice> train_set, std::size_t batch_size,
                                      Rng& rng) {
  if (train_set.empty()) throw ContractError("sample_batch needs a nonempty training set");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    if (!train_set[i].masks.empty()) usable.push_back(i);
  }
  if (usable.size() != train_set.size()) {
    warn("sample_batch: skipping " + std::to_string(train_set.size() - usable.size()) +
         " slice(s) without masks");
  }
  if (usable.empty()) throw DegenerateInputError("no training slice has a rater mask");
  std::vector<SliceSample> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto& ts = train_set[usable[rng.uniform_index(usable.size())]];
    const auto r = ts.masks.size() == 1 ? 0 : rng.uniform_index(ts.masks.size());
    batch.push_back({ts.image, ts.masks[r], ts.subject, ts.slice_index, ts.rater_ids[r]});
  }
  return batch;
}

}  // namespace gmseg
