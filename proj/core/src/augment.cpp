#include "gmseg/augment.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include "gmseg/errors.hpp"

namespace gmseg {

void AugmentConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidConfigError(std::string("augment.") + name + " must be a finite value >= 0");
    }
  };
  nonneg(rotation_max_deg, "rotation_max_deg");
  nonneg(shift_max_px, "shift_max_px");
  nonneg(intensity_shift_max, "intensity_shift_max");
  nonneg(noise_std, "noise_std");
  nonneg(elastic_alpha, "elastic_alpha");
  nonneg(elastic_sigma, "elastic_sigma");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw InvalidConfigError("augment.flip_prob must lie in [0, 1]");
  if (!(scale_min > 0.0) || !(scale_max >= scale_min) || !std::isfinite(scale_max)) {
    throw InvalidConfigError("augment.scale_min/scale_max must satisfy 0 < min <= max");
  }
}

AugmentConfig no_augmentation() {
  AugmentConfig c;
  c.rotation = c.shift = c.scale = c.flip = c.intensity_shift = c.noise = c.elastic = false;
  return c;
}

AugmentParams sample_augment_params(const AugmentConfig& c, Rng& rng) {
  AugmentParams p;
  if (c.rotation) {
    const double max_rad = c.rotation_max_deg * std::numbers::pi / 180.0;
    p.angle_rad = rng.uniform(-max_rad, max_rad);
  }
  if (c.scale) p.scale = rng.uniform(c.scale_min, c.scale_max);
  if (c.shift) {
    p.shift_y = rng.uniform(-c.shift_max_px, c.shift_max_px);
    p.shift_x = rng.uniform(-c.shift_max_px, c.shift_max_px);
  }
  if (c.flip) p.flip = rng.bernoulli(c.flip_prob);
  if (c.intensity_shift) p.intensity_shift = rng.uniform(-c.intensity_shift_max, c.intensity_shift_max);
  return p;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const auto radius = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Symmetric reflection (edge sample repeated), valid for any offset.
std::size_t reflect(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - 1 - m);
}

std::vector<double> smooth(const std::vector<double>& in, std::size_t h, std::size_t w,
                           const std::vector<double>& k) {
  const long r = static_cast<long>(k.size() / 2);
  std::vector<double> tmp(in.size()), out(in.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long j = -r; j <= r; ++j) {
        acc += k[static_cast<std::size_t>(j + r)] * in[y * w + reflect(static_cast<long>(x) + j, w)];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long j = -r; j <= r; ++j) {
        acc += k[static_cast<std::size_t>(j + r)] * tmp[reflect(static_cast<long>(y) + j, h) * w + x];
      }
      out[y * w + x] = acc;
    }
  }
  return out;
}

template <typename V>
double sample_zero(const Grid<V>& g, double y, double x) {
  const double fy = std::floor(y), fx = std::floor(x);
  const long y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
  const double ay = y - fy, ax = x - fx;
  auto at = [&g](long yy, long xx) -> double {
    if (yy < 0 || xx < 0 || yy >= static_cast<long>(g.height) || xx >= static_cast<long>(g.width)) return 0.0;
    return static_cast<double>(g(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
  };
  const double v00 = at(y0, x0), v01 = at(y0, x0 + 1);
  const double v10 = at(y0 + 1, x0), v11 = at(y0 + 1, x0 + 1);
  const double top = v00 + (v01 - v00) * ax;
  const double bottom = v10 + (v11 - v10) * ax;
  return top + (bottom - top) * ay;
}

bool in_reach(double y, double x, std::size_t h, std::size_t w) {
  return std::isfinite(y) && std::isfinite(x) && y > -1.0 && x > -1.0 && y < static_cast<double>(h) &&
         x < static_cast<double>(w);
}

}  // namespace

DisplacementField elastic_field(std::size_t height, std::size_t width, double alpha, double sigma, Rng& rng) {
  if (!(alpha >= 0.0) || !(sigma >= 0.0)) throw ContractError("elastic alpha and sigma must be >= 0");
  DisplacementField f{height, width, std::vector<double>(height * width), std::vector<double>(height * width)};
  for (auto& v : f.dy) v = rng.uniform(-1.0, 1.0);
  for (auto& v : f.dx) v = rng.uniform(-1.0, 1.0);
  if (height == 0 || width == 0) return f;
  const auto k = gaussian_kernel(sigma);
  f.dy = smooth(f.dy, height, width, k);
  f.dx = smooth(f.dx, height, width, k);
  for (auto& v : f.dy) v *= alpha;
  for (auto& v : f.dx) v *= alpha;
  return f;
}

CoordinateMap compose_warp(std::size_t h, std::size_t w, const AugmentParams& p, const DisplacementField* elastic) {
  if (elastic && (elastic->height != h || elastic->width != w)) {
    throw DimensionError("displacement field is " + dims_string(elastic->height, elastic->width) +
                         ", image is " + dims_string(h, w));
  }
  if (!(p.scale > 0.0)) throw ContractError("scale factor must be positive");
  CoordinateMap m{h, w, std::vector<double>(h * w), std::vector<double>(h * w)};
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double c = std::cos(p.angle_rad), s = std::sin(p.angle_rad);
  const bool rotate = p.angle_rad != 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      double qy = static_cast<double>(y), qx = static_cast<double>(x);
      if (elastic) {
        qy += elastic->dy[i];
        qx += elastic->dx[i];
      }
      if (rotate) {
        const double dy = qy - cy, dx = qx - cx;
        qx = cx + c * dx + s * dy;
        qy = cy - s * dx + c * dy;
      }
      if (p.scale != 1.0) {
        qy = cy + (qy - cy) / p.scale;
        qx = cx + (qx - cx) / p.scale;
      }
      qy -= p.shift_y;
      qx -= p.shift_x;
      if (p.flip) qx = (static_cast<double>(w) - 1.0) - qx;
      m.y[i] = qy;
      m.x[i] = qx;
    }
  }
  return m;
}

Image warp_image(const Image& image, const CoordinateMap& map) {
  Image out(map.height, map.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (in_reach(map.y[i], map.x[i], image.height, image.width)) {
      out.values[i] = static_cast<float>(sample_zero(image, map.y[i], map.x[i]));
    }
  }
  return out;
}

Mask warp_mask(const Mask& mask, const CoordinateMap& map) {
  Mask out(map.height, map.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (in_reach(map.y[i], map.x[i], mask.height, mask.width)) {
      out.values[i] = sample_zero(mask, map.y[i], map.x[i]) >= 0.5 ? 1 : 0;
    }
  }
  return out;
}

std::pair<Image, Mask> augment_pair(const Image& image, const Mask& mask, const AugmentConfig& config, Rng& rng) {
  if (!image.same_shape(mask)) {
    throw DimensionError("augment_pair image " + dims_string(image.height, image.width) + " vs mask " +
                         dims_string(mask.height, mask.width));
  }
  config.validate();
  const AugmentParams p = sample_augment_params(config, rng);
  std::optional<DisplacementField> field;
  if (config.elastic) {
    field = elastic_field(image.height, image.width, config.elastic_alpha, config.elastic_sigma, rng);
  }
  const bool geometric = p.angle_rad != 0.0 || p.scale != 1.0 || p.shift_y != 0.0 || p.shift_x != 0.0 ||
                         p.flip || field.has_value();
  Image out_image = image;
  Mask out_mask = mask;
  if (geometric) {
    const auto map = compose_warp(image.height, image.width, p, field ? &*field : nullptr);
    out_image = warp_image(image, map);
    out_mask = warp_mask(mask, map);
  }
  if (config.intensity_shift && p.intensity_shift != 0.0) {
    for (auto& v : out_image.values) v = static_cast<float>(v + p.intensity_shift);
  }
  if (config.noise) {
    for (auto& v : out_image.values) v = static_cast<float>(v + config.noise_std * rng.normal());
  }
  return {std::move(out_image), std::move(out_mask)};
}

}  // namespace gmseg
