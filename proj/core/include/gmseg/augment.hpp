#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "gmseg/grid.hpp"
#include "gmseg/rng.hpp"

namespace gmseg {

/// Training-time augmentation magnitudes. Defaults are repo choices, not
/// published values.
struct AugmentConfig {
  bool rotation = true;
  bool shift = true;
  bool scale = true;
  bool flip = true;
  bool intensity_shift = true;
  bool noise = true;
  bool elastic = true;

  double rotation_max_deg = 10.0;
  double shift_max_px = 15.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double flip_prob = 0.5;  // horizontal only
  double intensity_shift_max = 0.1;
  double noise_std = 0.03;
  double elastic_alpha = 30.0;
  double elastic_sigma = 6.0;
  /// Mixed into the training seed to derive augmentation streams.
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

/// Config with every transform disabled.
AugmentConfig no_augmentation();

struct AugmentParams {
  double angle_rad = 0.0;
  double scale = 1.0;
  double shift_y = 0.0;
  double shift_x = 0.0;
  bool flip = false;
  double intensity_shift = 0.0;
};

/// Draws rotation, scale, shift (y then x), flip and intensity shift, in that
/// order, for enabled transforms only.
AugmentParams sample_augment_params(const AugmentConfig& config, Rng& rng);

/// Per-pixel displacement in pixels.
struct DisplacementField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> dy;
  std::vector<double> dx;
};

/// Uniform(-1, 1) noise per component, smoothed by a normalized Gaussian of
/// std `sigma` truncated at 4 sigma (reflected borders), scaled by `alpha`.
DisplacementField elastic_field(std::size_t height, std::size_t width, double alpha, double sigma, Rng& rng);

/// Source coordinate (y, x) for every output pixel.
struct CoordinateMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> y;
  std::vector<double> x;
};

/// Inverse mapping for the composed warp. For output pixel p, with c the
/// image centre ((h-1)/2, (w-1)/2):
///   q = p + d(p)                      elastic displacement
///   q = c + R(-angle) (q - c)         rotation
///   q = c + (q - c) / scale           scaling
///   q = q - shift                     translation
///   q.x = (w - 1) - q.x  if flip      horizontal flip
/// Rotation uses x = column and y = row.
CoordinateMap compose_warp(std::size_t height, std::size_t width, const AugmentParams& params,
                           const DisplacementField* elastic);

/// Bilinear sampling; coordinates outside the image read zero.
Image warp_image(const Image& image, const CoordinateMap& map);
/// Same interpolation on the 0/1 mask, thresholded at 0.5.
Mask warp_mask(const Mask& mask, const CoordinateMap& map);

/// Applies one randomly drawn geometric warp jointly to image and mask, then
/// intensity shift and Gaussian noise to the image.
std::pair<Image, Mask> augment_pair(const Image& image, const Mask& mask, const AugmentConfig& config, Rng& rng);

}  // namespace gmseg
