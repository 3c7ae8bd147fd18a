#pragma once

#include <cstdint>
#include <vector>

#include "gmseg/grid.hpp"
#include "gmseg/rng.hpp"
#include "gmseg/tensor.hpp"

namespace gmseg::testing {

template <Scalar T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(shape, std::move(v));
}

// Values bounded away from zero, for ops with a kink at 0.
template <Scalar T>
Tensor<T> random_tensor_away_from_zero(const Shape& shape, Rng& rng, double margin = 0.05) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(margin, 1.0);
    x = static_cast<T>(rng.bernoulli(0.5) ? m : -m);
  }
  return Tensor<T>(shape, std::move(v));
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_index(hi - lo + 1));
}

// Independent pixels with probability p.
inline Mask random_mask(std::size_t h, std::size_t w, double p, Rng& rng) {
  Mask m(h, w);
  for (auto& v : m.values) v = rng.bernoulli(p) ? 1 : 0;
  return m;
}

// Union of a few random discs.
inline Mask random_blobs(std::size_t h, std::size_t w, Rng& rng, int max_blobs = 3) {
  Mask m(h, w);
  const int n = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_blobs)));
  for (int b = 0; b < n; ++b) {
    const double cy = rng.uniform(0, static_cast<double>(h)), cx = rng.uniform(0, static_cast<double>(w));
    const double r = rng.uniform(1.0, 0.35 * static_cast<double>(std::min(h, w)) + 1.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        if (dy * dy + dx * dx <= r * r) m(y, x) = 1;
      }
  }
  return m;
}

// Mixed generator: blobs, speckle, empty or full, so edge cases show up.
inline Mask random_test_mask(std::size_t h, std::size_t w, Rng& rng) {
  const auto kind = rng.uniform_index(10);
  if (kind == 0) return Mask(h, w);
  if (kind == 1) return Mask(h, w, 1);
  if (kind <= 4) return random_mask(h, w, rng.uniform(0.05, 0.7), rng);
  return random_blobs(h, w, rng);
}

inline Image random_image(std::size_t h, std::size_t w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image img(h, w);
  for (auto& v : img.values) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

}  // namespace gmseg::testing
