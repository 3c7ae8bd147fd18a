#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmseg/preprocess.hpp"
#include "gmseg/rng.hpp"
#include "gmseg/volume.hpp"

namespace gmseg::testing {

// Cord phantom: bright ellipse (white matter) holding a darker butterfly of
// four lobes (gray matter). Returns image and gray-matter mask.
struct Phantom {
  Image image;
  Mask gm;
};

inline Phantom make_phantom(std::size_t h, std::size_t w, Rng& rng, double noise = 0.05) {
  Phantom p{Image(h, w), Mask(h, w)};
  const double cy = h / 2.0 + rng.uniform(-4, 4), cx = w / 2.0 + rng.uniform(-4, 4);
  const double ry = h * rng.uniform(0.22, 0.28), rx = w * rng.uniform(0.3, 0.36);
  const double lobe = rng.uniform(0.35, 0.45);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = (y - cy) / ry, v = (x - cx) / rx;
      float value = 0.1f;
      if (u * u + v * v < 1.0) {
        value = 0.9f;
        // Horns: two dorsal and two ventral lobes plus a central bar.
        bool gm = std::abs(u) < 0.12 && std::abs(v) < 0.35;
        for (double sy : {-0.45, 0.45}) {
          for (double sx : {-0.3, 0.3}) {
            const double a = (u - sy) / lobe, b = (v - sx) / (lobe * 0.7);
            if (a * a + b * b < 1.0) gm = true;
          }
        }
        if (gm) {
          value = 0.45f;
          p.gm(y, x) = 1;
        }
      }
      p.image(y, x) = static_cast<float>(value + noise * rng.normal());
    }
  }
  return p;
}

inline std::vector<TrainingSlice> phantom_slices(std::size_t count, std::size_t h, std::size_t w,
                                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingSlice> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto p = make_phantom(h, w, rng);
    TrainingSlice s;
    s.image = std::move(p.image);
    s.masks.push_back(std::move(p.gm));
    s.rater_ids.push_back(0);
    s.subject = "phantom";
    s.slice_index = i;
    out.push_back(std::move(s));
  }
  // Zero mean, unit variance over the set.
  std::vector<Image> all;
  for (const auto& s : out) all.push_back(s.image);
  const auto stats = intensity_stats(all);
  for (auto& s : out) s.image = normalize(s.image, stats);
  return out;
}

// Phantom volume on disk as a PGM stack with one rater. Intensities are
// scaled to integers so the 16-bit writer accepts them.
inline Volume phantom_volume(std::size_t slices, std::size_t h, std::size_t w, std::uint64_t seed,
                             const std::string& subject = "phantom", const std::string& site = "site1") {
  Rng rng(seed);
  Volume v;
  v.subject = subject;
  v.site = site;
  v.pixel_size = PixelSize{0.5, 0.5, 2.5};
  v.raters.resize(1);
  for (std::size_t i = 0; i < slices; ++i) {
    auto p = make_phantom(h, w, rng);
    for (auto& x : p.image.values) x = std::round(std::clamp(x, 0.0f, 1.5f) * 1000.0f);
    v.slices.push_back(std::move(p.image));
    v.raters[0].push_back(std::move(p.gm));
  }
  return v;
}

inline void write_phantom_volume(const std::filesystem::path& dir, std::size_t slices, std::size_t h, std::size_t w,
                                 std::uint64_t seed, const std::string& subject = "phantom",
                                 const std::string& site = "site1") {
  write_volume(dir, phantom_volume(slices, h, w, seed, subject, site), VolumeFormat::PgmStack);
}

}  // namespace gmseg::testing
