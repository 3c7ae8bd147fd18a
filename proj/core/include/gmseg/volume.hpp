#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gmseg/grid.hpp"

namespace gmseg {

/// Physical spacing in millimetres.
struct PixelSize {
  double row = 1.0;
  double col = 1.0;
  double slice = 1.0;

  bool operator==(const PixelSize&) const = default;
};

/// Stack of axial slices plus up to four rater masks. A rater may lack a
/// mask for individual slices.
struct Volume {
  std::vector<Image> slices;
  PixelSize pixel_size;
  std::string subject;
  std::string site;
  /// raters[r][s] is rater r's mask for slice s.
  std::vector<std::vector<std::optional<Mask>>> raters;

  std::size_t num_slices() const { return slices.size(); }
  std::size_t height() const { return slices.empty() ? 0 : slices.front().height; }
  std::size_t width() const { return slices.empty() ? 0 : slices.front().width; }

  /// Throws DimensionError/SchemaError when slices or masks disagree in size,
  /// masks are not binary, or a pixel size is not strictly positive.
  void validate() const;
};

enum class VolumeFormat {
  PgmStack,  // directory with volume.json sidecar
  Nifti,     // .nii
  NiftiGz,   // .nii.gz
};

inline constexpr const char* kSidecarName = "volume.json";

VolumeFormat detect_volume_format(const std::filesystem::path& path);

/// Reads a PGM stack directory or a NIfTI-1 single file (uint8, int16 or
/// float32; scl_slope/scl_inter applied).
Volume read_volume(const std::filesystem::path& path);

/// Writes `volume` in the given format. PGM stacks store 16-bit integer
/// intensities, so every value must be an integer in [0, 65535]; masks are
/// written as 8-bit 0/255 images. NIfTI output is float32 and carries no
/// masks.
void write_volume(const std::filesystem::path& path, const Volume& volume, VolumeFormat format);

/// Writes a single mask volume (one mask per slice). NIfTI output is uint8.
void write_mask_volume(const std::filesystem::path& path, const std::vector<Mask>& masks,
                       const PixelSize& pixel_size, VolumeFormat format);

// Single-image PGM helpers.
Image read_pgm(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const Image& image);
void write_pgm8(const std::filesystem::path& path, const Mask& mask);
/// Min-max rescales into 16-bit range for viewing.
void write_pgm_preview(const std::filesystem::path& path, const Image& image);

}  // namespace gmseg
