#include "gmseg/volume.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gmseg/errors.hpp"
#include "json.hpp"

namespace gmseg {

namespace fs = std::filesystem;
using nlohmann::json;

void Volume::validate() const {
  if (!(pixel_size.row > 0.0) || !(pixel_size.col > 0.0) || !(pixel_size.slice > 0.0)) {
    throw SchemaError("pixel sizes must be strictly positive");
  }
  const std::size_t h = height();
  const std::size_t w = width();
  for (std::size_t s = 0; s < slices.size(); ++s) {
    if (slices[s].height != h || slices[s].width != w) {
      throw DimensionError("slice " + std::to_string(s) + " is " +
                           dims_string(slices[s].height, slices[s].width) + ", expected " +
                           dims_string(h, w));
    }
  }
  if (raters.size() > 4) throw SchemaError("at most 4 rater masks are supported");
  for (std::size_t r = 0; r < raters.size(); ++r) {
    if (raters[r].size() != slices.size()) {
      throw DimensionError("rater " + std::to_string(r) + " has " +
                           std::to_string(raters[r].size()) + " slice entries, volume has " +
                           std::to_string(slices.size()));
    }
    for (std::size_t s = 0; s < raters[r].size(); ++s) {
      const auto& m = raters[r][s];
      if (!m) continue;
      if (m->height != h || m->width != w) {
        throw DimensionError("rater " + std::to_string(r) + " slice " + std::to_string(s) +
                             " mask is " + dims_string(m->height, m->width) + ", expected " +
                             dims_string(h, w));
      }
      for (auto v : m->values) {
        if (v > 1) throw SchemaError("rater " + std::to_string(r) + " mask is not binary");
      }
    }
  }
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<unsigned char> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

// ---- PGM ----

struct PgmData {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::vector<std::uint16_t> samples;
};

PgmData parse_pgm(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) -> std::size_t {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw UnsupportedFormatError(path.string() + ": malformed PGM header (" + what + ")");
    }
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 30)) throw UnsupportedFormatError(path.string() + ": PGM header value too large");
      ++pos;
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw UnsupportedFormatError(path.string() + ": not a binary PGM (P5)");
  }
  pos = 2;
  PgmData pgm;
  pgm.width = read_uint("width");
  pgm.height = read_uint("height");
  pgm.maxval = static_cast<unsigned>(read_uint("maxval"));
  if (pgm.maxval == 0 || pgm.maxval > 65535) {
    throw UnsupportedFormatError(path.string() + ": PGM maxval out of range");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw UnsupportedFormatError(path.string() + ": malformed PGM header");
  }
  ++pos;
  const std::size_t n = pgm.width * pgm.height;
  const std::size_t bps = pgm.maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < n * bps) throw IoError(path.string() + ": truncated PGM data");
  pgm.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pgm.samples[i] = bps == 2 ? static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1])
                              : bytes[pos + i];
  }
  return pgm;
}

Mask read_pgm_mask(const fs::path& path) {
  const auto pgm = parse_pgm(path);
  Mask m(pgm.height, pgm.width);
  for (std::size_t i = 0; i < pgm.samples.size(); ++i) m.values[i] = pgm.samples[i] != 0 ? 1 : 0;
  return m;
}

std::string pgm_header(std::size_t w, std::size_t h, unsigned maxval) {
  return "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
}

// ---- sidecar ----

const json& require(const json& doc, const char* field, const fs::path& file) {
  if (!doc.contains(field)) {
    throw SchemaError(file.string() + ": missing required field \"" + field + "\"");
  }
  return doc.at(field);
}

Volume read_pgm_stack(const fs::path& dir) {
  const fs::path sidecar = dir / kSidecarName;
  if (!fs::exists(sidecar)) throw IoError("missing sidecar " + sidecar.string());
  json doc;
  {
    std::ifstream in(sidecar);
    if (!in) throw IoError("cannot open " + sidecar.string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw SchemaError(sidecar.string() + ": " + e.what());
    }
  }
  if (!doc.is_object()) throw SchemaError(sidecar.string() + ": top level must be an object");
  Volume vol;
  try {
    const auto& ps = require(doc, "pixel_size_mm", sidecar);
    if (!ps.is_array() || ps.size() != 3) {
      throw SchemaError(sidecar.string() + ": field \"pixel_size_mm\" must be [row, col, thickness]");
    }
    vol.pixel_size = {ps[0].get<double>(), ps[1].get<double>(), ps[2].get<double>()};
    const auto& slices = require(doc, "slices", sidecar);
    if (!slices.is_array()) throw SchemaError(sidecar.string() + ": field \"slices\" must be an array");
    for (const auto& name : slices) vol.slices.push_back(read_pgm(dir / name.get<std::string>()));
    if (doc.contains("masks")) {
      const auto& masks = doc.at("masks");
      if (!masks.is_array()) throw SchemaError(sidecar.string() + ": field \"masks\" must be an array");
      for (const auto& rater : masks) {
        if (!rater.is_array() || rater.size() != vol.slices.size()) {
          throw SchemaError(sidecar.string() + ": each \"masks\" entry must list one file (or null) per slice");
        }
        std::vector<std::optional<Mask>> per_slice;
        for (const auto& name : rater) {
          if (name.is_null()) {
            per_slice.emplace_back();
          } else {
            per_slice.emplace_back(read_pgm_mask(dir / name.get<std::string>()));
          }
        }
        vol.raters.push_back(std::move(per_slice));
      }
    }
    if (doc.contains("subject")) vol.subject = doc.at("subject").get<std::string>();
    if (doc.contains("site")) vol.site = doc.at("site").get<std::string>();
  } catch (const json::exception& e) {
    throw SchemaError(sidecar.string() + ": " + e.what());
  }
  if (vol.subject.empty()) vol.subject = dir.filename().string();
  vol.validate();
  return vol;
}

std::string slice_name(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.pgm", prefix.c_str(), i);
  return buf;
}

void write_pgm_stack(const fs::path& dir, const Volume& vol) {
  fs::create_directories(dir);
  json doc;
  doc["pixel_size_mm"] = {vol.pixel_size.row, vol.pixel_size.col, vol.pixel_size.slice};
  json slices = json::array();
  for (std::size_t s = 0; s < vol.slices.size(); ++s) {
    const auto name = slice_name("slice", s);
    write_pgm16(dir / name, vol.slices[s]);
    slices.push_back(name);
  }
  doc["slices"] = slices;
  if (!vol.raters.empty()) {
    json masks = json::array();
    for (std::size_t r = 0; r < vol.raters.size(); ++r) {
      json per = json::array();
      for (std::size_t s = 0; s < vol.raters[r].size(); ++s) {
        if (!vol.raters[r][s]) {
          per.push_back(nullptr);
          continue;
        }
        const auto name = slice_name("rater" + std::to_string(r), s);
        write_pgm8(dir / name, *vol.raters[r][s]);
        per.push_back(name);
      }
      masks.push_back(per);
    }
    doc["masks"] = masks;
  }
  if (!vol.subject.empty()) doc["subject"] = vol.subject;
  if (!vol.site.empty()) doc["site"] = vol.site;
  write_file_bytes(dir / kSidecarName, doc.dump(2) + "\n");
}

// ---- NIfTI-1 ----

constexpr int kNiftiHeaderSize = 348;
constexpr int kDtUint8 = 2;
constexpr int kDtInt16 = 4;
constexpr int kDtFloat32 = 16;

std::string datatype_name(int code) {
  switch (code) {
    case 1: return "binary";
    case 2: return "uint8";
    case 4: return "int16";
    case 8: return "int32";
    case 16: return "float32";
    case 32: return "complex64";
    case 64: return "float64";
    case 128: return "rgb24";
    case 256: return "int8";
    case 512: return "uint16";
    case 768: return "uint32";
    default: return "code " + std::to_string(code);
  }
}

std::vector<unsigned char> read_maybe_gzip(const fs::path& path) {
  // gzread passes uncompressed files through unchanged.
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> buf{};
  for (;;) {
    const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      int err = 0;
      std::string msg = gzerror(f, &err);
      gzclose(f);
      throw IoError(path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), buf.begin(), buf.begin() + n);
  }
  gzclose(f);
  return out;
}

template <typename V>
V load(const std::vector<unsigned char>& b, std::size_t off, bool swap) {
  std::array<unsigned char, sizeof(V)> tmp{};
  std::memcpy(tmp.data(), b.data() + off, sizeof(V));
  if (swap) std::reverse(tmp.begin(), tmp.end());
  V v;
  std::memcpy(&v, tmp.data(), sizeof(V));
  return v;
}

template <typename V>
void store(std::string& b, std::size_t off, V v) {
  static_assert(std::endian::native == std::endian::little);
  std::memcpy(b.data() + off, &v, sizeof(V));
}

Volume read_nifti(const fs::path& path) {
  const auto bytes = read_maybe_gzip(path);
  if (bytes.size() < kNiftiHeaderSize) throw IoError(path.string() + ": file shorter than a NIfTI-1 header");
  bool swap = false;
  std::int32_t sizeof_hdr = load<std::int32_t>(bytes, 0, false);
  if (sizeof_hdr != kNiftiHeaderSize) {
    swap = true;
    sizeof_hdr = load<std::int32_t>(bytes, 0, true);
    if (sizeof_hdr != kNiftiHeaderSize) throw UnsupportedFormatError(path.string() + ": not a NIfTI-1 file");
  }
  if (std::memcmp(bytes.data() + 344, "n+1", 4) != 0) {
    throw UnsupportedFormatError(path.string() + ": only single-file NIfTI-1 (magic n+1) is supported");
  }
  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(bytes, 40 + 2 * i, swap);
  const int datatype = load<std::int16_t>(bytes, 70, swap);
  std::array<float, 8> pixdim{};
  for (int i = 0; i < 8; ++i) pixdim[i] = load<float>(bytes, 76 + 4 * i, swap);
  const float vox_offset = load<float>(bytes, 108, swap);
  const float slope = load<float>(bytes, 112, swap);
  const float inter = load<float>(bytes, 116, swap);

  if (dim[0] < 2 || dim[0] > 7) throw UnsupportedFormatError(path.string() + ": dim[0] out of range");
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) throw UnsupportedFormatError(path.string() + ": only 2-D/3-D images are supported");
  }
  const std::size_t nx = dim[1] > 0 ? static_cast<std::size_t>(dim[1]) : 0;
  const std::size_t ny = dim[2] > 0 ? static_cast<std::size_t>(dim[2]) : 0;
  const std::size_t nz = dim[0] >= 3 && dim[3] > 0 ? static_cast<std::size_t>(dim[3]) : 1;
  if (nx == 0 || ny == 0) throw UnsupportedFormatError(path.string() + ": empty image dimensions");

  std::size_t bpv = 0;
  switch (datatype) {
    case kDtUint8: bpv = 1; break;
    case kDtInt16: bpv = 2; break;
    case kDtFloat32: bpv = 4; break;
    default:
      throw UnsupportedFormatError(path.string() + ": unsupported NIfTI datatype " +
                                   datatype_name(datatype) + " (supported: uint8, int16, float32)");
  }
  const auto offset = static_cast<std::size_t>(vox_offset);
  if (vox_offset < kNiftiHeaderSize || static_cast<float>(offset) != vox_offset) {
    throw UnsupportedFormatError(path.string() + ": invalid vox_offset");
  }
  const std::size_t per_slice = nx * ny;
  if (bytes.size() < offset + per_slice * nz * bpv) throw IoError(path.string() + ": truncated voxel data");

  const bool scaled = slope != 0.0f && std::isfinite(slope) && std::isfinite(inter) &&
                      !(slope == 1.0f && inter == 0.0f);
  Volume vol;
  vol.pixel_size = {static_cast<double>(pixdim[2]), static_cast<double>(pixdim[1]),
                    dim[0] >= 3 ? static_cast<double>(pixdim[3]) : 1.0};
  vol.subject = path.filename().string();
  vol.slices.reserve(nz);
  for (std::size_t z = 0; z < nz; ++z) {
    Image img(ny, nx);
    for (std::size_t i = 0; i < per_slice; ++i) {
      const std::size_t off = offset + (z * per_slice + i) * bpv;
      double v = 0.0;
      switch (datatype) {
        case kDtUint8: v = bytes[off]; break;
        case kDtInt16: v = load<std::int16_t>(bytes, off, swap); break;
        default: v = load<float>(bytes, off, swap); break;
      }
      if (scaled) v = static_cast<double>(slope) * v + static_cast<double>(inter);
      img.values[i] = static_cast<float>(v);
    }
    vol.slices.push_back(std::move(img));
  }
  vol.validate();
  return vol;
}

void write_nifti(const fs::path& path, std::size_t nx, std::size_t ny, std::size_t nz,
                 const PixelSize& ps, int datatype, const std::string& voxels) {
  if (nx > 32767 || ny > 32767 || nz > 32767) throw UnsupportedFormatError("image too large for NIfTI-1");
  std::string hdr(352, '\0');
  store<std::int32_t>(hdr, 0, kNiftiHeaderSize);
  const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(nx), static_cast<std::int16_t>(ny),
                                        static_cast<std::int16_t>(nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(hdr, 40 + 2 * i, dim[i]);
  store<std::int16_t>(hdr, 70, static_cast<std::int16_t>(datatype));
  store<std::int16_t>(hdr, 72, static_cast<std::int16_t>(datatype == kDtUint8 ? 8 : 32));
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(ps.col), static_cast<float>(ps.row),
                                    static_cast<float>(ps.slice), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) store<float>(hdr, 76 + 4 * i, pixdim[i]);
  store<float>(hdr, 108, 352.0f);
  store<float>(hdr, 112, 1.0f);
  store<float>(hdr, 116, 0.0f);
  hdr[123] = 2;  // xyzt_units: mm
  std::memcpy(hdr.data() + 344, "n+1", 4);
  const std::string all = hdr + voxels;

  if (ends_with(lower(path.string()), ".gz")) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot write " + path.string());
    const int n = gzwrite(f, all.data(), static_cast<unsigned>(all.size()));
    const int rc = gzclose(f);
    if (n != static_cast<int>(all.size()) || rc != Z_OK) throw IoError("short write to " + path.string());
  } else {
    write_file_bytes(path, all);
  }
}

}  // namespace

VolumeFormat detect_volume_format(const fs::path& path) {
  const std::string name = lower(path.string());
  if (ends_with(name, ".nii.gz")) return VolumeFormat::NiftiGz;
  if (ends_with(name, ".nii")) return VolumeFormat::Nifti;
  if (fs::is_directory(path) || !path.has_extension()) return VolumeFormat::PgmStack;
  throw UnsupportedFormatError(path.string() + ": expected a .nii/.nii.gz file or a PGM stack directory");
}

Volume read_volume(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path.string());
  switch (detect_volume_format(path)) {
    case VolumeFormat::PgmStack: return read_pgm_stack(path);
    default: return read_nifti(path);
  }
}

void write_volume(const fs::path& path, const Volume& volume, VolumeFormat format) {
  volume.validate();
  if (format == VolumeFormat::PgmStack) {
    write_pgm_stack(path, volume);
    return;
  }
  std::string voxels;
  voxels.reserve(volume.num_slices() * volume.height() * volume.width() * 4);
  for (const auto& s : volume.slices) {
    for (float v : s.values) {
      char b[4];
      std::memcpy(b, &v, 4);
      voxels.append(b, 4);
    }
  }
  write_nifti(path, volume.width(), volume.height(), volume.num_slices(), volume.pixel_size, kDtFloat32, voxels);
}

void write_mask_volume(const fs::path& path, const std::vector<Mask>& masks, const PixelSize& pixel_size,
                       VolumeFormat format) {
  if (masks.empty()) throw DimensionError("mask volume has no slices");
  for (const auto& m : masks) {
    if (!m.same_shape(masks.front())) throw DimensionError("mask slices differ in size");
  }
  if (format == VolumeFormat::PgmStack) {
    fs::create_directories(path);
    json doc;
    doc["pixel_size_mm"] = {pixel_size.row, pixel_size.col, pixel_size.slice};
    json slices = json::array();
    for (std::size_t s = 0; s < masks.size(); ++s) {
      const auto name = slice_name("mask", s);
      write_pgm8(path / name, masks[s]);
      slices.push_back(name);
    }
    doc["slices"] = slices;
    write_file_bytes(path / kSidecarName, doc.dump(2) + "\n");
    return;
  }
  std::string voxels;
  for (const auto& m : masks) voxels.append(m.values.begin(), m.values.end());
  write_nifti(path, masks.front().width, masks.front().height, masks.size(), pixel_size, kDtUint8, voxels);
}

Image read_pgm(const fs::path& path) {
  const auto pgm = parse_pgm(path);
  Image img(pgm.height, pgm.width);
  for (std::size_t i = 0; i < pgm.samples.size(); ++i) img.values[i] = static_cast<float>(pgm.samples[i]);
  return img;
}

void write_pgm16(const fs::path& path, const Image& image) {
  std::string out = pgm_header(image.width, image.height, 65535);
  out.reserve(out.size() + image.size() * 2);
  for (float v : image.values) {
    if (!(v >= 0.0f && v <= 65535.0f) || std::floor(v) != v) {
      throw UnsupportedFormatError(path.string() +
                                   ": PGM stores 16-bit integers; intensity " + std::to_string(v) +
                                   " is not representable");
    }
    const auto u = static_cast<std::uint16_t>(v);
    out.push_back(static_cast<char>(u >> 8));
    out.push_back(static_cast<char>(u & 0xff));
  }
  write_file_bytes(path, out);
}

void write_pgm8(const fs::path& path, const Mask& mask) {
  std::string out = pgm_header(mask.width, mask.height, 255);
  for (auto v : mask.values) out.push_back(static_cast<char>(v ? 255 : 0));
  write_file_bytes(path, out);
}

void write_pgm_preview(const fs::path& path, const Image& image) {
  float lo = 0.0f;
  float hi = 0.0f;
  if (!image.empty()) {
    const auto [mn, mx] = std::minmax_element(image.values.begin(), image.values.end());
    lo = *mn;
    hi = *mx;
  }
  Image scaled(image.height, image.width);
  const double range = static_cast<double>(hi) - lo;
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double t = range > 0.0 ? (image.values[i] - lo) / range : 0.0;
    scaled.values[i] = static_cast<float>(std::lround(t * 65535.0));
  }
  write_pgm16(path, scaled);
}

}  // namespace gmseg
