#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gmseg/errors.hpp"

namespace gmseg {

/// Row-major 2-D array.
template <typename V>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<V> values;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, V fill = V{}) : height(h), width(w), values(h * w, fill) {}
  Grid(std::size_t h, std::size_t w, std::vector<V> v) : height(h), width(w), values(std::move(v)) {
    if (values.size() != h * w) {
      throw DimensionError("grid data length " + std::to_string(values.size()) +
                           " does not match " + std::to_string(h) + "x" + std::to_string(w));
    }
  }

  V& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
  const V& operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  bool same_shape(const auto& other) const {
    return height == other.height && width == other.width;
  }
  bool operator==(const Grid&) const = default;
};

using Image = Grid<float>;
/// Binary mask; every value is 0 or 1.
using Mask = Grid<std::uint8_t>;

inline std::string dims_string(std::size_t h, std::size_t w) {
  return std::to_string(h) + "x" + std::to_string(w);
}

}  // namespace gmseg
