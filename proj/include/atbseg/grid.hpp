#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "atbseg/error.hpp"

namespace atbseg {

/// Row-major 2-D raster. Pixel (x, y) has its center at integer coordinates,
/// x to the right and y downward.
template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int w, int h, T fill = T{})
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  T& operator()(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return values.size(); }
  bool same_shape(const Grid& other) const { return width == other.width && height == other.height; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using ImageGrid = Grid<float>;
using BinaryGrid = Grid<std::uint8_t>;
using ProbabilityGrid = Grid<float>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError(std::string(what) + ": grid " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height));
  }
}

}  // namespace atbseg
