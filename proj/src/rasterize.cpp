#include "atbseg/rasterize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace atbseg {
namespace {

void check_target(int w, int h) {
  if (w < 16 || h < 16) throw ShapeError("resize target must be at least 16x16");
}

bool on_segment(double px, double py, const Point& a, const Point& b) {
  if (px < std::min(a.x, b.x) || px > std::max(a.x, b.x)) return false;
  if (py < std::min(a.y, b.y) || py > std::max(a.y, b.y)) return false;
  return (b.x - a.x) * (py - a.y) == (b.y - a.y) * (px - a.x);
}

// Marks every pixel center that lies exactly on segment ab.
void mark_edge(const Point& a, const Point& b, BinaryGrid& mask) {
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.y, b.y))));
  const int y1 = std::min(mask.height - 1, static_cast<int>(std::floor(std::max(a.y, b.y))));
  if (a.y == b.y) {
    if (a.y != std::floor(a.y)) return;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.x, b.x))));
    const int x1 = std::min(mask.width - 1, static_cast<int>(std::floor(std::max(a.x, b.x))));
    for (int x = x0; x <= x1; ++x) mask(x, y0) = 1;
    return;
  }
  const Point& lo = a.y < b.y ? a : b;
  const Point& hi = a.y < b.y ? b : a;
  for (int y = y0; y <= y1; ++y) {
    const double x = lo.x + (y - lo.y) * (hi.x - lo.x) / (hi.y - lo.y);
    const double rx = std::round(x);
    if (rx < 0 || rx >= mask.width) continue;
    if (on_segment(rx, y, a, b)) mask(static_cast<int>(rx), y) = 1;
  }
}

}  // namespace

BinaryGrid contour_to_mask(std::span<const Point> polyline, int width, int height) {
  if (polyline.size() < 3) {
    throw DegenerateContourError("contour needs at least 3 vertices, got " + std::to_string(polyline.size()));
  }
  if (width <= 0 || height <= 0) throw ShapeError("mask dimensions must be positive");
  for (const auto& p : polyline) {
    if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) {
      throw ValidationError("contour vertex out of bounds");
    }
  }

  BinaryGrid mask(width, height, 0);
  const std::size_t n = polyline.size();
  std::vector<double> crossings;
  for (int y = 0; y < height; ++y) {
    crossings.clear();
    const double py = y;
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = polyline[i];
      const Point& b = polyline[(i + 1) % n];
      if ((a.y > py) == (b.y > py)) continue;
      // Always interpolate from the lower endpoint so edge direction cannot matter.
      const Point& lo = a.y < b.y ? a : b;
      const Point& hi = a.y < b.y ? b : a;
      crossings.push_back(lo.x + (py - lo.y) * (hi.x - lo.x) / (hi.y - lo.y));
    }
    std::sort(crossings.begin(), crossings.end());
    // Centers with an odd number of crossings strictly to their right are inside,
    // i.e. px in [x_{2i}, x_{2i+1}).
    for (std::size_t i = 0; i + 1 < crossings.size(); i += 2) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(crossings[i])));
      const double right = crossings[i + 1];
      for (int x = x0; x < width && x < right; ++x) mask(x, y) = 1;
    }
  }
  for (std::size_t i = 0; i < n; ++i) mark_edge(polyline[i], polyline[(i + 1) % n], mask);
  return mask;
}

MaskTriple masks_from_contours(const ContourSet& cs, int width, int height) {
  MaskTriple out;
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      out.masks[i] = contour_to_mask(cs.contours[i], width, height);
    } catch (const DegenerateContourError& e) {
      throw DegenerateContourError("c" + std::to_string(i + 1) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("c" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

double polygon_area(std::span<const Point> polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = polygon[i];
    const auto& b = polygon[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

ImageGrid resize_frame(const ImageGrid& frame, int target_width, int target_height) {
  check_target(target_width, target_height);
  if (frame.width == target_width && frame.height == target_height) return frame;

  const double sx = static_cast<double>(frame.width) / target_width;
  const double sy = static_cast<double>(frame.height) / target_height;
  auto axis = [](int dst, double scale, int src_size, int& i0, int& i1, double& t) {
    double s = (dst + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_size - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, src_size - 1);
    t = s - i0;
  };

  ImageGrid out(target_width, target_height);
  for (int y = 0; y < target_height; ++y) {
    int y0, y1;
    double ty;
    axis(y, sy, frame.height, y0, y1, ty);
    for (int x = 0; x < target_width; ++x) {
      int x0, x1;
      double tx;
      axis(x, sx, frame.width, x0, x1, tx);
      const double a = frame(x0, y0), b = frame(x1, y0);
      const double c = frame(x0, y1), d = frame(x1, y1);
      const double top = a + tx * (b - a);
      const double bottom = c + tx * (d - c);
      const double v = top + ty * (bottom - top);
      out(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

int nearest_source_index(int dst, int src_size, int dst_size) {
  // ceil(src - 1/2) with src = ((2 dst + 1) src_size - dst_size) / (2 dst_size),
  // computed exactly in integers.
  const long long num = static_cast<long long>(2 * dst + 1) * src_size - 2LL * dst_size;
  const long long den = 2LL * dst_size;
  long long q = num / den;
  if (num % den != 0 && num > 0) ++q;
  return static_cast<int>(std::clamp<long long>(q, 0, src_size - 1));
}

BinaryGrid resize_mask(const BinaryGrid& mask, int target_width, int target_height) {
  check_target(target_width, target_height);
  if (mask.width == target_width && mask.height == target_height) return mask;
  BinaryGrid out(target_width, target_height);
  std::vector<int> xs(static_cast<std::size_t>(target_width));
  for (int x = 0; x < target_width; ++x) xs[x] = nearest_source_index(x, mask.width, target_width);
  for (int y = 0; y < target_height; ++y) {
    const int sy = nearest_source_index(y, mask.height, target_height);
    for (int x = 0; x < target_width; ++x) out(x, y) = mask(xs[x], sy) ? 1 : 0;
  }
  return out;
}

}  // namespace atbseg
