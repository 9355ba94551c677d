#pragma once

#include <span>

#include "atbseg/corpus.hpp"

namespace atbseg {

/// Fills the polygon obtained by joining the polyline's last vertex back to its
/// first. A pixel is 1 when its center is inside under the even-odd rule;
/// centers lying exactly on an edge count as inside.
///
/// Throws DegenerateContourError for fewer than 3 vertices and ValidationError
/// for vertices outside [0, width) x [0, height).
BinaryGrid contour_to_mask(std::span<const Point> polyline, int width, int height);

/// One mask per contour, in C1, C2, C3 order. No disjointness is imposed.
MaskTriple masks_from_contours(const ContourSet& cs, int width, int height);

/// Signed shoelace area; the sign follows vertex orientation.
double polygon_area(std::span<const Point> polygon);

/// Bilinear resampling with pixel centers aligned:
/// src = (dst + 0.5) * src_size / dst_size - 0.5, clamped to the source extent.
ImageGrid resize_frame(const ImageGrid& frame, int target_width, int target_height);

/// Nearest-neighbour resampling using the same center alignment as
/// resize_frame; exact halfway positions round down to the lower index.
BinaryGrid resize_mask(const BinaryGrid& mask, int target_width, int target_height);

/// Source index picked by resize_mask for output index `dst` along one axis.
int nearest_source_index(int dst, int src_size, int dst_size);

}  // namespace atbseg
