#pragma once

#include <cstddef>
#include <vector>

#include "rgc/common/vec2.hpp"

namespace rgc {

/// Ordered 2D keypoints in observation pixel coordinates: x is the column,
/// y the row, and integer values fall on pixel centers.
using KeypointSet = std::vector<Vec2>;

/// Workspace [0,1]^2 to pixel coordinates of a width x height image.
inline Vec2 world_to_pixel(Vec2 p, std::size_t width, std::size_t height) {
  return {p.x * static_cast<double>(width) - 0.5, p.y * static_cast<double>(height) - 0.5};
}

inline Vec2 pixel_to_world(Vec2 p, std::size_t width, std::size_t height) {
  return {(p.x + 0.5) / static_cast<double>(width), (p.y + 0.5) / static_cast<double>(height)};
}

}  // namespace rgc
