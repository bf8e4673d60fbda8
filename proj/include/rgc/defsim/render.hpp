#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgc/defsim/state.hpp"

namespace rgc::defsim {

inline constexpr std::size_t kImageSize = 160;

/// Row-major pixel grid, channel-interleaved: pixels[(row * width + col) * channels + ch].
struct Observation {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return pixels[(row * width + col) * channels + ch];
  }
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Stroke half-width of rope renders, in pixels.
inline constexpr double kStrokeHalfWidth = 1.5;

/// Top-down render on a black background. Ropes are anti-aliased polylines
/// whose color runs along the arc length (so the two ends differ); cloth is
/// drawn as filled quads shaded by grid coordinates.
Observation render(const DeformState& state, std::size_t width = kImageSize, std::size_t height = kImageSize);

/// Binary PNM: P5 for one channel, P6 for three; 8-bit, values rounded.
std::vector<std::uint8_t> encode_pnm(const Observation& obs);
Observation decode_pnm(const std::vector<std::uint8_t>& bytes);
void write_pnm(const std::filesystem::path& path, const Observation& obs);
Observation read_pnm(const std::filesystem::path& path);

}  // namespace rgc::defsim
