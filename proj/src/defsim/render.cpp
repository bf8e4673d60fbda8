#include "rgc/defsim/render.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "rgc/common/error.hpp"
#include "rgc/common/keypoints.hpp"

namespace rgc::defsim {

namespace {

using Color = std::array<double, 3>;

Color arc_color(double t) { return {t, 1.0 - t, 1.0 - std::abs(2.0 * t - 1.0)}; }

struct PixelBox {
  std::size_t c0, c1, r0, r1;  // inclusive; empty when c0 > c1
};

PixelBox box_around(Vec2 lo, Vec2 hi, double pad, std::size_t width, std::size_t height) {
  auto lo_idx = [](double v) { return static_cast<std::ptrdiff_t>(std::ceil(v)); };
  auto hi_idx = [](double v) { return static_cast<std::ptrdiff_t>(std::floor(v)); };
  std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, lo_idx(lo.x - pad));
  std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, lo_idx(lo.y - pad));
  std::ptrdiff_t c1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(width) - 1, hi_idx(hi.x + pad));
  std::ptrdiff_t r1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(height) - 1, hi_idx(hi.y + pad));
  if (c0 > c1 || r0 > r1) return {1, 0, 1, 0};
  return {std::size_t(c0), std::size_t(c1), std::size_t(r0), std::size_t(r1)};
}

void render_polyline(const DeformState& state, Observation& obs) {
  const std::size_t n = state.size();
  const bool closed = state.topology() == Topology::kRing;
  const std::size_t segments = closed ? n : n - 1;
  const double span = closed ? static_cast<double>(n) : static_cast<double>(n - 1);

  std::vector<Vec2> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = world_to_pixel(state.positions[i], obs.width, obs.height);

  std::vector<double> best_d(obs.width * obs.height, std::numeric_limits<double>::infinity());
  std::vector<double> best_t(obs.width * obs.height, 0.0);
  const double reach = kStrokeHalfWidth + 0.5;

  for (std::size_t s = 0; s < segments; ++s) {
    Vec2 a = px[s], b = px[(s + 1) % n];
    double ta = static_cast<double>(s) / span, tb = static_cast<double>(s + 1) / span;
    Vec2 ab = b - a;
    double len2 = dot(ab, ab);
    PixelBox box = box_around({std::min(a.x, b.x), std::min(a.y, b.y)}, {std::max(a.x, b.x), std::max(a.y, b.y)},
                              reach, obs.width, obs.height);
    for (std::size_t r = box.r0; r <= box.r1 && box.c0 <= box.c1; ++r) {
      for (std::size_t c = box.c0; c <= box.c1; ++c) {
        Vec2 q{static_cast<double>(c), static_cast<double>(r)};
        double u = len2 > 0.0 ? std::clamp(dot(q - a, ab) / len2, 0.0, 1.0) : 0.0;
        double d = distance(q, a + ab * u);
        std::size_t k = r * obs.width + c;
        if (d < best_d[k]) {
          best_d[k] = d;
          best_t[k] = ta + u * (tb - ta);
        }
      }
    }
  }

  for (std::size_t k = 0; k < best_d.size(); ++k) {
    double coverage = std::clamp(reach - best_d[k], 0.0, 1.0);
    if (coverage <= 0.0) continue;
    Color col = arc_color(best_t[k]);
    for (std::size_t ch = 0; ch < 3; ++ch) obs.pixels[k * 3 + ch] = coverage * col[ch];
  }
}

void render_grid(const DeformState& state, Observation& obs) {
  const std::size_t rows = state.rows, cols = state.cols;
  std::vector<Vec2> px(state.size());
  std::vector<Color> color(state.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t i = r * cols + c;
      px[i] = world_to_pixel(state.positions[i], obs.width, obs.height);
      double u = static_cast<double>(c) / static_cast<double>(cols - 1);
      double v = static_cast<double>(r) / static_cast<double>(rows - 1);
      color[i] = {0.2 + 0.8 * u, 0.2 + 0.8 * v, 0.6};
    }
  }
  auto triangle = [&](std::size_t i0, std::size_t i1, std::size_t i2) {
    Vec2 a = px[i0], b = px[i1], c = px[i2];
    double area = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if (std::abs(area) < 1e-12) return;
    Vec2 lo{std::min({a.x, b.x, c.x}), std::min({a.y, b.y, c.y})};
    Vec2 hi{std::max({a.x, b.x, c.x}), std::max({a.y, b.y, c.y})};
    PixelBox box = box_around(lo, hi, 0.0, obs.width, obs.height);
    for (std::size_t r = box.r0; r <= box.r1 && box.c0 <= box.c1; ++r) {
      for (std::size_t col = box.c0; col <= box.c1; ++col) {
        Vec2 q{static_cast<double>(col), static_cast<double>(r)};
        double w1 = ((q.x - a.x) * (c.y - a.y) - (c.x - a.x) * (q.y - a.y)) / area;
        double w2 = ((b.x - a.x) * (q.y - a.y) - (q.x - a.x) * (b.y - a.y)) / area;
        double w0 = 1.0 - w1 - w2;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        std::size_t k = r * obs.width + col;
        for (std::size_t ch = 0; ch < 3; ++ch)
          obs.pixels[k * 3 + ch] = w0 * color[i0][ch] + w1 * color[i1][ch] + w2 * color[i2][ch];
      }
    }
  };
  for (std::size_t r = 0; r + 1 < rows; ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c) {
      std::size_t i = r * cols + c;
      triangle(i, i + 1, i + cols + 1);
      triangle(i, i + cols + 1, i + cols);
    }
  }
}

}  // namespace

Observation render(const DeformState& state, std::size_t width, std::size_t height) {
  require(width > 0 && height > 0, ErrorKind::kConfig, "render size must be positive");
  Observation obs{width, height, 3, std::vector<double>(width * height * 3, 0.0)};
  if (state.positions.empty()) return obs;
  if (state.topology() == Topology::kGrid)
    render_grid(state, obs);
  else
    render_polyline(state, obs);
  return obs;
}

std::vector<std::uint8_t> encode_pnm(const Observation& obs) {
  require(obs.channels == 1 || obs.channels == 3, ErrorKind::kConfig, "PNM supports 1 or 3 channels");
  require(obs.pixels.size() == obs.width * obs.height * obs.channels, ErrorKind::kDimension,
          "pixel buffer does not match image extents");
  std::string header = std::string(obs.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(obs.width) + " " +
                       std::to_string(obs.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + obs.pixels.size());
  for (double v : obs.pixels) bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return bytes;
}

Observation decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  std::string magic = token();
  require(magic == "P5" || magic == "P6", ErrorKind::kIo, "not a binary PGM/PPM");
  Observation obs;
  obs.channels = magic == "P5" ? 1 : 3;
  try {
    obs.width = std::stoul(token());
    obs.height = std::stoul(token());
    require(std::stoul(token()) == 255, ErrorKind::kIo, "only 8-bit PNM supported");
  } catch (const std::logic_error&) {
    fail(ErrorKind::kIo, "malformed PNM header");
  }
  ++pos;  // single whitespace after maxval
  std::size_t count = obs.width * obs.height * obs.channels;
  require(bytes.size() >= pos && bytes.size() - pos == count, ErrorKind::kIo, "PNM payload size mismatch");
  obs.pixels.resize(count);
  for (std::size_t i = 0; i < count; ++i) obs.pixels[i] = bytes[pos + i] / 255.0;
  return obs;
}

void write_pnm(const std::filesystem::path& path, const Observation& obs) {
  auto bytes = encode_pnm(obs);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed: " + path.string());
}

Observation read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

}  // namespace rgc::defsim
