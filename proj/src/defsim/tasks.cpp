#include "rgc/defsim/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rgc/common/error.hpp"

namespace rgc::defsim {

namespace {

const double kPi = std::acos(-1.0);
constexpr double kRopeMargin = 0.08;

DeformState chain_from_turns(const std::vector<double>& heading, ObjectKind kind, double rest) {
  DeformState s;
  s.kind = kind;
  s.rest_length = rest;
  Vec2 p{0.0, 0.0};
  s.positions.push_back(p);
  for (double a : heading) {
    p += Vec2{std::cos(a), std::sin(a)} * rest;
    s.positions.push_back(p);
  }
  return s;
}

/// Random translation keeping the bounding box `margin` away from the border
/// (centered when it does not fit).
void place_randomly(DeformState& s, Rng& rng, double margin) {
  Vec2 lo = s.positions.front(), hi = lo;
  for (Vec2 p : s.positions) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  auto offset = [&](double a, double b) {
    return (b - a) < 1.0 - 2.0 * margin ? rng.uniform(margin - a, 1.0 - margin - b) : 0.5 - 0.5 * (a + b);
  };
  Vec2 off{offset(lo.x, hi.x), offset(lo.y, hi.y)};
  for (Vec2& p : s.positions) p = clamp_to_workspace(p + off);
}

DeformState random_rope(Rng& rng) {
  const std::size_t segments = kRopeParticles - 1;
  double start = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> curvature(segments, 0.0);
  for (int j = 1; j <= 3; ++j) {
    double weight = rng.uniform(-1.0, 1.0);
    double phase = rng.uniform(0.0, 2.0 * kPi);
    double amplitude = rng.uniform(0.5, 2.5) / j;
    for (std::size_t s = 0; s < segments; ++s) {
      double t = static_cast<double>(s) / static_cast<double>(segments - 1);
      curvature[s] += weight * amplitude * std::sin(j * kPi * t + phase);
    }
  }
  std::vector<double> heading(segments);
  double acc = 0.0;
  for (std::size_t s = 0; s < segments; ++s) {
    acc += curvature[s];
    heading[s] = start + acc * 2.0 / static_cast<double>(segments);
  }
  DeformState rope = chain_from_turns(heading, ObjectKind::kRope, kRopeRest);
  place_randomly(rope, rng, kRopeMargin);
  return rope;
}

DeformState rope_goal(TaskKind kind, Rng& rng) {
  const std::size_t segments = kRopeParticles - 1;
  std::vector<double> heading(segments, rng.uniform(0.0, 2.0 * kPi));
  const double sign = rng.coin() ? 1.0 : -1.0;
  auto turn_from = [&](std::size_t first, double angle) {
    for (std::size_t s = first; s < segments; ++s) heading[s] += angle;
  };
  switch (kind) {
    case TaskKind::kLShape: turn_from(12, sign * kPi / 2.0); break;
    case TaskKind::kVShape: turn_from(12, sign * (kPi - kPi / 3.0)); break;
    case TaskKind::kNShape:
      turn_from(8, sign * (kPi - kPi / 4.0));
      turn_from(16, -sign * (kPi - kPi / 4.0));
      break;
    default: break;
  }
  DeformState rope = chain_from_turns(heading, ObjectKind::kRope, kRopeRest);
  place_randomly(rope, rng, kRopeMargin);
  return rope;
}

DeformState drag_randomly(DeformState s, Rng& rng, int drags, double spread) {
  for (int k = 0; k < drags; ++k) {
    std::size_t g = rng.below(s.size());
    Vec2 from = s.positions[g];
    Vec2 to = clamp_to_workspace(from + Vec2{rng.normal(0.0, spread), rng.normal(0.0, spread)});
    s = apply_pick_place(s, Action{{from, 0.0}, {to, 0.0}});
  }
  return s;
}

DeformState random_ring(Rng& rng) {
  Vec2 center{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
  return drag_randomly(make_ring(center), rng, 3, 0.08);
}

DeformState square_goal(Rng& rng) {
  const std::size_t n = kRingParticles, side = n / 4;
  double start = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> heading(n - 1);
  for (std::size_t s = 0; s + 1 < n; ++s) heading[s] = start + static_cast<double>(s / side) * kPi / 2.0;
  DeformState ring = chain_from_turns(heading, ObjectKind::kRopeRing, kRingRest);
  Vec2 mean{};
  for (Vec2 p : ring.positions) mean += p * (1.0 / static_cast<double>(n));
  Vec2 center{rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
  for (Vec2& p : ring.positions) p = p - mean + center;
  return ring;
}

enum class Fold { kNone, kHalf, kDiagonal };

/// Flat cloth (optionally folded onto itself) rotated about its center by a
/// random angle and centered at a random point.
DeformState posed_cloth(Rng& rng, Fold fold) {
  DeformState grid = make_grid({0.0, 0.0});
  const std::size_t rows = grid.rows, cols = grid.cols;
  const double s = grid.rest_length;
  const double mid_r = 0.5 * static_cast<double>(rows - 1) * s, mid_c = 0.5 * static_cast<double>(cols - 1) * s;
  double angle = rng.uniform(0.0, 2.0 * kPi);
  Vec2 center{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double x = static_cast<double>(c) * s, y = static_cast<double>(r) * s;
      if (fold == Fold::kHalf && y > mid_r) y = 2.0 * mid_r - y;
      if (fold == Fold::kDiagonal && r > c) std::swap(x, y);
      x -= mid_c;
      y -= mid_r;
      grid.positions[r * cols + c] = clamp_to_workspace(center + Vec2{ca * x - sa * y, sa * x + ca * y});
    }
  }
  return grid;
}

}  // namespace

const char* to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::kStraightening: return "straightening";
    case TaskKind::kLShape: return "l-shape";
    case TaskKind::kVShape: return "v-shape";
    case TaskKind::kNShape: return "n-shape";
    case TaskKind::kSquareShape: return "square-shape";
    case TaskKind::kFlattening: return "flattening";
    case TaskKind::kFolding: return "folding";
    case TaskKind::kFoldingDiagonally: return "folding-diagonally";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind k : kAllTasks)
    if (name == to_string(k)) return k;
  fail(ErrorKind::kConfig, "unknown task kind '" + std::string(name) + "'");
}

ObjectKind object_of(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::kSquareShape: return ObjectKind::kRopeRing;
    case TaskKind::kFlattening:
    case TaskKind::kFolding:
    case TaskKind::kFoldingDiagonally: return ObjectKind::kCloth;
    default: return ObjectKind::kRope;
  }
}

TaskInstance sample_task(TaskKind kind, Rng& rng, std::size_t image_size) {
  TaskInstance task;
  task.kind = kind;
  switch (kind) {
    case TaskKind::kStraightening:
    case TaskKind::kLShape:
    case TaskKind::kVShape:
    case TaskKind::kNShape:
      task.initial = random_rope(rng);
      task.goal = rope_goal(kind, rng);
      break;
    case TaskKind::kSquareShape:
      task.initial = random_ring(rng);
      task.goal = square_goal(rng);
      break;
    case TaskKind::kFlattening:
      task.initial = drag_randomly(posed_cloth(rng, Fold::kNone), rng, 4, 0.1);
      task.goal = posed_cloth(rng, Fold::kNone);
      break;
    case TaskKind::kFolding:
    case TaskKind::kFoldingDiagonally:
      task.initial = posed_cloth(rng, Fold::kNone);
      task.goal = posed_cloth(rng, kind == TaskKind::kFolding ? Fold::kHalf : Fold::kDiagonal);
      break;
    default: fail(ErrorKind::kConfig, "unknown task kind");
  }
  task.goal_observation = render(task.goal, image_size, image_size);
  return task;
}

TaskInstance sample_task(TaskKind kind, std::uint64_t seed, std::size_t image_size) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind) + 1));
  TaskInstance task = sample_task(kind, rng, image_size);
  task.seed = seed;
  return task;
}

}  // namespace rgc::defsim
