#include "rgc/defsim/state.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "rgc/common/error.hpp"

namespace rgc::defsim {

namespace {

constexpr int kLeaderSweeps = 3;

std::vector<int> hop_distances(std::size_t n, const std::vector<Edge>& edges, std::size_t source) {
  std::vector<std::vector<std::size_t>> adjacent(n);
  for (auto [a, b] : edges) {
    adjacent[a].push_back(b);
    adjacent[b].push_back(a);
  }
  std::vector<int> hops(n, std::numeric_limits<int>::max());
  std::deque<std::size_t> queue{source};
  hops[source] = 0;
  while (!queue.empty()) {
    std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adjacent[u]) {
      if (hops[v] == std::numeric_limits<int>::max()) {
        hops[v] = hops[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return hops;
}

double edge_error(double length, double rest, bool unilateral) {
  double e = (length - rest) / rest;
  return unilateral ? std::max(0.0, e) : std::abs(e);
}

}  // namespace

const char* to_string(ObjectKind kind) noexcept {
  switch (kind) {
    case ObjectKind::kRope: return "rope";
    case ObjectKind::kRopeRing: return "rope_ring";
    case ObjectKind::kCloth: return "cloth";
  }
  return "?";
}

Topology topology_of(ObjectKind kind) noexcept {
  switch (kind) {
    case ObjectKind::kRope: return Topology::kChain;
    case ObjectKind::kRopeRing: return Topology::kRing;
    case ObjectKind::kCloth: return Topology::kGrid;
  }
  return Topology::kChain;
}

DeformState make_chain(Vec2 start, Vec2 direction, std::size_t n, double rest) {
  DeformState s;
  s.kind = ObjectKind::kRope;
  s.rest_length = rest;
  Vec2 u = direction * (1.0 / norm(direction));
  for (std::size_t i = 0; i < n; ++i) s.positions.push_back(start + u * (rest * static_cast<double>(i)));
  return s;
}

DeformState make_ring(Vec2 center, std::size_t n, double rest) {
  DeformState s;
  s.kind = ObjectKind::kRopeRing;
  s.rest_length = rest;
  const double pi = std::acos(-1.0);
  double radius = rest / (2.0 * std::sin(pi / static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    double a = 2.0 * pi * static_cast<double>(i) / static_cast<double>(n);
    s.positions.push_back(center + Vec2{radius * std::cos(a), radius * std::sin(a)});
  }
  return s;
}

DeformState make_grid(Vec2 origin, std::size_t rows, std::size_t cols, double spacing) {
  DeformState s;
  s.kind = ObjectKind::kCloth;
  s.rest_length = spacing;
  s.rows = rows;
  s.cols = cols;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      s.positions.push_back(origin + Vec2{spacing * static_cast<double>(c), spacing * static_cast<double>(r)});
  return s;
}

std::vector<Edge> constraint_edges(const DeformState& state) {
  std::vector<Edge> edges;
  const std::size_t n = state.size();
  switch (state.topology()) {
    case Topology::kChain:
      for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      break;
    case Topology::kRing:
      for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
      break;
    case Topology::kGrid:
      for (std::size_t r = 0; r < state.rows; ++r)
        for (std::size_t c = 0; c + 1 < state.cols; ++c) edges.emplace_back(r * state.cols + c, r * state.cols + c + 1);
      for (std::size_t r = 0; r + 1 < state.rows; ++r)
        for (std::size_t c = 0; c < state.cols; ++c) edges.emplace_back(r * state.cols + c, (r + 1) * state.cols + c);
      break;
  }
  return edges;
}

bool constraints_unilateral(const DeformState& state) noexcept { return state.topology() == Topology::kGrid; }

double max_constraint_violation(const DeformState& state) {
  const bool unilateral = constraints_unilateral(state);
  double worst = 0.0;
  for (auto [a, b] : constraint_edges(state))
    worst = std::max(worst, edge_error(distance(state.positions[a], state.positions[b]), state.rest_length, unilateral));
  return worst;
}

bool inside_workspace(Vec2 p) noexcept { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

Vec2 clamp_to_workspace(Vec2 p) noexcept { return {std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)}; }

void check_state(const DeformState& state) {
  const std::size_t n = state.size();
  switch (state.topology()) {
    case Topology::kChain: require(n >= 2, ErrorKind::kInvariant, "chain needs at least 2 particles"); break;
    case Topology::kRing: require(n >= 3, ErrorKind::kInvariant, "ring needs at least 3 particles"); break;
    case Topology::kGrid:
      require(state.rows >= 2 && state.cols >= 2 && state.rows * state.cols == n, ErrorKind::kInvariant,
              "grid extents do not match particle count");
      break;
  }
  require(state.rest_length > 0.0, ErrorKind::kInvariant, "rest length must be positive");
  for (Vec2 p : state.positions)
    require(std::isfinite(p.x) && std::isfinite(p.y) && inside_workspace(p), ErrorKind::kInvariant,
            "particle outside workspace");
  double v = max_constraint_violation(state);
  require(v <= kConstraintTolerance * (1.0 + 1e-9), ErrorKind::kInvariant,
          "rest constraint violated by " + std::to_string(100.0 * v) + "%");
}

std::size_t grasped_particle(const DeformState& state, Vec2 p) {
  std::size_t best = state.size();
  double best_d = kPickRadiusFactor * state.rest_length;
  for (std::size_t i = 0; i < state.size(); ++i) {
    double d = distance(state.positions[i], p);
    if (d <= best_d && (best == state.size() || d < best_d)) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

int relax(DeformState& state, std::size_t pinned) {
  auto edges = constraint_edges(state);
  const auto hops = hop_distances(state.size(), edges, pinned);
  std::stable_sort(edges.begin(), edges.end(), [&](const Edge& e, const Edge& f) {
    return std::min(hops[e.first], hops[e.second]) < std::min(hops[f.first], hops[f.second]);
  });
  const bool unilateral = constraints_unilateral(state);
  const double rest = state.rest_length;
  auto& p = state.positions;

  int it = 0;
  for (; it < kMaxRelaxIterations; ++it) {
    for (Vec2& q : p) q = clamp_to_workspace(q);
    if (max_constraint_violation(state) <= kConstraintTolerance) return it;
    const bool leader = it < kLeaderSweeps;
    for (auto [a, b] : edges) {
      Vec2 d = p[b] - p[a];
      double len = norm(d);
      if (unilateral && len <= rest) continue;
      double wa = 1.0, wb = 1.0;
      if (leader && hops[a] != hops[b]) (hops[a] < hops[b] ? wa : wb) = 0.0;
      if (a == pinned) wa = 0.0;
      if (b == pinned) wb = 0.0;
      if (wa + wb == 0.0) continue;
      Vec2 dir = len > 1e-12 ? d * (1.0 / len) : Vec2{1.0, 0.0};
      Vec2 c = dir * ((len - rest) / (wa + wb));
      p[a] += c * wa;
      p[b] -= c * wb;
    }
  }
  for (Vec2& q : p) q = clamp_to_workspace(q);
  return it;
}

DeformState apply_pick_place(const DeformState& state, const Action& action) {
  std::size_t g = grasped_particle(state, action.pick.position);
  if (g == state.size()) return state;
  DeformState next = state;
  next.positions[g] = clamp_to_workspace(action.place.position);
  relax(next, g);
  return next;
}

}  // namespace rgc::defsim
