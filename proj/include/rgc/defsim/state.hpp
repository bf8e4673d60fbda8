#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rgc/common/vec2.hpp"

namespace rgc::defsim {

enum class ObjectKind { kRope, kRopeRing, kCloth };
enum class Topology { kChain, kRing, kGrid };

const char* to_string(ObjectKind kind) noexcept;
Topology topology_of(ObjectKind kind) noexcept;

inline constexpr std::size_t kRopeParticles = 25;
inline constexpr double kRopeRest = 0.02;
inline constexpr std::size_t kRingParticles = 20;
inline constexpr double kRingRest = 0.03;
inline constexpr std::size_t kClothSide = 9;
inline constexpr double kClothSpacing = 0.05;

/// Success threshold on goal_distance, in workspace units.
inline constexpr double kGamma = 0.03;
inline constexpr double kPickRadiusFactor = 1.5;
inline constexpr double kConstraintTolerance = 0.01;
inline constexpr int kMaxRelaxIterations = 200;

/// Planar object state. Positions live in the workspace [0,1]^2; particles of
/// a grid are stored row-major (rows x cols).
struct DeformState {
  ObjectKind kind = ObjectKind::kRope;
  std::vector<Vec2> positions;
  double rest_length = kRopeRest;
  std::size_t rows = 0;
  std::size_t cols = 0;

  Topology topology() const noexcept { return topology_of(kind); }
  std::size_t size() const noexcept { return positions.size(); }

  friend bool operator==(const DeformState&, const DeformState&) = default;
};

struct Pose2 {
  Vec2 position;
  double rotation = 0.0;

  friend bool operator==(const Pose2&, const Pose2&) = default;
};

struct Action {
  Pose2 pick;
  Pose2 place;

  friend bool operator==(const Action&, const Action&) = default;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Straight chain, closed ring (regular polygon) and flat grid, unrotated.
DeformState make_chain(Vec2 start, Vec2 direction, std::size_t n = kRopeParticles, double rest = kRopeRest);
DeformState make_ring(Vec2 center, std::size_t n = kRingParticles, double rest = kRingRest);
DeformState make_grid(Vec2 origin, std::size_t rows = kClothSide, std::size_t cols = kClothSide,
                      double spacing = kClothSpacing);

/// Distance-constrained particle pairs. Chains and rings hold every edge at
/// its rest length; cloth edges are inextensible but may slacken (buckling).
std::vector<Edge> constraint_edges(const DeformState& state);
bool constraints_unilateral(const DeformState& state) noexcept;

/// Largest constraint error relative to the rest length.
double max_constraint_violation(const DeformState& state);

bool inside_workspace(Vec2 p) noexcept;
Vec2 clamp_to_workspace(Vec2 p) noexcept;

/// Throws Error(kInvariant) when particle count/shape, workspace bounds or
/// constraint tolerance do not hold.
void check_state(const DeformState& state);

/// Transition: grasp the particle nearest action.pick (if within
/// kPickRadiusFactor * rest_length), move it to action.place, relax the
/// remaining particles by distance projection with the grasp pinned.
DeformState apply_pick_place(const DeformState& state, const Action& action);

/// Index of the particle a pick at `p` grasps, or size() when none is in range.
std::size_t grasped_particle(const DeformState& state, Vec2 p);

/// Projection loop used by apply_pick_place: the first sweeps move only the
/// particle farther (in hops) from `pinned`, later sweeps split corrections
/// evenly; `pinned` never moves. Returns the number of sweeps performed.
int relax(DeformState& state, std::size_t pinned);

}  // namespace rgc::defsim
