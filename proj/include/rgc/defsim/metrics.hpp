#pragma once

#include <cstddef>
#include <vector>

#include "rgc/common/keypoints.hpp"
#include "rgc/common/rng.hpp"
#include "rgc/defsim/render.hpp"
#include "rgc/defsim/state.hpp"

namespace rgc::defsim {

/// goal index for each state particle under the best symmetry relabeling
/// (chains: forward/reversed; rings: rotations; grids: the eight square
/// symmetries, or four flips/half-turns when rows != cols).
struct Correspondence {
  std::vector<std::size_t> goal_index;
  double distance = 0.0;
};

/// All symmetry relabelings of the state's topology, identity first.
std::vector<std::vector<std::size_t>> symmetry_relabelings(const DeformState& state);

/// Throws Error(kTopology) when kind or particle layout differ.
Correspondence best_correspondence(const DeformState& state, const DeformState& goal);

/// Mean particle distance to the goal under the best symmetry relabeling.
double goal_distance(const DeformState& state, const DeformState& goal);

/// Default keypoint count: 5 for ropes and rings, 8 for cloth.
std::size_t default_keypoint_count(ObjectKind kind) noexcept;

/// Particle indices sampled as keypoints. Chains: evenly spaced by index
/// including both ends; rings: evenly spaced from particle 0; cloth (m = 8):
/// corners then edge midpoints, each clockwise from the first row.
std::vector<std::size_t> keypoint_indices(const DeformState& state, std::size_t m);

KeypointSet ground_truth_keypoints(const DeformState& state, std::size_t m, std::size_t width = kImageSize,
                                   std::size_t height = kImageSize);

struct ExpertConfig {
  /// Positional jitter radius in workspace units (1 px at 160 x 160).
  double jitter = 1.0 / static_cast<double>(kImageSize);
  /// Keypoint count whose particles the expert targets.
  std::size_t keypoints = 0;  // 0: default_keypoint_count
};

/// Greedy expert: among keypoint particles, pick the one farthest from its
/// corresponding goal position and place it there. Falls back to all
/// particles when every keypoint particle is already within kGamma. With an
/// rng, pick and place are jittered uniformly within a disc of radius
/// config.jitter.
Action scripted_expert(const DeformState& state, const DeformState& goal, Rng* rng = nullptr,
                       const ExpertConfig& config = {});

}  // namespace rgc::defsim
