#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rgc/benchkit/capacity.hpp"
#include "rgc/common/keypoints.hpp"
#include "rgc/defsim/metrics.hpp"
#include "rgc/defsim/state.hpp"
#include "rgc/defsim/tasks.hpp"
#include "rgc/keypointnet/detector.hpp"
#include "rgc/localgnn/policy.hpp"
#include "rgc/trainkit/trainer.hpp"

namespace rgc::benchkit {

using defsim::Action;
using defsim::DeformState;
using defsim::TaskInstance;
using defsim::TaskKind;
using trainkit::KeypointSource;

inline constexpr std::size_t kActionBudget = 20;

/// What a planner sees at one step of a rollout. The states are simulator
/// ground truth and only meant for oracle planners.
struct PolicyContext {
  const DeformState& state;
  const DeformState& goal;
  const KeypointSet& current;
  const KeypointSet& goal_keypoints;
  std::size_t width;
  std::size_t height;
  std::uint64_t task_seed;
  std::size_t step;
};

struct PolicyStep {
  Action action;
  /// Empty for planners that do not score keypoints.
  ActionDistribution distribution;
};

/// A planner must be callable from several threads at once and must not keep
/// state between calls; anything random is derived from the context.
struct Planner {
  std::string descriptor;
  /// Keypoints the planner consumes; 0 takes the object's default count.
  std::size_t keypoints = 0;
  std::function<PolicyStep(const PolicyContext&)> act;
};

Planner gnn_planner(localgnn::PolicyParams params);
Planner mlp_planner(MlpParams params);
/// The noiseless scripted expert, acting on simulator state.
Planner expert_planner(const defsim::ExpertConfig& config = {});
/// Uniform pick over current keypoints and place over goal keypoints.
Planner random_planner(std::size_t keypoints, std::uint64_t seed);

struct RolloutOptions {
  KeypointSource source = KeypointSource::kGroundTruth;
  /// Required when source is kDetector.
  const keypointnet::DetectorParams* detector = nullptr;
  std::size_t max_actions = kActionBudget;
  std::size_t image_size = defsim::kImageSize;
  /// When set: goal.ppm, step_{t}.ppm with keypoints and the chosen action
  /// drawn in, and trace.txt.
  std::filesystem::path frame_dir;
};

struct RolloutResult {
  bool success = false;
  std::size_t actions = 0;
  /// goal_distance before the first action and after each one.
  std::vector<double> distances;
  std::vector<Action> taken;
  std::vector<ActionDistribution> distributions;
  /// Wall-clock seconds of each planner call.
  std::vector<double> inference_seconds;
};

/// Closed loop: keypoints of the state and goal, planner, pick-and-place,
/// until goal_distance <= kGamma or the budget is spent. Throws
/// Error(kDimension) when the planner's keypoint count differs from the
/// keypoint source's.
RolloutResult rollout(const Planner& planner, const TaskInstance& task, const RolloutOptions& options = {});

struct BenchReport {
  TaskKind kind = TaskKind::kStraightening;
  KeypointSource source = KeypointSource::kGroundTruth;
  std::size_t instances = 0;
  std::size_t successes = 0;
  /// Sum of action counts over successful rollouts.
  std::size_t success_actions = 0;
  std::size_t max_actions = kActionBudget;
  std::uint64_t eval_seed = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<bool> outcomes;
  std::string descriptor;
  std::optional<CapacityFigures> capacity;

  double success_percent() const;
  /// NaN when nothing succeeded.
  double mean_actions() const;
};

/// Rolls the planner on `instances` fresh eval-split tasks of `kind` drawn
/// from `eval_seed`. With threads > 1 the instances are split across worker
/// threads; the report does not depend on the thread count.
BenchReport success_rate(const Planner& planner, TaskKind kind, std::size_t instances, std::uint64_t eval_seed,
                         const RolloutOptions& options = {}, std::size_t threads = 1);

/// Eval-split task i of `kind` for `eval_seed`.
TaskInstance eval_task(TaskKind kind, std::size_t index, std::uint64_t eval_seed,
                       std::size_t image_size = defsim::kImageSize);

/// Human-readable lines.
std::string report_text(const BenchReport& report);
/// key=value lines; success_rate and mean_actions are exact fractions.
std::string report_kv(const BenchReport& report);

}  // namespace rgc::benchkit
