#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgc/common/keypoints.hpp"
#include "rgc/defsim/metrics.hpp"
#include "rgc/defsim/render.hpp"
#include "rgc/defsim/state.hpp"
#include "rgc/defsim/tasks.hpp"

namespace rgc::trainkit {

using defsim::Action;
using defsim::DeformState;
using defsim::Observation;
using defsim::TaskKind;

inline constexpr std::size_t kMaxDemoSteps = 20;
inline constexpr std::uint64_t kEvalSeedBit = std::uint64_t{1} << 63;

enum class Split { kTrain, kEval };

const char* to_string(Split split) noexcept;
Split parse_split(const std::string& name);

/// Seed of the index-th task of `kind` drawn from a dataset seed. Train and
/// eval seeds differ in the top bit, so the two splits never share a task.
std::uint64_t task_seed(std::uint64_t dataset_seed, TaskKind kind, std::uint64_t index, Split split);

/// One expert step. Observations are rendered from the stored states on
/// demand; keypoints are ground truth in observation pixels.
struct DemoStep {
  DeformState state;
  KeypointSet keypoints;
  Action action;
  /// goal_distance before and after the action.
  double distance_before = 0.0;
  double distance_after = 0.0;

  Observation observation(std::size_t image_size = defsim::kImageSize) const;
};

struct Demonstration {
  TaskKind kind = TaskKind::kStraightening;
  std::uint64_t seed = 0;
  DeformState goal;
  KeypointSet goal_keypoints;
  std::vector<DemoStep> steps;
  DeformState final_state;
  double final_distance = 0.0;

  Observation goal_observation(std::size_t image_size = defsim::kImageSize) const;
};

struct Discard {
  TaskKind kind;
  std::uint64_t seed;
  std::string reason;
};

struct Dataset {
  std::vector<TaskKind> kinds;
  std::size_t per_task = 0;
  std::uint64_t seed = 0;
  Split split = Split::kTrain;
  std::size_t image_size = defsim::kImageSize;
  std::vector<Demonstration> demos;
  std::vector<Discard> discarded;
  std::vector<std::string> provenance;

  /// Demonstrations of one kind, in generation order.
  std::vector<const Demonstration*> of_kind(TaskKind kind) const;
  std::size_t step_count() const;
};

struct GenerateOptions {
  Split split = Split::kTrain;
  std::size_t image_size = defsim::kImageSize;
  /// Candidate tasks tried per kept demonstration before giving up.
  std::size_t max_attempts_factor = 4;
};

/// Rolls the jittered scripted expert on freshly sampled tasks until
/// `per_task` converged demonstrations of every kind are collected. Tasks on
/// which the expert does not reach the goal within kMaxDemoSteps, or on
/// which one of its actions fails to reduce the goal distance, are discarded
/// and logged, and the next seed is tried.
Dataset generate_demos(const std::vector<TaskKind>& kinds, std::size_t per_task, std::uint64_t seed,
                       const GenerateOptions& options = {});

/// Rolls the expert on one task; `converged` tells whether it reached kGamma.
Demonstration run_expert_demo(const defsim::TaskInstance& task, std::size_t image_size, bool* converged);

/// Re-simulates a demonstration from its seed and recorded actions; returns
/// the largest particle deviation from the stored states.
double replay_deviation(const Demonstration& demo, std::size_t image_size = defsim::kImageSize);

struct Label {
  std::size_t pick = 0;
  std::size_t place = 0;
  /// Snap distances in pixels from the expert positions to the chosen keypoints.
  double pick_distance = 0.0;
  double place_distance = 0.0;
};

/// Nearest keypoint (lowest index on ties) to the expert pick in `current`
/// and to the expert place in `goal`.
Label label_from_step(const Action& action, const KeypointSet& current, const KeypointSet& goal,
                      std::size_t image_size = defsim::kImageSize);

/// Index of the nearest point; ties go to the lowest index.
std::size_t nearest_index(const KeypointSet& points, Vec2 p);

/// Writes manifest.v1, demo_{i}/goal.ppm, demo_{i}/demo.rgct and
/// demo_{i}/step_{t}/{obs.ppm, record.rgct}. Creates `dir` if needed.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
/// Reads the manifest and numeric records (observations stay on disk).
Dataset read_dataset(const std::filesystem::path& dir);

/// Manifest text; stable for equal datasets.
std::string manifest_text(const Dataset& dataset);

/// Throws Error(kInvariant) if any train seed of `train` appears in `eval`
/// or if either dataset's seeds carry the wrong split bit.
void check_disjoint(const Dataset& train, const Dataset& eval);

}  // namespace rgc::trainkit
