#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "rgc/common/rng.hpp"
#include "rgc/defsim/render.hpp"
#include "rgc/defsim/state.hpp"

namespace rgc::defsim {

enum class TaskKind {
  kStraightening,
  kLShape,
  kVShape,
  kNShape,
  kSquareShape,
  kFlattening,
  kFolding,
  kFoldingDiagonally,
};

inline constexpr std::array<TaskKind, 8> kAllTasks = {
    TaskKind::kStraightening, TaskKind::kLShape,     TaskKind::kVShape,  TaskKind::kNShape,
    TaskKind::kSquareShape,   TaskKind::kFlattening, TaskKind::kFolding, TaskKind::kFoldingDiagonally};
inline constexpr std::array<TaskKind, 5> kRopeTasks = {TaskKind::kStraightening, TaskKind::kLShape, TaskKind::kVShape,
                                                       TaskKind::kNShape, TaskKind::kSquareShape};

/// Names used on the command line and in manifests: straightening, l-shape,
/// v-shape, n-shape, square-shape, flattening, folding, folding-diagonally.
const char* to_string(TaskKind kind) noexcept;
/// Throws Error(kConfig) for unknown names.
TaskKind parse_task_kind(std::string_view name);
ObjectKind object_of(TaskKind kind) noexcept;

struct TaskInstance {
  TaskKind kind = TaskKind::kStraightening;
  DeformState initial;
  DeformState goal;
  Observation goal_observation;
  std::uint64_t seed = 0;

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

/// Random smooth initial configuration and randomly posed target shape.
TaskInstance sample_task(TaskKind kind, Rng& rng, std::size_t image_size = kImageSize);
/// Same, drawing from a generator seeded by (seed, kind); records the seed.
TaskInstance sample_task(TaskKind kind, std::uint64_t seed, std::size_t image_size = kImageSize);

}  // namespace rgc::defsim
