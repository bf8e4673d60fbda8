#pragma once

#include <filesystem>
#include <optional>

#include "rgc/benchkit/capacity.hpp"
#include "rgc/benchkit/mlp.hpp"
#include "rgc/benchkit/rollout.hpp"
#include "rgc/localgnn/policy.hpp"

namespace rgc::benchkit {

/// A planner checkpoint of either architecture, told apart by its "#arch" entry.
struct LoadedPlanner {
  Planner planner;
  std::optional<localgnn::PolicyParams> gnn;
  std::optional<MlpParams> mlp;
  std::size_t checkpoint_elements = 0;

  /// Capacity figures with checkpoint_elements filled in.
  CapacityFigures capacity(const keypointnet::DetectorParams* detector = nullptr,
                           const CapacityOptions& options = {}) const;
};

/// Throws Error(kIo) for missing files or unknown architectures.
LoadedPlanner load_planner(const std::filesystem::path& path);

}  // namespace rgc::benchkit
