#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgc/common/keypoints.hpp"
#include "rgc/common/rng.hpp"
#include "rgc/diffcore/params.hpp"
#include "rgc/localgnn/policy.hpp"
#include "rgc/trainkit/trainer.hpp"

namespace rgc::benchkit {

using diffcore::Var;
using localgnn::ActionDistribution;
using localgnn::PolicyOutput;

/// Keypoint-MLP baseline: both keypoint sets are normalized and concatenated
/// into one 4m vector, passed through ReLU layers, and split into m pick and
/// m place logits. It has no notion of nodes, so it only accepts the m it was
/// built for and is not permutation-equivariant.
struct MlpConfig {
  std::size_t keypoints = 5;
  std::vector<std::size_t> hidden{256, 256};
  std::size_t width = 160;
  std::size_t height = 160;

  std::size_t input_dim() const { return 4 * keypoints; }
  std::size_t output_dim() const { return 2 * keypoints; }

  /// "keypoint-mlp keypoints= hidden=a,b width= height=".
  std::string descriptor() const;
  static MlpConfig from_descriptor(const std::string& text);
  void validate() const;
};

struct MlpParams {
  MlpConfig config;
  diffcore::ParamStore store;
};

/// Glorot-uniform weights and zero biases; names layer{i}.weight/.bias.
MlpParams init_mlp(const MlpConfig& config, Rng& rng);

void save_mlp(const std::filesystem::path& path, const MlpParams& params,
              const std::vector<std::string>& provenance = {});
MlpParams load_mlp(const std::filesystem::path& path);

std::size_t mlp_parameter_count(const MlpConfig& config);
std::uint64_t mlp_forward_flops(const MlpConfig& config);

/// Tape form on normalized points [B x m x 2], [B x m x 2], parameters bound
/// as trainable leaves.
PolicyOutput mlp_forward(Var current_points, Var goal_points, MlpParams& params);

/// Throws Error(kDimension) unless both sets hold exactly config.keypoints points.
ActionDistribution mlp_baseline_policy(const KeypointSet& current, const KeypointSet& goal, const MlpParams& params);

struct TrainedMlp {
  MlpParams params;
  trainkit::TrainReport report;
};

/// Same examples, loss, optimizer and epoch budget as trainkit::train_policy.
TrainedMlp train_mlp_baseline(const trainkit::Dataset& dataset, const trainkit::TrainConfig& config,
                              MlpConfig architecture = {});

}  // namespace rgc::benchkit
