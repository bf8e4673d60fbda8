#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgc/common/keypoints.hpp"
#include "rgc/common/rng.hpp"
#include "rgc/defsim/state.hpp"
#include "rgc/diffcore/ops.hpp"
#include "rgc/diffcore/params.hpp"

namespace rgc::localgnn {

using diffcore::Tensor;
using diffcore::Var;

enum class AttentionMode { kSelf, kCross };

/// Architecture of the graph policy. Keypoints enter as pixel coordinates of
/// a width x height observation and are normalized to [-1, 1]^2.
struct GnnConfig {
  std::size_t keypoints = 5;
  std::size_t dim = 64;
  std::size_t self_layers = 3;
  std::size_t cross_layers = 3;
  std::size_t embed_hidden = 64;
  std::size_t update_hidden = 128;
  std::size_t head_hidden = 64;
  std::size_t width = 160;
  std::size_t height = 160;

  std::size_t layer_count() const { return self_layers + cross_layers; }
  AttentionMode mode(std::size_t layer) const {
    return layer < self_layers ? AttentionMode::kSelf : AttentionMode::kCross;
  }

  /// One-line "local-gnn key=value ..." form stored in checkpoints.
  std::string descriptor() const;
  static GnnConfig from_descriptor(const std::string& text);
  void validate() const;
};

struct PolicyParams {
  GnnConfig config;
  diffcore::ParamStore store;
};

/// Glorot-uniform weights and zero biases for every layer.
PolicyParams init_policy(const GnnConfig& config, Rng& rng);

void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 const std::vector<std::string>& provenance = {});
PolicyParams load_policy(const std::filesystem::path& path);

/// Closed-form parameter count of the architecture.
std::size_t parameter_count(const GnnConfig& config);
/// Closed-form forward FLOPs for one pair with m current and n goal
/// keypoints, using the per-op costs of diffcore.
std::uint64_t forward_flops(const GnnConfig& config, std::size_t m, std::size_t n);

/// Pixel coordinates to [-1, 1]^2: the outer pixel edges map to -1 and 1.
Tensor normalize_keypoints(const KeypointSet& points, std::size_t width, std::size_t height);

// --- tape forms -------------------------------------------------------------
// Node sets are batched: `current` is [B*m x d] and `goal` [B*n x d] for B
// independent pairs.

struct GraphPair {
  Var current;
  Var goal;
  std::size_t batch = 1;
};

/// MLP^0 applied to every point of [N x 2] normalized coordinates -> [N x d].
Var embed(Var points, PolicyParams& params);

/// One attention layer (shared weights for both graphs): scaled dot-product
/// messages from the node's own graph (self) or the other graph (cross),
/// then x + MLP([x || message]).
GraphPair attention_update(const GraphPair& pair, std::size_t layer, AttentionMode mode, PolicyParams& params);

struct PolicyOutput {
  Var pick_logits;  // [B x m]
  Var place_logits;  // [B x n]
  Var q_pick;  // [B x m]
  Var q_place;  // [B x n]
};

/// Full forward on normalized points [B x m x 2] and [B x n x 2].
PolicyOutput policy_forward(Var current_points, Var goal_points, PolicyParams& params);

/// Mean over the batch of w_pick * CE(Q_pick, y_pick) + w_place * CE(Q_place, y_place).
Var policy_loss(const PolicyOutput& out, const std::vector<std::size_t>& pick_labels,
                const std::vector<std::size_t>& place_labels, double w_pick = 1.0, double w_place = 1.0);

// --- value forms --------------------------------------------------------------

struct ActionDistribution {
  std::vector<double> pick;
  std::vector<double> place;
};

struct NodeEmbeddings {
  Tensor current;  // [m x d]
  Tensor goal;  // [n x d]
};

Tensor embed_keypoints(const KeypointSet& points, const PolicyParams& params);
NodeEmbeddings attention_update(const NodeEmbeddings& nodes, std::size_t layer, AttentionMode mode,
                                const PolicyParams& params);
ActionDistribution policy_forward(const KeypointSet& current, const KeypointSet& goal, const PolicyParams& params);

/// Same as policy_forward but also returns the raw head logits.
struct PolicyLogits {
  std::vector<double> pick;
  std::vector<double> place;
};
PolicyLogits policy_logits(const KeypointSet& current, const KeypointSet& goal, const PolicyParams& params);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax_first(const std::vector<double>& values);

/// Argmax pick over `current`, argmax place over `goal`, mapped from pixels
/// to workspace coordinates.
defsim::Action select_action(const ActionDistribution& dist, const KeypointSet& current, const KeypointSet& goal,
                             std::size_t width, std::size_t height);

/// w_pick * (-sum y_pick log Q_pick) + w_place * (-sum y_place log Q_place).
double policy_loss(const ActionDistribution& dist, const std::vector<double>& y_pick,
                   const std::vector<double>& y_place, double w_pick = 1.0, double w_place = 1.0);

/// Stacks keypoint sets of equal size into normalized [B x m x 2].
Tensor stack_normalized(const std::vector<const KeypointSet*>& sets, std::size_t width, std::size_t height);

}  // namespace rgc::localgnn
