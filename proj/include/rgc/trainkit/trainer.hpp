#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "rgc/diffcore/adam.hpp"
#include "rgc/diffcore/params.hpp"
#include "rgc/diffcore/tape.hpp"
#include "rgc/keypointnet/detector.hpp"
#include "rgc/localgnn/policy.hpp"
#include "rgc/trainkit/dataset.hpp"

namespace rgc::trainkit {

using diffcore::Var;

enum class TrainMode { kSingleTask, kMultiTask };
enum class KeypointSource { kGroundTruth, kDetector };

const char* to_string(KeypointSource source) noexcept;
KeypointSource parse_keypoint_source(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kSingleTask;
  /// Single-task: exactly one kind. Multi-task: every kind trained jointly.
  std::vector<TaskKind> kinds;
  /// Demonstrations used per kind (the first ones in the dataset); 0 uses all.
  std::size_t per_task = 0;
  /// 0 selects the default: 50 epochs, 30 when per_task >= 1000.
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  double w_pick = 1.0;
  double w_place = 1.0;
  std::uint64_t seed = 0;
  KeypointSource source = KeypointSource::kGroundTruth;
  /// Required when source is kDetector.
  const keypointnet::DetectorParams* detector = nullptr;
  diffcore::AdamConfig adam;
  /// Global gradient-norm clip applied before each Adam step; 0 disables it.
  double clip_norm = 1.0;
  std::function<void(std::size_t epoch, double loss, double accuracy)> on_epoch;

  std::size_t effective_epochs() const;
  void validate() const;
};

/// One supervised pair: keypoints of the state and goal and the snapped expert labels.
struct Example {
  TaskKind kind = TaskKind::kStraightening;
  KeypointSet current;
  KeypointSet goal;
  Label label;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  /// Fraction of examples whose pick and place argmax both match the labels,
  /// measured on the forward passes of each epoch.
  std::vector<double> epoch_accuracy;
  std::size_t examples = 0;
  std::size_t demonstrations = 0;
};

/// Demonstrations selected by the config, as labeled examples.
std::vector<const Demonstration*> select_demos(const Dataset& dataset, const TrainConfig& config);
std::vector<Example> build_examples(const Dataset& dataset, const TrainConfig& config);

/// Sample `index` of a synthetic detector corpus: task index/3 of
/// kinds[(index/3) % kinds.size()], shown in its initial state, its goal, or
/// after one jittered expert action. Ground-truth keypoints in pixels.
keypointnet::DetectorSample detector_sample(const std::vector<TaskKind>& kinds, std::uint64_t seed, Split split,
                                            std::size_t index, std::size_t keypoints = 5,
                                            std::size_t image_size = defsim::kImageSize);

/// Batched forward of any keypoint planner on normalized points [B x m x 2], [B x n x 2].
using PlannerForward = std::function<localgnn::PolicyOutput(Var current, Var goal)>;

/// Minimizes the weighted pick/place cross-entropy over the examples with
/// Adam. Batches mixing keypoint counts are split into equal-shape groups.
TrainReport fit_planner(const std::vector<Example>& examples, diffcore::ParamStore& store,
                        const PlannerForward& forward, const TrainConfig& config, std::size_t image_size);

struct TrainedPolicy {
  localgnn::PolicyParams params;
  TrainReport report;
};

/// Local-GNN policy trained by imitation on the selected demonstrations.
TrainedPolicy train_policy(const Dataset& dataset, const TrainConfig& config, localgnn::GnnConfig architecture = {});

}  // namespace rgc::trainkit
