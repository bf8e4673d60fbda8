#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rgc/common/keypoints.hpp"
#include "rgc/common/rng.hpp"
#include "rgc/defsim/render.hpp"
#include "rgc/diffcore/adam.hpp"
#include "rgc/diffcore/ops.hpp"
#include "rgc/diffcore/params.hpp"

namespace rgc::keypointnet {

using defsim::Observation;
using diffcore::Tensor;
using diffcore::Var;

/// Convolutional backbone: channels.size() hidden 3x3 layers with ReLU and a
/// final layer emitting `keypoints` maps; the first `strided_layers` layers
/// use stride 2, all use padding k/2.
struct DetectorConfig {
  std::size_t width = 160;
  std::size_t height = 160;
  std::size_t keypoints = 5;
  std::vector<std::size_t> channels{16, 32, 32};
  std::size_t kernel = 3;
  std::size_t strided_layers = 2;
  /// Heatmap standard deviation on the observation grid, in pixels.
  double sigma = 4.0;

  std::size_t layer_count() const { return channels.size() + 1; }
  std::size_t stride(std::size_t layer) const { return layer < strided_layers ? 2 : 1; }
  std::size_t feature_width() const;
  std::size_t feature_height() const;

  /// One-line "detector key=value ..." form stored in checkpoints.
  std::string descriptor() const;
  static DetectorConfig from_descriptor(const std::string& text);
  void validate() const;
};

struct DetectorParams {
  DetectorConfig config;
  diffcore::ParamStore store;
};

/// He-uniform kernels (the keypoint head scaled by 0.1 so the initial
/// spatial softmax is close to uniform), zero biases. Parameter names conv{i}.weight/.bias.
DetectorParams init_detector(const DetectorConfig& config, Rng& rng);

/// Closed-form parameter count of the backbone.
std::size_t detector_parameter_count(const DetectorConfig& config);
/// Closed-form FLOPs of detector_forward on one observation (convolutions,
/// ReLUs, spatial softmax and the rescale), using the per-op costs of diffcore.
std::uint64_t detector_forward_flops(const DetectorConfig& config);

void save_detector(const std::filesystem::path& path, const DetectorParams& params,
                   const std::vector<std::string>& provenance = {});
DetectorParams load_detector(const std::filesystem::path& path);

/// [c x h x w] tensor of an interleaved observation.
Tensor observation_tensor(const Observation& obs);

/// Expected coordinate (x = column, y = row) of one map under its softmax.
Vec2 spatial_softmax(const Tensor& map);

/// Linear map from the feature grid to the observation grid.
Vec2 rescale_keypoint(Vec2 p, std::size_t feature_width, std::size_t feature_height, std::size_t width,
                      std::size_t height);

/// Sum of unit-peak Gaussians at the points, evaluated on a width x height grid.
Tensor gaussian_heatmap(const KeypointSet& points, double sigma, std::size_t width, std::size_t height);

/// Mean over pixels of the squared difference of the two summed heatmaps.
double detector_loss(const KeypointSet& predicted, const KeypointSet& truth, double sigma, std::size_t width,
                     std::size_t height);

/// Tape form: backbone on images [b x 3 x h x w] with parameters bound on the
/// images' tape. Returns the raw maps [b x m x h' x w'].
Var detector_maps(Var images, DetectorParams& params);
/// Spatial-softmax keypoints of the maps, in feature-grid coordinates [b x m x 2].
Var feature_keypoints(Var maps);
/// Feature-grid keypoints rescaled to observation pixels.
Var rescale_keypoints(Var points, const DetectorConfig& config);

struct DetectorOutput {
  Tensor maps;  // [m x h' x w']
  KeypointSet keypoints;
};

DetectorOutput detector_forward(const Observation& obs, const DetectorParams& params);
std::vector<KeypointSet> detect_keypoints(const std::vector<Observation>& observations, const DetectorParams& params);

struct DetectorSample {
  Observation observation;
  KeypointSet keypoints;
};

/// Produces training sample i on demand (renders are cheap, storage is not).
using SampleSource = std::function<DetectorSample(std::size_t)>;

struct DetectorTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  diffcore::AdamConfig adam{};
  /// Heatmap sigma (observation pixels) at epoch 0, decayed geometrically to
  /// the configured sigma by `anneal_fraction` of the epochs.
  double sigma_start = 24.0;
  double anneal_fraction = 0.5;
  /// Learning rate follows a half cosine from adam.learning_rate down to
  /// this fraction of it over all steps; 1 keeps it constant.
  double final_lr_fraction = 1.0;
  /// Index relabelings of the ground truth under which a sample counts as
  /// correct; the lowest-loss one is used per sample. Empty: identity and
  /// reversal.
  std::vector<std::vector<std::size_t>> orderings;
  /// Called after each epoch with (epoch, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
};

struct DetectorTrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_sigma;
};

/// Heatmap sigma used at `epoch` of an annealed run.
double annealed_sigma(const DetectorTrainConfig& train, double final_sigma, std::size_t epoch);

DetectorParams train_detector(std::size_t sample_count, const SampleSource& samples, const DetectorConfig& config,
                              const DetectorTrainConfig& train, DetectorTrainReport* report = nullptr);
DetectorParams train_detector(const std::vector<DetectorSample>& samples, const DetectorConfig& config,
                              const DetectorTrainConfig& train, DetectorTrainReport* report = nullptr);

/// Training objective for one sample: mean over keypoints and feature pixels of
/// the squared difference between per-keypoint heatmaps, minimized over the
/// given truth relabelings. Exposed for tests.
double per_keypoint_loss(const KeypointSet& predicted_feature, const KeypointSet& truth_feature, double sigma_feature,
                         std::size_t feature_width, std::size_t feature_height);

/// Mean keypoint distance minimized over relabelings (identity and reversal
/// when `orderings` is empty).
double keypoint_error(const KeypointSet& predicted, const KeypointSet& truth,
                      const std::vector<std::vector<std::size_t>>& orderings = {});

/// Single-channel image of the summed heatmap scaled to peak 1, for dumps.
Observation heatmap_image(const KeypointSet& points, double sigma, std::size_t width, std::size_t height);

}  // namespace rgc::keypointnet
