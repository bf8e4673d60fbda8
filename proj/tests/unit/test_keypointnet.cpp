#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "rgc/common/error.hpp"
#include "rgc/defsim/metrics.hpp"
#include "rgc/defsim/tasks.hpp"
#include "rgc/keypointnet/detector.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace rgc::keypointnet {
namespace {

using testing::random_tensor;

std::vector<std::pair<double, double>> pairs(const KeypointSet& k) {
  std::vector<std::pair<double, double>> out;
  for (Vec2 p : k) out.emplace_back(p.x, p.y);
  return out;
}

KeypointSet random_points(Rng& rng, std::size_t m, double w, double h) {
  KeypointSet k;
  for (std::size_t i = 0; i < m; ++i) k.push_back({rng.uniform(0, w - 1), rng.uniform(0, h - 1)});
  return k;
}

DetectorConfig small_config() {
  DetectorConfig c;
  c.width = c.height = 32;
  c.keypoints = 3;
  c.channels = {4, 8, 8};
  return c;
}

Observation random_observation(Rng& rng, std::size_t w, std::size_t h) {
  Observation o{w, h, 3, std::vector<double>(w * h * 3)};
  for (double& v : o.pixels) v = rng.uniform();
  return o;
}

TEST(SpatialSoftmax, NearDeltaReturnsThatPixel) {
  Tensor map({12, 12});
  map.at(7, 3) = 50.0;
  Vec2 p = spatial_softmax(map);
  EXPECT_NEAR(p.x, 3.0, 1e-6);
  EXPECT_NEAR(p.y, 7.0, 1e-6);
}

TEST(SpatialSoftmax, UniformMapGivesGridCentroid) {
  Vec2 p = spatial_softmax(Tensor({10, 14}, 0.3));
  EXPECT_NEAR(p.x, 6.5, 1e-12);
  EXPECT_NEAR(p.y, 4.5, 1e-12);
}

TEST(SpatialSoftmax, MatchesDoubleLoopOracle) {
  Rng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor map = random_tensor({12, 12}, rng, -3, 3);
    Vec2 p = spatial_softmax(map);
    auto [x, y] = testing::oracle::spatial_softmax(map);
    EXPECT_NEAR(p.x, x, 1e-12);
    EXPECT_NEAR(p.y, y, 1e-12);
  }
}

TEST(SpatialSoftmax, ShiftInvariantAndInsideGrid) {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor map = random_tensor({9, 7}, rng, -20, 20);
    Tensor shifted = map;
    for (double& v : shifted.data()) v += 123.0;
    Vec2 a = spatial_softmax(map), b = spatial_softmax(shifted);
    EXPECT_NEAR(a.x, b.x, 1e-9);
    EXPECT_NEAR(a.y, b.y, 1e-9);
    EXPECT_GE(a.x, 0.0);
    EXPECT_LE(a.x, 6.0);
    EXPECT_GE(a.y, 0.0);
    EXPECT_LE(a.y, 8.0);
  }
}

TEST(Rescale, Examples) {
  EXPECT_EQ(rescale_keypoint({3.5, 7.25}, 160, 160, 160, 160), (Vec2{3.5, 7.25}));
  EXPECT_DOUBLE_EQ(rescale_keypoint({10.0, 0.0}, 40, 40, 160, 160).x, 40.0);
  EXPECT_DOUBLE_EQ(rescale_keypoint({0.0, 10.0}, 40, 20, 160, 160).y, 80.0);
  EXPECT_EQ(rescale_keypoint({0.0, 0.0}, 13, 7, 160, 90), (Vec2{0.0, 0.0}));
}

TEST(Heatmap, PeakIsOneAtKeypoint) {
  Tensor g = gaussian_heatmap({{5.0, 8.0}}, 4.0, 20, 16);
  EXPECT_DOUBLE_EQ(g.at(8, 5), 1.0);
}

TEST(Heatmap, ValueAtSigmaRootTwoIsInverseE) {
  const double sigma = 3.0 / std::sqrt(2.0);
  Tensor g = gaussian_heatmap({{5.0, 5.0}}, sigma, 12, 12);
  EXPECT_NEAR(g.at(5, 8), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(g.at(5, 8), 0.36788, 1e-5);
}

TEST(Heatmap, CoincidentKeypointsDouble) {
  Tensor one = gaussian_heatmap({{4.3, 6.1}}, 2.0, 10, 10);
  Tensor two = gaussian_heatmap({{4.3, 6.1}, {4.3, 6.1}}, 2.0, 10, 10);
  for (std::size_t i = 0; i < one.numel(); ++i) EXPECT_DOUBLE_EQ(two[i], 2.0 * one[i]);
}

TEST(Heatmap, PermutationInvariantAndMatchesOracle) {
  Rng rng(3);
  KeypointSet k = random_points(rng, 4, 24, 18);
  KeypointSet r(k.rbegin(), k.rend());
  Tensor a = gaussian_heatmap(k, 2.5, 24, 18), b = gaussian_heatmap(r, 2.5, 24, 18);
  auto ref = testing::oracle::heatmap(pairs(k), 2.5, 18, 24);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-12);
    EXPECT_NEAR(a[i], ref[i], 1e-12);
    EXPECT_GT(a[i], 0.0);
    EXPECT_LE(a[i], 4.0);
  }
}

TEST(Heatmap, MaximumWithinOnePixelOfKeypoint) {
  Tensor g = gaussian_heatmap({{11.4, 6.7}}, 4.0, 30, 20);
  std::size_t best = 0;
  for (std::size_t i = 0; i < g.numel(); ++i)
    if (g[i] > g[best]) best = i;
  EXPECT_LE(std::hypot(double(best % 30) - 11.4, double(best / 30) - 6.7), 1.0);
}

TEST(DetectorLoss, ZeroOnIdentitySymmetricAndMatchesOracle) {
  Rng rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    KeypointSet a = random_points(rng, 5, 40, 30), b = random_points(rng, 5, 40, 30);
    EXPECT_EQ(detector_loss(a, a, 4.0, 40, 30), 0.0);
    EXPECT_EQ(detector_loss(a, b, 4.0, 40, 30), detector_loss(b, a, 4.0, 40, 30));
    EXPECT_NEAR(detector_loss(a, b, 4.0, 40, 30), testing::oracle::heatmap_loss(pairs(a), pairs(b), 4.0, 30, 40),
                1e-12);
    EXPECT_GT(detector_loss(a, b, 4.0, 40, 30), 0.0);
  }
}

TEST(DetectorLoss, CountMismatchIsDimensionError) {
  try {
    detector_loss({{1, 1}, {2, 2}}, {{1, 1}}, 4.0, 8, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Detector, FeatureGridOfDefaultBackbone) {
  DetectorConfig c;
  EXPECT_EQ(c.feature_width(), 40u);
  EXPECT_EQ(c.feature_height(), 40u);
  EXPECT_EQ(small_config().feature_width(), 8u);
}

TEST(Detector, ForwardGivesMKeypointsInsideImage) {
  Rng rng(5);
  DetectorParams params = init_detector(DetectorConfig{}, rng);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Observation obs = defsim::render(defsim::sample_task(defsim::TaskKind::kLShape, seed).initial);
    DetectorOutput out = detector_forward(obs, params);
    ASSERT_EQ(out.keypoints.size(), 5u);
    EXPECT_EQ(out.maps.shape(), (diffcore::Shape{5, 40, 40}));
    for (Vec2 p : out.keypoints) {
      EXPECT_GE(p.x, 0.0);
      EXPECT_LT(p.x, 160.0);
      EXPECT_GE(p.y, 0.0);
      EXPECT_LT(p.y, 160.0);
    }
    EXPECT_EQ(detector_forward(obs, params).keypoints, out.keypoints);
    EXPECT_EQ(detect_keypoints({obs}, params).front(), out.keypoints);
  }
}

TEST(Detector, WrongObservationSizeIsDimensionError) {
  Rng rng(6);
  DetectorParams params = init_detector(small_config(), rng);
  try {
    detector_forward(random_observation(rng, 16, 32), params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Detector, KeypointGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(10 + seed);
    DetectorParams params = init_detector(small_config(), rng);
    for (auto& p : params.store)
      for (double& v : p.value.data()) v = rng.uniform(-0.5, 0.5);
    Tensor images({2, 3, 32, 32});
    for (std::size_t b = 0; b < 2; ++b) {
      Tensor one = observation_tensor(random_observation(rng, 32, 32));
      std::copy(one.raw(), one.raw() + one.numel(), images.raw() + b * one.numel());
    }
    auto result = testing::check_param_gradients(params.store, [&](diffcore::Tape& tape) {
      Var pts = rescale_keypoints(feature_keypoints(detector_maps(tape.constant(images), params)), params.config);
      return testing::project_to_scalar(diffcore::scale(pts, 1.0 / 32.0), seed);
    });
    EXPECT_LE(result.max_rel_error, 1e-4);
    EXPECT_GT(result.max_abs_grad, 0.0);
  }
}

TEST(Detector, CheckpointRoundTrip) {
  Rng rng(7);
  DetectorParams params = init_detector(small_config(), rng);
  auto path = std::filesystem::temp_directory_path() / "rgc_test_detector.ckpt";
  save_detector(path, params, {"seed=7"});
  DetectorParams back = load_detector(path);
  EXPECT_EQ(back.config.descriptor(), params.config.descriptor());
  Observation obs = random_observation(rng, 32, 32);
  EXPECT_EQ(detector_forward(obs, back).keypoints, detector_forward(obs, params).keypoints);
  std::filesystem::remove(path);
}

TEST(Detector, DescriptorRoundTrip) {
  DetectorConfig c = small_config();
  c.sigma = 2.75;
  DetectorConfig back = DetectorConfig::from_descriptor(c.descriptor());
  EXPECT_EQ(back.descriptor(), c.descriptor());
  EXPECT_THROW(DetectorConfig::from_descriptor("detector width=32"), Error);
}

TEST(Training, EmptyDatasetIsError) {
  try {
    train_detector(std::vector<DetectorSample>{}, small_config(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyInput);
  }
}

TEST(Training, SigmaAnnealsToConfiguredValue) {
  DetectorTrainConfig t;
  t.epochs = 10;
  t.sigma_start = 16.0;
  t.anneal_fraction = 0.5;
  EXPECT_DOUBLE_EQ(annealed_sigma(t, 4.0, 0), 16.0);
  EXPECT_NEAR(annealed_sigma(t, 4.0, 1), 16.0 * std::pow(0.25, 0.2), 1e-12);
  EXPECT_DOUBLE_EQ(annealed_sigma(t, 4.0, 5), 4.0);
  EXPECT_DOUBLE_EQ(annealed_sigma(t, 4.0, 9), 4.0);
}

TEST(Training, SeededRunsAreIdentical) {
  std::vector<DetectorSample> data;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    defsim::DeformState s = defsim::sample_task(defsim::TaskKind::kStraightening, seed).initial;
    data.push_back({defsim::render(s, 32, 32), defsim::ground_truth_keypoints(s, 3, 32, 32)});
  }
  DetectorTrainConfig t;
  t.epochs = 3;
  t.batch_size = 4;
  t.seed = 9;
  DetectorTrainReport r1, r2;
  DetectorParams a = train_detector(data, small_config(), t, &r1);
  DetectorParams b = train_detector(data, small_config(), t, &r2);
  EXPECT_EQ(r1.epoch_loss, r2.epoch_loss);
  for (auto& p : a.store) EXPECT_EQ(p.value, b.store.get(p.name).value);
}

TEST(Training, OverfitsOneSample) {
  defsim::DeformState s = defsim::sample_task(defsim::TaskKind::kLShape, std::uint64_t{1}).initial;
  std::vector<DetectorSample> data{{defsim::render(s), defsim::ground_truth_keypoints(s, 5)}};
  DetectorTrainConfig t;
  t.epochs = 500;
  t.batch_size = 1;
  t.seed = 3;
  DetectorParams params = train_detector(data, DetectorConfig{}, t);
  EXPECT_LT(keypoint_error(detector_forward(data[0].observation, params).keypoints, data[0].keypoints), 1.0);
}

TEST(Training, EpochLossMostlyDecreases) {
  std::vector<DetectorSample> data;
  for (std::uint64_t seed = 0; seed < 48; ++seed) {
    defsim::DeformState s = defsim::sample_task(defsim::kRopeTasks[seed % 4], seed).initial;
    data.push_back({defsim::render(s), defsim::ground_truth_keypoints(s, 5)});
  }
  DetectorTrainConfig t;
  t.epochs = 10;
  t.seed = 4;
  DetectorTrainReport report;
  train_detector(data, DetectorConfig{}, t, &report);
  int ok = 0;
  for (std::size_t e = 1; e < report.epoch_loss.size(); ++e) ok += report.epoch_loss[e] <= report.epoch_loss[e - 1];
  EXPECT_GE(ok, 8) << "of 9 consecutive pairs";
}

TEST(HeatmapImage, PeakScaledToOne) {
  Observation img = heatmap_image({{3, 3}, {10, 4}}, 2.0, 16, 8);
  EXPECT_EQ(img.channels, 1u);
  double mx = 0.0;
  for (double v : img.pixels) mx = std::max(mx, v);
  EXPECT_DOUBLE_EQ(mx, 1.0);
}

}  // namespace
}  // namespace rgc::keypointnet
