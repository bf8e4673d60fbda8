#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "rgc/common/error.hpp"
#include "rgc/diffcore/checkpoint.hpp"
#include "rgc/trainkit/trainer.hpp"

namespace rgc::trainkit {
namespace {

namespace fs = std::filesystem;
using defsim::kRopeTasks;

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rgc_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<TaskKind> four_rope_kinds() { return {kRopeTasks[0], kRopeTasks[1], kRopeTasks[2], kRopeTasks[3]}; }

TEST(Generate, SingleDemoConvergesWithStrictlyReducingSteps) {
  Dataset ds = generate_demos({TaskKind::kStraightening}, 1, 3);
  ASSERT_EQ(ds.demos.size(), 1u);
  const Demonstration& d = ds.demos[0];
  EXPECT_LT(d.final_distance, defsim::kGamma);
  EXPECT_LE(d.steps.size(), kMaxDemoSteps);
  ASSERT_FALSE(d.steps.empty());
  for (const auto& s : d.steps) EXPECT_LT(s.distance_after, s.distance_before);
  EXPECT_DOUBLE_EQ(d.steps.front().distance_before, defsim::goal_distance(d.steps.front().state, d.goal));
}

TEST(Generate, ManifestCountsAndReplay) {
  Dataset ds = generate_demos(four_rope_kinds(), 100, 11);
  EXPECT_EQ(ds.demos.size(), 400u);
  const std::string manifest = manifest_text(ds);
  EXPECT_NE(manifest.find("demos=400\n"), std::string::npos);
  EXPECT_NE(manifest.find("format=manifest.v1\n"), std::string::npos);
  for (TaskKind k : four_rope_kinds()) EXPECT_EQ(ds.of_kind(k).size(), 100u);
  double worst = 0.0;
  for (const auto& d : ds.demos) worst = std::max(worst, replay_deviation(d));
  EXPECT_LE(worst, 1e-9);
}

TEST(Generate, DiscardsAreLoggedAndSkipped) {
  Dataset ds = generate_demos({TaskKind::kFoldingDiagonally}, 30, 5);
  EXPECT_EQ(ds.demos.size(), 30u);
  for (const auto& d : ds.demos) EXPECT_LE(d.final_distance, defsim::kGamma);
  for (const auto& x : ds.discarded) {
    EXPECT_FALSE(x.reason.empty());
    for (const auto& d : ds.demos) EXPECT_NE(d.seed, x.seed);
  }
}

TEST(Generate, ZeroPerTaskIsConfigError) {
  try {
    generate_demos({TaskKind::kStraightening}, 0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Disk, SameSeedGivesByteIdenticalFiles) {
  const fs::path a = scratch_dir("ds_a"), b = scratch_dir("ds_b");
  write_dataset(a, generate_demos({TaskKind::kStraightening, TaskKind::kVShape}, 3, 7));
  write_dataset(b, generate_demos({TaskKind::kStraightening, TaskKind::kVShape}, 3, 7));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 6u);
  EXPECT_TRUE(fs::exists(a / "manifest.v1"));
  EXPECT_TRUE(fs::exists(a / "demo_0" / "step_0" / "obs.ppm"));
  EXPECT_TRUE(fs::exists(a / "demo_0" / "step_0" / "record.rgct"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Disk, ReadBackReproducesDataset) {
  const fs::path dir = scratch_dir("ds_rt");
  Dataset ds = generate_demos({TaskKind::kLShape}, 4, 9);
  ds.provenance = {"tool=test"};
  write_dataset(dir, ds);
  Dataset back = read_dataset(dir);
  EXPECT_EQ(manifest_text(back), manifest_text(ds));
  ASSERT_EQ(back.demos.size(), ds.demos.size());
  for (std::size_t i = 0; i < ds.demos.size(); ++i) {
    const auto &x = ds.demos[i], &y = back.demos[i];
    EXPECT_EQ(x.seed, y.seed);
    EXPECT_EQ(x.goal, y.goal);
    EXPECT_EQ(x.final_state, y.final_state);
    ASSERT_EQ(x.steps.size(), y.steps.size());
    for (std::size_t t = 0; t < x.steps.size(); ++t) {
      EXPECT_EQ(x.steps[t].state, y.steps[t].state);
      EXPECT_EQ(x.steps[t].action, y.steps[t].action);
      EXPECT_EQ(x.steps[t].keypoints, y.steps[t].keypoints);
    }
    EXPECT_LE(replay_deviation(y), 1e-9);
  }
  Observation obs = defsim::read_pnm(dir / "demo_0" / "step_0" / "obs.ppm");
  EXPECT_EQ(obs.width, 160u);
  fs::remove_all(dir);
}

TEST(Disk, MissingManifestIsIoError) {
  try {
    read_dataset(scratch_dir("ds_missing"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Split, TrainAndEvalSeedsAreDisjoint) {
  Dataset train = generate_demos({TaskKind::kStraightening}, 20, 4);
  GenerateOptions eo;
  eo.split = Split::kEval;
  Dataset eval = generate_demos({TaskKind::kStraightening}, 20, 4, eo);
  EXPECT_NO_THROW(check_disjoint(train, eval));
  for (const auto& d : train.demos) EXPECT_EQ(d.seed & kEvalSeedBit, 0u);
  for (const auto& d : eval.demos) EXPECT_NE(d.seed & kEvalSeedBit, 0u);
  EXPECT_THROW(check_disjoint(train, train), Error);
}

TEST(Label, ExactKeypointAndTieBreak) {
  KeypointSet cur{{10, 10}, {20, 10}, {30, 10}, {40, 10}, {50, 10}};
  KeypointSet goal{{0, 0}, {10, 0}, {20, 0}};
  Action a;
  a.pick.position = pixel_to_world(cur[3], 160, 160);
  a.place.position = pixel_to_world({5, 0}, 160, 160);
  Label l = label_from_step(a, cur, goal);
  EXPECT_EQ(l.pick, 3u);
  EXPECT_NEAR(l.pick_distance, 0.0, 1e-12);
  EXPECT_EQ(l.place, 0u);
  EXPECT_NEAR(l.place_distance, 5.0, 1e-9);
  EXPECT_EQ(nearest_index({{2, 0}, {0, 2}}, {0, 0}), 0u);
}

TEST(Label, RopeDatasetAuditAndSoundness) {
  Dataset ds = generate_demos({kRopeTasks.begin(), kRopeTasks.end()}, 40, 21);
  std::vector<double> snaps;
  std::size_t reduced = 0, total = 0;
  for (const auto& d : ds.demos)
    for (const auto& s : d.steps) {
      Label l = label_from_step(s.action, s.keypoints, d.goal_keypoints);
      snaps.push_back(l.pick_distance);
      Action snapped;
      snapped.pick.position = pixel_to_world(s.keypoints[l.pick], 160, 160);
      snapped.place.position = pixel_to_world(d.goal_keypoints[l.place], 160, 160);
      reduced += defsim::goal_distance(defsim::apply_pick_place(s.state, snapped), d.goal) < s.distance_before;
      ++total;
    }
  std::nth_element(snaps.begin(), snaps.begin() + snaps.size() / 2, snaps.end());
  EXPECT_LE(snaps[snaps.size() / 2], 2.0);
  EXPECT_GE(double(reduced) / double(total), 0.95);
}

TrainConfig small_train(TaskKind kind, std::size_t epochs) {
  TrainConfig c;
  c.kinds = {kind};
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

localgnn::GnnConfig small_arch() {
  localgnn::GnnConfig a;
  a.dim = 16;
  a.self_layers = 1;
  a.cross_layers = 1;
  a.embed_hidden = 16;
  a.update_hidden = 32;
  a.head_hidden = 16;
  return a;
}

TEST(Train, OneDemonstrationOverfits) {
  Dataset ds = generate_demos({TaskKind::kVShape}, 1, 2);
  TrainedPolicy tp = train_policy(ds, small_train(TaskKind::kVShape, 300));
  EXPECT_EQ(tp.report.epoch_accuracy.back(), 1.0);
  EXPECT_EQ(tp.report.demonstrations, 1u);
  for (const auto& s : ds.demos[0].steps) {
    Label l = label_from_step(s.action, s.keypoints, ds.demos[0].goal_keypoints);
    auto dist = localgnn::policy_forward(s.keypoints, ds.demos[0].goal_keypoints, tp.params);
    EXPECT_EQ(localgnn::argmax_first(dist.pick), l.pick);
    EXPECT_EQ(localgnn::argmax_first(dist.place), l.place);
  }
}

TEST(Train, SeededRunsGiveIdenticalCurves) {
  Dataset ds = generate_demos({TaskKind::kStraightening}, 4, 8);
  TrainConfig c = small_train(TaskKind::kStraightening, 4);
  TrainedPolicy a = train_policy(ds, c, small_arch());
  TrainedPolicy b = train_policy(ds, c, small_arch());
  EXPECT_EQ(a.report.epoch_loss, b.report.epoch_loss);
  for (const auto& p : a.params.store) EXPECT_EQ(p.value, b.params.store.get(p.name).value);
}

TEST(Train, MultiTaskSharesOneArchitecture) {
  Dataset ds = generate_demos({kRopeTasks.begin(), kRopeTasks.end()}, 2, 12);
  TrainConfig multi;
  multi.mode = TrainMode::kMultiTask;
  multi.kinds = {kRopeTasks.begin(), kRopeTasks.end()};
  multi.epochs = 2;
  TrainedPolicy joint = train_policy(ds, multi, small_arch());
  TrainedPolicy single = train_policy(ds, small_train(TaskKind::kNShape, 2), small_arch());
  EXPECT_EQ(joint.params.config.descriptor(), single.params.config.descriptor());
  EXPECT_EQ(joint.report.demonstrations, 10u);
  const fs::path file = fs::temp_directory_path() / "rgc_test_multi.ckpt";
  localgnn::save_policy(file, joint.params);
  EXPECT_EQ(diffcore::tensor_element_count(diffcore::read_checkpoint(file)), localgnn::parameter_count(joint.params.config));
  fs::remove(file);
}

TEST(Train, DefaultEpochScheduleAndValidation) {
  TrainConfig c = small_train(TaskKind::kStraightening, 0);
  c.per_task = 100;
  EXPECT_EQ(c.effective_epochs(), 50u);
  c.per_task = 1000;
  EXPECT_EQ(c.effective_epochs(), 30u);
  c.w_pick = c.w_place = 0.0;
  EXPECT_THROW(c.validate(), Error);
  TrainConfig two = small_train(TaskKind::kStraightening, 1);
  two.kinds.push_back(TaskKind::kLShape);
  EXPECT_THROW(two.validate(), Error);
  TrainConfig detector = small_train(TaskKind::kStraightening, 1);
  detector.source = KeypointSource::kDetector;
  EXPECT_THROW(detector.validate(), Error);
}

TEST(Train, SelectionErrors) {
  Dataset ds = generate_demos({TaskKind::kStraightening}, 2, 1);
  TrainConfig missing = small_train(TaskKind::kLShape, 1);
  EXPECT_THROW(train_policy(ds, missing), Error);
  TrainConfig too_many = small_train(TaskKind::kStraightening, 1);
  too_many.per_task = 3;
  EXPECT_THROW(train_policy(ds, too_many), Error);
}

}  // namespace
}  // namespace rgc::trainkit
