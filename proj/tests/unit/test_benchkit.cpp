#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "rgc/benchkit/capacity.hpp"
#include "rgc/benchkit/mlp.hpp"
#include "rgc/benchkit/rollout.hpp"
#include "rgc/common/error.hpp"
#include "rgc/common/kv.hpp"
#include "rgc/diffcore/checkpoint.hpp"
#include "rgc/diffcore/ops.hpp"
#include "support/gradcheck.hpp"

namespace rgc::benchkit {
namespace {

namespace fs = std::filesystem;
using diffcore::Tape;
using diffcore::Tensor;

localgnn::GnnConfig small_gnn() {
  localgnn::GnnConfig c;
  c.dim = 16;
  c.self_layers = 1;
  c.cross_layers = 1;
  c.embed_hidden = 16;
  c.update_hidden = 32;
  c.head_hidden = 16;
  return c;
}

trainkit::TrainConfig train_config(TaskKind kind, std::size_t epochs) {
  trainkit::TrainConfig c;
  c.kinds = {kind};
  c.epochs = epochs;
  c.seed = 3;
  return c;
}

KeypointSet random_set(std::size_t m, Rng& rng) {
  KeypointSet s;
  for (std::size_t i = 0; i < m; ++i) s.push_back({rng.uniform(0.0, 159.0), rng.uniform(0.0, 159.0)});
  return s;
}

TEST(Rollout, ConvergedStartSucceedsWithoutActing) {
  TaskInstance task = defsim::sample_task(TaskKind::kStraightening, 5);
  task.initial = task.goal;
  std::size_t calls = 0;
  Planner counting{"counting", 5, [&calls](const PolicyContext&) {
                     ++calls;
                     return PolicyStep{};
                   }};
  RolloutResult r = rollout(counting, task);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.actions, 0u);
  EXPECT_EQ(calls, 0u);
  ASSERT_EQ(r.distances.size(), 1u);
}

TEST(Rollout, ExpertSolvesEvalStraightening) {
  BenchReport rep = success_rate(expert_planner(), TaskKind::kStraightening, 40, 99);
  EXPECT_EQ(rep.successes, 40u);
  EXPECT_DOUBLE_EQ(rep.success_percent(), 100.0);
}

TEST(Rollout, ResultInvariantsAndDeterminism) {
  Planner random = random_planner(5, 17);
  for (std::size_t i = 0; i < 6; ++i) {
    TaskInstance task = eval_task(TaskKind::kLShape, i, 4);
    RolloutResult a = rollout(random, task);
    RolloutResult b = rollout(random, task);
    EXPECT_LE(a.actions, kActionBudget);
    EXPECT_EQ(a.distances.size(), a.actions + 1);
    EXPECT_EQ(a.taken.size(), a.actions);
    EXPECT_EQ(a.inference_seconds.size(), a.actions);
    EXPECT_EQ(a.success, a.distances.back() <= defsim::kGamma);
    EXPECT_EQ(a.distances, b.distances);
    EXPECT_EQ(a.taken, b.taken);
    for (const auto& d : a.distributions) {
      EXPECT_DOUBLE_EQ(std::accumulate(d.pick.begin(), d.pick.end(), 0.0), 1.0);
      EXPECT_DOUBLE_EQ(std::accumulate(d.place.begin(), d.place.end(), 0.0), 1.0);
    }
  }
}

TEST(Rollout, SuccessIsMonotoneInBudget) {
  // A jittered expert fails sometimes within short budgets, so both outcomes occur.
  Planner jittery{"jittered-expert", 0, [](const PolicyContext& ctx) {
                    Rng rng(mix_seed(ctx.task_seed, ctx.step));
                    defsim::ExpertConfig ec;
                    ec.jitter = 0.05;
                    return PolicyStep{defsim::scripted_expert(ctx.state, ctx.goal, &rng, ec), {}};
                  }};
  std::size_t flips = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    TaskInstance task = eval_task(TaskKind::kVShape, i, 12);
    bool seen = false;
    for (std::size_t budget = 0; budget <= kActionBudget; budget += 2) {
      RolloutOptions o;
      o.max_actions = budget;
      const bool ok = rollout(jittery, task, o).success;
      if (seen) {
        EXPECT_TRUE(ok) << "task " << i << " budget " << budget;
      }
      if (ok && !seen) ++flips;
      seen = seen || ok;
    }
  }
  EXPECT_GT(flips, 0u);
}

TEST(Rollout, KeypointCountMismatchIsDimensionError) {
  Rng rng(1);
  keypointnet::DetectorConfig dc;
  dc.keypoints = 4;
  keypointnet::DetectorParams det = keypointnet::init_detector(dc, rng);
  RolloutOptions o;
  o.source = KeypointSource::kDetector;
  o.detector = &det;
  TaskInstance task = eval_task(TaskKind::kStraightening, 0, 1);
  try {
    rollout(random_planner(5, 1), task, o);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
  o.detector = nullptr;
  try {
    rollout(random_planner(5, 1), task, o);
    FAIL() << "expected a config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Rollout, DetectorLoopRunsWithMatchingDetector) {
  Rng rng(2);
  keypointnet::DetectorParams det = keypointnet::init_detector({}, rng);
  RolloutOptions o;
  o.source = KeypointSource::kDetector;
  o.detector = &det;
  o.max_actions = 2;
  RolloutResult r = rollout(random_planner(5, 3), eval_task(TaskKind::kStraightening, 0, 1), o);
  EXPECT_LE(r.actions, 2u);
  EXPECT_EQ(r.distances.size(), r.actions + 1);
}

TEST(Rollout, FrameDumpWritesEveryStep) {
  const fs::path dir = fs::temp_directory_path() / "rgc_test_frames";
  fs::remove_all(dir);
  RolloutOptions o;
  o.frame_dir = dir;
  RolloutResult r = rollout(expert_planner(), eval_task(TaskKind::kStraightening, 1, 3), o);
  EXPECT_TRUE(fs::exists(dir / "goal.ppm"));
  EXPECT_TRUE(fs::exists(dir / "trace.txt"));
  for (std::size_t t = 0; t <= r.actions; ++t) EXPECT_TRUE(fs::exists(dir / ("step_" + std::to_string(t) + ".ppm")));
  fs::remove_all(dir);
}

TEST(SuccessRate, ThreadCountDoesNotChangeTheReport) {
  Planner random = random_planner(5, 8);
  BenchReport a = success_rate(random, TaskKind::kStraightening, 9, 21, {}, 1);
  BenchReport b = success_rate(random, TaskKind::kStraightening, 9, 21, {}, 3);
  EXPECT_EQ(report_kv(a), report_kv(b));
  for (std::uint64_t s : a.seeds) EXPECT_NE(s & trainkit::kEvalSeedBit, 0u);
}

TEST(SuccessRate, ReportFieldsAreExactFractions) {
  BenchReport r;
  r.kind = TaskKind::kVShape;
  r.instances = 40;
  r.successes = 37;
  r.success_actions = 151;
  r.seeds.assign(40, 1);
  r.outcomes.assign(40, true);
  r.descriptor = "x";
  auto kv = parse_kv_tokens(report_kv(r));
  EXPECT_EQ(kv.at("success_rate"), "37/40");
  EXPECT_EQ(kv.at("mean_actions"), "151/37");
  EXPECT_EQ(kv.at("instances"), "40");
  EXPECT_EQ(kv.at("success_percent"), "92.500");
  EXPECT_NE(report_text(r).find("92.5%"), std::string::npos);
  r.successes = 0;
  EXPECT_TRUE(std::isnan(r.mean_actions()));
  EXPECT_EQ(parse_kv_tokens(report_kv(r)).at("mean_actions"), "none");
}

TEST(Capacity, AffineHandCount) {
  Tape tape;
  Rng rng(1);
  diffcore::ParamStore store;
  auto& w = store.add("w", diffcore::glorot_uniform({4, 3}, 4, 3, rng));
  auto& b = store.add("b", Tensor({3}));
  diffcore::matmul_affine(tape.constant(Tensor({1, 4})), tape.param(w), tape.param(b));
  EXPECT_EQ(tape.flops(), 27u);
  EXPECT_EQ(store.total_elements(), 15u);
}

TEST(Capacity, ScoreAndMixStagesAreLinearInDim) {
  auto stage = [](std::size_t d) {
    Tape tape;
    Var q = tape.constant(Tensor({1, 5, d}));
    Var k = tape.constant(Tensor({1, 5, d}));
    Var s = diffcore::batched_matmul(q, k, true);
    const std::uint64_t before = tape.flops();
    diffcore::batched_matmul(tape.constant(s.value()), k);
    return std::pair{before, tape.flops() - before};
  };
  auto [s8, m8] = stage(8);
  auto [s16, m16] = stage(16);
  EXPECT_EQ(s16, 2 * s8);
  EXPECT_EQ(m16, 2 * m8);
  EXPECT_EQ(s8, 2u * 5 * 5 * 8);
}

TEST(Capacity, DefaultPolicyMatchesClosedFormsAndCheckpoint) {
  Rng rng(4);
  localgnn::PolicyParams p = localgnn::init_policy({}, rng);
  CapacityOptions o;
  o.timing_runs = 5;
  o.warmup_runs = 1;
  CapacityFigures f = count_capacity(p, nullptr, o);
  EXPECT_EQ(f.flops, f.closed_form_flops);
  EXPECT_EQ(f.parameters, f.closed_form_parameters);
  EXPECT_GT(f.inference_seconds, 0.0);
  const fs::path file = fs::temp_directory_path() / "rgc_test_capacity.ckpt";
  localgnn::save_policy(file, p);
  EXPECT_EQ(diffcore::tensor_element_count(diffcore::read_checkpoint(file)), f.parameters);
  fs::remove(file);
  EXPECT_GE(double(f.parameters), 500000.0 / 3.0);
  EXPECT_LE(double(f.parameters), 500000.0 * 3.0);
}

TEST(Capacity, DetectorAndSmallPolicyMatchClosedForms) {
  Rng rng(5);
  keypointnet::DetectorParams det = keypointnet::init_detector({}, rng);
  CapacityOptions o;
  o.timing_runs = 3;
  o.warmup_runs = 0;
  for (std::size_t d : {8u, 16u, 32u}) {
    localgnn::GnnConfig c = small_gnn();
    c.dim = d;
    CapacityFigures f = count_capacity(localgnn::init_policy(c, rng), &det, o);
    EXPECT_EQ(f.flops, f.closed_form_flops);
    EXPECT_EQ(f.parameters, f.closed_form_parameters);
    ASSERT_TRUE(f.detector_descriptor.has_value());
    EXPECT_EQ(f.detector_flops, f.detector_closed_form_flops);
    EXPECT_EQ(f.detector_parameters, f.detector_closed_form_parameters);
  }
  EXPECT_NE(capacity_kv(count_capacity(localgnn::init_policy(small_gnn(), rng), &det, o)).find("detector_flops="),
            std::string::npos);
}

TEST(Capacity, RelativeGap) {
  EXPECT_EQ(relative_gap(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_gap(101.0, 100.0), 0.01);
}

TEST(Mlp, DistributionsNormalizeAndClosedFormsHold) {
  Rng rng(6);
  MlpParams p = init_mlp({}, rng);
  for (int i = 0; i < 20; ++i) {
    ActionDistribution d = mlp_baseline_policy(random_set(5, rng), random_set(5, rng), p);
    ASSERT_EQ(d.pick.size(), 5u);
    ASSERT_EQ(d.place.size(), 5u);
    EXPECT_NEAR(std::accumulate(d.pick.begin(), d.pick.end(), 0.0), 1.0, 1e-9);
    EXPECT_NEAR(std::accumulate(d.place.begin(), d.place.end(), 0.0), 1.0, 1e-9);
  }
  CapacityOptions o;
  o.timing_runs = 3;
  CapacityFigures f = count_capacity(p, nullptr, o);
  EXPECT_EQ(f.flops, f.closed_form_flops);
  EXPECT_EQ(f.parameters, f.closed_form_parameters);
  EXPECT_EQ(f.parameters, 20u * 256 + 256 + 256 * 256 + 256 + 256 * 10 + 10);
}

TEST(Mlp, WrongKeypointCountIsDimensionError) {
  Rng rng(7);
  MlpParams p = init_mlp({}, rng);
  try {
    mlp_baseline_policy(random_set(4, rng), random_set(5, rng), p);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
  TaskInstance task = eval_task(TaskKind::kStraightening, 0, 2);
  RolloutOptions o;
  Planner planner = mlp_planner(p);
  planner.keypoints = 4;
  EXPECT_THROW(rollout(planner, task, o), Error);
}

TEST(Mlp, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    MlpConfig c;
    c.keypoints = 3;
    c.hidden = {8, 6};
    MlpParams p = init_mlp(c, rng);
    KeypointSet a = random_set(3, rng), g = random_set(3, rng);
    auto check = testing::check_param_gradients(p.store, [&](Tape& tape) {
      PolicyOutput out = mlp_forward(tape.constant(localgnn::stack_normalized({&a}, 160, 160)),
                                     tape.constant(localgnn::stack_normalized({&g}, 160, 160)), p);
      return localgnn::policy_loss(out, {seed % 3}, {(seed + 1) % 3});
    });
    EXPECT_LE(check.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Mlp, PermutationGapIsObservable) {
  // The baseline is not equivariant; record how far pick scores move when
  // the current keypoints are reordered, without asserting invariance.
  Rng rng(8);
  MlpParams p = init_mlp({}, rng);
  double gap = 0.0;
  for (int i = 0; i < 10; ++i) {
    KeypointSet a = random_set(5, rng), g = random_set(5, rng);
    KeypointSet r(a.rbegin(), a.rend());
    ActionDistribution da = mlp_baseline_policy(a, g, p), dr = mlp_baseline_policy(r, g, p);
    for (std::size_t k = 0; k < 5; ++k) gap = std::max(gap, std::abs(da.pick[k] - dr.pick[4 - k]));
  }
  RecordProperty("max_permutation_gap", std::to_string(gap));
  EXPECT_TRUE(std::isfinite(gap));
}

TEST(Mlp, CheckpointRoundTripAndTraining) {
  trainkit::Dataset ds = trainkit::generate_demos({TaskKind::kVShape}, 1, 2);
  TrainedMlp t = train_mlp_baseline(ds, train_config(TaskKind::kVShape, 300));
  EXPECT_EQ(t.report.epoch_accuracy.back(), 1.0);
  const fs::path file = fs::temp_directory_path() / "rgc_test_mlp.ckpt";
  save_mlp(file, t.params, {"seed=3"});
  MlpParams back = load_mlp(file);
  EXPECT_EQ(back.config.descriptor(), t.params.config.descriptor());
  for (const auto& prm : t.params.store) EXPECT_EQ(prm.value, back.store.get(prm.name).value);
  EXPECT_EQ(diffcore::tensor_element_count(diffcore::read_checkpoint(file)), mlp_parameter_count(back.config));
  EXPECT_THROW(localgnn::load_policy(file), Error);
  fs::remove(file);
}

TEST(Planner, GnnPlannerEmitsNormalizedDistributions) {
  Rng rng(9);
  Planner planner = gnn_planner(localgnn::init_policy(small_gnn(), rng));
  RolloutOptions o;
  o.max_actions = 3;
  RolloutResult r = rollout(planner, eval_task(TaskKind::kNShape, 0, 5), o);
  for (const auto& d : r.distributions) {
    EXPECT_NEAR(std::accumulate(d.pick.begin(), d.pick.end(), 0.0), 1.0, 1e-9);
    EXPECT_NEAR(std::accumulate(d.place.begin(), d.place.end(), 0.0), 1.0, 1e-9);
  }
}

}  // namespace
}  // namespace rgc::benchkit
