#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "rgc/common/error.hpp"
#include "rgc/defsim/metrics.hpp"
#include "rgc/defsim/tasks.hpp"

namespace rgc::defsim {
namespace {

const double kPi = std::acos(-1.0);

// Constraint check written against positions directly, not through
// max_constraint_violation.
double measured_violation(const DeformState& s) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t n = s.positions.size();
  if (s.kind == ObjectKind::kCloth) {
    for (std::size_t i = 0; i < n; ++i) {
      if ((i + 1) % s.cols != 0) pairs.emplace_back(i, i + 1);
      if (i + s.cols < n) pairs.emplace_back(i, i + s.cols);
    }
  } else {
    for (std::size_t i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
    if (s.kind == ObjectKind::kRopeRing) pairs.emplace_back(n - 1, 0);
  }
  double worst = 0.0;
  for (auto [a, b] : pairs) {
    double dx = s.positions[a].x - s.positions[b].x, dy = s.positions[a].y - s.positions[b].y;
    double rel = (std::sqrt(dx * dx + dy * dy) - s.rest_length) / s.rest_length;
    worst = std::max(worst, s.kind == ObjectKind::kCloth ? rel : std::abs(rel));
  }
  return worst;
}

// Interior angles (degrees) at every inner joint of a chain.
std::vector<double> joint_angles(const DeformState& s) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    Vec2 a = s.positions[i - 1] - s.positions[i], b = s.positions[i + 1] - s.positions[i];
    out.push_back(std::acos(std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0)) * 180.0 / kPi);
  }
  return out;
}

std::vector<std::size_t> bends(const DeformState& s, double tolerance_deg = 2.0) {
  std::vector<std::size_t> idx;
  auto angles = joint_angles(s);
  for (std::size_t i = 0; i < angles.size(); ++i)
    if (angles[i] < 180.0 - tolerance_deg) idx.push_back(i + 1);
  return idx;
}

DeformState straight_rope() { return make_chain({0.2, 0.5}, {1.0, 0.0}); }

Action move(Vec2 from, Vec2 to) { return Action{{from, 0.0}, {to, 0.0}}; }

TEST(ApplyPickPlace, IdentityActionLeavesStateUnchanged) {
  for (TaskKind kind : {TaskKind::kNShape, TaskKind::kSquareShape, TaskKind::kFlattening}) {
    DeformState s = sample_task(kind, std::uint64_t{3}).initial;
    for (std::size_t k : {std::size_t{0}, s.size() / 2, s.size() - 1}) {
      DeformState next = apply_pick_place(s, move(s.positions[k], s.positions[k]));
      for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LT(distance(next.positions[i], s.positions[i]), 1e-9);
    }
  }
}

TEST(ApplyPickPlace, AxialDragKeepsRopeStraight) {
  DeformState s = straight_rope();
  Vec2 end = s.positions.back();
  Vec2 target = end + Vec2{0.07, 0.0};
  DeformState next = apply_pick_place(s, move(end, target));
  EXPECT_LT(distance(next.positions.back(), target), 1e-12);
  for (Vec2 p : next.positions) EXPECT_NEAR(p.y, 0.5, 1e-12);
  EXPECT_LE(measured_violation(next), 1e-9);
}

TEST(ApplyPickPlace, MissedGraspIsNoOp) {
  DeformState s = straight_rope();
  EXPECT_EQ(apply_pick_place(s, move({0.5, 0.9}, {0.1, 0.1})), s);
}

TEST(ApplyPickPlace, GraspRadiusIsOneAndAHalfRestLengths) {
  DeformState s = straight_rope();
  Vec2 near = s.positions[0] + Vec2{0.0, 1.49 * kRopeRest};
  Vec2 far = s.positions[0] + Vec2{0.0, 1.51 * kRopeRest};
  EXPECT_EQ(grasped_particle(s, near), 0u);
  EXPECT_EQ(grasped_particle(s, far), s.size());
}

TEST(ApplyPickPlace, RandomActionsKeepConstraintsAndPinGrasp) {
  Rng rng(17);
  for (TaskKind kind : kAllTasks) {
    DeformState s = sample_task(kind, rng).initial;
    for (int a = 0; a < 150; ++a) {
      std::size_t g = rng.below(s.size());
      Vec2 place{rng.uniform(), rng.uniform()};
      std::size_t grasped = grasped_particle(s, s.positions[g]);
      s = apply_pick_place(s, move(s.positions[g], place));
      ASSERT_LE(measured_violation(s), 0.01 + 1e-12) << to_string(kind) << " action " << a;
      ASSERT_EQ(s.positions[grasped], place);
      for (Vec2 p : s.positions) ASSERT_TRUE(inside_workspace(p));
    }
  }
}

TEST(ApplyPickPlace, Deterministic) {
  DeformState s = sample_task(TaskKind::kFolding, std::uint64_t{5}).initial;
  Action a = move(s.positions[40], {0.9, 0.1});
  EXPECT_EQ(apply_pick_place(s, a), apply_pick_place(s, a));
}

TEST(Render, CollapsedRopeIsABlob) {
  DeformState s = straight_rope();
  for (Vec2& p : s.positions) p = {0.5, 0.5};
  Observation obs = render(s);
  double ink = 0.0;
  for (double v : obs.pixels) ink += v;
  EXPECT_GT(ink, 0.0);
}

TEST(Render, HorizontalRopeStaysInItsBand) {
  DeformState s = straight_rope();
  Observation obs = render(s, 160, 160);
  double row_center = 0.5 * 160 - 0.5;
  bool any = false;
  for (std::size_t r = 0; r < obs.height; ++r) {
    for (std::size_t c = 0; c < obs.width; ++c) {
      bool inked = obs.at(r, c, 0) + obs.at(r, c, 1) + obs.at(r, c, 2) > 0.0;
      any = any || inked;
      if (inked) {
        EXPECT_LE(std::abs(double(r) - row_center), kStrokeHalfWidth + 0.5) << r;
      }
    }
  }
  EXPECT_TRUE(any);
}

TEST(Render, EndsHaveDifferentColors) {
  DeformState s = straight_rope();
  Observation obs = render(s);
  Vec2 a = world_to_pixel(s.positions.front(), 160, 160), b = world_to_pixel(s.positions.back(), 160, 160);
  auto px = [&](Vec2 p, std::size_t ch) { return obs.at(std::lround(p.y), std::lround(p.x), ch); };
  EXPECT_GT(px(a, 1), px(a, 0));
  EXPECT_GT(px(b, 0), px(b, 1));
}

TEST(Render, BitIdenticalAcrossCalls) {
  for (TaskKind kind : kAllTasks) {
    DeformState s = sample_task(kind, std::uint64_t{11}).initial;
    EXPECT_EQ(render(s).pixels, render(s).pixels);
  }
}

TEST(Render, ClothCoversItsArea) {
  DeformState s = make_grid({0.3, 0.3});
  Observation obs = render(s);
  std::size_t inked = 0;
  for (std::size_t k = 0; k < obs.width * obs.height; ++k) inked += obs.pixels[3 * k + 2] > 0.0;
  double expected = (0.4 * 160) * (0.4 * 160);
  EXPECT_NEAR(double(inked), expected, 0.1 * expected);
}

TEST(Pnm, RoundTripIsStableAfterQuantization) {
  Observation obs = render(sample_task(TaskKind::kLShape, std::uint64_t{2}).initial, 32, 24);
  auto bytes = encode_pnm(obs);
  Observation back = decode_pnm(bytes);
  EXPECT_EQ(back.width, 32u);
  EXPECT_EQ(back.height, 24u);
  EXPECT_EQ(encode_pnm(back), bytes);
  for (std::size_t i = 0; i < obs.pixels.size(); ++i) EXPECT_LE(std::abs(back.pixels[i] - obs.pixels[i]), 0.5 / 255 + 1e-12);
}

TEST(Pnm, GrayscaleFileRoundTrip) {
  Observation obs{4, 3, 1, {0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0}};
  auto path = std::filesystem::temp_directory_path() / "rgc_test_gray.pgm";
  write_pnm(path, obs);
  Observation back = read_pnm(path);
  EXPECT_EQ(back.channels, 1u);
  EXPECT_EQ(encode_pnm(back), encode_pnm(obs));
  std::filesystem::remove(path);
}

TEST(Pnm, MalformedInputIsIoError) {
  try {
    decode_pnm({'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n', 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
  EXPECT_THROW(read_pnm("/nonexistent/file.ppm"), Error);
}

TEST(SampleTask, StraighteningGoalIsCollinear) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    DeformState g = sample_task(TaskKind::kStraightening, seed).goal;
    Vec2 a = g.positions.front(), u = g.positions.back() - a;
    u = u * (1.0 / norm(u));
    for (Vec2 p : g.positions) EXPECT_LT(std::abs(u.x * (p.y - a.y) - u.y * (p.x - a.x)), 1e-6);
  }
}

TEST(SampleTask, ShapedGoalsHaveTheirCorners) {
  struct Case {
    TaskKind kind;
    std::vector<std::size_t> at;
    double angle;
  };
  for (const Case& c : {Case{TaskKind::kLShape, {12}, 90.0}, Case{TaskKind::kVShape, {12}, 60.0},
                        Case{TaskKind::kNShape, {8, 16}, 45.0}}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      DeformState g = sample_task(c.kind, seed).goal;
      ASSERT_EQ(bends(g), c.at) << to_string(c.kind);
      auto angles = joint_angles(g);
      for (std::size_t i : c.at) EXPECT_NEAR(angles[i - 1], c.angle, 2.0);
    }
  }
}

TEST(SampleTask, SquareGoalHasFourRightAngles) {
  DeformState g = sample_task(TaskKind::kSquareShape, std::uint64_t{4}).goal;
  int corners = 0;
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 a = g.positions[(i + n - 1) % n] - g.positions[i], b = g.positions[(i + 1) % n] - g.positions[i];
    double deg = std::acos(std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0)) * 180.0 / kPi;
    if (std::abs(deg - 90.0) < 1e-6) {
      ++corners;
    } else {
      EXPECT_NEAR(deg, 180.0, 1e-6);
    }
  }
  EXPECT_EQ(corners, 4);
}

TEST(SampleTask, InvariantSweep) {
  for (TaskKind kind : kAllTasks) {
    std::set<std::vector<double>> initials;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      TaskInstance t = sample_task(kind, seed, 16);
      ASSERT_NO_THROW(check_state(t.initial)) << to_string(kind) << " seed " << seed;
      ASSERT_NO_THROW(check_state(t.goal)) << to_string(kind) << " seed " << seed;
      ASSERT_EQ(t.initial.kind, t.goal.kind);
      ASSERT_EQ(t.initial.size(), t.goal.size());
      std::vector<double> flat;
      for (Vec2 p : t.initial.positions) flat.insert(flat.end(), {p.x, p.y});
      initials.insert(flat);
    }
    EXPECT_EQ(initials.size(), 1000u) << to_string(kind);
  }
}

TEST(SampleTask, SameSeedSameInstance) {
  for (TaskKind kind : kAllTasks) EXPECT_EQ(sample_task(kind, std::uint64_t{21}), sample_task(kind, std::uint64_t{21}));
}

TEST(SampleTask, UnknownNameIsConfigError) {
  try {
    parse_task_kind("tie-a-knot");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  for (TaskKind kind : kAllTasks) EXPECT_EQ(parse_task_kind(to_string(kind)), kind);
}

TEST(GoalDistance, ZeroOnSelf) {
  DeformState s = sample_task(TaskKind::kVShape, std::uint64_t{1}).initial;
  EXPECT_EQ(goal_distance(s, s), 0.0);
}

TEST(GoalDistance, TranslationGivesOffset) {
  DeformState s = straight_rope(), t = s;
  for (Vec2& p : t.positions) p.x += 0.125;
  EXPECT_NEAR(goal_distance(s, t), 0.125, 1e-15);
}

TEST(GoalDistance, QuotientsSymmetries) {
  DeformState rope = sample_task(TaskKind::kNShape, std::uint64_t{2}).initial, reversed = rope;
  std::reverse(reversed.positions.begin(), reversed.positions.end());
  EXPECT_EQ(goal_distance(rope, reversed), 0.0);

  DeformState ring = sample_task(TaskKind::kSquareShape, std::uint64_t{2}).initial, rotated = ring;
  std::rotate(rotated.positions.begin(), rotated.positions.begin() + 7, rotated.positions.end());
  EXPECT_EQ(goal_distance(ring, rotated), 0.0);

  DeformState cloth = sample_task(TaskKind::kFlattening, std::uint64_t{2}).initial, transposed = cloth;
  for (std::size_t r = 0; r < cloth.rows; ++r)
    for (std::size_t c = 0; c < cloth.cols; ++c)
      transposed.positions[c * cloth.cols + r] = cloth.positions[r * cloth.cols + c];
  EXPECT_EQ(goal_distance(cloth, transposed), 0.0);
}

TEST(GoalDistance, PseudometricProperties) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    TaskInstance t = sample_task(kRopeTasks[seed % 5], seed);
    double ab = goal_distance(t.initial, t.goal), ba = goal_distance(t.goal, t.initial);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-15);
  }
}

TEST(GoalDistance, TopologyMismatchIsError) {
  try {
    goal_distance(straight_rope(), make_ring({0.5, 0.5}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTopology);
  }
}

TEST(Keypoints, EvenIndexSpacingOnRope) {
  EXPECT_EQ(keypoint_indices(straight_rope(), 5), (std::vector<std::size_t>{0, 6, 12, 18, 24}));
  EXPECT_EQ(keypoint_indices(make_ring({0.5, 0.5}), 5), (std::vector<std::size_t>{0, 4, 8, 12, 16}));
}

TEST(Keypoints, UnitRopeKeypointsEvenlySpaced) {
  DeformState s = make_chain({0.0, 0.5}, {1.0, 0.0}, 25, 1.0 / 24.0);
  KeypointSet kp = ground_truth_keypoints(s, 5, 160, 160);
  ASSERT_EQ(kp.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(kp[i].y, kp[0].y, 1.0);
    EXPECT_NEAR(kp[i].x - kp[0].x, 40.0 * double(i), 1.0);
  }
}

TEST(Keypoints, ClothCornersAndMidpointsExact) {
  DeformState s = sample_task(TaskKind::kFlattening, std::uint64_t{8}).initial;
  KeypointSet kp = ground_truth_keypoints(s, 8, 160, 160);
  const std::vector<std::size_t> expected = {0, 8, 80, 72, 4, 44, 76, 36};
  ASSERT_EQ(kp.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(kp[i], world_to_pixel(s.positions[expected[i]], 160, 160));
}

TEST(Keypoints, TooManyIsError) {
  EXPECT_THROW(keypoint_indices(straight_rope(), 26), Error);
  EXPECT_THROW(keypoint_indices(straight_rope(), 1), Error);
  EXPECT_THROW(keypoint_indices(make_grid({0.1, 0.1}), 5), Error);
}

TEST(Expert, ConvergedStateHasZeroDeviation) {
  DeformState s = sample_task(TaskKind::kLShape, std::uint64_t{6}).goal;
  Action a = scripted_expert(s, s);
  EXPECT_EQ(a.pick.position, a.place.position);
}

TEST(Expert, PicksSingleDisplacedParticle) {
  for (std::size_t k : {std::size_t{12}, std::size_t{7}}) {
    DeformState goal = straight_rope(), state = goal;
    state.positions[k].y += 0.2;
    Action a = scripted_expert(state, goal);
    EXPECT_EQ(a.pick.position, state.positions[k]);
    EXPECT_EQ(a.place.position, goal.positions[k]);
  }
}

TEST(Expert, JitterBoundedByOnePixel) {
  TaskInstance t = sample_task(TaskKind::kVShape, std::uint64_t{9});
  Action clean = scripted_expert(t.initial, t.goal);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    Action a = scripted_expert(t.initial, t.goal, &rng);
    EXPECT_LE(distance(a.pick.position, clean.pick.position), 1.0 / 160 + 1e-15);
    EXPECT_LE(distance(a.place.position, clean.place.position), 1.0 / 160 + 1e-15);
    EXPECT_EQ(a.pick.rotation, 0.0);
  }
}

TEST(Expert, SelfPlaySolvesRopeTasks) {
  for (TaskKind kind : kRopeTasks) {
    int solved = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
      TaskInstance t = sample_task(kind, seed);
      Rng rng(seed);
      DeformState s = t.initial;
      for (int a = 0; a <= 20; ++a) {
        if (goal_distance(s, t.goal) <= kGamma) {
          ++solved;
          break;
        }
        if (a < 20) s = apply_pick_place(s, scripted_expert(s, t.goal, &rng));
      }
    }
    EXPECT_GE(solved, 495) << to_string(kind);
  }
}

}  // namespace
}  // namespace rgc::defsim
