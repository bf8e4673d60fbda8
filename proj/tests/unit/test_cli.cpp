#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "rgc/cli/cli.hpp"
#include "rgc/common/kv.hpp"
#include "rgc/diffcore/checkpoint.hpp"
#include "rgc/keypointnet/detector.hpp"

namespace rgc::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rgc_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::map<fs::path, std::string> snapshot(const fs::path& dir) {
  std::map<fs::path, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream in(e.path(), std::ios::binary);
      files[fs::relative(e.path(), dir)] = {std::istreambuf_iterator<char>(in), {}};
    }
  return files;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Cli, GenDataRerunIsByteIdentical) {
  const fs::path d = scratch("gen");
  const std::vector<std::string> args{"gen-data", "--tasks", "straightening", "--n", "10", "--seed", "7", "--out",
                                      d.string()};
  ASSERT_EQ(invoke(args).code, 0);
  auto first = snapshot(d);
  ASSERT_EQ(invoke(args).code, 0);
  EXPECT_EQ(first, snapshot(d));
  EXPECT_NE(slurp(d / "manifest.v1").find("# tool=rgc"), std::string::npos);
  fs::remove_all(d);
}

TEST(Cli, EvalWritesReportWithRequestedInstances) {
  const fs::path o = scratch("eval");
  Result r = invoke({"eval", "--policy", "expert", "--task", "straightening", "--instances", "40", "--seed", "99",
                     "--out", o.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string kv = slurp(o / "report_straightening_ground-truth.kv");
  auto fields = parse_kv_tokens(kv);
  EXPECT_EQ(fields.at("instances"), "40");
  EXPECT_EQ(fields.at("eval_seed"), "99");
  EXPECT_NE(kv.find("--seed=99"), std::string::npos);
  fs::remove_all(o);
}

TEST(Cli, TrainPolicyThenCapacityMatchesCheckpoint) {
  const fs::path d = scratch("cap_data"), p = scratch("cap_policy"), c = scratch("cap_out");
  ASSERT_EQ(invoke({"gen-data", "--n", "2", "--seed", "1", "--out", d.string()}).code, 0);
  Result t = invoke({"train-policy", "--data", d.string(), "--epochs", "1", "--dim", "8", "--self-layers", "1",
                     "--cross-layers", "1", "--seed", "2", "--out", p.string()});
  ASSERT_EQ(t.code, 0) << t.err;
  Result cap = invoke({"capacity", "--policy", (p / "policy.ckpt").string(), "--runs", "3", "--out", c.string()});
  ASSERT_EQ(cap.code, 0) << cap.err;
  auto fields = parse_kv_tokens(slurp(c / "capacity.kv"));
  const std::size_t elements = diffcore::tensor_element_count(diffcore::read_checkpoint(p / "policy.ckpt"));
  EXPECT_EQ(fields.at("policy_parameters"), std::to_string(elements));
  EXPECT_EQ(fields.at("policy_checkpoint_elements"), std::to_string(elements));
  EXPECT_EQ(fields.at("policy_flops"), fields.at("policy_flops_closed_form"));
  const auto entries = diffcore::read_checkpoint(p / "policy.ckpt");
  EXPECT_NE(diffcore::find_text_entry(entries, "#provenance command=train-policy").find("--seed=2"),
            std::string::npos);

  Result mlp = invoke({"train-policy", "--data", d.string(), "--epochs", "1", "--model", "mlp", "--name", "mlp",
                       "--out", p.string()});
  ASSERT_EQ(mlp.code, 0) << mlp.err;
  ASSERT_EQ(invoke({"capacity", "--policy", (p / "mlp.ckpt").string(), "--runs", "2", "--out", c.string()}).code, 0);
  EXPECT_NE(slurp(c / "capacity.kv").find("policy_model=keypoint-mlp"), std::string::npos);
  for (const auto& dir : {d, p, c}) fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  Result bad = invoke({"eval", "--bogus", "1"});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("Usage"), std::string::npos);
  EXPECT_EQ(invoke({"eval", "--policy", "expert", "--task", "nope"}).code, kExitUsage);
  EXPECT_EQ(invoke({"eval", "--instances", "notanumber"}).code, kExitUsage);
  EXPECT_EQ(invoke({"capacity"}).code, kExitUsage);

  const fs::path o = scratch("codes");
  Result missing = invoke({"eval", "--policy", (o / "absent.ckpt").string(), "--out", o.string()});
  EXPECT_EQ(missing.code, kExitMissingFile);
  EXPECT_FALSE(fs::exists(o)) << "paths are checked before anything is written";
  EXPECT_EQ(invoke({"train-policy", "--data", (o / "nothing").string()}).code, kExitMissingFile);

  // A 4-keypoint detector in front of the 5-keypoint random planner.
  fs::create_directories(o);
  Rng rng(1);
  keypointnet::DetectorConfig dc;
  dc.keypoints = 4;
  keypointnet::save_detector(o / "det4.ckpt", keypointnet::init_detector(dc, rng));
  Result inv = invoke({"eval", "--policy", "random", "--instances", "1", "--source", "detector", "--detector",
                       (o / "det4.ckpt").string(), "--out", o.string()});
  EXPECT_EQ(inv.code, kExitInvariant);
  EXPECT_NE(inv.err.find("invariant violated"), std::string::npos);
  EXPECT_EQ(std::count(inv.err.begin(), inv.err.end(), '\n'), 1);
  fs::remove_all(o);
}

TEST(Cli, ConfigFileSitsBetweenFlagsAndDefaults) {
  const fs::path o = scratch("config");
  fs::create_directories(o);
  {
    std::ofstream cfg(o / "eval.cfg");
    cfg << "# evaluation defaults\ninstances = 3\nseed=5\npolicy=expert\n";
  }
  ASSERT_EQ(invoke({"eval", "--config", (o / "eval.cfg").string(), "--seed", "6", "--out", o.string()}).code, 0);
  auto fields = parse_kv_tokens(slurp(o / "report_straightening_ground-truth.kv"));
  EXPECT_EQ(fields.at("instances"), "3");
  EXPECT_EQ(fields.at("eval_seed"), "6");
  {
    std::ofstream cfg(o / "bad.cfg");
    cfg << "instances=3\nunknown_key=1\n";
  }
  EXPECT_EQ(invoke({"eval", "--config", (o / "bad.cfg").string(), "--policy", "expert"}).code, kExitUsage);
  EXPECT_EQ(invoke({"eval", "--config", (o / "absent.cfg").string()}).code, kExitMissingFile);
  fs::remove_all(o);
}

TEST(Cli, OutputRootComesFromEnvironment) {
  const fs::path root = scratch("envroot");
  ::setenv(kOutputRootEnv, root.string().c_str(), 1);
  Result r = invoke({"eval", "--policy", "expert", "--instances", "1"});
  ::unsetenv(kOutputRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(root / "report_straightening_ground-truth.txt"));
  fs::remove_all(root);
}

TEST(Cli, HelpDocumentsEveryFlagWithDefaults) {
  const std::map<std::string, std::vector<std::string>> flags{
      {"gen-data", {"--tasks", "--n", "--seed", "--split", "--image-size", "--out", "--config"}},
      {"train-detector",
       {"--tasks", "--samples", "--heldout", "--epochs", "--batch", "--seed", "--keypoints", "--sigma", "--sigma-start",
        "--lr", "--image-size", "--name", "--out", "--config"}},
      {"train-policy",
       {"--data", "--tasks", "--mode", "--model", "--n", "--epochs", "--batch", "--seed", "--lr", "--w-pick",
        "--w-place", "--source", "--detector", "--dim", "--self-layers", "--cross-layers", "--name", "--out",
        "--config"}},
      {"eval",
       {"--policy", "--task", "--instances", "--seed", "--source", "--detector", "--max-actions", "--threads",
        "--timing-runs", "--out", "--config"}},
      {"rollout", {"--policy", "--task", "--index", "--seed", "--source", "--detector", "--max-actions", "--out"}},
      {"capacity", {"--policy", "--detector", "--runs", "--warmup", "--seed", "--out"}},
  };
  for (const auto& [sub, names] : flags) {
    Result r = invoke({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    for (const auto& name : names) EXPECT_NE(r.out.find(name + " "), std::string::npos) << sub << " " << name;
  }
  EXPECT_NE(invoke({"train-detector", "--help"}).out.find("[2000]"), std::string::npos);
}

TEST(Cli, RolloutDumpsFrames) {
  const fs::path o = scratch("rollout");
  Result r = invoke({"rollout", "--policy", "expert", "--task", "v-shape", "--index", "2", "--out", o.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path frames = o / "rollout_v-shape_2";
  EXPECT_TRUE(fs::exists(frames / "goal.ppm"));
  EXPECT_TRUE(fs::exists(frames / "step_0.ppm"));
  EXPECT_NE(slurp(frames / "summary.txt").find("# command=rollout"), std::string::npos);
  fs::remove_all(o);
}

}  // namespace
}  // namespace rgc::cli
