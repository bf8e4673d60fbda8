#include "rgc/trainkit/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rgc/common/error.hpp"
#include "rgc/common/kv.hpp"
#include "rgc/common/rng.hpp"
#include "rgc/diffcore/checkpoint.hpp"

namespace rgc::trainkit {

namespace {

namespace fs = std::filesystem;
using diffcore::CheckpointEntry;
using diffcore::Tensor;

constexpr std::uint64_t kExpertStream = 0x6578706572740001ULL;

std::string exact(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Tensor points_tensor(const std::vector<Vec2>& pts) {
  Tensor t({pts.size(), 2});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t[2 * i] = pts[i].x;
    t[2 * i + 1] = pts[i].y;
  }
  return t;
}

std::vector<Vec2> tensor_points(const Tensor& t) {
  require(t.rank() == 2 && t.dim(1) == 2, ErrorKind::kIo, "point record must be [n x 2]");
  std::vector<Vec2> out(t.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {t[2 * i], t[2 * i + 1]};
  return out;
}

std::string state_header(const std::string& tag, const DeformState& s) {
  return "#" + tag + " object=" + defsim::to_string(s.kind) + " rest=" + exact(s.rest_length) +
         " rows=" + std::to_string(s.rows) + " cols=" + std::to_string(s.cols);
}

defsim::ObjectKind parse_object(const std::string& name) {
  for (auto k : {defsim::ObjectKind::kRope, defsim::ObjectKind::kRopeRing, defsim::ObjectKind::kCloth})
    if (name == defsim::to_string(k)) return k;
  fail(ErrorKind::kIo, "unknown object kind '" + name + "'");
}

DeformState read_state(const std::vector<CheckpointEntry>& entries, const std::string& tag, const Tensor& positions) {
  auto kv = parse_kv_tokens(diffcore::find_text_entry(entries, "#" + tag + " "));
  DeformState s;
  s.kind = parse_object(kv_required(kv, "object"));
  s.rest_length = kv_double(kv, "rest");
  s.rows = kv_size(kv, "rows");
  s.cols = kv_size(kv, "cols");
  s.positions = tensor_points(positions);
  return s;
}

const Tensor& entry(const std::vector<CheckpointEntry>& entries, const std::string& name, const fs::path& file) {
  for (const auto& e : entries)
    if (e.name == name) return e.tensor;
  fail(ErrorKind::kIo, file.string() + " lacks record '" + name + "'");
}

Tensor action_tensor(const Action& a) {
  return Tensor({2, 3}, {a.pick.position.x, a.pick.position.y, a.pick.rotation, a.place.position.x,
                         a.place.position.y, a.place.rotation});
}

Action tensor_action(const Tensor& t) {
  require(t.numel() == 6, ErrorKind::kIo, "action record must hold 6 values");
  Action a;
  a.pick = {{t[0], t[1]}, t[2]};
  a.place = {{t[3], t[4]}, t[5]};
  return a;
}

std::string demo_dir(std::size_t i) { return "demo_" + std::to_string(i); }
std::string step_dir(std::size_t t) { return "step_" + std::to_string(t); }

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorKind::kIo, "bad integer '" + s + "'");
  return v;
}

}  // namespace

const char* to_string(Split split) noexcept { return split == Split::kTrain ? "train" : "eval"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "eval") return Split::kEval;
  fail(ErrorKind::kConfig, "unknown split '" + name + "'");
}

std::uint64_t task_seed(std::uint64_t dataset_seed, TaskKind kind, std::uint64_t index, Split split) {
  const std::uint64_t s = mix_seed(mix_seed(dataset_seed, static_cast<std::uint64_t>(kind) + 1), index);
  return split == Split::kTrain ? (s & ~kEvalSeedBit) : (s | kEvalSeedBit);
}

Observation DemoStep::observation(std::size_t image_size) const { return defsim::render(state, image_size, image_size); }

Observation Demonstration::goal_observation(std::size_t image_size) const {
  return defsim::render(goal, image_size, image_size);
}

std::vector<const Demonstration*> Dataset::of_kind(TaskKind kind) const {
  std::vector<const Demonstration*> out;
  for (const auto& d : demos)
    if (d.kind == kind) out.push_back(&d);
  return out;
}

std::size_t Dataset::step_count() const {
  std::size_t n = 0;
  for (const auto& d : demos) n += d.steps.size();
  return n;
}

Demonstration run_expert_demo(const defsim::TaskInstance& task, std::size_t image_size, bool* converged) {
  const std::size_t m = defsim::default_keypoint_count(task.initial.kind);
  Rng rng(mix_seed(task.seed, kExpertStream));
  Demonstration demo;
  demo.kind = task.kind;
  demo.seed = task.seed;
  demo.goal = task.goal;
  demo.goal_keypoints = defsim::ground_truth_keypoints(task.goal, m, image_size, image_size);
  DeformState state = task.initial;
  double distance = defsim::goal_distance(state, task.goal);
  while (distance > defsim::kGamma && demo.steps.size() < kMaxDemoSteps) {
    DemoStep step;
    step.state = state;
    step.keypoints = defsim::ground_truth_keypoints(state, m, image_size, image_size);
    step.action = defsim::scripted_expert(state, task.goal, &rng);
    step.distance_before = distance;
    state = defsim::apply_pick_place(state, step.action);
    distance = defsim::goal_distance(state, task.goal);
    step.distance_after = distance;
    demo.steps.push_back(std::move(step));
  }
  demo.final_state = state;
  demo.final_distance = distance;
  if (converged) *converged = distance <= defsim::kGamma;
  return demo;
}

Dataset generate_demos(const std::vector<TaskKind>& kinds, std::size_t per_task, std::uint64_t seed,
                       const GenerateOptions& options) {
  require(per_task >= 1, ErrorKind::kConfig, "need at least one demonstration per task");
  require(!kinds.empty(), ErrorKind::kEmptyInput, "no task kinds given");
  Dataset ds;
  ds.kinds = kinds;
  ds.per_task = per_task;
  ds.seed = seed;
  ds.split = options.split;
  ds.image_size = options.image_size;
  for (TaskKind kind : kinds) {
    std::size_t kept = 0;
    const std::size_t budget = per_task * std::max<std::size_t>(options.max_attempts_factor, 1);
    for (std::uint64_t index = 0; kept < per_task; ++index) {
      require(index < budget, ErrorKind::kInvariant,
              std::string("expert failed on too many ") + defsim::to_string(kind) + " tasks");
      defsim::TaskInstance task = defsim::sample_task(kind, task_seed(seed, kind, index, options.split), options.image_size);
      bool converged = false;
      Demonstration demo = run_expert_demo(task, options.image_size, &converged);
      if (!converged) {
        ds.discarded.push_back({kind, task.seed, "expert did not converge within " + std::to_string(kMaxDemoSteps) + " actions"});
        continue;
      }
      if (demo.steps.empty()) {
        ds.discarded.push_back({kind, task.seed, "initial state already within the goal threshold"});
        continue;
      }
      auto stalls = [](const DemoStep& s) { return !(s.distance_after < s.distance_before); };
      if (std::any_of(demo.steps.begin(), demo.steps.end(), stalls)) {
        ds.discarded.push_back({kind, task.seed, "an expert action did not reduce the goal distance"});
        continue;
      }
      ds.demos.push_back(std::move(demo));
      ++kept;
    }
  }
  return ds;
}

double replay_deviation(const Demonstration& demo, std::size_t image_size) {
  DeformState state = defsim::sample_task(demo.kind, demo.seed, image_size).initial;
  double worst = 0.0;
  auto compare = [&](const DeformState& stored) {
    require(stored.size() == state.size(), ErrorKind::kInvariant, "replayed state has a different particle count");
    for (std::size_t i = 0; i < state.size(); ++i) worst = std::max(worst, distance(stored.positions[i], state.positions[i]));
  };
  for (const auto& step : demo.steps) {
    compare(step.state);
    state = defsim::apply_pick_place(state, step.action);
  }
  compare(demo.final_state);
  return worst;
}

std::size_t nearest_index(const KeypointSet& points, Vec2 p) {
  require(!points.empty(), ErrorKind::kEmptyInput, "nearest keypoint of an empty set");
  std::size_t best = 0;
  double best_d = distance(points[0], p);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d = distance(points[i], p);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

Label label_from_step(const Action& action, const KeypointSet& current, const KeypointSet& goal,
                      std::size_t image_size) {
  const Vec2 pick = world_to_pixel(action.pick.position, image_size, image_size);
  const Vec2 place = world_to_pixel(action.place.position, image_size, image_size);
  Label l;
  l.pick = nearest_index(current, pick);
  l.place = nearest_index(goal, place);
  l.pick_distance = distance(current[l.pick], pick);
  l.place_distance = distance(goal[l.place], place);
  return l;
}

std::string manifest_text(const Dataset& ds) {
  std::ostringstream out;
  for (const auto& line : ds.provenance) out << "# " << line << "\n";
  std::vector<std::string> names;
  for (TaskKind k : ds.kinds) names.push_back(defsim::to_string(k));
  std::string kinds;
  for (std::size_t i = 0; i < names.size(); ++i) kinds += (i ? "," : "") + names[i];
  out << "format=manifest.v1\n"
      << "split=" << to_string(ds.split) << "\n"
      << "seed=" << ds.seed << "\n"
      << "image_size=" << ds.image_size << "\n"
      << "kinds=" << kinds << "\n"
      << "per_task=" << ds.per_task << "\n"
      << "demos=" << ds.demos.size() << "\n"
      << "steps=" << ds.step_count() << "\n"
      << "discarded=" << ds.discarded.size() << "\n";
  for (std::size_t i = 0; i < ds.demos.size(); ++i) {
    const auto& d = ds.demos[i];
    out << demo_dir(i) << "=kind=" << defsim::to_string(d.kind) << " seed=" << d.seed << " steps=" << d.steps.size()
        << "\n";
  }
  for (std::size_t i = 0; i < ds.discarded.size(); ++i) {
    const auto& d = ds.discarded[i];
    out << "discard_" << i << "=kind=" << defsim::to_string(d.kind) << " seed=" << d.seed << " reason=\"" << d.reason
        << "\"\n";
  }
  return out.str();
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::kIo, "cannot create dataset directory " + dir.string());
  for (std::size_t i = 0; i < ds.demos.size(); ++i) {
    const Demonstration& d = ds.demos[i];
    const fs::path ddir = dir / demo_dir(i);
    fs::create_directories(ddir);
    defsim::write_pnm(ddir / "goal.ppm", d.goal_observation(ds.image_size));
    diffcore::write_checkpoint(
        ddir / "demo.rgct",
        {diffcore::text_entry("#demo kind=" + std::string(defsim::to_string(d.kind)) + " seed=" + std::to_string(d.seed) +
                              " steps=" + std::to_string(d.steps.size())),
         diffcore::text_entry(state_header("goal", d.goal)), diffcore::text_entry(state_header("final", d.final_state)),
         {"goal.positions", points_tensor(d.goal.positions)},
         {"goal.keypoints", points_tensor(d.goal_keypoints)},
         {"final.positions", points_tensor(d.final_state.positions)},
         {"final.distance", Tensor({1}, {d.final_distance})}});
    for (std::size_t t = 0; t < d.steps.size(); ++t) {
      const DemoStep& s = d.steps[t];
      const fs::path sdir = ddir / step_dir(t);
      fs::create_directories(sdir);
      defsim::write_pnm(sdir / "obs.ppm", s.observation(ds.image_size));
      diffcore::write_checkpoint(sdir / "record.rgct",
                                 {diffcore::text_entry(state_header("state", s.state)),
                                  {"state.positions", points_tensor(s.state.positions)},
                                  {"keypoints", points_tensor(s.keypoints)},
                                  {"action", action_tensor(s.action)},
                                  {"distances", Tensor({2}, {s.distance_before, s.distance_after})}});
    }
  }
  std::ofstream out(dir / "manifest.v1", std::ios::binary);
  out << manifest_text(ds);
  require(bool(out), ErrorKind::kIo, "cannot write " + (dir / "manifest.v1").string());
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.v1";
  std::ifstream in(manifest);
  require(bool(in), ErrorKind::kIo, "cannot read " + manifest.string());
  std::map<std::string, std::string> kv;
  Dataset ds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      ds.provenance.push_back(line.size() > 2 ? line.substr(2) : "");
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kIo, "malformed manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  require(kv_required(kv, "format") == "manifest.v1", ErrorKind::kIo, "unsupported manifest format");
  ds.split = parse_split(kv_required(kv, "split"));
  ds.seed = parse_u64(kv_required(kv, "seed"));
  ds.image_size = kv_size(kv, "image_size");
  ds.per_task = kv_size(kv, "per_task");
  {
    std::istringstream names(kv_required(kv, "kinds"));
    std::string name;
    while (std::getline(names, name, ',')) ds.kinds.push_back(defsim::parse_task_kind(name));
  }
  const std::size_t demos = kv_size(kv, "demos");
  for (std::size_t i = 0; i < demos; ++i) {
    const fs::path ddir = dir / demo_dir(i);
    const fs::path file = ddir / "demo.rgct";
    auto entries = diffcore::read_checkpoint(file);
    auto head = parse_kv_tokens(diffcore::find_text_entry(entries, "#demo "));
    Demonstration d;
    d.kind = defsim::parse_task_kind(kv_required(head, "kind"));
    d.seed = parse_u64(kv_required(head, "seed"));
    const std::size_t steps = kv_size(head, "steps");
    d.goal = read_state(entries, "goal", entry(entries, "goal.positions", file));
    d.goal_keypoints = tensor_points(entry(entries, "goal.keypoints", file));
    d.final_state = read_state(entries, "final", entry(entries, "final.positions", file));
    d.final_distance = entry(entries, "final.distance", file)[0];
    for (std::size_t t = 0; t < steps; ++t) {
      const fs::path rfile = ddir / step_dir(t) / "record.rgct";
      auto rec = diffcore::read_checkpoint(rfile);
      DemoStep s;
      s.state = read_state(rec, "state", entry(rec, "state.positions", rfile));
      s.keypoints = tensor_points(entry(rec, "keypoints", rfile));
      s.action = tensor_action(entry(rec, "action", rfile));
      const Tensor& dist = entry(rec, "distances", rfile);
      require(dist.numel() == 2, ErrorKind::kIo, rfile.string() + ": distances must hold 2 values");
      s.distance_before = dist[0];
      s.distance_after = dist[1];
      d.steps.push_back(std::move(s));
    }
    ds.demos.push_back(std::move(d));
  }
  require(ds.demos.size() == ds.kinds.size() * ds.per_task, ErrorKind::kInvariant,
          "manifest demo count does not match kinds x per_task");
  for (std::size_t i = 0; kv.count("discard_" + std::to_string(i)); ++i) {
    const std::string& v = kv["discard_" + std::to_string(i)];
    auto d = parse_kv_tokens(v);
    const auto r = v.find("reason=\"");
    ds.discarded.push_back({defsim::parse_task_kind(kv_required(d, "kind")), parse_u64(kv_required(d, "seed")),
                            r == std::string::npos ? "" : v.substr(r + 8, v.size() - r - 9)});
  }
  require(ds.discarded.size() == kv_size(kv, "discarded"), ErrorKind::kInvariant,
          "manifest discard count does not match its entries");
  return ds;
}

void check_disjoint(const Dataset& train, const Dataset& eval) {
  std::set<std::uint64_t> seen;
  for (const auto& d : train.demos) {
    require((d.seed & kEvalSeedBit) == 0, ErrorKind::kInvariant, "train demonstration carries an eval seed");
    seen.insert(d.seed);
  }
  for (const auto& d : eval.demos) {
    require((d.seed & kEvalSeedBit) != 0, ErrorKind::kInvariant, "eval demonstration carries a train seed");
    require(!seen.count(d.seed), ErrorKind::kInvariant, "eval seed also used for training");
  }
}

}  // namespace rgc::trainkit
