#include "rgc/benchkit/rollout.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <thread>

#include "rgc/common/error.hpp"
#include "rgc/defsim/render.hpp"
#include "rgc/trainkit/dataset.hpp"

namespace rgc::benchkit {

namespace {

using Clock = std::chrono::steady_clock;

PolicyStep from_distribution(ActionDistribution dist, const PolicyContext& ctx) {
  Action a = localgnn::select_action(dist, ctx.current, ctx.goal_keypoints, ctx.width, ctx.height);
  return {a, std::move(dist)};
}

void mark(defsim::Observation& obs, Vec2 p, int radius, double r, double g, double b) {
  const long cx = std::lround(p.x), cy = std::lround(p.y);
  for (long y = cy - radius; y <= cy + radius; ++y)
    for (long x = cx - radius; x <= cx + radius; ++x) {
      if (x < 0 || y < 0 || x >= long(obs.width) || y >= long(obs.height)) continue;
      double* px = obs.pixels.data() + (std::size_t(y) * obs.width + std::size_t(x)) * obs.channels;
      px[0] = r;
      if (obs.channels == 3) {
        px[1] = g;
        px[2] = b;
      }
    }
}

std::string fraction(std::size_t num, std::size_t den) { return std::to_string(num) + "/" + std::to_string(den); }

}  // namespace

Planner gnn_planner(localgnn::PolicyParams params) {
  auto p = std::make_shared<const localgnn::PolicyParams>(std::move(params));
  return {p->config.descriptor(), p->config.keypoints, [p](const PolicyContext& ctx) {
            return from_distribution(localgnn::policy_forward(ctx.current, ctx.goal_keypoints, *p), ctx);
          }};
}

Planner mlp_planner(MlpParams params) {
  auto p = std::make_shared<const MlpParams>(std::move(params));
  return {p->config.descriptor(), p->config.keypoints, [p](const PolicyContext& ctx) {
            return from_distribution(mlp_baseline_policy(ctx.current, ctx.goal_keypoints, *p), ctx);
          }};
}

Planner expert_planner(const defsim::ExpertConfig& config) {
  return {"scripted-expert", config.keypoints, [config](const PolicyContext& ctx) {
            return PolicyStep{defsim::scripted_expert(ctx.state, ctx.goal, nullptr, config), {}};
          }};
}

Planner random_planner(std::size_t keypoints, std::uint64_t seed) {
  require(keypoints > 0, ErrorKind::kConfig, "random planner needs a keypoint count");
  return {"random keypoints=" + std::to_string(keypoints) + " seed=" + std::to_string(seed), keypoints,
          [seed](const PolicyContext& ctx) {
            Rng rng(mix_seed(mix_seed(seed, ctx.task_seed), ctx.step));
            ActionDistribution dist{std::vector<double>(ctx.current.size(), 0.0),
                                    std::vector<double>(ctx.goal_keypoints.size(), 0.0)};
            dist.pick[rng.below(dist.pick.size())] = 1.0;
            dist.place[rng.below(dist.place.size())] = 1.0;
            return from_distribution(std::move(dist), ctx);
          }};
}

RolloutResult rollout(const Planner& planner, const TaskInstance& task, const RolloutOptions& options) {
  require(static_cast<bool>(planner.act), ErrorKind::kConfig, "planner has no action function");
  const std::size_t size = options.image_size;
  const bool detector = options.source == KeypointSource::kDetector;
  std::size_t m = planner.keypoints ? planner.keypoints : defsim::default_keypoint_count(task.initial.kind);
  if (detector) {
    require(options.detector != nullptr, ErrorKind::kConfig, "detector keypoints requested without a detector");
    const auto& dc = options.detector->config;
    require(dc.keypoints == m, ErrorKind::kDimension,
            "planner expects " + std::to_string(m) + " keypoints, detector emits " + std::to_string(dc.keypoints));
    require(dc.width == size && dc.height == size, ErrorKind::kDimension, "detector input size differs from renders");
  }
  auto keypoints_of = [&](const DeformState& s, const defsim::Observation* obs) {
    if (!detector) return defsim::ground_truth_keypoints(s, m, size, size);
    if (obs) return keypointnet::detect_keypoints({*obs}, *options.detector).front();
    return keypointnet::detect_keypoints({defsim::render(s, size, size)}, *options.detector).front();
  };

  const bool dump = !options.frame_dir.empty();
  if (dump) std::filesystem::create_directories(options.frame_dir);
  const defsim::Observation goal_obs =
      task.goal_observation.width == size ? task.goal_observation : defsim::render(task.goal, size, size);
  const KeypointSet goal_kp = keypoints_of(task.goal, &goal_obs);
  if (dump) {
    defsim::Observation g = goal_obs;
    for (Vec2 p : goal_kp) mark(g, p, 1, 1.0, 1.0, 1.0);
    defsim::write_pnm(options.frame_dir / "goal.ppm", g);
  }

  RolloutResult out;
  DeformState state = task.initial;
  out.distances.push_back(defsim::goal_distance(state, task.goal));
  while (out.distances.back() > defsim::kGamma && out.actions < options.max_actions) {
    const defsim::Observation obs = detector || dump ? defsim::render(state, size, size) : defsim::Observation{};
    const KeypointSet current = keypoints_of(state, detector ? &obs : nullptr);
    const PolicyContext ctx{state, task.goal, current, goal_kp, size, size, task.seed, out.actions};
    const auto t0 = Clock::now();
    PolicyStep step = planner.act(ctx);
    out.inference_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    if (dump) {
      defsim::Observation f = obs;
      for (Vec2 p : current) mark(f, p, 1, 1.0, 1.0, 1.0);
      mark(f, world_to_pixel(step.action.pick.position, size, size), 2, 1.0, 0.0, 0.0);
      mark(f, world_to_pixel(step.action.place.position, size, size), 2, 0.0, 1.0, 0.0);
      defsim::write_pnm(options.frame_dir / ("step_" + std::to_string(out.actions) + ".ppm"), f);
    }
    state = defsim::apply_pick_place(state, step.action);
    out.taken.push_back(step.action);
    out.distributions.push_back(std::move(step.distribution));
    ++out.actions;
    out.distances.push_back(defsim::goal_distance(state, task.goal));
  }
  out.success = out.distances.back() <= defsim::kGamma;
  if (dump) {
    defsim::write_pnm(options.frame_dir / ("step_" + std::to_string(out.actions) + ".ppm"),
                      defsim::render(state, size, size));
    std::ofstream trace(options.frame_dir / "trace.txt");
    trace << std::setprecision(17) << "planner=" << planner.descriptor << "\ntask_seed=" << task.seed
          << "\nsuccess=" << out.success << "\nactions=" << out.actions << "\n";
    for (std::size_t t = 0; t < out.distances.size(); ++t) trace << "distance_" << t << "=" << out.distances[t] << "\n";
    for (std::size_t t = 0; t < out.taken.size(); ++t) {
      const Action& a = out.taken[t];
      trace << "action_" << t << "=" << a.pick.position.x << "," << a.pick.position.y << "," << a.place.position.x
            << "," << a.place.position.y << "\n";
    }
    require(trace.good(), ErrorKind::kIo, "cannot write " + (options.frame_dir / "trace.txt").string());
  }
  return out;
}

TaskInstance eval_task(TaskKind kind, std::size_t index, std::uint64_t eval_seed, std::size_t image_size) {
  return defsim::sample_task(kind, trainkit::task_seed(eval_seed, kind, index, trainkit::Split::kEval), image_size);
}

double BenchReport::success_percent() const {
  return instances ? 100.0 * double(successes) / double(instances) : 0.0;
}

double BenchReport::mean_actions() const {
  return successes ? double(success_actions) / double(successes) : std::numeric_limits<double>::quiet_NaN();
}

BenchReport success_rate(const Planner& planner, TaskKind kind, std::size_t instances, std::uint64_t eval_seed,
                         const RolloutOptions& options, std::size_t threads) {
  require(instances > 0, ErrorKind::kEmptyInput, "success_rate needs at least one instance");
  RolloutOptions opts = options;
  opts.frame_dir.clear();
  std::vector<RolloutResult> results(instances);
  std::vector<std::uint64_t> seeds(instances);
  std::vector<std::exception_ptr> errors(instances);
  auto run = [&](std::size_t i) {
    try {
      TaskInstance task = eval_task(kind, i, eval_seed, opts.image_size);
      seeds[i] = task.seed;
      results[i] = rollout(planner, task, opts);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, instances);
  if (threads == 1) {
    for (std::size_t i = 0; i < instances; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < instances; i += threads) run(i);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  BenchReport report;
  report.kind = kind;
  report.source = options.source;
  report.instances = instances;
  report.max_actions = options.max_actions;
  report.eval_seed = eval_seed;
  report.seeds = seeds;
  report.descriptor = planner.descriptor;
  for (const RolloutResult& r : results) {
    report.outcomes.push_back(r.success);
    if (r.success) {
      ++report.successes;
      report.success_actions += r.actions;
    }
  }
  return report;
}

std::string report_text(const BenchReport& r) {
  std::ostringstream out;
  out << "task " << defsim::to_string(r.kind) << " keypoints " << trainkit::to_string(r.source) << "\n";
  out << "model " << r.descriptor << "\n";
  out << "success " << std::fixed << std::setprecision(1) << r.success_percent() << "% (" << r.successes << " of "
      << r.instances << " within " << r.max_actions << " actions)\n";
  if (r.successes)
    out << "mean actions on successes " << std::setprecision(2) << r.mean_actions() << "\n";
  else
    out << "mean actions on successes n/a\n";
  out << "eval seed " << r.eval_seed << "\n";
  if (r.capacity) out << capacity_text(*r.capacity);
  return out.str();
}

std::string report_kv(const BenchReport& r) {
  std::ostringstream out;
  out << "task=" << defsim::to_string(r.kind) << "\n";
  out << "keypoint_source=" << trainkit::to_string(r.source) << "\n";
  out << "model=" << r.descriptor << "\n";
  out << "instances=" << r.instances << "\n";
  out << "successes=" << r.successes << "\n";
  out << "success_rate=" << fraction(r.successes, r.instances) << "\n";
  out << "success_percent=" << std::fixed << std::setprecision(3) << r.success_percent() << "\n";
  out << "mean_actions=" << (r.successes ? fraction(r.success_actions, r.successes) : std::string("none")) << "\n";
  out << "max_actions=" << r.max_actions << "\n";
  out << "eval_seed=" << r.eval_seed << "\n";
  for (std::size_t i = 0; i < r.seeds.size(); ++i)
    out << "instance_" << i << "=seed:" << r.seeds[i] << " success:" << (r.outcomes[i] ? 1 : 0) << "\n";
  if (r.capacity) out << capacity_kv(*r.capacity);
  return out.str();
}

}  // namespace rgc::benchkit
