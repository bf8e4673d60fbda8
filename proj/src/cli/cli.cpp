#include "rgc/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "rgc/benchkit/capacity.hpp"
#include "rgc/benchkit/mlp.hpp"
#include "rgc/benchkit/models.hpp"
#include "rgc/benchkit/rollout.hpp"
#include "rgc/common/error.hpp"
#include "rgc/common/runtime.hpp"
#include "rgc/defsim/tasks.hpp"
#include "rgc/keypointnet/detector.hpp"
#include "rgc/trainkit/dataset.hpp"
#include "rgc/trainkit/trainer.hpp"

namespace rgc::cli {

namespace {

namespace fs = std::filesystem;
using defsim::TaskKind;

const char* const kRopeList = "straightening,l-shape,v-shape,n-shape,square-shape";

struct GenDataArgs {
  std::string tasks = "straightening";
  std::size_t n = 10;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::size_t image_size = defsim::kImageSize;
};

struct TrainDetectorArgs {
  std::string tasks = kRopeList;
  std::size_t samples = 2000;
  std::size_t heldout = 200;
  std::size_t epochs = 10;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  std::size_t keypoints = 5;
  double sigma = 4.0;
  double sigma_start = 24.0;
  double lr = 1e-3;
  std::size_t image_size = defsim::kImageSize;
  std::string name = "detector";
};

struct TrainPolicyArgs {
  std::string data;
  std::string tasks;
  std::string mode = "single";
  std::string model = "gnn";
  std::size_t n = 0;
  std::size_t epochs = 0;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double w_pick = 1.0;
  double w_place = 1.0;
  std::string source = "ground-truth";
  std::string detector;
  std::size_t dim = 64;
  std::size_t self_layers = 3;
  std::size_t cross_layers = 3;
  std::string name = "policy";
};

struct EvalArgs {
  std::string policy;
  std::string task = "straightening";
  std::size_t instances = 40;
  std::uint64_t seed = 0;
  std::string source = "ground-truth";
  std::string detector;
  std::size_t max_actions = benchkit::kActionBudget;
  std::size_t threads = 1;
  std::size_t timing_runs = 100;
};

struct RolloutArgs {
  std::string policy;
  std::string task = "straightening";
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string source = "ground-truth";
  std::string detector;
  std::size_t max_actions = benchkit::kActionBudget;
};

struct CapacityArgs {
  std::string policy;
  std::string detector;
  std::size_t runs = 100;
  std::size_t warmup = 10;
  std::uint64_t seed = 0;
};

std::vector<TaskKind> parse_tasks(const std::string& csv) {
  std::vector<TaskKind> out;
  std::istringstream in(csv);
  std::string part;
  while (std::getline(in, part, ','))
    if (!part.empty()) out.push_back(defsim::parse_task_kind(part));
  require(!out.empty(), ErrorKind::kConfig, "no task kinds given");
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  require(!path.empty(), ErrorKind::kConfig, what + " path is required");
  require(fs::exists(path), ErrorKind::kIo, what + " '" + path + "' does not exist");
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::kIo, "cannot create output directory '" + out + "'");
  return dir;
}

std::string default_out_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? std::string(env) : std::string("rgc-out");
}

/// Tool version, the subcommand and every flag with its resolved value.
std::vector<std::string> provenance(const CLI::App& sub) {
  std::ostringstream cmd;
  cmd << "command=" << sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string& name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    std::string value = opt->count() ? opt->as<std::string>() : opt->get_default_str();
    cmd << " --" << name << "=" << value;
  }
  return {std::string("tool=") + kToolVersion, cmd.str()};
}

void write_text(const fs::path& path, const std::vector<std::string>& header, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  for (const auto& line : header) f << "# " << line << "\n";
  f << body;
  require(f.good(), ErrorKind::kIo, "cannot write '" + path.string() + "'");
}

std::optional<keypointnet::DetectorParams> maybe_detector(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return keypointnet::load_detector(path);
}

// Planner from a checkpoint path or one of the built-in names.
benchkit::LoadedPlanner planner_from(const std::string& spec, std::uint64_t seed) {
  benchkit::LoadedPlanner out;
  if (spec == "expert") {
    out.planner = benchkit::expert_planner();
  } else if (spec == "random") {
    out.planner = benchkit::random_planner(5, seed);
  } else {
    out = benchkit::load_planner(spec);
  }
  return out;
}

void check_planner_path(const std::string& spec) {
  if (spec == "expert" || spec == "random") return;
  require_file(spec, "policy checkpoint");
}

int gen_data(const GenDataArgs& a, const std::string& out_dir, const CLI::App& sub, std::ostream& out) {
  const auto kinds = parse_tasks(a.tasks);
  trainkit::GenerateOptions opts;
  opts.split = trainkit::parse_split(a.split);
  opts.image_size = a.image_size;
  const fs::path dir = prepare_out(out_dir);
  trainkit::Dataset ds = trainkit::generate_demos(kinds, a.n, a.seed, opts);
  ds.provenance = provenance(sub);
  trainkit::write_dataset(dir, ds);
  out << "wrote " << ds.demos.size() << " demonstrations (" << ds.step_count() << " steps, " << ds.discarded.size()
      << " discarded) to " << dir.string() << "\n";
  return kExitOk;
}

int train_detector(const TrainDetectorArgs& a, const std::string& out_dir, const CLI::App& sub, std::ostream& out) {
  const auto kinds = parse_tasks(a.tasks);
  keypointnet::DetectorConfig dc;
  dc.keypoints = a.keypoints;
  dc.sigma = a.sigma;
  dc.width = dc.height = a.image_size;
  dc.validate();
  const fs::path dir = prepare_out(out_dir);

  keypointnet::DetectorTrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.seed = a.seed;
  tc.sigma_start = a.sigma_start;
  tc.adam.learning_rate = a.lr;
  std::ostringstream log;
  log << std::setprecision(10);
  tc.on_epoch = [&](std::size_t epoch, double loss) {
    log << "epoch_" << epoch << "_loss=" << loss << "\n";
    out << "epoch " << epoch << " loss " << loss << std::endl;
  };
  auto source = [&](std::size_t i) {
    return trainkit::detector_sample(kinds, a.seed, trainkit::Split::kTrain, i, a.keypoints, a.image_size);
  };
  keypointnet::DetectorParams params = keypointnet::train_detector(a.samples, source, dc, tc);

  double total = 0.0;
  std::vector<defsim::Observation> obs;
  std::vector<KeypointSet> truth;
  for (std::size_t i = 0; i < a.heldout; ++i) {
    auto s = trainkit::detector_sample(kinds, a.seed, trainkit::Split::kEval, i, a.keypoints, a.image_size);
    obs.push_back(std::move(s.observation));
    truth.push_back(std::move(s.keypoints));
  }
  const auto predicted = keypointnet::detect_keypoints(obs, params);
  for (std::size_t i = 0; i < a.heldout; ++i) total += keypointnet::keypoint_error(predicted[i], truth[i]);
  const double mean_error = a.heldout ? total / double(a.heldout) : 0.0;
  log << "heldout_renders=" << a.heldout << "\nheldout_mean_error_px=" << mean_error << "\n";

  auto header = provenance(sub);
  keypointnet::save_detector(dir / (a.name + ".ckpt"), params, header);
  write_text(dir / (a.name + "_train.txt"), header, log.str());
  out << "held-out mean keypoint error " << std::fixed << std::setprecision(3) << mean_error << " px over "
      << a.heldout << " renders\nwrote " << (dir / (a.name + ".ckpt")).string() << "\n";
  return kExitOk;
}

int train_policy(const TrainPolicyArgs& a, const std::string& out_dir, const CLI::App& sub, std::ostream& out) {
  require_file(a.data, "dataset directory");
  const trainkit::KeypointSource source = trainkit::parse_keypoint_source(a.source);
  if (source == trainkit::KeypointSource::kDetector) require_file(a.detector, "detector checkpoint");
  require(a.mode == "single" || a.mode == "multi", ErrorKind::kConfig, "mode must be single or multi");
  require(a.model == "gnn" || a.model == "mlp", ErrorKind::kConfig, "model must be gnn or mlp");
  const fs::path dir = prepare_out(out_dir);

  trainkit::Dataset ds = trainkit::read_dataset(a.data);
  const auto detector = maybe_detector(source == trainkit::KeypointSource::kDetector ? a.detector : "");
  trainkit::TrainConfig tc;
  tc.mode = a.mode == "multi" ? trainkit::TrainMode::kMultiTask : trainkit::TrainMode::kSingleTask;
  tc.kinds = a.tasks.empty() ? ds.kinds : parse_tasks(a.tasks);
  tc.per_task = a.n;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.seed = a.seed;
  tc.w_pick = a.w_pick;
  tc.w_place = a.w_place;
  tc.source = source;
  tc.detector = detector ? &*detector : nullptr;
  tc.adam.learning_rate = a.lr;
  std::ostringstream log;
  log << std::setprecision(10);
  tc.on_epoch = [&](std::size_t epoch, double loss, double acc) {
    log << "epoch_" << epoch << "=loss:" << loss << " accuracy:" << acc << "\n";
    out << "epoch " << epoch << " loss " << loss << " accuracy " << acc << std::endl;
  };
  tc.validate();

  auto header = provenance(sub);
  const fs::path ckpt = dir / (a.name + ".ckpt");
  trainkit::TrainReport report;
  if (a.model == "gnn") {
    localgnn::GnnConfig arch;
    arch.dim = a.dim;
    arch.self_layers = a.self_layers;
    arch.cross_layers = a.cross_layers;
    arch.validate();
    auto trained = trainkit::train_policy(ds, tc, arch);
    localgnn::save_policy(ckpt, trained.params, header);
    report = trained.report;
  } else {
    auto trained = benchkit::train_mlp_baseline(ds, tc);
    benchkit::save_mlp(ckpt, trained.params, header);
    report = trained.report;
  }
  log << "demonstrations=" << report.demonstrations << "\nexamples=" << report.examples << "\n";
  write_text(dir / (a.name + "_train.txt"), header, log.str());
  out << "trained on " << report.demonstrations << " demonstrations (" << report.examples << " examples)\nwrote "
      << ckpt.string() << "\n";
  return kExitOk;
}

benchkit::RolloutOptions rollout_options(const std::string& source_name, const std::string& detector_path,
                                         std::size_t max_actions, std::optional<keypointnet::DetectorParams>& detector) {
  benchkit::RolloutOptions o;
  o.source = trainkit::parse_keypoint_source(source_name);
  o.max_actions = max_actions;
  require(o.max_actions <= benchkit::kActionBudget, ErrorKind::kConfig,
          "max-actions may not exceed " + std::to_string(benchkit::kActionBudget));
  if (o.source == trainkit::KeypointSource::kDetector) {
    detector = maybe_detector(detector_path);
    o.detector = &*detector;
    o.image_size = detector->config.width;
  }
  return o;
}

int eval(const EvalArgs& a, const std::string& out_dir, const CLI::App& sub, std::ostream& out) {
  check_planner_path(a.policy);
  const TaskKind kind = defsim::parse_task_kind(a.task);
  if (trainkit::parse_keypoint_source(a.source) == trainkit::KeypointSource::kDetector)
    require_file(a.detector, "detector checkpoint");
  const fs::path dir = prepare_out(out_dir);

  std::optional<keypointnet::DetectorParams> detector;
  benchkit::RolloutOptions o = rollout_options(a.source, a.detector, a.max_actions, detector);
  benchkit::LoadedPlanner loaded = planner_from(a.policy, a.seed);
  benchkit::BenchReport report = benchkit::success_rate(loaded.planner, kind, a.instances, a.seed, o, a.threads);
  if (loaded.gnn || loaded.mlp) {
    benchkit::CapacityOptions co;
    co.timing_runs = a.timing_runs;
    co.seed = a.seed;
    report.capacity = loaded.capacity(detector ? &*detector : nullptr, co);
  }
  auto header = provenance(sub);
  const std::string stem = "report_" + a.task + "_" + trainkit::to_string(o.source);
  write_text(dir / (stem + ".txt"), header, benchkit::report_text(report));
  write_text(dir / (stem + ".kv"), header, benchkit::report_kv(report));
  out << benchkit::report_text(report);
  return kExitOk;
}

int rollout(const RolloutArgs& a, const std::string& out_dir, const CLI::App& sub, std::ostream& out) {
  check_planner_path(a.policy);
  const TaskKind kind = defsim::parse_task_kind(a.task);
  if (trainkit::parse_keypoint_source(a.source) == trainkit::KeypointSource::kDetector)
    require_file(a.detector, "detector checkpoint");
  const fs::path dir = prepare_out(out_dir);

  std::optional<keypointnet::DetectorParams> detector;
  benchkit::RolloutOptions o = rollout_options(a.source, a.detector, a.max_actions, detector);
  o.frame_dir = dir / ("rollout_" + a.task + "_" + std::to_string(a.index));
  benchkit::LoadedPlanner loaded = planner_from(a.policy, a.seed);
  const defsim::TaskInstance task = benchkit::eval_task(kind, a.index, a.seed, o.image_size);
  benchkit::RolloutResult r = benchkit::rollout(loaded.planner, task, o);
  std::ostringstream body;
  body << std::setprecision(17) << "task=" << a.task << "\ntask_seed=" << task.seed << "\nsuccess=" << r.success
       << "\nactions=" << r.actions << "\nfinal_distance=" << r.distances.back() << "\n";
  write_text(o.frame_dir / "summary.txt", provenance(sub), body.str());
  out << (r.success ? "success" : "failure") << " after " << r.actions << " actions, final distance "
      << r.distances.back() << "\nframes in " << o.frame_dir.string() << "\n";
  return kExitOk;
}

int capacity(const CapacityArgs& a, const std::string& out_dir, const CLI::App& sub, std::ostream& out) {
  require_file(a.policy, "policy checkpoint");
  if (!a.detector.empty()) require_file(a.detector, "detector checkpoint");
  const fs::path dir = prepare_out(out_dir);
  const auto detector = maybe_detector(a.detector);
  benchkit::CapacityOptions co;
  co.timing_runs = a.runs;
  co.warmup_runs = a.warmup;
  co.seed = a.seed;
  const benchkit::CapacityFigures f =
      benchkit::load_planner(a.policy).capacity(detector ? &*detector : nullptr, co);
  auto header = provenance(sub);
  write_text(dir / "capacity.txt", header, benchkit::capacity_text(f));
  write_text(dir / "capacity.kv", header, benchkit::capacity_kv(f));
  out << benchkit::capacity_text(f);
  return kExitOk;
}

// Lines of a key=value file turned into --key=value arguments.
std::vector<std::string> config_arguments(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open config file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    const auto eq = line.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::kConfig,
            path + ":" + std::to_string(number) + ": expected key=value");
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = line.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

std::optional<std::string> find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return kExitUsage;
    case ErrorKind::kIo:
      return kExitMissingFile;
    default:
      return kExitInvariant;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Keypoint-graph rearrangement toolkit: data, training, evaluation and capacity reports.", "rgc"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string out_dir = default_out_root();
  std::string config_path;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory (default from $RGC_OUTPUT_ROOT)");
    sub->add_option("--config", config_path, "key=value file of flag defaults; flags given here win");
  };

  GenDataArgs gd;
  CLI::App* s_gen = app.add_subcommand("gen-data", "Generate expert demonstrations and write a dataset directory");
  s_gen->add_option("--tasks", gd.tasks, "Comma-separated task kinds");
  s_gen->add_option("--n", gd.n, "Demonstrations per task");
  s_gen->add_option("--seed", gd.seed, "Dataset seed");
  s_gen->add_option("--split", gd.split, "train or eval seed split");
  s_gen->add_option("--image-size", gd.image_size, "Square render size in pixels");
  common(s_gen);

  TrainDetectorArgs td;
  CLI::App* s_det = app.add_subcommand("train-detector", "Train the keypoint detector on synthetic renders");
  s_det->add_option("--tasks", td.tasks, "Task kinds whose states are rendered");
  s_det->add_option("--samples", td.samples, "Training renders");
  s_det->add_option("--heldout", td.heldout, "Held-out renders for the error report");
  s_det->add_option("--epochs", td.epochs, "Training epochs");
  s_det->add_option("--batch", td.batch, "Minibatch size");
  s_det->add_option("--seed", td.seed, "Seed for renders, init and shuffling");
  s_det->add_option("--keypoints", td.keypoints, "Keypoints per image (m)");
  s_det->add_option("--sigma", td.sigma, "Final heatmap sigma in pixels");
  s_det->add_option("--sigma-start", td.sigma_start, "Heatmap sigma at the first epoch");
  s_det->add_option("--lr", td.lr, "Adam learning rate");
  s_det->add_option("--image-size", td.image_size, "Square render size in pixels");
  s_det->add_option("--name", td.name, "Checkpoint stem inside the output directory");
  common(s_det);

  TrainPolicyArgs tp;
  CLI::App* s_pol = app.add_subcommand("train-policy", "Train a keypoint planner by imitation");
  s_pol->add_option("--data", tp.data, "Dataset directory written by gen-data");
  s_pol->add_option("--tasks", tp.tasks, "Task kinds to train on (default: all in the dataset)");
  s_pol->add_option("--mode", tp.mode, "single or multi");
  s_pol->add_option("--model", tp.model, "gnn (local graph policy) or mlp (keypoint-MLP baseline)");
  s_pol->add_option("--n", tp.n, "Demonstrations per task (0: all)");
  s_pol->add_option("--epochs", tp.epochs, "Epochs (0: 50, or 30 when n >= 1000)");
  s_pol->add_option("--batch", tp.batch, "Minibatch size");
  s_pol->add_option("--seed", tp.seed, "Seed for init and shuffling");
  s_pol->add_option("--lr", tp.lr, "Adam learning rate");
  s_pol->add_option("--w-pick", tp.w_pick, "Pick loss weight");
  s_pol->add_option("--w-place", tp.w_place, "Place loss weight");
  s_pol->add_option("--source", tp.source, "Training keypoints: ground-truth or detector");
  s_pol->add_option("--detector", tp.detector, "Detector checkpoint for --source detector");
  s_pol->add_option("--dim", tp.dim, "Embedding width d");
  s_pol->add_option("--self-layers", tp.self_layers, "Self-attention layers");
  s_pol->add_option("--cross-layers", tp.cross_layers, "Cross-attention layers");
  s_pol->add_option("--name", tp.name, "Checkpoint stem inside the output directory");
  common(s_pol);

  EvalArgs ev;
  CLI::App* s_eval = app.add_subcommand("eval", "Success rate over fresh eval-split task instances");
  s_eval->add_option("--policy", ev.policy, "Planner checkpoint, or 'expert' or 'random'");
  s_eval->add_option("--task", ev.task, "Task kind");
  s_eval->add_option("--instances", ev.instances, "Task instances");
  s_eval->add_option("--seed", ev.seed, "Eval seed");
  s_eval->add_option("--source", ev.source, "Keypoints: ground-truth or detector");
  s_eval->add_option("--detector", ev.detector, "Detector checkpoint for --source detector");
  s_eval->add_option("--max-actions", ev.max_actions, "Action budget per rollout");
  s_eval->add_option("--threads", ev.threads, "Worker threads for rollouts");
  s_eval->add_option("--timing-runs", ev.timing_runs, "Forward passes timed for the capacity figures");
  common(s_eval);

  RolloutArgs ro;
  CLI::App* s_roll = app.add_subcommand("rollout", "One closed-loop rollout with frame dumps");
  s_roll->add_option("--policy", ro.policy, "Planner checkpoint, or 'expert' or 'random'");
  s_roll->add_option("--task", ro.task, "Task kind");
  s_roll->add_option("--index", ro.index, "Eval instance index");
  s_roll->add_option("--seed", ro.seed, "Eval seed");
  s_roll->add_option("--source", ro.source, "Keypoints: ground-truth or detector");
  s_roll->add_option("--detector", ro.detector, "Detector checkpoint for --source detector");
  s_roll->add_option("--max-actions", ro.max_actions, "Action budget");
  common(s_roll);

  CapacityArgs ca;
  CLI::App* s_cap = app.add_subcommand("capacity", "FLOPs, parameters and inference time of a planner");
  s_cap->add_option("--policy", ca.policy, "Planner checkpoint");
  s_cap->add_option("--detector", ca.detector, "Optional detector checkpoint");
  s_cap->add_option("--runs", ca.runs, "Timed forward passes");
  s_cap->add_option("--warmup", ca.warmup, "Untimed warm-up passes");
  s_cap->add_option("--seed", ca.seed, "Seed of the timing inputs");
  common(s_cap);

  auto usage = [&](const std::string& message) {
    err << "rgc: " << message << "\n";
    const CLI::App* shown = &app;
    for (CLI::App* sub : app.get_subcommands({}))
      if (!args.empty() && sub->get_name() == args.front()) shown = sub;
    err << shown->help();
    return static_cast<int>(kExitUsage);
  };

  try {
    std::vector<std::string> full = args;
    if (auto cfg = find_config(args)) {
      require(!args.empty(), ErrorKind::kConfig, "--config needs a subcommand");
      auto extra = config_arguments(*cfg);
      full.insert(full.begin() + 1, extra.begin(), extra.end());
    }
    std::vector<std::string> reversed(full.rbegin(), full.rend());
    app.parse(reversed);
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) return usage(e.what());
    err << "rgc: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }

  try {
    if (s_gen->parsed()) return gen_data(gd, out_dir, *s_gen, out);
    if (s_det->parsed()) return train_detector(td, out_dir, *s_det, out);
    if (s_pol->parsed()) return train_policy(tp, out_dir, *s_pol, out);
    if (s_eval->parsed()) return eval(ev, out_dir, *s_eval, out);
    if (s_roll->parsed()) return rollout(ro, out_dir, *s_roll, out);
    if (s_cap->parsed()) return capacity(ca, out_dir, *s_cap, out);
    return usage("no subcommand given");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) return usage(e.what());
    err << "rgc: " << (e.kind() == ErrorKind::kIo ? "" : "invariant violated: ") << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "rgc: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run(int argc, const char* const* argv) {
  tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rgc::cli
