#include "rgc/trainkit/trainer.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "rgc/common/error.hpp"
#include "rgc/common/rng.hpp"

namespace rgc::trainkit {

namespace {

using diffcore::Tape;
using diffcore::Tensor;

bool contains(const std::vector<TaskKind>& kinds, TaskKind k) {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

}  // namespace

const char* to_string(KeypointSource source) noexcept {
  return source == KeypointSource::kGroundTruth ? "ground-truth" : "detector";
}

KeypointSource parse_keypoint_source(const std::string& name) {
  if (name == "ground-truth" || name == "gt") return KeypointSource::kGroundTruth;
  if (name == "detector") return KeypointSource::kDetector;
  fail(ErrorKind::kConfig, "unknown keypoint source '" + name + "'");
}

std::size_t TrainConfig::effective_epochs() const {
  if (epochs > 0) return epochs;
  return per_task >= 1000 ? 30 : 50;
}

void TrainConfig::validate() const {
  require(!kinds.empty(), ErrorKind::kConfig, "training needs at least one task kind");
  require(mode == TrainMode::kMultiTask || kinds.size() == 1, ErrorKind::kConfig,
          "single-task training takes exactly one task kind");
  require(batch_size > 0, ErrorKind::kConfig, "batch size must be positive");
  require(clip_norm >= 0.0, ErrorKind::kConfig, "gradient clipping norm must be nonnegative");
  require(w_pick >= 0.0 && w_place >= 0.0 && (w_pick > 0.0 || w_place > 0.0), ErrorKind::kConfig,
          "loss weights must be nonnegative and not both zero");
  require(source == KeypointSource::kGroundTruth || detector != nullptr, ErrorKind::kConfig,
          "detector keypoint source needs a detector");
}

std::vector<const Demonstration*> select_demos(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  std::vector<const Demonstration*> out;
  for (TaskKind kind : config.kinds) {
    require(contains(dataset.kinds, kind), ErrorKind::kConfig,
            std::string("dataset has no ") + defsim::to_string(kind) + " demonstrations");
    auto demos = dataset.of_kind(kind);
    const std::size_t n = config.per_task == 0 ? demos.size() : config.per_task;
    require(n <= demos.size(), ErrorKind::kConfig,
            "dataset holds " + std::to_string(demos.size()) + " " + defsim::to_string(kind) +
                " demonstrations, " + std::to_string(n) + " requested");
    out.insert(out.end(), demos.begin(), demos.begin() + static_cast<std::ptrdiff_t>(n));
  }
  require(!out.empty(), ErrorKind::kEmptyInput, "no demonstrations selected");
  return out;
}

std::vector<Example> build_examples(const Dataset& dataset, const TrainConfig& config) {
  std::vector<Example> out;
  const std::size_t size = dataset.image_size;
  for (const Demonstration* d : select_demos(dataset, config)) {
    KeypointSet goal = d->goal_keypoints;
    if (config.source == KeypointSource::kDetector)
      goal = keypointnet::detect_keypoints({d->goal_observation(size)}, *config.detector).front();
    for (const DemoStep& s : d->steps) {
      KeypointSet current = s.keypoints;
      if (config.source == KeypointSource::kDetector)
        current = keypointnet::detect_keypoints({s.observation(size)}, *config.detector).front();
      Label label = label_from_step(s.action, current, goal, size);
      out.push_back({d->kind, std::move(current), goal, label});
    }
  }
  require(!out.empty(), ErrorKind::kEmptyInput, "selected demonstrations hold no steps");
  return out;
}

keypointnet::DetectorSample detector_sample(const std::vector<TaskKind>& kinds, std::uint64_t seed, Split split,
                                            std::size_t index, std::size_t keypoints, std::size_t image_size) {
  require(!kinds.empty(), ErrorKind::kEmptyInput, "detector corpus needs at least one task kind");
  const std::size_t task_index = index / 3;
  const TaskKind kind = kinds[task_index % kinds.size()];
  const defsim::TaskInstance task =
      defsim::sample_task(kind, task_seed(mix_seed(seed, 0x646574ULL), kind, task_index, split), image_size);
  DeformState state = task.initial;
  if (index % 3 == 1) {
    state = task.goal;
  } else if (index % 3 == 2) {
    Rng rng(mix_seed(task.seed, 0x6465740001ULL));
    state = defsim::apply_pick_place(state, defsim::scripted_expert(state, task.goal, &rng));
  }
  return {defsim::render(state, image_size, image_size),
          defsim::ground_truth_keypoints(state, keypoints, image_size, image_size)};
}

TrainReport fit_planner(const std::vector<Example>& examples, diffcore::ParamStore& store,
                        const PlannerForward& forward, const TrainConfig& config, std::size_t image_size) {
  config.validate();
  require(!examples.empty(), ErrorKind::kEmptyInput, "no training examples");
  Rng rng(config.seed);
  auto state = diffcore::make_optimizer_state(store, config.adam);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  report.examples = examples.size();
  for (std::size_t epoch = 0; epoch < config.effective_epochs(); ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, order.size() - start);
      // Equal-shape groups keep every group a dense [B x m x 2] batch.
      std::map<std::pair<std::size_t, std::size_t>, std::vector<const Example*>> groups;
      for (std::size_t j = 0; j < b; ++j) {
        const Example& e = examples[order[start + j]];
        groups[{e.current.size(), e.goal.size()}].push_back(&e);
      }
      Tape tape;
      Var loss;
      for (const auto& [shape, members] : groups) {
        std::vector<const KeypointSet*> cur, goal;
        std::vector<std::size_t> picks, places;
        for (const Example* e : members) {
          cur.push_back(&e->current);
          goal.push_back(&e->goal);
          picks.push_back(e->label.pick);
          places.push_back(e->label.place);
        }
        localgnn::PolicyOutput out =
            forward(tape.constant(localgnn::stack_normalized(cur, image_size, image_size)),
                    tape.constant(localgnn::stack_normalized(goal, image_size, image_size)));
        Var part = diffcore::scale(localgnn::policy_loss(out, picks, places, config.w_pick, config.w_place),
                                   double(members.size()) / double(b));
        loss = loss.valid() ? diffcore::add(loss, part) : part;

        const Tensor& lp = out.pick_logits.value();
        const Tensor& lq = out.place_logits.value();
        for (std::size_t i = 0; i < members.size(); ++i) {
          auto row_argmax = [](const Tensor& t, std::size_t row) {
            const std::size_t n = t.dim(1);
            return localgnn::argmax_first(std::vector<double>(t.raw() + row * n, t.raw() + (row + 1) * n));
          };
          if (row_argmax(lp, i) == picks[i] && row_argmax(lq, i) == places[i]) ++correct;
        }
      }
      tape.backward(loss);
      if (config.clip_norm > 0.0) diffcore::clip_grad_norm(store, config.clip_norm);
      diffcore::adam_step(store, state);
      total += loss.value().item() * double(b);
    }
    const double epoch_loss = total / double(examples.size());
    const double accuracy = double(correct) / double(examples.size());
    report.epoch_loss.push_back(epoch_loss);
    report.epoch_accuracy.push_back(accuracy);
    if (config.on_epoch) config.on_epoch(epoch, epoch_loss, accuracy);
  }
  return report;
}

TrainedPolicy train_policy(const Dataset& dataset, const TrainConfig& config, localgnn::GnnConfig architecture) {
  std::vector<Example> examples = build_examples(dataset, config);
  architecture.keypoints = examples.front().current.size();
  architecture.width = architecture.height = dataset.image_size;
  Rng init_rng(mix_seed(config.seed, 0x706f6c696379ULL));
  TrainedPolicy out{localgnn::init_policy(architecture, init_rng), {}};
  localgnn::PolicyParams& params = out.params;
  out.report = fit_planner(
      examples, params.store, [&params](Var cur, Var goal) { return localgnn::policy_forward(cur, goal, params); },
      config, dataset.image_size);
  out.report.demonstrations = select_demos(dataset, config).size();
  return out;
}

}  // namespace rgc::trainkit
