#include "rgc/benchkit/capacity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "rgc/common/error.hpp"
#include "rgc/defsim/render.hpp"
#include "rgc/defsim/tasks.hpp"
#include "rgc/diffcore/tape.hpp"

namespace rgc::benchkit {

namespace {

using diffcore::Tape;
using diffcore::Tensor;

double median_seconds(const std::function<void()>& body, const CapacityOptions& options) {
  for (std::size_t i = 0; i < options.warmup_runs; ++i) body();
  std::vector<double> times;
  for (std::size_t i = 0; i < options.timing_runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  if (times.empty()) return 0.0;
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

KeypointSet random_keypoints(std::size_t m, std::size_t width, std::size_t height, Rng& rng) {
  KeypointSet out;
  for (std::size_t i = 0; i < m; ++i)
    out.push_back({rng.uniform(0.0, double(width) - 1.0), rng.uniform(0.0, double(height) - 1.0)});
  return out;
}

void add_detector(CapacityFigures& f, const keypointnet::DetectorParams& detector, const CapacityOptions& options) {
  keypointnet::DetectorParams copy = detector;
  const auto& c = copy.config;
  const defsim::TaskInstance task = defsim::sample_task(defsim::TaskKind::kStraightening, options.seed, c.width);
  const defsim::Observation obs = defsim::render(task.initial, c.width, c.height);
  Tape tape;
  Tensor image = keypointnet::observation_tensor(obs).reshaped({1, 3, c.height, c.width});
  keypointnet::rescale_keypoints(keypointnet::feature_keypoints(keypointnet::detector_maps(tape.constant(image), copy)),
                                 c);
  f.detector_descriptor = c.descriptor();
  f.detector_flops = tape.flops();
  f.detector_closed_form_flops = keypointnet::detector_forward_flops(c);
  f.detector_parameters = copy.store.total_elements();
  f.detector_closed_form_parameters = keypointnet::detector_parameter_count(c);
  f.detector_inference_seconds = median_seconds([&] { (void)keypointnet::detector_forward(obs, detector); }, options);
}

}  // namespace

double relative_gap(double counted, double closed_form) {
  if (counted == closed_form) return 0.0;
  return std::abs(counted - closed_form) / std::abs(closed_form);
}

CapacityFigures count_capacity(const localgnn::PolicyParams& policy, const keypointnet::DetectorParams* detector,
                               const CapacityOptions& options) {
  const auto& c = policy.config;
  Rng rng(options.seed);
  const KeypointSet cur = random_keypoints(c.keypoints, c.width, c.height, rng);
  const KeypointSet goal = random_keypoints(c.keypoints, c.width, c.height, rng);

  CapacityFigures f;
  f.descriptor = c.descriptor();
  localgnn::PolicyParams copy = policy;
  Tape tape;
  localgnn::policy_forward(tape.constant(localgnn::stack_normalized({&cur}, c.width, c.height)),
                           tape.constant(localgnn::stack_normalized({&goal}, c.width, c.height)), copy);
  f.flops = tape.flops();
  f.closed_form_flops = localgnn::forward_flops(c, c.keypoints, c.keypoints);
  f.parameters = policy.store.total_elements();
  f.closed_form_parameters = localgnn::parameter_count(c);
  f.timing_runs = options.timing_runs;
  f.inference_seconds = median_seconds([&] { (void)localgnn::policy_forward(cur, goal, policy); }, options);
  if (detector) add_detector(f, *detector, options);
  return f;
}

CapacityFigures count_capacity(const MlpParams& policy, const keypointnet::DetectorParams* detector,
                               const CapacityOptions& options) {
  const auto& c = policy.config;
  Rng rng(options.seed);
  const KeypointSet cur = random_keypoints(c.keypoints, c.width, c.height, rng);
  const KeypointSet goal = random_keypoints(c.keypoints, c.width, c.height, rng);

  CapacityFigures f;
  f.descriptor = c.descriptor();
  MlpParams copy = policy;
  Tape tape;
  mlp_forward(tape.constant(localgnn::stack_normalized({&cur}, c.width, c.height)),
              tape.constant(localgnn::stack_normalized({&goal}, c.width, c.height)), copy);
  f.flops = tape.flops();
  f.closed_form_flops = mlp_forward_flops(c);
  f.parameters = policy.store.total_elements();
  f.closed_form_parameters = mlp_parameter_count(c);
  f.timing_runs = options.timing_runs;
  f.inference_seconds = median_seconds([&] { (void)mlp_baseline_policy(cur, goal, policy); }, options);
  if (detector) add_detector(f, *detector, options);
  return f;
}

std::string capacity_text(const CapacityFigures& f) {
  std::ostringstream out;
  out << "policy " << f.descriptor << "\n";
  out << "  flops " << f.flops << " counted, " << f.closed_form_flops << " closed form\n";
  out << "  parameters " << f.parameters << " counted, " << f.closed_form_parameters << " closed form";
  if (f.checkpoint_elements) out << ", " << *f.checkpoint_elements << " in checkpoint";
  out << "\n  inference " << std::fixed << std::setprecision(3) << f.inference_seconds * 1e3 << " ms (median of "
      << f.timing_runs << ")\n";
  if (f.detector_descriptor) {
    out << "detector " << *f.detector_descriptor << "\n";
    out << "  flops " << f.detector_flops << " counted, " << f.detector_closed_form_flops << " closed form\n";
    out << "  parameters " << f.detector_parameters << " counted, " << f.detector_closed_form_parameters
        << " closed form\n";
    out << "  inference " << f.detector_inference_seconds * 1e3 << " ms (median of " << f.timing_runs << ")\n";
  }
  return out.str();
}

std::string capacity_kv(const CapacityFigures& f) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "policy_model=" << f.descriptor << "\n";
  out << "policy_flops=" << f.flops << "\n";
  out << "policy_flops_closed_form=" << f.closed_form_flops << "\n";
  out << "policy_parameters=" << f.parameters << "\n";
  out << "policy_parameters_closed_form=" << f.closed_form_parameters << "\n";
  if (f.checkpoint_elements) out << "policy_checkpoint_elements=" << *f.checkpoint_elements << "\n";
  out << "policy_inference_seconds=" << f.inference_seconds << "\n";
  out << "timing_runs=" << f.timing_runs << "\n";
  if (f.detector_descriptor) {
    out << "detector_model=" << *f.detector_descriptor << "\n";
    out << "detector_flops=" << f.detector_flops << "\n";
    out << "detector_flops_closed_form=" << f.detector_closed_form_flops << "\n";
    out << "detector_parameters=" << f.detector_parameters << "\n";
    out << "detector_parameters_closed_form=" << f.detector_closed_form_parameters << "\n";
    out << "detector_inference_seconds=" << f.detector_inference_seconds << "\n";
  }
  return out.str();
}

}  // namespace rgc::benchkit
