#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "rgc/benchkit/mlp.hpp"
#include "rgc/keypointnet/detector.hpp"
#include "rgc/localgnn/policy.hpp"

namespace rgc::benchkit {

struct CapacityOptions {
  std::size_t timing_runs = 100;
  std::size_t warmup_runs = 10;
  std::uint64_t seed = 0;
};

struct CapacityFigures {
  std::string descriptor;
  /// Forward FLOPs of one state/goal pair as recorded op by op on the tape,
  /// next to the architecture's closed form.
  std::uint64_t flops = 0;
  std::uint64_t closed_form_flops = 0;
  std::size_t parameters = 0;
  std::size_t closed_form_parameters = 0;
  /// Element count of the checkpoint the model was loaded from, when known.
  std::optional<std::size_t> checkpoint_elements;
  /// Median wall-clock seconds of one forward pass.
  double inference_seconds = 0.0;
  std::size_t timing_runs = 0;

  std::optional<std::string> detector_descriptor;
  std::uint64_t detector_flops = 0;
  std::uint64_t detector_closed_form_flops = 0;
  std::size_t detector_parameters = 0;
  std::size_t detector_closed_form_parameters = 0;
  double detector_inference_seconds = 0.0;
};

/// Relative difference |a - b| / b (0 when both are 0).
double relative_gap(double counted, double closed_form);

CapacityFigures count_capacity(const localgnn::PolicyParams& policy, const keypointnet::DetectorParams* detector = nullptr,
                               const CapacityOptions& options = {});
CapacityFigures count_capacity(const MlpParams& policy, const keypointnet::DetectorParams* detector = nullptr,
                               const CapacityOptions& options = {});

std::string capacity_text(const CapacityFigures& figures);
std::string capacity_kv(const CapacityFigures& figures);

}  // namespace rgc::benchkit
