#pragma once

#include <cstdint>
#include <vector>

#include "rgc/diffcore/params.hpp"

namespace rgc::diffcore {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments per parameter, in ParamStore order.
struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

OptimizerState make_optimizer_state(const ParamStore& params, AdamConfig config = {});

/// Scales every gradient by min(1, max_norm / ||g||) where ||g|| is the
/// global L2 norm over the store. Returns the norm before scaling.
double clip_grad_norm(ParamStore& params, double max_norm);

/// One bias-corrected Adam update using each Parameter::grad, applied in
/// place. Gradients are zeroed afterwards.
void adam_step(ParamStore& params, OptimizerState& state);

}  // namespace rgc::diffcore
