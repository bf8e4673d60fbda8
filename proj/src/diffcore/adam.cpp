#include "rgc/diffcore/adam.hpp"

#include <cmath>

#include "rgc/common/error.hpp"

namespace rgc::diffcore {

OptimizerState make_optimizer_state(const ParamStore& params, AdamConfig config) {
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.push_back(Tensor::zeros_like(p.value));
    state.second_moment.push_back(Tensor::zeros_like(p.value));
  }
  return state;
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  require(max_norm > 0.0, ErrorKind::kConfig, "gradient clipping norm must be positive");
  double sq = 0.0;
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.grad.numel(); ++i) sq += p.grad[i] * p.grad[i];
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params)
      for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] *= f;
  }
  return norm;
}

void adam_step(ParamStore& params, OptimizerState& state) {
  require(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
          ErrorKind::kDimension,
          "optimizer state tracks " + std::to_string(state.first_moment.size()) + " tensors, store has " +
              std::to_string(params.size()));
  std::size_t idx = 0;
  for (auto& p : params) {
    require(p.grad.shape() == p.value.shape() && state.first_moment[idx].shape() == p.value.shape() &&
                state.second_moment[idx].shape() == p.value.shape(),
            ErrorKind::kDimension, "adam_step shape mismatch for parameter '" + p.name + "'");
    ++idx;
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  idx = 0;
  for (auto& p : params) {
    Tensor& m = state.first_moment[idx];
    Tensor& v = state.second_moment[idx];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    p.grad.fill(0.0);
    ++idx;
  }
}

}  // namespace rgc::diffcore
