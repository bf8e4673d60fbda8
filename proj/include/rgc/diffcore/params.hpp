#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <string_view>

#include "rgc/common/rng.hpp"
#include "rgc/diffcore/tensor.hpp"

namespace rgc::diffcore {

/// A named learnable tensor and its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered collection of parameters. References returned by add()/get() stay
/// valid for the lifetime of the store.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  const Parameter* find(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_elements() const noexcept;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// Uniform in +-sqrt(6 / fan_in), for layers followed by ReLU.
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace rgc::diffcore
