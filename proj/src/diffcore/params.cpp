#include "rgc/diffcore/params.hpp"

#include <cmath>

#include "rgc/common/error.hpp"

namespace rgc::diffcore {

Parameter& ParamStore::add(std::string name, Tensor init) {
  require(find(name) == nullptr, ErrorKind::kConfig, "duplicate parameter name '" + name + "'");
  Tensor grad = Tensor::zeros_like(init);
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

const Parameter* ParamStore::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& ParamStore::get(std::string_view name) {
  return const_cast<Parameter&>(static_cast<const ParamStore&>(*this).get(name));
}

const Parameter& ParamStore::get(std::string_view name) const {
  const Parameter* p = find(name);
  require(p != nullptr, ErrorKind::kConfig, "no parameter named '" + std::string(name) + "'");
  return *p;
}

std::size_t ParamStore::total_elements() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace rgc::diffcore
