#include "vrae/optim.hpp"

#include "vrae/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace vrae {

void adam_step(std::span<const NamedParameter<float>> params, AdamState& state) {
  for (const auto& [name, param] : params) {
    if (param->grad.shape() != param->value.shape()) {
      throw std::invalid_argument("adam_step: missing or misshapen gradient for parameter '" + name + "'");
    }
  }
  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const kernels::AdamCoeffs coeffs{
      static_cast<float>(state.hyper.lr),
      static_cast<float>(state.hyper.beta1),
      static_cast<float>(state.hyper.beta2),
      static_cast<float>(state.hyper.epsilon),
      static_cast<float>(1.0 - std::pow(state.hyper.beta1, t)),
      static_cast<float>(1.0 - std::pow(state.hyper.beta2, t)),
  };
  const auto& table = kernels::active();
  for (const auto& [name, param] : params) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.shape() != param->value.shape()) m = Tensor4(param->value.shape());
    if (v.shape() != param->value.shape()) v = Tensor4(param->value.shape());
    table.adam(param->value.data(), m.data(), v.data(), param->grad.data(), param->value.size(), coeffs);
  }
}

}  // namespace vrae
