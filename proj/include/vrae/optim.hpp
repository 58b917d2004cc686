#pragma once

#include "vrae/parameter.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>

namespace vrae {

struct AdamHyperparams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyperparams hyper;
  std::uint64_t step = 0;
  std::map<std::string, Tensor4> first_moment;
  std::map<std::string, Tensor4> second_moment;
};

/// One bias-corrected Adam update over every parameter. Moments are created
/// lazily as zeros. Throws before touching anything if a gradient is missing
/// or misshapen.
void adam_step(std::span<const NamedParameter<float>> params, AdamState& state);

}  // namespace vrae
