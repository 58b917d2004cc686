#pragma once

#include "vrae/tensor.hpp"

#include <string>

namespace vrae {

/// A trainable tensor and its accumulated gradient. `rank` is the logical rank
/// used on disk: 4 for kernels, 1 for per-channel vectors.
template <typename T>
struct Parameter {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  int rank = 4;

  void zero_grad() { grad = BasicTensor<T>(value.shape()); }
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

/// Non-trainable state (batch-norm running statistics).
template <typename T>
struct NamedBuffer {
  std::string name;
  BasicTensor<T>* value;
};

}  // namespace vrae
