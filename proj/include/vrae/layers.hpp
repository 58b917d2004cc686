#pragma once

// Forward and gradient computation for every layer type the network uses.
// Templates are instantiated for float (training/inference, SIMD kernels)
// and double (reference path for finite-difference checks).

#include "vrae/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vrae {

enum class PadMode { zero, reflect };

enum class Mode { train, eval };

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad = 0;
  PadMode pad_mode = PadMode::zero;
  bool has_bias = false;

  /// Output of a regular convolution: floor((h + 2 pad - k) / s) + 1.
  Shape output_shape(const Shape& input) const;
  /// Output of the transposed convolution: (h - 1) s - 2 pad + k.
  Shape transposed_output_shape(const Shape& input) const;

  /// (out, in, kh, kw)
  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
  /// (in, out, kh, kw)
  Shape transposed_weight_shape() const { return {in_channels, out_channels, kernel_h, kernel_w}; }
  Shape bias_shape() const { return {out_channels, 1, 1, 1}; }

  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Gradients of one layer call: parameters keyed by name ("weight", "bias",
/// "gamma", "beta"), plus the gradient with respect to the layer input.
template <typename T>
struct LayerGradients {
  std::map<std::string, BasicTensor<T>> params;
  BasicTensor<T> input;
};

/// Per-channel vectors (gamma, beta, running stats, biases) use shape (c, 1, 1, 1).
inline Shape channel_shape(std::size_t channels) { return {channels, 1, 1, 1}; }

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvSpec& spec, const BasicTensor<T>& weights,
                              const BasicTensor<T>* bias = nullptr);

template <typename T>
LayerGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvSpec& spec, const BasicTensor<T>& weights,
                                  const BasicTensor<T>& upstream, bool need_input_grad = true);

/// Weights are laid out (in, out, kh, kw). Zero padding only.
template <typename T>
BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>& input, const ConvSpec& spec,
                                         const BasicTensor<T>& weights, const BasicTensor<T>* bias = nullptr);

template <typename T>
LayerGradients<T> transposed_conv2d_backward(const BasicTensor<T>& input, const ConvSpec& spec,
                                             const BasicTensor<T>& weights, const BasicTensor<T>& upstream,
                                             bool need_input_grad = true);

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

template <typename T>
struct RunningStats {
  BasicTensor<T> mean;
  BasicTensor<T> var;

  static RunningStats initial(std::size_t channels) {
    return {BasicTensor<T>(channel_shape(channels), T(0)), BasicTensor<T>(channel_shape(channels), T(1))};
  }
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::train;
  BasicTensor<T> normalized;
  std::vector<T> inv_std;
};

/// Train mode normalizes with batch statistics over (n, h, w) and updates the
/// running statistics (unbiased variance); eval mode reads running statistics only.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                                 const BasicTensor<T>& beta, RunningStats<T>& stats, Mode mode,
                                 BatchNormCache<T>* cache = nullptr, const BatchNormOptions& options = {});

template <typename T>
LayerGradients<T> batchnorm_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

/// Takes the ReLU output (not its input); zero-crossings route no gradient.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream);

/// ResNet stem pooling: 3x3 window, stride 2, padding 1. Padded cells never win.
template <typename T>
BasicTensor<T> maxpool3s2_forward(const BasicTensor<T>& input, std::vector<std::uint32_t>* argmax = nullptr);

template <typename T>
BasicTensor<T> maxpool3s2_backward(const BasicTensor<T>& upstream, const std::vector<std::uint32_t>& argmax,
                                   const Shape& input_shape);

/// Size-preserving 3x3 mean filter with reflect padding of 1.
template <typename T>
BasicTensor<T> avgpool3s1_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> adaptive_avgpool_forward(const BasicTensor<T>& input, std::size_t target_h, std::size_t target_w);

template <typename T>
BasicTensor<T> adaptive_avgpool_backward(const BasicTensor<T>& upstream, const Shape& input_shape);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
void add_inplace(BasicTensor<T>& target, const BasicTensor<T>& other);

template <typename T>
struct MseResult {
  double loss = 0.0;
  BasicTensor<T> grad;
};

/// Mean of squared differences over every element, with its gradient wrt pred.
template <typename T>
MseResult<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

}  // namespace vrae
