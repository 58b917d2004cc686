#pragma once

// Stateful building blocks: each owns its parameters, caches what its backward
// pass needs when asked to, and accumulates parameter gradients.

#include "vrae/layers.hpp"
#include "vrae/parameter.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vrae {

/// Emitted for every main-encoder convolution during an instrumented forward.
/// `block` is 1 for the stem and i for main stage i.
template <typename T>
struct FeatureEvent {
  int block;
  std::string_view layer;
  const ConvSpec& spec;
  const BasicTensor<T>& weight;
  const BasicTensor<T>& input;
  const BasicTensor<T>& output;
};

template <typename T>
using FeatureObserver = std::function<void(const FeatureEvent<T>&)>;

template <typename T>
struct Conv2d {
  std::string name;
  ConvSpec spec;
  Parameter<T> weight;
  Parameter<T> bias;
  BasicTensor<T> cached_input;

  Conv2d() = default;
  Conv2d(std::string name, const ConvSpec& spec);

  BasicTensor<T> forward(const BasicTensor<T>& x, bool keep);
  BasicTensor<T> backward(const BasicTensor<T>& dy, bool need_input_grad);

  template <typename F>
  void visit(F&& f) {
    f(name + ".weight", weight);
    if (spec.has_bias) f(name + ".bias", bias);
  }
};

template <typename T>
struct ConvTranspose2d {
  std::string name;
  ConvSpec spec;
  Parameter<T> weight;
  Parameter<T> bias;
  BasicTensor<T> cached_input;

  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, const ConvSpec& spec);

  BasicTensor<T> forward(const BasicTensor<T>& x, bool keep);
  BasicTensor<T> backward(const BasicTensor<T>& dy);

  template <typename F>
  void visit(F&& f) {
    f(name + ".weight", weight);
    if (spec.has_bias) f(name + ".bias", bias);
  }
};

template <typename T>
struct BatchNorm2d {
  std::string name;
  Parameter<T> gamma;
  Parameter<T> beta;
  RunningStats<T> stats;
  BatchNormCache<T> cache;

  BatchNorm2d() = default;
  BatchNorm2d(std::string name, std::size_t channels);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, bool keep);
  BasicTensor<T> backward(const BasicTensor<T>& dy);

  template <typename F>
  void visit(F&& f) {
    f(name + ".gamma", gamma);
    f(name + ".beta", beta);
  }
  template <typename F>
  void visit_buffers(F&& f) {
    f(name + ".running_mean", stats.mean);
    f(name + ".running_var", stats.var);
  }
};

/// ResNet stem: 7x7/2 conv, BN, ReLU, 3x3/2 max pool.
template <typename T>
struct Stem {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  BasicTensor<T> activated;
  std::vector<std::uint32_t> argmax;

  Stem() = default;
  Stem(std::string prefix, std::size_t in_channels, std::size_t width);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, bool keep, const FeatureObserver<T>* observer);
  void backward(const BasicTensor<T>& dy);

  template <typename F>
  void visit(F&& f) {
    conv.visit(f);
    bn.visit(f);
  }
  template <typename F>
  void visit_buffers(F&& f) {
    bn.visit_buffers(f);
  }
};

/// 1x1 reduce, 3x3 spatial (carries the stride), 1x1 expand, plus an identity
/// or projected shortcut, then ReLU.
template <typename T>
struct Bottleneck {
  Conv2d<T> conv1, conv2, conv3;
  BatchNorm2d<T> bn1, bn2, bn3;
  std::optional<Conv2d<T>> down_conv;
  std::optional<BatchNorm2d<T>> down_bn;
  BasicTensor<T> a1, a2, out;

  Bottleneck() = default;
  Bottleneck(std::string prefix, std::size_t in_channels, std::size_t mid, std::size_t out_channels,
             std::size_t stride);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, bool keep, int block,
                         const FeatureObserver<T>* observer);
  BasicTensor<T> backward(const BasicTensor<T>& dy);

  template <typename F>
  void visit(F&& f) {
    conv1.visit(f);
    bn1.visit(f);
    conv2.visit(f);
    bn2.visit(f);
    conv3.visit(f);
    bn3.visit(f);
    if (down_conv) {
      down_conv->visit(f);
      down_bn->visit(f);
    }
  }
  template <typename F>
  void visit_buffers(F&& f) {
    bn1.visit_buffers(f);
    bn2.visit_buffers(f);
    bn3.visit_buffers(f);
    if (down_bn) down_bn->visit_buffers(f);
  }
};

/// Input-conditioned feature embedding: adaptive average pool of the raw input
/// to the stage's spatial size, 3x3 reflect-padded conv, BN, ReLU.
template <typename T>
struct AuxBlock {
  std::size_t target_h = 0;
  std::size_t target_w = 0;
  Conv2d<T> conv;
  BatchNorm2d<T> bn;
  BasicTensor<T> out;

  AuxBlock() = default;
  AuxBlock(std::string prefix, std::size_t in_channels, std::size_t width, std::size_t target_h,
           std::size_t target_w);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, bool keep);
  /// Parameter gradients only; the raw input needs no gradient.
  void backward(const BasicTensor<T>& dy);

  template <typename F>
  void visit(F&& f) {
    conv.visit(f);
    bn.visit(f);
  }
  template <typename F>
  void visit_buffers(F&& f) {
    bn.visit_buffers(f);
  }
};

/// Transposed conv followed by ReLU.
template <typename T>
struct UpLayer {
  ConvTranspose2d<T> deconv;
  BasicTensor<T> out;

  UpLayer() = default;
  UpLayer(std::string name, std::size_t in_channels, std::size_t out_channels);

  BasicTensor<T> forward(const BasicTensor<T>& x, bool keep);
  BasicTensor<T> backward(const BasicTensor<T>& dy);

  template <typename F>
  void visit(F&& f) {
    deconv.visit(f);
  }
};

}  // namespace vrae
