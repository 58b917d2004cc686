#include "vrae/modules.hpp"

namespace vrae {

template <typename T>
Conv2d<T>::Conv2d(std::string name_, const ConvSpec& spec_) : name(std::move(name_)), spec(spec_) {
  spec.validate();
  weight.value = BasicTensor<T>(spec.weight_shape());
  weight.rank = 4;
  if (spec.has_bias) {
    bias.value = BasicTensor<T>(spec.bias_shape());
    bias.rank = 1;
  }
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x, bool keep) {
  if (keep) cached_input = x;
  return conv2d_forward(x, spec, weight.value, spec.has_bias ? &bias.value : nullptr);
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& dy, bool need_input_grad) {
  auto grads = conv2d_backward(cached_input, spec, weight.value, dy, need_input_grad);
  add_inplace(weight.grad, grads.params.at("weight"));
  if (spec.has_bias) add_inplace(bias.grad, grads.params.at("bias"));
  return std::move(grads.input);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name_, const ConvSpec& spec_) : name(std::move(name_)), spec(spec_) {
  spec.validate();
  weight.value = BasicTensor<T>(spec.transposed_weight_shape());
  weight.rank = 4;
  if (spec.has_bias) {
    bias.value = BasicTensor<T>(spec.bias_shape());
    bias.rank = 1;
  }
}

template <typename T>
BasicTensor<T> ConvTranspose2d<T>::forward(const BasicTensor<T>& x, bool keep) {
  if (keep) cached_input = x;
  return transposed_conv2d_forward(x, spec, weight.value, spec.has_bias ? &bias.value : nullptr);
}

template <typename T>
BasicTensor<T> ConvTranspose2d<T>::backward(const BasicTensor<T>& dy) {
  auto grads = transposed_conv2d_backward(cached_input, spec, weight.value, dy, true);
  add_inplace(weight.grad, grads.params.at("weight"));
  if (spec.has_bias) add_inplace(bias.grad, grads.params.at("bias"));
  return std::move(grads.input);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name_, std::size_t channels)
    : name(std::move(name_)), stats(RunningStats<T>::initial(channels)) {
  gamma.value = BasicTensor<T>(channel_shape(channels), T(1));
  gamma.rank = 1;
  beta.value = BasicTensor<T>(channel_shape(channels), T(0));
  beta.rank = 1;
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& x, Mode mode, bool keep) {
  return batchnorm_forward(x, gamma.value, beta.value, stats, mode, keep ? &cache : nullptr);
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::backward(const BasicTensor<T>& dy) {
  auto grads = batchnorm_backward(dy, gamma.value, cache);
  add_inplace(gamma.grad, grads.params.at("gamma"));
  add_inplace(beta.grad, grads.params.at("beta"));
  return std::move(grads.input);
}

namespace {

ConvSpec conv_spec(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                   PadMode mode = PadMode::zero, bool bias = false) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = k;
  s.stride_h = s.stride_w = stride;
  s.pad = pad;
  s.pad_mode = mode;
  s.has_bias = bias;
  return s;
}

template <typename T>
void notify(const FeatureObserver<T>* observer, int block, const Conv2d<T>& conv, const BasicTensor<T>& in,
            const BasicTensor<T>& out) {
  if (observer != nullptr && *observer) (*observer)(FeatureEvent<T>{block, conv.name, conv.spec, conv.weight.value, in, out});
}

}  // namespace

template <typename T>
Stem<T>::Stem(std::string prefix, std::size_t in_channels, std::size_t width)
    : conv(prefix + ".conv", conv_spec(in_channels, width, 7, 2, 3)), bn(prefix + ".bn", width) {}

template <typename T>
BasicTensor<T> Stem<T>::forward(const BasicTensor<T>& x, Mode mode, bool keep, const FeatureObserver<T>* observer) {
  auto c = conv.forward(x, keep);
  notify(observer, 1, conv, x, c);
  auto act = relu_forward(bn.forward(c, mode, keep));
  auto pooled = maxpool3s2_forward(act, keep ? &argmax : nullptr);
  if (keep) activated = std::move(act);
  return pooled;
}

template <typename T>
void Stem<T>::backward(const BasicTensor<T>& dy) {
  auto d = maxpool3s2_backward(dy, argmax, activated.shape());
  d = relu_backward(activated, d);
  conv.backward(bn.backward(d), false);
}

template <typename T>
Bottleneck<T>::Bottleneck(std::string prefix, std::size_t in_channels, std::size_t mid, std::size_t out_channels,
                          std::size_t stride)
    : conv1(prefix + ".conv1", conv_spec(in_channels, mid, 1, 1, 0)),
      conv2(prefix + ".conv2", conv_spec(mid, mid, 3, stride, 1)),
      conv3(prefix + ".conv3", conv_spec(mid, out_channels, 1, 1, 0)),
      bn1(prefix + ".bn1", mid),
      bn2(prefix + ".bn2", mid),
      bn3(prefix + ".bn3", out_channels) {
  if (stride != 1 || in_channels != out_channels) {
    down_conv.emplace(prefix + ".downsample.conv", conv_spec(in_channels, out_channels, 1, stride, 0));
    down_bn.emplace(prefix + ".downsample.bn", out_channels);
  }
}

template <typename T>
BasicTensor<T> Bottleneck<T>::forward(const BasicTensor<T>& x, Mode mode, bool keep, int block,
                                      const FeatureObserver<T>* observer) {
  auto c1 = conv1.forward(x, keep);
  notify(observer, block, conv1, x, c1);
  auto r1 = relu_forward(bn1.forward(c1, mode, keep));
  auto c2 = conv2.forward(r1, keep);
  notify(observer, block, conv2, r1, c2);
  auto r2 = relu_forward(bn2.forward(c2, mode, keep));
  auto c3 = conv3.forward(r2, keep);
  notify(observer, block, conv3, r2, c3);
  auto main = bn3.forward(c3, mode, keep);
  if (down_conv) {
    auto cd = down_conv->forward(x, keep);
    notify(observer, block, *down_conv, x, cd);
    add_inplace(main, down_bn->forward(cd, mode, keep));
  } else {
    add_inplace(main, x);
  }
  auto result = relu_forward(main);
  if (keep) {
    a1 = std::move(r1);
    a2 = std::move(r2);
    out = result;
  }
  return result;
}

template <typename T>
BasicTensor<T> Bottleneck<T>::backward(const BasicTensor<T>& dy) {
  const auto d = relu_backward(out, dy);
  auto g = conv3.backward(bn3.backward(d), true);
  g = relu_backward(a2, g);
  g = conv2.backward(bn2.backward(g), true);
  g = relu_backward(a1, g);
  auto dx = conv1.backward(bn1.backward(g), true);
  if (down_conv) {
    add_inplace(dx, down_conv->backward(down_bn->backward(d), true));
  } else {
    add_inplace(dx, d);
  }
  return dx;
}

template <typename T>
AuxBlock<T>::AuxBlock(std::string prefix, std::size_t in_channels, std::size_t width, std::size_t target_h_,
                      std::size_t target_w_)
    : target_h(target_h_),
      target_w(target_w_),
      conv(prefix + ".conv", conv_spec(in_channels, width, 3, 1, 1, PadMode::reflect)),
      bn(prefix + ".bn", width) {}

template <typename T>
BasicTensor<T> AuxBlock<T>::forward(const BasicTensor<T>& x, Mode mode, bool keep) {
  auto pooled = adaptive_avgpool_forward(x, target_h, target_w);
  auto result = relu_forward(bn.forward(conv.forward(pooled, keep), mode, keep));
  if (keep) out = result;
  return result;
}

template <typename T>
void AuxBlock<T>::backward(const BasicTensor<T>& dy) {
  conv.backward(bn.backward(relu_backward(out, dy)), false);
}

template <typename T>
UpLayer<T>::UpLayer(std::string name, std::size_t in_channels, std::size_t out_channels)
    : deconv(std::move(name), conv_spec(in_channels, out_channels, 4, 2, 1, PadMode::zero, true)) {}

template <typename T>
BasicTensor<T> UpLayer<T>::forward(const BasicTensor<T>& x, bool keep) {
  auto result = relu_forward(deconv.forward(x, keep));
  if (keep) out = result;
  return result;
}

template <typename T>
BasicTensor<T> UpLayer<T>::backward(const BasicTensor<T>& dy) {
  return deconv.backward(relu_backward(out, dy));
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct ConvTranspose2d<float>;
template struct ConvTranspose2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template struct Stem<float>;
template struct Stem<double>;
template struct Bottleneck<float>;
template struct Bottleneck<double>;
template struct AuxBlock<float>;
template struct AuxBlock<double>;
template struct UpLayer<float>;
template struct UpLayer<double>;

}  // namespace vrae
