#include "vrae/model.hpp"

#include "vrae/init.hpp"

#include <algorithm>
#include <stdexcept>

namespace vrae {

std::string_view arch_name(Arch arch) { return arch == Arch::vrae ? "vrae" : "ae"; }

Arch parse_arch(std::string_view text) {
  if (text == "vrae") return Arch::vrae;
  if (text == "ae") return Arch::ae;
  throw std::invalid_argument("unknown architecture '" + std::string(text) + "' (expected vrae or ae)");
}

VraeConfig VraeConfig::reduced(Arch arch, int depth, std::size_t input_size, std::size_t width_divisor) {
  VraeConfig c;
  c.arch = arch;
  c.depth = depth;
  c.input_h = c.input_w = input_size;
  if (width_divisor == 0) throw std::invalid_argument("width divisor must be >= 1");
  for (auto& w : c.widths) w = std::max<std::size_t>(4, w / width_divisor);
  return c;
}

void VraeConfig::validate() const {
  if (depth < 2 || depth > 5) throw std::invalid_argument("depth must be in [2, 5], got " + std::to_string(depth));
  if (input_channels == 0) throw std::invalid_argument("input channels must be >= 1");
  const std::size_t factor = std::size_t{1} << decoder_layers();
  if (input_h == 0 || input_w == 0 || input_h % factor != 0 || input_w % factor != 0) {
    throw std::invalid_argument("input dims " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                                " must be positive multiples of " + std::to_string(factor) + " for depth " +
                                std::to_string(depth));
  }
  for (std::size_t i = 1; i < widths.size(); ++i) {
    if (widths[i] < 4) throw std::invalid_argument("bottleneck stage widths must be >= 4");
  }
  for (auto b : blocks) {
    if (b == 0) throw std::invalid_argument("every stage needs at least one block");
  }
}

std::string VraeConfig::label() const {
  return std::string(arch == Arch::vrae ? "VRAE" : "AE") + std::to_string(depth);
}

std::size_t VraeConfig::decoder_layers() const {
  // Stem halves twice; stage 2 keeps resolution; stages 3..5 halve once each.
  return depth <= 2 ? 2 : static_cast<std::size_t>(depth);
}

std::size_t VraeConfig::stage_h(int stage) const {
  const int halvings = stage <= 2 ? 2 : stage;
  return input_h >> halvings;
}

std::size_t VraeConfig::stage_w(int stage) const {
  const int halvings = stage <= 2 ? 2 : stage;
  return input_w >> halvings;
}

template <typename T>
BasicNetwork<T>::BasicNetwork(const VraeConfig& config) : config_(config) {
  config_.validate();
  const auto& w = config_.widths;
  stem_ = Stem<T>("stem", config_.input_channels, w[0]);
  std::size_t in = w[0];
  for (int stage = 2; stage <= config_.depth; ++stage) {
    const std::size_t out = w[static_cast<std::size_t>(stage - 1)];
    const std::size_t count = config_.blocks[static_cast<std::size_t>(stage - 2)];
    std::vector<Bottleneck<T>> blocks;
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t stride = (b == 0 && stage > 2) ? 2 : 1;
      blocks.emplace_back("stage" + std::to_string(stage) + ".block" + std::to_string(b), in, out / 4, out, stride);
      in = out;
    }
    stages_.push_back(std::move(blocks));
  }
  if (config_.arch == Arch::vrae) {
    for (int i = 1; i < config_.depth; ++i) {
      aux_.emplace_back("aux" + std::to_string(i), config_.input_channels, w[static_cast<std::size_t>(i - 1)],
                        config_.stage_h(i), config_.stage_w(i));
    }
  }
  const std::size_t layers = config_.decoder_layers();
  std::size_t channels = w[static_cast<std::size_t>(config_.depth - 1)];
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t next = l + 1 == layers ? config_.input_channels : std::max<std::size_t>(16, channels / 4);
    decoder_.emplace_back("decoder.up" + std::to_string(l + 1), channels, next);
    channels = next;
  }
}

template <typename T>
BasicNetwork<T> BasicNetwork<T>::build(const VraeConfig& config, std::uint64_t seed) {
  BasicNetwork net(config);
  net.init_parameters(seed);
  return net;
}

template <typename T>
template <typename F>
void BasicNetwork<T>::visit_main(F&& f) {
  stem_.visit(f);
  for (auto& stage : stages_) {
    for (auto& block : stage) block.visit(f);
  }
}

template <typename T>
template <typename F>
void BasicNetwork<T>::visit_aux(F&& f) {
  for (auto& a : aux_) a.visit(f);
}

template <typename T>
template <typename F>
void BasicNetwork<T>::visit_decoder(F&& f) {
  for (auto& layer : decoder_) layer.visit(f);
}

template <typename T>
void BasicNetwork<T>::init_parameters(std::uint64_t seed) {
  auto init_conv = [seed](const std::string& name, Parameter<T>& p, const ConvSpec& spec, bool transposed) {
    if (name.ends_with(".bias")) {
      p.value.fill(T(0));
      return;
    }
    double fan_in = static_cast<double>(spec.in_channels * spec.kernel_h * spec.kernel_w);
    // Each transposed-conv output receives kernel/stride taps per axis.
    if (transposed) fan_in /= static_cast<double>(spec.stride_h * spec.stride_w);
    kaiming_normal(p.value, fan_in, derive_seed(seed, name));
  };
  auto conv_visitor = [&](Conv2d<T>& conv) {
    conv.visit([&](const std::string& name, Parameter<T>& p) { init_conv(name, p, conv.spec, false); });
  };
  auto bn_visitor = [](BatchNorm2d<T>& bn) {
    bn.gamma.value.fill(T(1));
    bn.beta.value.fill(T(0));
  };
  conv_visitor(stem_.conv);
  bn_visitor(stem_.bn);
  for (auto& stage : stages_) {
    for (auto& b : stage) {
      for (auto* c : {&b.conv1, &b.conv2, &b.conv3}) conv_visitor(*c);
      for (auto* n : {&b.bn1, &b.bn2, &b.bn3}) bn_visitor(*n);
      if (b.down_conv) {
        conv_visitor(*b.down_conv);
        bn_visitor(*b.down_bn);
      }
    }
  }
  for (auto& a : aux_) {
    conv_visitor(a.conv);
    bn_visitor(a.bn);
  }
  for (auto& layer : decoder_) {
    layer.deconv.visit([&](const std::string& name, Parameter<T>& p) { init_conv(name, p, layer.deconv.spec, true); });
  }
  // Image-producing layer starts near zero output instead of unit variance.
  for (T& v : decoder_.back().deconv.weight.value.values()) v *= T(kOutputInitScale);
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward(const BasicTensor<T>& x, Mode mode, ForwardTrace<T>* trace,
                                        const FeatureObserver<T>* observer) {
  const Shape s = x.shape();
  if (s.n == 0 || s.c != config_.input_channels || s.h != config_.input_h || s.w != config_.input_w) {
    throw ShapeError("forward: input " + s.str() + " does not match network input (n, " +
                     std::to_string(config_.input_channels) + ", " + std::to_string(config_.input_h) + ", " +
                     std::to_string(config_.input_w) + ")");
  }
  const bool keep = mode == Mode::train;
  if (trace != nullptr) *trace = ForwardTrace<T>{};

  auto h = stem_.forward(x, mode, keep, observer);
  if (trace != nullptr) trace->stages.push_back(h);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (config_.arch == Arch::vrae) {
      auto injected = aux_[i].forward(x, mode, keep);
      require_same_shape(injected.shape(), h.shape(), "auxiliary fusion");
      add_inplace(h, injected);
      if (trace != nullptr) trace->auxiliary.push_back(std::move(injected));
    }
    const int block_id = static_cast<int>(i) + 2;
    for (auto& block : stages_[i]) h = block.forward(h, mode, keep, block_id, observer);
    if (trace != nullptr) trace->stages.push_back(h);
  }
  for (auto& layer : decoder_) {
    h = layer.forward(h, keep);
    if (trace != nullptr) trace->decoder.push_back(h);
  }
  if (trace != nullptr) trace->output = h;
  has_cache_ = keep;
  return h;
}

template <typename T>
void BasicNetwork<T>::backward(const BasicTensor<T>& grad_output) {
  if (!has_cache_) throw std::logic_error("backward requires a preceding train-mode forward");
  for (auto& np : parameters()) {
    if (np.param->grad.shape() != np.param->value.shape()) np.param->zero_grad();
  }
  auto g = grad_output;
  for (auto it = decoder_.rbegin(); it != decoder_.rend(); ++it) g = it->backward(g);
  for (std::size_t i = stages_.size(); i-- > 0;) {
    for (auto it = stages_[i].rbegin(); it != stages_[i].rend(); ++it) g = it->backward(g);
    // g is now the gradient of E_i's input, shared by x_{i-1} and x'_{i-1}.
    if (config_.arch == Arch::vrae) aux_[i].backward(g);
  }
  stem_.backward(g);
}

template <typename T>
void BasicNetwork<T>::zero_grad() {
  for (auto& np : parameters()) np.param->zero_grad();
}

template <typename T>
std::vector<NamedParameter<T>> BasicNetwork<T>::parameters() {
  std::vector<NamedParameter<T>> out;
  auto collect = [&out](const std::string& name, Parameter<T>& p) { out.push_back({name, &p}); };
  visit_main(collect);
  visit_aux(collect);
  visit_decoder(collect);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> BasicNetwork<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  auto collect = [&out](const std::string& name, BasicTensor<T>& b) { out.push_back({name, &b}); };
  stem_.visit_buffers(collect);
  for (auto& stage : stages_) {
    for (auto& block : stage) block.visit_buffers(collect);
  }
  for (auto& a : aux_) a.visit_buffers(collect);
  return out;
}

template <typename T>
ParameterCount BasicNetwork<T>::count_parameters() const {
  auto& self = const_cast<BasicNetwork&>(*this);
  ParameterCount count;
  self.visit_main([&](const std::string&, Parameter<T>& p) { count.main += p.value.size(); });
  self.visit_aux([&](const std::string&, Parameter<T>& p) { count.auxiliary += p.value.size(); });
  self.visit_decoder([&](const std::string&, Parameter<T>& p) { count.decoder += p.value.size(); });
  return count;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

}  // namespace vrae
