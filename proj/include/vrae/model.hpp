#pragma once

#include "vrae/modules.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vrae {

enum class Arch { vrae, ae };

/// Multiplier on the Kaiming std of the final (image) decoder layer.
inline constexpr double kOutputInitScale = 0.1;

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view text);

/// Network hyperparameters. Stage i (1-based) emits widths[i-1] channels; the
/// bottleneck stages 2..5 use blocks[i-2] blocks with an inner width of a quarter
/// of the output width.
struct VraeConfig {
  int depth = 3;
  Arch arch = Arch::vrae;
  std::size_t input_channels = 3;
  std::size_t input_h = 256;
  std::size_t input_w = 256;
  std::array<std::size_t, 5> widths{64, 256, 512, 1024, 2048};
  std::array<std::size_t, 4> blocks{3, 4, 6, 3};

  /// Same topology with every stage width divided by `width_divisor`.
  static VraeConfig reduced(Arch arch, int depth, std::size_t input_size, std::size_t width_divisor);

  void validate() const;

  /// "VRAE3", "AE2", ...
  std::string label() const;

  /// Number of stride-2 upsampling layers: the encoder's cumulative halvings.
  std::size_t decoder_layers() const;

  /// Spatial size of stage i output (1-based).
  std::size_t stage_h(int stage) const;
  std::size_t stage_w(int stage) const;

  friend bool operator==(const VraeConfig&, const VraeConfig&) = default;
};

template <typename T>
struct ForwardTrace {
  std::vector<BasicTensor<T>> stages;     // x_1 .. x_k
  std::vector<BasicTensor<T>> auxiliary;  // x'_1 .. x'_{k-1}; empty for ae
  std::vector<BasicTensor<T>> decoder;    // y_1 .. y_K
  BasicTensor<T> output;
};

struct ParameterCount {
  std::size_t main = 0;
  std::size_t auxiliary = 0;
  std::size_t decoder = 0;

  std::size_t total() const { return main + auxiliary + decoder; }
};

template <typename T>
class BasicNetwork {
 public:
  /// Layers only; parameters are zero until init_parameters().
  explicit BasicNetwork(const VraeConfig& config);

  static BasicNetwork build(const VraeConfig& config, std::uint64_t seed);

  /// Kaiming fan-in normal for conv and transposed-conv kernels (the output
  /// layer scaled by kOutputInitScale), zero biases, gamma = 1, beta = 0. Each
  /// tensor draws from its own stream keyed by name.
  void init_parameters(std::uint64_t seed);

  const VraeConfig& config() const { return config_; }

  /// Train mode caches activations for backward() and updates running stats.
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, ForwardTrace<T>* trace = nullptr,
                         const FeatureObserver<T>* observer = nullptr);

  /// Accumulates parameter gradients for the most recent train-mode forward.
  void backward(const BasicTensor<T>& grad_output);

  void zero_grad();

  std::vector<NamedParameter<T>> parameters();
  std::vector<NamedBuffer<T>> buffers();

  ParameterCount count_parameters() const;

  /// Copy of the network with every parameter and buffer converted to U.
  template <typename U>
  BasicNetwork<U> cast() const {
    BasicNetwork<U> other(config_);
    auto& self = const_cast<BasicNetwork&>(*this);
    auto src = self.parameters();
    auto dst = other.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].param->value = src[i].param->value.template cast<U>();
    auto src_buf = self.buffers();
    auto dst_buf = other.buffers();
    for (std::size_t i = 0; i < src_buf.size(); ++i) *dst_buf[i].value = src_buf[i].value->template cast<U>();
    return other;
  }

 private:
  template <typename F>
  void visit_main(F&& f);
  template <typename F>
  void visit_aux(F&& f);
  template <typename F>
  void visit_decoder(F&& f);

  VraeConfig config_;
  Stem<T> stem_;
  std::vector<std::vector<Bottleneck<T>>> stages_;  // stages 2..k
  std::vector<AuxBlock<T>> aux_;                   // E'_1 .. E'_{k-1}
  std::vector<UpLayer<T>> decoder_;
  bool has_cache_ = false;
};

using Network = BasicNetwork<float>;

}  // namespace vrae
