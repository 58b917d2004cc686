#include "vrae/layers.hpp"

#include "vrae/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vrae {
namespace {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, bool accumulate, T* c, std::size_t ldc) {
  if constexpr (std::is_same_v<T, float>) {
    kernels::active().sgemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, accumulate, c, ldc);
  } else {
    kernels::gemm_reference<T>(trans_a, trans_b, m, n, k, a, lda, b, ldb, accumulate, c, ldc);
  }
}

// Maps a padded coordinate to a source coordinate; -1 when it reads zero padding.
inline long source_index(long i, long size, PadMode mode) {
  if (i >= 0 && i < size) return i;
  if (mode == PadMode::zero) return -1;
  if (size == 1) return 0;
  return i < 0 ? -i : 2 * (size - 1) - i;
}

// Geometry of one convolution window sweep: an image of (channels, h, w)
// scanned into a grid of (out_h, out_w) windows.
struct Geometry {
  std::size_t channels, h, w, out_h, out_w;
  const ConvSpec* spec;

  std::size_t rows() const { return channels * spec->kernel_h * spec->kernel_w; }
  std::size_t cols() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* image, const Geometry& g, T* col) {
  const ConvSpec& s = *g.spec;
  const long pad = static_cast<long>(s.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        T* row = col + ((c * s.kernel_h + ki) * s.kernel_w + kj) * g.cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = source_index(static_cast<long>(oh * s.stride_h + ki) - pad, static_cast<long>(g.h), s.pad_mode);
          T* out = row + oh * g.out_w;
          if (ih < 0) {
            std::fill(out, out + g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw =
                source_index(static_cast<long>(ow * s.stride_w + kj) - pad, static_cast<long>(g.w), s.pad_mode);
            out[ow] = iw < 0 ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into a zeroed image.
template <typename T>
void col2im(const T* col, const Geometry& g, T* image) {
  const ConvSpec& s = *g.spec;
  const long pad = static_cast<long>(s.pad);
  std::fill(image, image + g.channels * g.h * g.w, T(0));
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
        const T* row = col + ((c * s.kernel_h + ki) * s.kernel_w + kj) * g.cols();
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = source_index(static_cast<long>(oh * s.stride_h + ki) - pad, static_cast<long>(g.h), s.pad_mode);
          if (ih < 0) continue;
          T* dst = image + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const T* in = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw =
                source_index(static_cast<long>(ow * s.stride_w + kj) - pad, static_cast<long>(g.w), s.pad_mode);
            if (iw >= 0) dst[iw] += in[ow];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvSpec& s) {
  return s.kernel_h == 1 && s.kernel_w == 1 && s.stride_h == 1 && s.stride_w == 1 && s.pad == 0;
}

template <typename T>
void add_bias(BasicTensor<T>& out, const BasicTensor<T>& bias) {
  const Shape s = out.shape();
  if (bias.size() != s.c) {
    throw ShapeError("bias length " + std::to_string(bias.size()) + " does not match channels " + std::to_string(s.c));
  }
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (T& v : out.plane(n, c)) v += bias[c];
    }
  }
}

template <typename T>
BasicTensor<T> bias_gradient(const BasicTensor<T>& upstream) {
  const Shape s = upstream.shape();
  BasicTensor<T> grad(channel_shape(s.c));
  for (std::size_t c = 0; c < s.c; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      for (T v : upstream.plane(n, c)) acc += v;
    }
    grad[c] = static_cast<T>(acc);
  }
  return grad;
}

void require_channels(const Shape& input, std::size_t expected, const char* what) {
  if (input.c != expected) {
    throw ShapeError(std::string(what) + ": input channel dimension c=" + std::to_string(input.c) +
                     " but spec expects " + std::to_string(expected));
  }
}

void require_weights(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": weight shape " + got.str() + " but spec requires " + want.str());
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("conv spec: channel counts must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw std::invalid_argument("conv spec: kernel dims must be >= 1");
  if (stride_h == 0 || stride_w == 0) throw std::invalid_argument("conv spec: stride must be >= 1");
}

Shape ConvSpec::output_shape(const Shape& input) const {
  validate();
  const std::size_t ph = input.h + 2 * pad;
  const std::size_t pw = input.w + 2 * pad;
  if (ph < kernel_h) throw ShapeError("conv: padded height " + std::to_string(ph) + " smaller than kernel height");
  if (pw < kernel_w) throw ShapeError("conv: padded width " + std::to_string(pw) + " smaller than kernel width");
  if (pad_mode == PadMode::reflect && (pad >= input.h || pad >= input.w) && pad > 0) {
    throw ShapeError("conv: reflect padding " + std::to_string(pad) + " requires input dims larger than the pad");
  }
  return {input.n, out_channels, (ph - kernel_h) / stride_h + 1, (pw - kernel_w) / stride_w + 1};
}

Shape ConvSpec::transposed_output_shape(const Shape& input) const {
  validate();
  if (pad_mode != PadMode::zero) throw std::invalid_argument("transposed conv: only zero padding is supported");
  if (input.h == 0 || input.w == 0) throw ShapeError("transposed conv: empty spatial input");
  const long oh = static_cast<long>((input.h - 1) * stride_h + kernel_h) - 2 * static_cast<long>(pad);
  const long ow = static_cast<long>((input.w - 1) * stride_w + kernel_w) - 2 * static_cast<long>(pad);
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("transposed conv: configuration yields non-positive output dims for input " + input.str());
  }
  // The forward window sweep over the output must land back on the input grid.
  const Shape out{input.n, out_channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
  ConvSpec adjoint = *this;
  adjoint.in_channels = out_channels;
  const Shape back = adjoint.output_shape(out);
  if (back.h != input.h || back.w != input.w) {
    throw ShapeError("transposed conv: output " + out.str() + " does not map back onto input grid " + input.str());
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvSpec& spec, const BasicTensor<T>& weights,
                              const BasicTensor<T>* bias) {
  const Shape in = input.shape();
  require_channels(in, spec.in_channels, "conv2d_forward");
  require_weights(weights.shape(), spec.weight_shape(), "conv2d_forward");
  const Shape out_shape = spec.output_shape(in);
  BasicTensor<T> out(out_shape);
  const Geometry g{in.c, in.h, in.w, out_shape.h, out_shape.w, &spec};
  const bool pointwise = is_pointwise(spec);
  std::vector<T> col(pointwise ? 0 : g.rows() * g.cols());
  for (std::size_t n = 0; n < in.n; ++n) {
    const T* src = input.image(n).data();
    if (!pointwise) {
      im2col(src, g, col.data());
      src = col.data();
    }
    gemm<T>(false, false, spec.out_channels, g.cols(), g.rows(), weights.data(), g.rows(), src, g.cols(), false,
            out.image(n).data(), g.cols());
  }
  if (bias != nullptr) add_bias(out, *bias);
  return out;
}

template <typename T>
LayerGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvSpec& spec, const BasicTensor<T>& weights,
                                  const BasicTensor<T>& upstream, bool need_input_grad) {
  const Shape in = input.shape();
  require_channels(in, spec.in_channels, "conv2d_backward");
  require_weights(weights.shape(), spec.weight_shape(), "conv2d_backward");
  const Shape out_shape = spec.output_shape(in);
  require_same_shape(upstream.shape(), out_shape, "conv2d_backward upstream gradient");

  const Geometry g{in.c, in.h, in.w, out_shape.h, out_shape.w, &spec};
  const bool pointwise = is_pointwise(spec);
  LayerGradients<T> grads;
  BasicTensor<T> dweight(spec.weight_shape());
  if (need_input_grad) grads.input = BasicTensor<T>(in);
  std::vector<T> col(pointwise ? 0 : g.rows() * g.cols());
  std::vector<T> dcol(need_input_grad && !pointwise ? g.rows() * g.cols() : 0);

  for (std::size_t n = 0; n < in.n; ++n) {
    const T* src = input.image(n).data();
    if (!pointwise) {
      im2col(src, g, col.data());
      src = col.data();
    }
    const T* dy = upstream.image(n).data();
    gemm<T>(false, true, spec.out_channels, g.rows(), g.cols(), dy, g.cols(), src, g.cols(), n > 0, dweight.data(),
            g.rows());
    if (need_input_grad) {
      T* dst = pointwise ? grads.input.image(n).data() : dcol.data();
      gemm<T>(true, false, g.rows(), g.cols(), spec.out_channels, weights.data(), g.rows(), dy, g.cols(), false, dst,
              g.cols());
      if (!pointwise) col2im(dcol.data(), g, grads.input.image(n).data());
    }
  }
  grads.params.emplace("weight", std::move(dweight));
  if (spec.has_bias) grads.params.emplace("bias", bias_gradient(upstream));
  return grads;
}

template <typename T>
BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>& input, const ConvSpec& spec,
                                         const BasicTensor<T>& weights, const BasicTensor<T>* bias) {
  const Shape in = input.shape();
  require_channels(in, spec.in_channels, "transposed_conv2d_forward");
  require_weights(weights.shape(), spec.transposed_weight_shape(), "transposed_conv2d_forward");
  const Shape out_shape = spec.transposed_output_shape(in);
  BasicTensor<T> out(out_shape);
  // The output plays the role of a convolution input whose window grid is the input grid.
  const Geometry g{spec.out_channels, out_shape.h, out_shape.w, in.h, in.w, &spec};
  std::vector<T> cols(g.rows() * g.cols());
  for (std::size_t n = 0; n < in.n; ++n) {
    gemm<T>(true, false, g.rows(), g.cols(), spec.in_channels, weights.data(), g.rows(), input.image(n).data(),
            g.cols(), false, cols.data(), g.cols());
    col2im(cols.data(), g, out.image(n).data());
  }
  if (bias != nullptr) add_bias(out, *bias);
  return out;
}

template <typename T>
LayerGradients<T> transposed_conv2d_backward(const BasicTensor<T>& input, const ConvSpec& spec,
                                             const BasicTensor<T>& weights, const BasicTensor<T>& upstream,
                                             bool need_input_grad) {
  const Shape in = input.shape();
  require_channels(in, spec.in_channels, "transposed_conv2d_backward");
  require_weights(weights.shape(), spec.transposed_weight_shape(), "transposed_conv2d_backward");
  const Shape out_shape = spec.transposed_output_shape(in);
  require_same_shape(upstream.shape(), out_shape, "transposed_conv2d_backward upstream gradient");

  const Geometry g{spec.out_channels, out_shape.h, out_shape.w, in.h, in.w, &spec};
  LayerGradients<T> grads;
  BasicTensor<T> dweight(spec.transposed_weight_shape());
  if (need_input_grad) grads.input = BasicTensor<T>(in);
  std::vector<T> dcols(g.rows() * g.cols());
  for (std::size_t n = 0; n < in.n; ++n) {
    im2col(upstream.image(n).data(), g, dcols.data());
    gemm<T>(false, true, spec.in_channels, g.rows(), g.cols(), input.image(n).data(), g.cols(), dcols.data(),
            g.cols(), n > 0, dweight.data(), g.rows());
    if (need_input_grad) {
      gemm<T>(false, false, spec.in_channels, g.cols(), g.rows(), weights.data(), g.rows(), dcols.data(), g.cols(),
              false, grads.input.image(n).data(), g.cols());
    }
  }
  grads.params.emplace("weight", std::move(dweight));
  if (spec.has_bias) grads.params.emplace("bias", bias_gradient(upstream));
  return grads;
}

template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                                 const BasicTensor<T>& beta, RunningStats<T>& stats, Mode mode,
                                 BatchNormCache<T>* cache, const BatchNormOptions& options) {
  const Shape s = input.shape();
  if (s.n == 0 || s.plane_size() == 0) throw ShapeError("batchnorm: zero batch " + s.str());
  if (gamma.size() != s.c || beta.size() != s.c) {
    throw ShapeError("batchnorm: gamma/beta length must equal channel count " + std::to_string(s.c));
  }
  if (mode == Mode::eval && (stats.mean.size() != s.c || stats.var.size() != s.c)) {
    throw std::logic_error("batchnorm: eval mode requires populated running statistics");
  }
  const std::size_t count = s.n * s.plane_size();
  BasicTensor<T> out(s);
  BasicTensor<T> normalized(s);
  std::vector<T> inv_std(s.c);
  if (mode == Mode::train && (stats.mean.size() != s.c || stats.var.size() != s.c)) {
    stats = RunningStats<T>::initial(s.c);
  }

  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t n = 0; n < s.n; ++n) {
        for (T v : input.plane(n, c)) mean += v;
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < s.n; ++n) {
        for (T v : input.plane(n, c)) var += (v - mean) * (v - mean);
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      stats.mean[c] = static_cast<T>((1.0 - options.momentum) * stats.mean[c] + options.momentum * mean);
      stats.var[c] = static_cast<T>((1.0 - options.momentum) * stats.var[c] + options.momentum * unbiased);
    } else {
      mean = stats.mean[c];
      var = stats.var[c];
    }
    const T istd = static_cast<T>(1.0 / std::sqrt(var + options.epsilon));
    const T mu = static_cast<T>(mean);
    inv_std[c] = istd;
    for (std::size_t n = 0; n < s.n; ++n) {
      auto src = input.plane(n, c);
      auto xn = normalized.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        xn[i] = (src[i] - mu) * istd;
        dst[i] = gamma[c] * xn[i] + beta[c];
      }
    }
  }
  if (cache != nullptr) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
LayerGradients<T> batchnorm_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& gamma,
                                     const BatchNormCache<T>& cache) {
  const Shape s = upstream.shape();
  require_same_shape(s, cache.normalized.shape(), "batchnorm_backward upstream gradient");
  const std::size_t count = s.n * s.plane_size();
  BasicTensor<T> dgamma(channel_shape(s.c));
  BasicTensor<T> dbeta(channel_shape(s.c));
  BasicTensor<T> dx(s);
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      auto dy = upstream.plane(n, c);
      auto xn = cache.normalized.plane(n, c);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xn[i];
      }
    }
    dbeta[c] = static_cast<T>(sum_dy);
    dgamma[c] = static_cast<T>(sum_dy_xhat);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    const double mean_dy = sum_dy / static_cast<double>(count);
    const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(count);
    for (std::size_t n = 0; n < s.n; ++n) {
      auto dy = upstream.plane(n, c);
      auto xn = cache.normalized.plane(n, c);
      auto out = dx.plane(n, c);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        if (cache.mode == Mode::train) {
          out[i] = static_cast<T>(scale * (dy[i] - mean_dy - xn[i] * mean_dy_xhat));
        } else {
          out[i] = static_cast<T>(scale * dy[i]);
        }
      }
    }
  }
  LayerGradients<T> grads;
  grads.params.emplace("gamma", std::move(dgamma));
  grads.params.emplace("beta", std::move(dbeta));
  grads.input = std::move(dx);
  return grads;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  if constexpr (std::is_same_v<T, float>) {
    kernels::active().relu(input.data(), out.data(), input.size());
  } else {
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  }
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream) {
  require_same_shape(upstream.shape(), output.shape(), "relu_backward");
  BasicTensor<T> dx(output.shape());
  if constexpr (std::is_same_v<T, float>) {
    kernels::active().relu_backward(output.data(), upstream.data(), dx.data(), output.size());
  } else {
    for (std::size_t i = 0; i < output.size(); ++i) dx[i] = output[i] > T(0) ? upstream[i] : T(0);
  }
  return dx;
}

template <typename T>
BasicTensor<T> maxpool3s2_forward(const BasicTensor<T>& input, std::vector<std::uint32_t>* argmax) {
  const Shape s = input.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("maxpool3s2: empty spatial input " + s.str());
  const Shape o{s.n, s.c, (s.h + 2 - 3) / 2 + 1, (s.w + 2 - 3) / 2 + 1};
  BasicTensor<T> out(o);
  if (argmax != nullptr) argmax->assign(o.size(), 0);
  std::size_t idx = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto plane = input.plane(n, c);
      for (std::size_t oh = 0; oh < o.h; ++oh) {
        for (std::size_t ow = 0; ow < o.w; ++ow, ++idx) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t best_at = 0;
          for (long di = 0; di < 3; ++di) {
            const long ih = static_cast<long>(oh * 2) - 1 + di;
            if (ih < 0 || ih >= static_cast<long>(s.h)) continue;
            for (long dj = 0; dj < 3; ++dj) {
              const long iw = static_cast<long>(ow * 2) - 1 + dj;
              if (iw < 0 || iw >= static_cast<long>(s.w)) continue;
              const std::size_t at = static_cast<std::size_t>(ih) * s.w + static_cast<std::size_t>(iw);
              if (plane[at] > best) {
                best = plane[at];
                best_at = static_cast<std::uint32_t>(at);
              }
            }
          }
          out[idx] = best;
          if (argmax != nullptr) (*argmax)[idx] = best_at;
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool3s2_backward(const BasicTensor<T>& upstream, const std::vector<std::uint32_t>& argmax,
                                   const Shape& input_shape) {
  const Shape o = upstream.shape();
  if (argmax.size() != o.size()) throw ShapeError("maxpool3s2_backward: argmax does not match upstream gradient");
  BasicTensor<T> dx(input_shape);
  std::size_t idx = 0;
  for (std::size_t n = 0; n < o.n; ++n) {
    for (std::size_t c = 0; c < o.c; ++c) {
      auto plane = dx.plane(n, c);
      for (std::size_t i = 0; i < o.plane_size(); ++i, ++idx) plane[argmax[idx]] += upstream[idx];
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> avgpool3s1_forward(const BasicTensor<T>& input) {
  const Shape s = input.shape();
  BasicTensor<T> out(s);
  const long h = static_cast<long>(s.h);
  const long w = static_cast<long>(s.w);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (long i = 0; i < h; ++i) {
        for (long j = 0; j < w; ++j) {
          // Nine float terms sum exactly in double, so constants are reproduced bit-for-bit.
          double acc = 0.0;
          for (long di = -1; di <= 1; ++di) {
            const long si = source_index(i + di, h, PadMode::reflect);
            for (long dj = -1; dj <= 1; ++dj) {
              acc += src[static_cast<std::size_t>(si * w + source_index(j + dj, w, PadMode::reflect))];
            }
          }
          dst[static_cast<std::size_t>(i * w + j)] = static_cast<T>(acc / 9.0);
        }
      }
    }
  }
  return out;
}

namespace {

struct Cell {
  std::size_t begin, end;
};

Cell adaptive_cell(std::size_t index, std::size_t in, std::size_t out) {
  return {index * in / out, ((index + 1) * in + out - 1) / out};
}

}  // namespace

template <typename T>
BasicTensor<T> adaptive_avgpool_forward(const BasicTensor<T>& input, std::size_t target_h, std::size_t target_w) {
  const Shape s = input.shape();
  if (target_h == 0 || target_w == 0) throw ShapeError("adaptive_avgpool: target dims must be positive");
  if (target_h > s.h || target_w > s.w) {
    throw ShapeError("adaptive_avgpool: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                     " larger than input " + s.str());
  }
  BasicTensor<T> out({s.n, s.c, target_h, target_w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = input.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t oh = 0; oh < target_h; ++oh) {
        const Cell rows = adaptive_cell(oh, s.h, target_h);
        for (std::size_t ow = 0; ow < target_w; ++ow) {
          const Cell cols = adaptive_cell(ow, s.w, target_w);
          double acc = 0.0;
          for (std::size_t i = rows.begin; i < rows.end; ++i) {
            for (std::size_t j = cols.begin; j < cols.end; ++j) acc += src[i * s.w + j];
          }
          dst[oh * target_w + ow] =
              static_cast<T>(acc / static_cast<double>((rows.end - rows.begin) * (cols.end - cols.begin)));
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> adaptive_avgpool_backward(const BasicTensor<T>& upstream, const Shape& input_shape) {
  const Shape o = upstream.shape();
  BasicTensor<T> dx(input_shape);
  for (std::size_t n = 0; n < o.n; ++n) {
    for (std::size_t c = 0; c < o.c; ++c) {
      auto dy = upstream.plane(n, c);
      auto dst = dx.plane(n, c);
      for (std::size_t oh = 0; oh < o.h; ++oh) {
        const Cell rows = adaptive_cell(oh, input_shape.h, o.h);
        for (std::size_t ow = 0; ow < o.w; ++ow) {
          const Cell cols = adaptive_cell(ow, input_shape.w, o.w);
          const T share = dy[oh * o.w + ow] / static_cast<T>((rows.end - rows.begin) * (cols.end - cols.begin));
          for (std::size_t i = rows.begin; i < rows.end; ++i) {
            for (std::size_t j = cols.begin; j < cols.end; ++j) dst[i * input_shape.w + j] += share;
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<T> out(a.shape());
  if constexpr (std::is_same_v<T, float>) {
    kernels::active().add(a.data(), b.data(), out.data(), a.size());
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  }
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& target, const BasicTensor<T>& other) {
  require_same_shape(target.shape(), other.shape(), "add_inplace");
  if constexpr (std::is_same_v<T, float>) {
    kernels::active().add(target.data(), other.data(), target.data(), target.size());
  } else {
    for (std::size_t i = 0; i < target.size(); ++i) target[i] += other[i];
  }
}

template <typename T>
MseResult<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  if (pred.empty()) throw ShapeError("mse_loss: empty tensors");
  const double count = static_cast<double>(pred.size());
  MseResult<T> result;
  result.grad = BasicTensor<T>(pred.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    result.grad[i] = static_cast<T>(2.0 * d / count);
  }
  result.loss = acc / count;
  return result;
}

#define VRAE_INSTANTIATE_LAYERS(T)                                                                                 \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvSpec&, const BasicTensor<T>&,            \
                                         const BasicTensor<T>*);                                                   \
  template LayerGradients<T> conv2d_backward(const BasicTensor<T>&, const ConvSpec&, const BasicTensor<T>&,        \
                                             const BasicTensor<T>&, bool);                                         \
  template BasicTensor<T> transposed_conv2d_forward(const BasicTensor<T>&, const ConvSpec&, const BasicTensor<T>&, \
                                                    const BasicTensor<T>*);                                        \
  template LayerGradients<T> transposed_conv2d_backward(const BasicTensor<T>&, const ConvSpec&,                    \
                                                        const BasicTensor<T>&, const BasicTensor<T>&, bool);       \
  template BasicTensor<T> batchnorm_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                            RunningStats<T>&, Mode, BatchNormCache<T>*, const BatchNormOptions&);  \
  template LayerGradients<T> batchnorm_backward(const BasicTensor<T>&, const BasicTensor<T>&,                      \
                                                const BatchNormCache<T>&);                                         \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                     \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> maxpool3s2_forward(const BasicTensor<T>&, std::vector<std::uint32_t>*);                  \
  template BasicTensor<T> maxpool3s2_backward(const BasicTensor<T>&, const std::vector<std::uint32_t>&,            \
                                              const Shape&);                                                       \
  template BasicTensor<T> avgpool3s1_forward(const BasicTensor<T>&);                                               \
  template BasicTensor<T> adaptive_avgpool_forward(const BasicTensor<T>&, std::size_t, std::size_t);               \
  template BasicTensor<T> adaptive_avgpool_backward(const BasicTensor<T>&, const Shape&);                          \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                       \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                                               \
  template MseResult<T> mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);

VRAE_INSTANTIATE_LAYERS(float)
VRAE_INSTANTIATE_LAYERS(double)

#undef VRAE_INSTANTIATE_LAYERS

}  // namespace vrae
