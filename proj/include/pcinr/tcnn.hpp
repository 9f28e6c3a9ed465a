#pragma once

// Transposed-convolution decoder (a channel-reduced WaveGAN generator used
// purely as a reconstruction decoder).
//
//   z -> dense -> reshape (C0 x T0) -> [convT + ReLU] x (L-1) -> convT -> tanh
//
// Each transposed convolution upsamples time by exactly `stride`.

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "pcinr/error.hpp"
#include "pcinr/numerics.hpp"
#include "pcinr/pcinr_model.hpp"

namespace pcinr {

struct TcnnConfig {
  std::size_t latent_dim = 256;
  std::size_t base_channels = 128;
  std::size_t kernel_len = 25;
  std::size_t stride = 4;
  std::size_t num_upsample_layers = 5;
  std::size_t seed_timesteps = 16;

  std::size_t output_length() const {
    std::size_t n = seed_timesteps;
    for (std::size_t i = 0; i < num_upsample_layers; ++i) n *= stride;
    return n;
  }

  /// Channel schedule: base halves per layer, final layer has one channel.
  std::vector<std::size_t> channels() const {
    std::vector<std::size_t> c;
    std::size_t ch = base_channels;
    for (std::size_t i = 0; i < num_upsample_layers; ++i) {
      c.push_back(ch);
      ch = std::max<std::size_t>(1, ch / 2);
    }
    c.push_back(1);
    return c;
  }

  void validate() const {
    require(latent_dim >= 1 && base_channels >= 1 && seed_timesteps >= 1, "tcnn: sizes must be >= 1");
    require(num_upsample_layers >= 1, "tcnn: need at least one upsampling layer");
    require(stride >= 1, "tcnn: stride must be >= 1");
    require(kernel_len % 2 == 1, "tcnn: kernel length must be odd");
    require(kernel_len + 1 >= stride, "tcnn: kernel shorter than stride");
  }

  friend bool operator==(const TcnnConfig&, const TcnnConfig&) = default;
};

/// Implicit input padding that makes every stage an exact x`stride` upsample:
/// output index o receives input i through tap k when o = i*stride + k - pad.
inline std::size_t transposed_conv_padding(std::size_t kernel_len, std::size_t stride) {
  return (kernel_len + 1 - stride) / 2;
}

template <class T>
struct ConvTransposeLayer {
  // (kernel_len * in_channels) x out_channels; rows [k*in, (k+1)*in) hold tap k.
  Tensor2<T> kernel;
  Vec<T> bias;  // out_channels

  Eigen::Index kernel_len() const { return kernel.rows() / in_channels(); }
  Eigen::Index in_channels() const { return in_ch; }
  Eigen::Index out_channels() const { return kernel.cols(); }

  Eigen::Index in_ch = 0;
};

template <class T>
struct TcnnParams {
  DenseLayer<T> dense;  // latent -> C0 * T0
  std::vector<ConvTransposeLayer<T>> convs;
  std::size_t seed_timesteps = 0;
  std::size_t stride = 0;

  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("tcnn.dense.weight"), self.dense.weight);
    f(std::string("tcnn.dense.bias"), self.dense.bias);
    for (std::size_t k = 0; k < self.convs.size(); ++k) {
      const std::string prefix = "tcnn.conv" + std::to_string(k);
      f(prefix + ".kernel", self.convs[k].kernel);
      f(prefix + ".bias", self.convs[k].bias);
    }
  }
};

inline std::size_t tcnn_count_params(const TcnnConfig& c) {
  const auto ch = c.channels();
  std::size_t n = c.latent_dim * ch[0] * c.seed_timesteps + ch[0] * c.seed_timesteps;
  for (std::size_t i = 0; i + 1 < ch.size(); ++i) n += c.kernel_len * ch[i] * ch[i + 1] + ch[i + 1];
  return n;
}

template <class T>
std::size_t tcnn_count_params(const TcnnParams<T>& params) {
  return count_scalars(params);
}

template <class T>
TcnnParams<T> init_tcnn(const TcnnConfig& config, Rng& rng) {
  config.validate();
  const auto ch = config.channels();
  TcnnParams<T> p;
  p.seed_timesteps = config.seed_timesteps;
  p.stride = config.stride;
  const auto dense_out = static_cast<Eigen::Index>(ch[0] * config.seed_timesteps);
  p.dense.weight.resize(dense_out, static_cast<Eigen::Index>(config.latent_dim));
  fill_uniform(rng, p.dense.weight, std::sqrt(6.0 / static_cast<double>(config.latent_dim)));
  p.dense.bias = Vec<T>::Zero(dense_out);
  for (std::size_t i = 0; i + 1 < ch.size(); ++i) {
    ConvTransposeLayer<T> layer;
    layer.in_ch = static_cast<Eigen::Index>(ch[i]);
    layer.kernel.resize(static_cast<Eigen::Index>(config.kernel_len * ch[i]), static_cast<Eigen::Index>(ch[i + 1]));
    // He-uniform over the taps that actually reach one output sample.
    const double fan_in = static_cast<double>(ch[i] * config.kernel_len) / static_cast<double>(config.stride);
    fill_uniform(rng, layer.kernel, std::sqrt(6.0 / fan_in));
    layer.bias = Vec<T>::Zero(static_cast<Eigen::Index>(ch[i + 1]));
    p.convs.push_back(std::move(layer));
  }
  return p;
}

/// Fractionally strided convolution; `input` is channels x time and the
/// result is out_channels x (time * stride).
template <class T>
Mat<T> conv1d_transpose(const Mat<T>& input, const ConvTransposeLayer<T>& layer, std::size_t stride) {
  require_shape(input.rows() == layer.in_channels(),
                "conv1d_transpose: input has " + std::to_string(input.rows()) + " channels, kernel expects " +
                    std::to_string(layer.in_channels()));
  require_shape(layer.bias.size() == layer.out_channels(), "conv1d_transpose: bias size mismatch");
  const Eigen::Index k_len = layer.kernel_len();
  const auto s = static_cast<Eigen::Index>(stride);
  const auto pad = static_cast<Eigen::Index>(transposed_conv_padding(static_cast<std::size_t>(k_len), stride));
  const Eigen::Index t_in = input.cols();
  const Eigen::Index t_out = t_in * s;
  const Eigen::Index c_in = layer.in_channels();

  Mat<T> out(layer.out_channels(), t_out);
  out.colwise() = layer.bias;
  Mat<T> tap;
  for (Eigen::Index k = 0; k < k_len; ++k) {
    tap.noalias() = layer.kernel.middleRows(k * c_in, c_in).transpose() * input;  // out x t_in
    for (Eigen::Index i = 0; i < t_in; ++i) {
      const Eigen::Index o = i * s + k - pad;
      if (o >= 0 && o < t_out) out.col(o) += tap.col(i);
    }
  }
  return out;
}

/// Backward of conv1d_transpose: accumulates kernel/bias gradients and
/// returns d(loss)/d(input).
template <class T>
Mat<T> conv1d_transpose_backward(const Mat<T>& input, const ConvTransposeLayer<T>& layer, std::size_t stride,
                                 const Mat<T>& grad_out, ConvTransposeLayer<T>& grad_layer) {
  const Eigen::Index k_len = layer.kernel_len();
  const auto s = static_cast<Eigen::Index>(stride);
  const auto pad = static_cast<Eigen::Index>(transposed_conv_padding(static_cast<std::size_t>(k_len), stride));
  const Eigen::Index t_in = input.cols();
  const Eigen::Index t_out = t_in * s;
  const Eigen::Index c_in = layer.in_channels();
  require_shape(grad_out.rows() == layer.out_channels() && grad_out.cols() == t_out,
                "conv1d_transpose_backward: gradient shape mismatch");

  grad_layer.bias += grad_out.rowwise().sum();
  Mat<T> grad_in = Mat<T>::Zero(c_in, t_in);
  Mat<T> gathered(layer.out_channels(), t_in);
  for (Eigen::Index k = 0; k < k_len; ++k) {
    gathered.setZero();
    for (Eigen::Index i = 0; i < t_in; ++i) {
      const Eigen::Index o = i * s + k - pad;
      if (o >= 0 && o < t_out) gathered.col(i) = grad_out.col(o);
    }
    grad_layer.kernel.middleRows(k * c_in, c_in).noalias() += input * gathered.transpose();
    grad_in.noalias() += layer.kernel.middleRows(k * c_in, c_in) * gathered;
  }
  return grad_in;
}

template <class T>
struct TcnnCache {
  Vec<T> latent;
  std::vector<Mat<T>> inputs;  // input of each conv layer (post-activation)
  std::vector<Mat<T>> pre;     // output of each conv layer before activation
  Vec<T> output;               // after tanh
};

template <class T>
Vec<T> tcnn_forward(const TcnnParams<T>& params, const Eigen::Ref<const Vec<std::type_identity_t<T>>>& z, TcnnCache<T>* cache = nullptr) {
  require_shape(z.size() == params.dense.weight.cols(),
                "tcnn_forward: latent has " + std::to_string(z.size()) + " entries, expected " +
                    std::to_string(params.dense.weight.cols()));
  const auto t0 = static_cast<Eigen::Index>(params.seed_timesteps);
  const Vec<T> h = params.dense.weight * z + params.dense.bias;
  // Channel-major reshape: h[c * T0 + t] -> x(c, t).
  Mat<T> x = Eigen::Map<const Tensor2<T>>(h.data(), h.size() / t0, t0);
  if (cache) {
    cache->latent = z;
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < params.convs.size(); ++l) {
    Mat<T> y = conv1d_transpose(x, params.convs[l], params.stride);
    if (cache) {
      cache->inputs.push_back(x);
      cache->pre.push_back(y);
    }
    if (l + 1 < params.convs.size()) {
      x = y.cwiseMax(T(0));
    } else {
      x = y.array().tanh().matrix();
    }
  }
  Vec<T> out = Eigen::Map<const Vec<T>>(x.data(), x.size());
  check_finite(out, "tcnn_forward output");
  if (cache) cache->output = out;
  return out;
}

/// Accumulates parameter gradients into `grad` and returns d(loss)/dz.
template <class T>
Vec<T> tcnn_backward(const TcnnCache<T>& cache, const TcnnParams<T>& params, std::span<const T> upstream,
                     TcnnParams<T>& grad) {
  require_shape(cache.pre.size() == params.convs.size() && grad.convs.size() == params.convs.size(),
                "tcnn_backward: cache does not match parameters");
  require_shape(upstream.size() == static_cast<std::size_t>(cache.output.size()),
                "tcnn_backward: upstream length does not match output");
  const Eigen::Index n = cache.output.size();
  Mat<T> g(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const T y = cache.output(j);
    g(0, j) = upstream[static_cast<std::size_t>(j)] * (T(1) - y * y);
  }
  for (std::size_t l = params.convs.size(); l-- > 0;) {
    if (l + 1 < params.convs.size()) {
      g = (cache.pre[l].array() > T(0)).select(g, T(0));
    }
    g = conv1d_transpose_backward(cache.inputs[l], params.convs[l], params.stride, g, grad.convs[l]);
  }
  // Undo the channel-major reshape.
  Tensor2<T> g_row = g;
  const Vec<T> g_h = Eigen::Map<const Vec<T>>(g_row.data(), g_row.size());
  grad.dense.weight.noalias() += g_h * cache.latent.transpose();
  grad.dense.bias += g_h;
  return params.dense.weight.transpose() * g_h;
}

}  // namespace pcinr
