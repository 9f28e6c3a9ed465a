#pragma once

// FiLM-conditioned sine MLP decoder and its latent mapping network.
//
// Every sine layer k evaluates
//     u_k = W_k x + b_k
//     y_k = sin((omega0_k + gamma) * u_k + beta)
// with one (gamma, beta) pair shared by all layers. The decoder input is the
// scalar time coordinate t; a linear head reduces the last layer to one
// amplitude. Forward mode carries d/dt alongside every activation so the
// loss can compare analytic time derivatives, and the reverse pass
// differentiates through both the primal and the tangent computation.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "pcinr/error.hpp"
#include "pcinr/numerics.hpp"

namespace pcinr {

struct PcinrConfig {
  std::size_t hidden_width = 256;
  std::size_t depth = 8;
  std::size_t latent_dim = 256;
  double omega0_first = 3000.0;
  double omega0_hidden = 30.0;
  std::size_t mapping_width = 256;
  std::size_t mapping_depth = 3;

  void validate() const {
    require(depth >= 1, "pcinr: depth must be >= 1");
    require(hidden_width >= 1 && latent_dim >= 1 && mapping_width >= 1,
            "pcinr: widths must be >= 1");
    require(omega0_first > 0 && omega0_hidden > 0, "pcinr: omega0 values must be > 0");
  }

  /// 380 hidden units, 4 sine layers.
  static PcinrConfig wide() {
    PcinrConfig c;
    c.hidden_width = 380;
    c.depth = 4;
    return c;
  }

  friend bool operator==(const PcinrConfig&, const PcinrConfig&) = default;
};

template <class T>
struct DenseLayer {
  Tensor2<T> weight;  // out x in
  Vec<T> bias;
};

template <class T>
struct SineLayer {
  Tensor2<T> weight;  // hidden x in
  Vec<T> bias;
  T omega0{};  // fixed, not learned
};

/// Shared decoder parameters.
template <class T>
struct PcinrParams {
  std::vector<SineLayer<T>> layers;
  Tensor2<T> head_weight;  // 1 x hidden
  Vec<T> head_bias;        // 1

  std::size_t hidden_width() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.rows()); }

  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    for (std::size_t k = 0; k < self.layers.size(); ++k) {
      const std::string prefix = "decoder.layer" + std::to_string(k);
      f(prefix + ".weight", self.layers[k].weight);
      f(prefix + ".bias", self.layers[k].bias);
    }
    f(std::string("decoder.head.weight"), self.head_weight);
    f(std::string("decoder.head.bias"), self.head_bias);
  }
};

/// Latent mapping network: `mapping_depth` ReLU layers then a linear layer
/// producing [gamma; beta].
template <class T>
struct MappingParams {
  std::vector<DenseLayer<T>> layers;  // last entry is the linear output layer

  template <class F>
  void visit(F&& f) { visit_impl(*this, f); }
  template <class F>
  void visit(F&& f) const { visit_impl(*this, f); }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    for (std::size_t k = 0; k < self.layers.size(); ++k) {
      const std::string prefix = "mapping.layer" + std::to_string(k);
      f(prefix + ".weight", self.layers[k].weight);
      f(prefix + ".bias", self.layers[k].bias);
    }
  }
};

/// One frequency offset and one phase shift per hidden unit. There is no
/// per-layer axis: the same pair conditions every sine layer.
template <class T>
struct FilmVector {
  Vec<T> gamma;
  Vec<T> beta;

  static FilmVector zeros(std::size_t width) {
    return {Vec<T>::Zero(static_cast<Eigen::Index>(width)), Vec<T>::Zero(static_cast<Eigen::Index>(width))};
  }
};

template <class T>
struct PcinrNetworks {
  PcinrParams<T> decoder;
  MappingParams<T> mapping;
};

/// Gradient carrier shaped like the parameters plus one latent code.
template <class T>
struct PcinrGrads {
  PcinrParams<T> decoder;
  MappingParams<T> mapping;
  Vec<T> latent;
};

/// Same shapes as `params`, all zeros.
template <class P>
P zeros_like(const P& params) {
  P z = params;
  z.visit([](const std::string&, auto& t) { t.setZero(); });
  return z;
}

template <class P>
std::size_t count_scalars(const P& params) {
  std::size_t n = 0;
  params.visit([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

/// Learnable scalars in decoder + mapping network (latent table excluded).
template <class T>
std::size_t count_params(const PcinrParams<T>& params, const MappingParams<T>& mapping) {
  return count_scalars(params) + count_scalars(mapping);
}

/// Parameter count implied by a config without allocating it.
inline std::size_t count_params(const PcinrConfig& c) {
  const std::size_t h = c.hidden_width;
  std::size_t n = h + h;                           // first sine layer (fan_in 1)
  n += (c.depth - 1) * (h * h + h);                // hidden sine layers
  n += h + 1;                                      // head
  std::size_t in = c.latent_dim;
  for (std::size_t k = 0; k < c.mapping_depth; ++k) {
    n += in * c.mapping_width + c.mapping_width;
    in = c.mapping_width;
  }
  n += in * 2 * h + 2 * h;                         // FiLM output layer
  return n;
}

template <class T>
PcinrNetworks<T> init_pcinr(const PcinrConfig& config, Rng& rng) {
  config.validate();
  const auto h = static_cast<Eigen::Index>(config.hidden_width);
  PcinrNetworks<T> net;
  net.decoder.layers.resize(config.depth);
  for (std::size_t k = 0; k < config.depth; ++k) {
    auto& layer = net.decoder.layers[k];
    const Eigen::Index fan_in = k == 0 ? 1 : h;
    layer.omega0 = static_cast<T>(k == 0 ? config.omega0_first : config.omega0_hidden);
    layer.weight.resize(h, fan_in);
    const double bound = k == 0 ? 1.0 / static_cast<double>(fan_in)
                                : std::sqrt(6.0 / static_cast<double>(fan_in)) / config.omega0_hidden;
    fill_uniform(rng, layer.weight, bound);
    layer.bias = Vec<T>::Zero(h);
  }
  net.decoder.head_weight.resize(1, h);
  fill_uniform(rng, net.decoder.head_weight, std::sqrt(6.0 / static_cast<double>(h)) / config.omega0_hidden);
  net.decoder.head_bias = Vec<T>::Zero(1);

  auto in = static_cast<Eigen::Index>(config.latent_dim);
  for (std::size_t k = 0; k <= config.mapping_depth; ++k) {
    const bool last = k == config.mapping_depth;
    const Eigen::Index out = last ? 2 * h : static_cast<Eigen::Index>(config.mapping_width);
    DenseLayer<T> layer;
    layer.weight.resize(out, in);
    fill_uniform(rng, layer.weight, std::sqrt(6.0 / static_cast<double>(in)));  // He-uniform
    layer.bias = Vec<T>::Zero(out);
    net.mapping.layers.push_back(std::move(layer));
    in = out;
  }
  return net;
}

// ---------------------------------------------------------------------------
// Mapping network
// ---------------------------------------------------------------------------

template <class T>
struct MappingCache {
  Vec<T> input;
  std::vector<Vec<T>> pre;  // pre-activation of every layer
};

template <class T>
FilmVector<T> map_latent(const MappingParams<T>& mapping, const Eigen::Ref<const Vec<std::type_identity_t<T>>>& z,
                         MappingCache<T>* cache = nullptr) {
  if (mapping.layers.empty()) throw ShapeError("map_latent: empty mapping network");
  require_shape(z.size() == mapping.layers.front().weight.cols(),
                "map_latent: latent has " + std::to_string(z.size()) + " entries, expected " +
                    std::to_string(mapping.layers.front().weight.cols()));
  if (cache) {
    cache->input = z;
    cache->pre.clear();
  }
  Vec<T> x = z;
  for (std::size_t k = 0; k < mapping.layers.size(); ++k) {
    const auto& layer = mapping.layers[k];
    Vec<T> pre = layer.weight * x + layer.bias;
    if (cache) cache->pre.push_back(pre);
    if (k + 1 < mapping.layers.size()) {
      x = pre.cwiseMax(T(0));
    } else {
      x = std::move(pre);
    }
  }
  check_finite(x, "mapping network output");
  const Eigen::Index h = x.size() / 2;
  return {x.head(h), x.tail(h)};
}

/// Accumulates d(loss)/d(mapping) into `grad_mapping` and returns d(loss)/dz.
template <class T>
Vec<T> map_latent_backward(const MappingParams<T>& mapping, const MappingCache<T>& cache,
                           const FilmVector<T>& grad_film, MappingParams<T>& grad_mapping) {
  require_shape(cache.pre.size() == mapping.layers.size() && grad_mapping.layers.size() == mapping.layers.size(),
                "map_latent_backward: cache does not match mapping network");
  const Eigen::Index h = grad_film.gamma.size();
  Vec<T> upstream(2 * h);
  upstream << grad_film.gamma, grad_film.beta;
  for (std::size_t kk = mapping.layers.size(); kk-- > 0;) {
    if (kk + 1 < mapping.layers.size()) {
      upstream = (cache.pre[kk].array() > T(0)).select(upstream, T(0));
    }
    const Vec<T> input = kk == 0 ? cache.input : Vec<T>(cache.pre[kk - 1].cwiseMax(T(0)));
    grad_mapping.layers[kk].weight.noalias() += upstream * input.transpose();
    grad_mapping.layers[kk].bias += upstream;
    upstream = mapping.layers[kk].weight.transpose() * upstream;
  }
  return upstream;
}

// ---------------------------------------------------------------------------
// Decoder forward / backward
// ---------------------------------------------------------------------------

/// Coordinates are evaluated in fixed-width blocks, padding the last one, so
/// every sample goes through identically shaped kernels regardless of how
/// many coordinates are requested. This makes a coordinate's output
/// independent of its neighbours, bit for bit.
inline constexpr Eigen::Index kBlockWidth = 256;

template <class T>
struct LayerCache {
  Mat<T> pre;          // u = W x + b
  Mat<T> sin_s;        // y = sin(s)
  Mat<T> cos_s;
  Mat<T> pre_tangent;  // du/dt     (tangent mode)
  Mat<T> act_tangent;  // dy/dt     (tangent mode)
};

template <class T>
struct BlockCache {
  Mat<T> coords;  // 1 x kBlockWidth
  std::vector<LayerCache<T>> layers;
};

template <class T>
struct ForwardCache {
  bool tangent = false;
  std::size_t count = 0;
  std::vector<BlockCache<T>> blocks;
};

template <class T>
struct ForwardResult {
  Vec<T> amplitude;
  Vec<T> tangent;  // empty unless tangent mode
};

namespace detail {

template <class T>
std::vector<Vec<T>> layer_frequencies(const PcinrParams<T>& params, const FilmVector<T>& film) {
  std::vector<Vec<T>> freqs;
  freqs.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    freqs.push_back((film.gamma.array() + layer.omega0).matrix());
  }
  return freqs;
}

template <class T>
void check_film(const PcinrParams<T>& params, const FilmVector<T>& film) {
  const auto h = static_cast<Eigen::Index>(params.hidden_width());
  require_shape(film.gamma.size() == h && film.beta.size() == h,
                "pcinr: FiLM vector width does not match hidden width");
}

}  // namespace detail

/// Evaluates the decoder at `coords`. With `tangent` set the result also
/// carries the exact d(amplitude)/dt. Pass `cache` to enable backward().
template <class T>
ForwardResult<T> pcinr_forward(const PcinrParams<T>& params, const FilmVector<T>& film,
                               std::span<const T> coords, bool tangent,
                               ForwardCache<T>* cache = nullptr) {
  detail::check_film(params, film);
  const auto freqs = detail::layer_frequencies(params, film);
  const auto n = static_cast<Eigen::Index>(coords.size());
  const Eigen::Index num_blocks = (n + kBlockWidth - 1) / kBlockWidth;

  ForwardResult<T> result;
  result.amplitude.resize(n);
  if (tangent) result.tangent.resize(n);
  if (cache) {
    cache->tangent = tangent;
    cache->count = coords.size();
    cache->blocks.assign(static_cast<std::size_t>(num_blocks), {});
  }

  Mat<T> x(1, kBlockWidth);
  Mat<T> xdot;
  for (Eigen::Index blk = 0; blk < num_blocks; ++blk) {
    const Eigen::Index begin = blk * kBlockWidth;
    const Eigen::Index valid = std::min(kBlockWidth, n - begin);
    x.resize(1, kBlockWidth);
    x.setZero();
    for (Eigen::Index j = 0; j < valid; ++j) {
      const T t = coords[static_cast<std::size_t>(begin + j)];
      if (!std::isfinite(static_cast<double>(t))) throw NumericError("pcinr_forward: non-finite coordinate");
      x(0, j) = t;
    }
    BlockCache<T>* bc = cache ? &cache->blocks[static_cast<std::size_t>(blk)] : nullptr;
    if (bc) {
      bc->coords = x;
      bc->layers.resize(params.layers.size());
    }
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      const auto& layer = params.layers[k];
      const auto& f = freqs[k];
      Mat<T> u = layer.weight * x;
      u.colwise() += layer.bias;
      const Mat<T> s = ((u.array().colwise() * f.array()).colwise() + film.beta.array()).matrix();
      Mat<T> y = s.array().sin().matrix();
      Mat<T> c;
      Mat<T> udot;
      Mat<T> ydot;
      if (tangent || bc) c = s.array().cos().matrix();
      if (tangent) {
        if (k == 0) {
          udot = layer.weight.col(0).replicate(1, kBlockWidth);
        } else {
          udot = layer.weight * xdot;
        }
        ydot = (c.array() * (udot.array().colwise() * f.array())).matrix();
      }
      if (!y.allFinite() || (tangent && !ydot.allFinite())) {
        throw NumericError("pcinr_forward: non-finite activation at sine layer " + std::to_string(k));
      }
      x = y;
      if (tangent) xdot = ydot;
      if (bc) {
        auto& lc = bc->layers[k];
        lc.pre = std::move(u);
        lc.sin_s = std::move(y);
        lc.cos_s = std::move(c);
        if (tangent) {
          lc.pre_tangent = std::move(udot);
          lc.act_tangent = std::move(ydot);
        }
      }
    }
    const Mat<T> amp = params.head_weight * x;
    for (Eigen::Index j = 0; j < valid; ++j) result.amplitude(begin + j) = amp(0, j) + params.head_bias(0);
    if (tangent) {
      const Mat<T> tan = params.head_weight * xdot;
      for (Eigen::Index j = 0; j < valid; ++j) result.tangent(begin + j) = tan(0, j);
    }
  }
  check_finite(result.amplitude, "pcinr_forward output");
  return result;
}

/// Reverse pass. `upstream` is d(loss)/d(amplitude); `upstream_tangent` is
/// d(loss)/d(tangent) or empty when the loss ignores the tangent. Gradients
/// are accumulated into `grad` (skipped when null) and `grad_film`.
template <class T>
void pcinr_backward(const ForwardCache<T>& cache, const PcinrParams<T>& params, const FilmVector<T>& film,
                    std::span<const T> upstream, std::span<const T> upstream_tangent,
                    PcinrParams<T>* grad, FilmVector<T>& grad_film) {
  detail::check_film(params, film);
  const bool use_tangent = !upstream_tangent.empty();
  require_shape(upstream.size() == cache.count, "pcinr_backward: upstream length does not match cache");
  require_shape(!use_tangent || upstream_tangent.size() == cache.count,
                "pcinr_backward: upstream tangent length does not match cache");
  if (use_tangent && !cache.tangent) throw ShapeError("pcinr_backward: cache was built without tangent mode");
  require_shape(!grad || grad->layers.size() == params.layers.size(), "pcinr_backward: gradient container mismatch");
  const auto freqs = detail::layer_frequencies(params, film);
  const auto n = static_cast<Eigen::Index>(cache.count);
  Mat<T> g_amp(1, kBlockWidth);
  Mat<T> g_tan(1, kBlockWidth);
  for (std::size_t blk = 0; blk < cache.blocks.size(); ++blk) {
    const auto& bc = cache.blocks[blk];
    require_shape(bc.layers.size() == params.layers.size(), "pcinr_backward: cache depth mismatch");
    const Eigen::Index begin = static_cast<Eigen::Index>(blk) * kBlockWidth;
    const Eigen::Index valid = std::min(kBlockWidth, n - begin);
    g_amp.setZero();
    g_tan.setZero();
    for (Eigen::Index j = 0; j < valid; ++j) {
      g_amp(0, j) = upstream[static_cast<std::size_t>(begin + j)];
      if (use_tangent) g_tan(0, j) = upstream_tangent[static_cast<std::size_t>(begin + j)];
    }

    const auto& top = bc.layers.back();
    if (grad) {
      grad->head_weight.noalias() += g_amp * top.sin_s.transpose();
      grad->head_bias(0) += g_amp.sum();
    }
    Mat<T> ybar = params.head_weight.transpose() * g_amp;
    Mat<T> ydotbar;
    if (use_tangent) {
      if (grad) grad->head_weight.noalias() += g_tan * top.act_tangent.transpose();
      ydotbar = params.head_weight.transpose() * g_tan;
    }

    for (std::size_t k = params.layers.size(); k-- > 0;) {
      const auto& lc = bc.layers[k];
      const auto& layer = params.layers[k];
      const auto& f = freqs[k];
      Mat<T> sbar = (ybar.array() * lc.cos_s.array()).matrix();
      Mat<T> sdotbar;
      if (use_tangent) {
        const auto sdot = lc.pre_tangent.array().colwise() * f.array();
        sdotbar = (ydotbar.array() * lc.cos_s.array()).matrix();
        sbar.array() -= ydotbar.array() * sdot * lc.sin_s.array();
      }
      Vec<T> gfreq = (sbar.array() * lc.pre.array()).rowwise().sum().matrix();
      grad_film.beta += sbar.rowwise().sum();
      const Mat<T> ubar = (sbar.array().colwise() * f.array()).matrix();
      Mat<T> udotbar;
      if (use_tangent) {
        gfreq += (sdotbar.array() * lc.pre_tangent.array()).rowwise().sum().matrix();
        udotbar = (sdotbar.array().colwise() * f.array()).matrix();
      }
      grad_film.gamma += gfreq;
      if (grad) grad->layers[k].bias += ubar.rowwise().sum();
      if (k == 0) {
        if (grad) {
          grad->layers[0].weight.noalias() += ubar * bc.coords.transpose();
          if (use_tangent) grad->layers[0].weight.col(0) += udotbar.rowwise().sum();
        }
      } else {
        const auto& below = bc.layers[k - 1];
        if (grad) grad->layers[k].weight.noalias() += ubar * below.sin_s.transpose();
        ybar = layer.weight.transpose() * ubar;
        if (use_tangent) {
          if (grad) grad->layers[k].weight.noalias() += udotbar * below.act_tangent.transpose();
          ydotbar = layer.weight.transpose() * udotbar;
        }
      }
    }
  }
}

}  // namespace pcinr
