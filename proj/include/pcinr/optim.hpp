#pragma once

// Adam and AdaBelief over a list of flat parameter tensors.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcinr/error.hpp"

namespace pcinr {

enum class OptimizerKind { adam, adabelief };

inline std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "adabelief"; }

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "adabelief") return OptimizerKind::adabelief;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or adabelief)");
}

struct OptimHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for one trainable container. `second` holds v (Adam) or s
/// (AdaBelief). Buffers are sized lazily on the first step.
template <class T>
struct OptimState {
  OptimizerKind kind = OptimizerKind::adabelief;
  OptimHyper hyper;
  std::int64_t step = 0;
  std::vector<std::vector<T>> first;
  std::vector<std::vector<T>> second;
};

template <class T>
OptimState<T> make_optim_state(OptimizerKind kind, double lr) {
  OptimState<T> s;
  s.kind = kind;
  s.hyper.lr = lr;
  return s;
}

namespace detail {

template <class T>
void ensure_buffers(OptimState<T>& state, std::span<const std::span<T>> params,
                    std::span<const std::span<const T>> grads) {
  require_shape(params.size() == grads.size(), "optimizer: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(params[i].size() == grads[i].size(), "optimizer: parameter/gradient shape mismatch");
    for (T g : grads[i]) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("optimizer: non-finite gradient");
    }
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.size(), T(0));
      state.second.emplace_back(p.size(), T(0));
    }
  }
  require_shape(state.first.size() == params.size(), "optimizer: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(state.first[i].size() == params[i].size(), "optimizer: state shape mismatch");
  }
}

}  // namespace detail

/// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
template <class T>
void adam_step(OptimState<T>& state, std::span<const std::span<T>> params,
               std::span<const std::span<const T>> grads) {
  detail::ensure_buffers(state, params, grads);
  const auto& hp = state.hyper;
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const T g = grads[i][j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const double m_hat = static_cast<double>(m[j]) / bc1;
      const double v_hat = static_cast<double>(v[j]) / bc2;
      params[i][j] -= static_cast<T>(hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps));
    }
  }
}

/// As Adam, but the second moment tracks (g - m)^2 + eps, the spread of the
/// gradient around its running mean.
template <class T>
void adabelief_step(OptimState<T>& state, std::span<const std::span<T>> params,
                    std::span<const std::span<const T>> grads) {
  detail::ensure_buffers(state, params, grads);
  const auto& hp = state.hyper;
  ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2), eps = static_cast<T>(hp.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first[i];
    auto& s = state.second[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const T g = grads[i][j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      const T d = g - m[j];
      s[j] = b2 * s[j] + (T(1) - b2) * d * d + eps;
      const double m_hat = static_cast<double>(m[j]) / bc1;
      const double s_hat = static_cast<double>(s[j]) / bc2;
      params[i][j] -= static_cast<T>(hp.lr * m_hat / (std::sqrt(s_hat) + hp.eps));
    }
  }
}

template <class T>
void optimizer_step(OptimState<T>& state, std::span<const std::span<T>> params,
                    std::span<const std::span<const T>> grads) {
  if (state.kind == OptimizerKind::adam) {
    adam_step(state, params, grads);
  } else {
    adabelief_step(state, params, grads);
  }
}

/// Flat views over every tensor of a visitable parameter container.
template <class T, class P>
std::vector<std::span<T>> mutable_spans(P& params) {
  std::vector<std::span<T>> out;
  params.visit([&](const std::string&, auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

template <class T, class P>
std::vector<std::span<const T>> const_spans(const P& params) {
  std::vector<std::span<const T>> out;
  params.visit([&](const std::string&, const auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

}  // namespace pcinr
