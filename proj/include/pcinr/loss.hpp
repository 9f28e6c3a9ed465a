#pragma once

// Reconstruction objective: amplitude MSE plus MSE between the prediction's
// time derivative and the target's forward difference, and an optional L2
// penalty on decoder weights.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcinr/error.hpp"
#include "pcinr/numerics.hpp"
#include "pcinr/pcinr_model.hpp"
#include "pcinr/tcnn.hpp"

namespace pcinr {

struct LossBreakdown {
  double mse_term = 0;
  double derivative_term = 0;
  double wr_term = 0;
  double total = 0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    mse_term += o.mse_term;
    derivative_term += o.derivative_term;
    wr_term += o.wr_term;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const { return {mse_term * s, derivative_term * s, wr_term * s, total * s}; }
};

/// Grid t_j = -1 + 2 j / (M - 1) for j = 0..M-1, computed in double so that
/// nested grids share bit-identical coincident coordinates.
template <class T>
std::vector<T> time_grid(std::size_t m, double duration_fraction = 1.0) {
  if (m < 2) throw ConfigError("time grid needs at least 2 samples");
  std::vector<T> t(m);
  const double denom = static_cast<double>(m - 1);
  for (std::size_t j = 0; j < m; ++j) {
    double frac = static_cast<double>(2 * j) / denom;
    if (duration_fraction != 1.0) frac *= duration_fraction;
    t[j] = static_cast<T>(-1.0 + frac);
  }
  return t;
}

/// Coordinate spacing of the M-point grid.
inline double grid_spacing(std::size_t m) { return 2.0 / static_cast<double>(m - 1); }

/// Target slope (a[j+1] - a[j]) / dt for j = 0..M-2.
template <class T, class U>
std::vector<T> forward_difference(std::span<const U> target) {
  const std::size_t m = target.size();
  if (m < 2) throw ShapeError("forward_difference: need at least 2 samples");
  const double inv_dt = 1.0 / grid_spacing(m);
  std::vector<T> d(m - 1);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    d[j] = static_cast<T>((static_cast<double>(target[j + 1]) - static_cast<double>(target[j])) * inv_dt);
  }
  return d;
}

template <class T>
struct ReconstructionLoss {
  LossBreakdown breakdown;
  std::vector<T> grad_pred;
  std::vector<T> grad_tangent;  // empty when no tangent was supplied
};

/// Full-grid objective.
///   mse   = 1/M     sum_j (pred_j - a_j)^2
///   deriv = 1/(M-1) sum_{j<M-1} (pred'_j - (a_{j+1} - a_j)/dt)^2
/// pred' is the supplied analytic tangent, or the forward difference of
/// pred itself when `pred_tangent` is empty (gradient then reaches both
/// samples of each difference).
template <class T, class U>
ReconstructionLoss<T> reconstruction_loss(std::span<const T> pred, std::span<const T> pred_tangent,
                                          std::span<const U> target, bool derivative_term = true) {
  const std::size_t m = target.size();
  require_shape(pred.size() == m, "reconstruction_loss: prediction has " + std::to_string(pred.size()) +
                                      " samples, target has " + std::to_string(m));
  require_shape(pred_tangent.empty() || pred_tangent.size() == m,
                "reconstruction_loss: tangent length does not match target");
  if (m < 2) throw ShapeError("reconstruction_loss: need at least 2 samples");
  ReconstructionLoss<T> out;
  out.grad_pred.assign(m, T(0));
  const double inv_m = 1.0 / static_cast<double>(m);
  double mse = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double r = static_cast<double>(pred[j]) - static_cast<double>(target[j]);
    mse += r * r;
    out.grad_pred[j] = static_cast<T>(2.0 * r * inv_m);
  }
  out.breakdown.mse_term = mse * inv_m;

  if (derivative_term) {
    const auto slope = forward_difference<double>(target);
    const double inv_dt = 1.0 / grid_spacing(m);
    const double inv_n = 1.0 / static_cast<double>(m - 1);
    double der = 0;
    if (!pred_tangent.empty()) out.grad_tangent.assign(m, T(0));
    for (std::size_t j = 0; j + 1 < m; ++j) {
      const double p = pred_tangent.empty()
                           ? (static_cast<double>(pred[j + 1]) - static_cast<double>(pred[j])) * inv_dt
                           : static_cast<double>(pred_tangent[j]);
      const double r = p - slope[j];
      der += r * r;
      const double g = 2.0 * r * inv_n;
      if (pred_tangent.empty()) {
        out.grad_pred[j + 1] += static_cast<T>(g * inv_dt);
        out.grad_pred[j] -= static_cast<T>(g * inv_dt);
      } else {
        out.grad_tangent[j] = static_cast<T>(g);
      }
    }
    out.breakdown.derivative_term = der * inv_n;
  } else if (!pred_tangent.empty()) {
    out.grad_tangent.assign(m, T(0));
  }
  out.breakdown.total = out.breakdown.mse_term + out.breakdown.derivative_term;
  return out;
}

/// (lambda/2) * sum ||W||^2 over decoder weight matrices only; biases and
/// the mapping network are untouched. Adds lambda * W to `grad` when given.
template <class T>
double weight_reg_term(const PcinrParams<T>& decoder, double lambda, PcinrParams<T>* grad = nullptr) {
  if (lambda < 0) throw ConfigError("weight regularization strength must be >= 0");
  if (lambda == 0) return 0.0;
  double sq = 0;
  for (std::size_t k = 0; k < decoder.layers.size(); ++k) {
    sq += decoder.layers[k].weight.template cast<double>().squaredNorm();
    if (grad) grad->layers[k].weight += static_cast<T>(lambda) * decoder.layers[k].weight;
  }
  sq += decoder.head_weight.template cast<double>().squaredNorm();
  if (grad) grad->head_weight += static_cast<T>(lambda) * decoder.head_weight;
  return 0.5 * lambda * sq;
}

/// TCNN variant: dense weight and every transposed-conv kernel.
template <class T>
double weight_reg_term(const TcnnParams<T>& decoder, double lambda, TcnnParams<T>* grad = nullptr) {
  if (lambda < 0) throw ConfigError("weight regularization strength must be >= 0");
  if (lambda == 0) return 0.0;
  double sq = decoder.dense.weight.template cast<double>().squaredNorm();
  if (grad) grad->dense.weight += static_cast<T>(lambda) * decoder.dense.weight;
  for (std::size_t k = 0; k < decoder.convs.size(); ++k) {
    sq += decoder.convs[k].kernel.template cast<double>().squaredNorm();
    if (grad) grad->convs[k].kernel += static_cast<T>(lambda) * decoder.convs[k].kernel;
  }
  return 0.5 * lambda * sq;
}

/// Sum of squared decoder weights (biases excluded).
template <class T>
double decoder_weight_sq_norm(const PcinrParams<T>& decoder) {
  double sq = decoder.head_weight.template cast<double>().squaredNorm();
  for (const auto& layer : decoder.layers) sq += layer.weight.template cast<double>().squaredNorm();
  return sq;
}

}  // namespace pcinr
