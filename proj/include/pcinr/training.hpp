#pragma once

// Autodecoder training: one learnable latent per dataset item, optimized
// jointly with the decoder (and, for PCINR, the mapping network).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "pcinr/audio_io.hpp"
#include "pcinr/error.hpp"
#include "pcinr/loss.hpp"
#include "pcinr/numerics.hpp"
#include "pcinr/optim.hpp"
#include "pcinr/pcinr_model.hpp"
#include "pcinr/tcnn.hpp"

namespace pcinr {

enum class Arch { pcinr, pcinr_wide, tcnn };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::pcinr: return "pcinr";
    case Arch::pcinr_wide: return "pcinr_wide";
    case Arch::tcnn: return "tcnn";
  }
  return "?";
}

inline Arch parse_arch(const std::string& s) {
  if (s == "pcinr") return Arch::pcinr;
  if (s == "pcinr_wide") return Arch::pcinr_wide;
  if (s == "tcnn") return Arch::tcnn;
  throw ConfigError("unknown arch '" + s + "'");
}

struct TrainConfig {
  Arch arch = Arch::pcinr;
  std::size_t epochs = 5000;
  std::size_t batch_items = 16;
  std::size_t coords_per_item = 0;  // 0 = full grid every step (PCINR only)
  double lambda_wr = 0.0;
  bool derivative_term = true;
  OptimizerKind optimizer = OptimizerKind::adabelief;
  double lr_net = 1e-4;
  double lr_latent = 1e-3;
  double latent_init_std = 0.01;
  std::uint64_t seed = 0;
  std::size_t item_length = kDefaultItemLength;
  PcinrConfig pcinr;
  TcnnConfig tcnn;

  bool is_pcinr() const { return arch != Arch::tcnn; }
  std::size_t latent_dim() const { return is_pcinr() ? pcinr.latent_dim : tcnn.latent_dim; }

  void validate() const {
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_items >= 1, "batch_items must be >= 1");
    require(lambda_wr >= 0, "lambda_wr must be >= 0");
    require(lr_net > 0 && lr_latent > 0, "learning rates must be > 0");
    require(latent_init_std >= 0, "latent_init_std must be >= 0");
    require(item_length >= 2, "item_length must be >= 2");
    if (is_pcinr()) {
      pcinr.validate();
    } else {
      tcnn.validate();
      require(tcnn.output_length() >= item_length, "tcnn output shorter than item_length");
    }
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["arch"] = to_string(c.arch);
  j["epochs"] = c.epochs;
  j["batch_items"] = c.batch_items;
  j["coords_per_item"] = c.coords_per_item;
  j["lambda_wr"] = c.lambda_wr;
  j["derivative_term"] = c.derivative_term;
  j["optimizer"] = to_string(c.optimizer);
  j["lr_net"] = c.lr_net;
  j["lr_latent"] = c.lr_latent;
  j["latent_init_std"] = c.latent_init_std;
  j["seed"] = c.seed;
  j["item_length"] = c.item_length;
  j["pcinr"] = {{"hidden_width", c.pcinr.hidden_width}, {"depth", c.pcinr.depth},
                {"latent_dim", c.pcinr.latent_dim},     {"omega0_first", c.pcinr.omega0_first},
                {"omega0_hidden", c.pcinr.omega0_hidden}, {"mapping_width", c.pcinr.mapping_width},
                {"mapping_depth", c.pcinr.mapping_depth}};
  j["tcnn"] = {{"latent_dim", c.tcnn.latent_dim},   {"base_channels", c.tcnn.base_channels},
               {"kernel_len", c.tcnn.kernel_len},   {"stride", c.tcnn.stride},
               {"num_upsample_layers", c.tcnn.num_upsample_layers},
               {"seed_timesteps", c.tcnn.seed_timesteps}};
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.arch = parse_arch(j.at("arch").get<std::string>());
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_items = j.at("batch_items").get<std::size_t>();
    c.coords_per_item = j.at("coords_per_item").get<std::size_t>();
    c.lambda_wr = j.at("lambda_wr").get<double>();
    c.derivative_term = j.at("derivative_term").get<bool>();
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.lr_net = j.at("lr_net").get<double>();
    c.lr_latent = j.at("lr_latent").get<double>();
    c.latent_init_std = j.at("latent_init_std").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.item_length = j.at("item_length").get<std::size_t>();
    const auto& p = j.at("pcinr");
    c.pcinr.hidden_width = p.at("hidden_width").get<std::size_t>();
    c.pcinr.depth = p.at("depth").get<std::size_t>();
    c.pcinr.latent_dim = p.at("latent_dim").get<std::size_t>();
    c.pcinr.omega0_first = p.at("omega0_first").get<double>();
    c.pcinr.omega0_hidden = p.at("omega0_hidden").get<double>();
    c.pcinr.mapping_width = p.at("mapping_width").get<std::size_t>();
    c.pcinr.mapping_depth = p.at("mapping_depth").get<std::size_t>();
    const auto& t = j.at("tcnn");
    c.tcnn.latent_dim = t.at("latent_dim").get<std::size_t>();
    c.tcnn.base_channels = t.at("base_channels").get<std::size_t>();
    c.tcnn.kernel_len = t.at("kernel_len").get<std::size_t>();
    c.tcnn.stride = t.at("stride").get<std::size_t>();
    c.tcnn.num_upsample_layers = t.at("num_upsample_layers").get<std::size_t>();
    c.tcnn.seed_timesteps = t.at("seed_timesteps").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("training config: ") + e.what());
  }
  return c;
}

inline std::uint64_t config_hash(const TrainConfig& c) {
  Fnv1a64 h;
  h.update_string(to_json(c).dump());
  return h.value();
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

template <class T>
struct TrainState {
  TrainConfig config;
  PcinrParams<T> decoder;   // PCINR only
  MappingParams<T> mapping; // PCINR only
  TcnnParams<T> tcnn;       // TCNN only
  Tensor2<T> latents;       // items x latent_dim
  OptimState<T> net_opt;
  std::vector<OptimState<T>> latent_opt;  // one per latent row
  std::size_t epoch = 0;
  Rng rng;
  std::uint64_t dataset_hash = 0;

  std::size_t item_count() const { return static_cast<std::size_t>(latents.rows()); }
  bool is_pcinr() const { return config.is_pcinr(); }

  template <class F>
  void visit_net(F&& f) {
    if (is_pcinr()) {
      decoder.visit(f);
      mapping.visit(f);
    } else {
      tcnn.visit(f);
    }
  }
  template <class F>
  void visit_net(F&& f) const {
    if (is_pcinr()) {
      decoder.visit(f);
      mapping.visit(f);
    } else {
      tcnn.visit(f);
    }
  }
};

template <class T>
TrainState<T> init_train_state(const TrainConfig& config, std::size_t item_count, std::uint64_t data_hash = 0) {
  config.validate();
  require(item_count >= 1, "dataset must contain at least one item");
  TrainState<T> s;
  s.config = config;
  s.rng = Rng(config.seed);
  if (config.is_pcinr()) {
    auto net = init_pcinr<T>(config.pcinr, s.rng);
    s.decoder = std::move(net.decoder);
    s.mapping = std::move(net.mapping);
  } else {
    s.tcnn = init_tcnn<T>(config.tcnn, s.rng);
  }
  const auto d = static_cast<Eigen::Index>(config.latent_dim());
  s.latents.resize(static_cast<Eigen::Index>(item_count), d);
  for (Eigen::Index i = 0; i < s.latents.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      s.latents(i, k) = static_cast<T>(config.latent_init_std * s.rng.next_normal());
    }
  }
  s.net_opt = make_optim_state<T>(config.optimizer, config.lr_net);
  s.latent_opt.assign(item_count, make_optim_state<T>(config.optimizer, config.lr_latent));
  s.dataset_hash = data_hash;
  return s;
}

/// Gradients for one optimization step.
template <class T>
struct TrainGrads {
  PcinrParams<T> decoder;
  MappingParams<T> mapping;
  TcnnParams<T> tcnn;
  std::vector<std::size_t> items;
  Tensor2<T> latent;  // one row per entry of `items`

  template <class F>
  void visit_net(bool pcinr, F&& f) {
    if (pcinr) {
      decoder.visit(f);
      mapping.visit(f);
    } else {
      tcnn.visit(f);
    }
  }
};

template <class T>
TrainGrads<T> zero_grads(const TrainState<T>& s, std::span<const std::size_t> items) {
  TrainGrads<T> g;
  if (s.is_pcinr()) {
    g.decoder = zeros_like(s.decoder);
    g.mapping = zeros_like(s.mapping);
  } else {
    g.tcnn = zeros_like(s.tcnn);
  }
  g.items.assign(items.begin(), items.end());
  g.latent = Tensor2<T>::Zero(static_cast<Eigen::Index>(items.size()), s.latents.cols());
  return g;
}

/// Coordinate indices evaluated for one item; empty means the full grid.
using CoordPlan = std::vector<std::size_t>;

/// Draws `coords_per_item` distinct indices from [0, M-2] per item, or
/// returns full-grid plans when subsampling is off.
inline std::vector<CoordPlan> draw_coord_plans(Rng& rng, std::size_t coords_per_item, std::size_t m,
                                               std::size_t n_items) {
  std::vector<CoordPlan> plans(n_items);
  if (coords_per_item == 0 || coords_per_item >= m - 1) return plans;
  std::vector<std::size_t> pool(m - 1);
  for (auto& plan : plans) {
    for (std::size_t j = 0; j < pool.size(); ++j) pool[j] = j;
    for (std::size_t j = 0; j < coords_per_item; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.next_below(pool.size() - j));
      std::swap(pool[j], pool[pick]);
    }
    plan.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(coords_per_item));
    std::sort(plan.begin(), plan.end());
  }
  return plans;
}

inline constexpr std::size_t kChunkCoords = 4 * static_cast<std::size_t>(kBlockWidth);

namespace detail {

/// Loss and gradients of one PCINR item, scaled by `item_scale`.
/// `grad_decoder`/`grad_mapping` may be null to skip shared-parameter
/// gradients; the latent gradient is always returned.
template <class T, class U>
LossBreakdown pcinr_item(const PcinrParams<T>& decoder, const MappingParams<T>& mapping,
                         const Eigen::Ref<const Vec<std::type_identity_t<T>>>& z, std::span<const U> target, const CoordPlan& plan,
                         bool derivative_term, double item_scale, PcinrParams<T>* grad_decoder,
                         MappingParams<T>* grad_mapping, Vec<T>* grad_z) {
  const std::size_t m = target.size();
  const auto grid = time_grid<T>(m);
  const auto slope = forward_difference<double>(target);
  const bool full = plan.empty();
  const std::size_t count = full ? m : plan.size();
  const double w_mse = full ? 1.0 / static_cast<double>(m) : 1.0 / static_cast<double>(count);
  const double w_der = full ? 1.0 / static_cast<double>(m - 1) : 1.0 / static_cast<double>(count);

  MappingCache<T> mcache;
  const FilmVector<T> film = map_latent(mapping, z, &mcache);
  FilmVector<T> grad_film = FilmVector<T>::zeros(decoder.hidden_width());

  double mse = 0, der = 0;
  std::vector<T> coords, up, up_tan;
  ForwardCache<T> cache;
  for (std::size_t begin = 0; begin < count; begin += kChunkCoords) {
    const std::size_t n = std::min(kChunkCoords, count - begin);
    coords.resize(n);
    up.resize(n);
    up_tan.assign(derivative_term ? n : 0, T(0));
    for (std::size_t c = 0; c < n; ++c) coords[c] = grid[full ? begin + c : plan[begin + c]];
    const auto fwd = pcinr_forward<T>(decoder, film, coords, derivative_term, &cache);
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t j = full ? begin + c : plan[begin + c];
      const double r = static_cast<double>(fwd.amplitude(static_cast<Eigen::Index>(c))) - static_cast<double>(target[j]);
      mse += r * r;
      up[c] = static_cast<T>(item_scale * w_mse * 2.0 * r);
      if (derivative_term && j + 1 < m) {
        const double rd = static_cast<double>(fwd.tangent(static_cast<Eigen::Index>(c))) - slope[j];
        der += rd * rd;
        up_tan[c] = static_cast<T>(item_scale * w_der * 2.0 * rd);
      }
    }
    pcinr_backward<T>(cache, decoder, film, up, up_tan, grad_decoder, grad_film);
  }
  MappingParams<T> scratch;
  MappingParams<T>* gm = grad_mapping;
  if (!gm) {
    scratch = zeros_like(mapping);
    gm = &scratch;
  }
  const Vec<T> gz = map_latent_backward(mapping, mcache, grad_film, *gm);
  if (grad_z) *grad_z = gz;

  LossBreakdown lb;
  lb.mse_term = mse * w_mse;
  lb.derivative_term = derivative_term ? der * w_der : 0.0;
  lb.total = lb.mse_term + lb.derivative_term;
  return lb;
}

template <class T, class U>
LossBreakdown tcnn_item(const TcnnParams<T>& params, const Eigen::Ref<const Vec<std::type_identity_t<T>>>& z, std::span<const U> target,
                        bool derivative_term, double item_scale, TcnnParams<T>* grad, Vec<T>* grad_z) {
  TcnnCache<T> cache;
  const Vec<T> out = tcnn_forward(params, z, &cache);
  const std::size_t m = target.size();
  require_shape(static_cast<std::size_t>(out.size()) >= m, "tcnn output shorter than target");
  const auto rl = reconstruction_loss<T, U>(std::span<const T>(out.data(), m), {}, target, derivative_term);
  std::vector<T> up(static_cast<std::size_t>(out.size()), T(0));
  for (std::size_t j = 0; j < m; ++j) up[j] = static_cast<T>(item_scale * static_cast<double>(rl.grad_pred[j]));
  TcnnParams<T> scratch;
  TcnnParams<T>* g = grad;
  if (!g) {
    scratch = zeros_like(params);
    g = &scratch;
  }
  const Vec<T> gz = tcnn_backward(cache, params, std::span<const T>(up), *g);
  if (grad_z) *grad_z = gz;
  return rl.breakdown;
}

}  // namespace detail

/// Mean loss over `items` (plus the regularization term) and its gradient.
template <class T>
LossBreakdown batch_gradients(const TrainState<T>& s, std::span<const Waveform> dataset,
                              std::span<const std::size_t> items, std::span<const CoordPlan> plans,
                              TrainGrads<T>& grads) {
  require_shape(plans.size() == items.size(), "batch_gradients: one coordinate plan per item required");
  const double scale = 1.0 / static_cast<double>(items.size());
  LossBreakdown total;
  for (std::size_t r = 0; r < items.size(); ++r) {
    const std::size_t i = items[r];
    require_shape(i < dataset.size() && i < s.item_count(), "batch_gradients: item index out of range");
    const std::span<const float> target(dataset[i].samples);
    const auto z = s.latents.row(static_cast<Eigen::Index>(i)).transpose();
    Vec<T> gz;
    LossBreakdown lb;
    if (s.is_pcinr()) {
      lb = detail::pcinr_item<T, float>(s.decoder, s.mapping, z, target, plans[r], s.config.derivative_term, scale,
                                        &grads.decoder, &grads.mapping, &gz);
    } else {
      lb = detail::tcnn_item<T, float>(s.tcnn, z, target, s.config.derivative_term, scale, &grads.tcnn, &gz);
    }
    grads.latent.row(static_cast<Eigen::Index>(r)) = gz.transpose();
    total += lb.scaled(scale);
  }
  if (s.is_pcinr()) {
    total.wr_term = weight_reg_term(s.decoder, s.config.lambda_wr, &grads.decoder);
  } else {
    total.wr_term = weight_reg_term(s.tcnn, s.config.lambda_wr, &grads.tcnn);
  }
  total.total = total.mse_term + total.derivative_term + total.wr_term;
  return total;
}

/// Applies one optimizer step to the shared parameters and to the latent
/// rows named in `grads.items`. Other latent rows are not touched.
template <class T>
void apply_gradients(TrainState<T>& s, TrainGrads<T>& grads) {
  std::vector<std::span<T>> params;
  std::vector<std::span<const T>> g;
  s.visit_net([&](const std::string&, auto& t) { params.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  grads.visit_net(s.is_pcinr(),
                  [&](const std::string&, auto& t) { g.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  optimizer_step<T>(s.net_opt, params, g);

  const auto d = static_cast<std::size_t>(s.latents.cols());
  for (std::size_t r = 0; r < grads.items.size(); ++r) {
    const std::size_t i = grads.items[r];
    std::vector<std::span<T>> row{std::span<T>(s.latents.row(static_cast<Eigen::Index>(i)).data(), d)};
    std::vector<std::span<const T>> grow{std::span<const T>(grads.latent.row(static_cast<Eigen::Index>(r)).data(), d)};
    optimizer_step<T>(s.latent_opt[i], row, grow);
  }
}

/// One optimization step on a batch of items.
template <class T>
LossBreakdown train_step(TrainState<T>& s, std::span<const Waveform> dataset, std::span<const std::size_t> items) {
  const std::size_t m = dataset[items.front()].samples.size();
  const auto plans = s.is_pcinr() ? draw_coord_plans(s.rng, s.config.coords_per_item, m, items.size())
                                  : std::vector<CoordPlan>(items.size());
  auto grads = zero_grads(s, items);
  const LossBreakdown lb = batch_gradients<T>(s, dataset, items, plans, grads);
  if (!std::isfinite(lb.total)) throw NumericError("non-finite loss");
  apply_gradients(s, grads);
  return lb;
}

/// One pass over every item in a seed-determined order, `batch_items` at a
/// time. Returns item-weighted epoch means.
template <class T>
LossBreakdown train_epoch(TrainState<T>& s, std::span<const Waveform> dataset) {
  require_shape(dataset.size() == s.item_count(),
                "train_epoch: dataset has " + std::to_string(dataset.size()) + " items, latent table has " +
                    std::to_string(s.item_count()));
  for (const auto& w : dataset) {
    require_shape(w.samples.size() == s.config.item_length,
                  "train_epoch: item length " + std::to_string(w.samples.size()) + " != configured " +
                      std::to_string(s.config.item_length));
  }
  const auto order = permutation(s.rng, dataset.size());
  LossBreakdown sum;
  std::size_t batch_no = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += s.config.batch_items, ++batch_no) {
    const std::size_t n = std::min(s.config.batch_items, order.size() - begin);
    const std::span<const std::size_t> items(order.data() + begin, n);
    LossBreakdown lb;
    try {
      lb = train_step(s, dataset, items);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(s.epoch) + ", batch " + std::to_string(batch_no) + ": " + e.what());
    }
    sum += lb.scaled(static_cast<double>(n));
  }
  ++s.epoch;
  return sum.scaled(1.0 / static_cast<double>(dataset.size()));
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

/// Evaluates the model for `latent` on an M'-point grid spanning
/// `duration_fraction` of [-1, 1]. TCNN has a fixed output and accepts only
/// its full length or the training crop length.
template <class T>
std::vector<T> synthesize(const TrainState<T>& s, const Eigen::Ref<const Vec<std::type_identity_t<T>>>& latent, std::size_t sample_count,
                          double duration_fraction = 1.0) {
  if (sample_count < 2) throw ConfigError("synthesize: need at least 2 samples");
  if (s.is_pcinr()) {
    const auto grid = time_grid<T>(sample_count, duration_fraction);
    const FilmVector<T> film = map_latent(s.mapping, latent);
    const auto fwd = pcinr_forward<T>(s.decoder, film, grid, false);
    return {fwd.amplitude.data(), fwd.amplitude.data() + fwd.amplitude.size()};
  }
  const std::size_t full = s.config.tcnn.output_length();
  if (sample_count != full && sample_count != s.config.item_length) {
    throw ConfigError("synthesize: tcnn produces " + std::to_string(full) + " samples (or the " +
                      std::to_string(s.config.item_length) + "-sample crop); " + std::to_string(sample_count) +
                      " requested");
  }
  const Vec<T> out = tcnn_forward(s.tcnn, latent);
  return {out.data(), out.data() + sample_count};
}

template <class T>
std::vector<T> synthesize_item(const TrainState<T>& s, std::size_t item, std::size_t sample_count,
                               double duration_fraction = 1.0) {
  if (item >= s.item_count()) throw ConfigError("synthesize: item " + std::to_string(item) + " out of range");
  return synthesize<T>(s, s.latents.row(static_cast<Eigen::Index>(item)).transpose(), sample_count, duration_fraction);
}

/// Elementwise mean of per-model syntheses of the same item.
template <class T>
std::vector<T> ensemble_synthesize(std::span<const TrainState<T>* const> states, std::size_t item,
                                   std::size_t sample_count) {
  if (states.size() < 2) throw ConfigError("ensemble_synthesize: need at least 2 checkpoints");
  for (const auto* st : states) {
    if (st->item_count() != states.front()->item_count() || st->config.item_length != states.front()->config.item_length ||
        st->dataset_hash != states.front()->dataset_hash) {
      throw ConfigError("ensemble_synthesize: checkpoints were trained on different datasets or grids");
    }
  }
  std::vector<double> acc(sample_count, 0.0);
  for (const auto* st : states) {
    const auto y = synthesize_item(*st, item, sample_count);
    for (std::size_t j = 0; j < sample_count; ++j) acc[j] += static_cast<double>(y[j]);
  }
  std::vector<T> out(sample_count);
  for (std::size_t j = 0; j < sample_count; ++j) out[j] = static_cast<T>(acc[j] / static_cast<double>(states.size()));
  return out;
}

template <class T>
struct EncodeResult {
  Vec<T> latent;
  LossBreakdown loss;  // at the returned latent
};

/// Fits a fresh latent to `target` with the shared networks frozen.
template <class T>
EncodeResult<T> encode_unseen(const TrainState<T>& s, std::span<const float> target, std::size_t steps, double lr,
                              std::uint64_t seed, std::size_t coords_per_item = 0) {
  if (!s.is_pcinr()) throw ConfigError("encode: only the pcinr family supports latent encoding");
  require_shape(target.size() == s.config.item_length,
                "encode: waveform has " + std::to_string(target.size()) + " samples, model expects " +
                    std::to_string(s.config.item_length));
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(s.config.latent_dim());
  EncodeResult<T> res;
  res.latent.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) res.latent(k) = static_cast<T>(s.config.latent_init_std * rng.next_normal());
  auto opt = make_optim_state<T>(OptimizerKind::adam, lr);
  Vec<T> gz;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto plans = draw_coord_plans(rng, coords_per_item, target.size(), 1);
    const auto lb = detail::pcinr_item<T, float>(s.decoder, s.mapping, res.latent, target, plans[0],
                                                 s.config.derivative_term, 1.0, nullptr, nullptr, &gz);
    if (!std::isfinite(lb.total)) throw NumericError("encode: non-finite loss at step " + std::to_string(step));
    std::vector<std::span<T>> p{std::span<T>(res.latent.data(), static_cast<std::size_t>(d))};
    std::vector<std::span<const T>> g{std::span<const T>(gz.data(), static_cast<std::size_t>(d))};
    optimizer_step<T>(opt, p, g);
  }
  res.loss = detail::pcinr_item<T, float>(s.decoder, s.mapping, res.latent, target, CoordPlan{},
                                          s.config.derivative_term, 1.0, nullptr, nullptr, &gz);
  return res;
}

/// Full-grid loss of one stored item (no regularization term).
template <class T>
LossBreakdown item_loss(const TrainState<T>& s, std::span<const float> target, std::size_t item) {
  const auto z = s.latents.row(static_cast<Eigen::Index>(item)).transpose();
  Vec<T> gz;
  if (s.is_pcinr()) {
    return detail::pcinr_item<T, float>(s.decoder, s.mapping, z, target, CoordPlan{}, s.config.derivative_term, 1.0,
                                         nullptr, nullptr, &gz);
  }
  return detail::tcnn_item<T, float>(s.tcnn, z, target, s.config.derivative_term, 1.0, nullptr, &gz);
}

}  // namespace pcinr
