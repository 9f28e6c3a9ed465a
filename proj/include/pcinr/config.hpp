#pragma once

// Run configuration: a flat JSON object of known keys layered as
//   arch preset < config file < command-line overrides.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "pcinr/audio_io.hpp"
#include "pcinr/error.hpp"
#include "pcinr/metrics.hpp"
#include "pcinr/training.hpp"

namespace pcinr {

inline constexpr double kDefaultWrLambda = 1e-4;

struct SweepSpace {
  double omega0_first_lo = 500.0;
  double omega0_first_hi = 10000.0;
  double omega0_hidden_lo = 5.0;
  double omega0_hidden_hi = 100.0;
  std::size_t candidate_count = 16;
  std::vector<std::size_t> rung_epochs = {25, 50, 100, 200};
  double keep_fraction = 0.5;

  void validate() const {
    require(omega0_first_lo > 0 && omega0_first_lo < omega0_first_hi, "sweep: omega0_first range must satisfy 0 < lo < hi");
    require(omega0_hidden_lo > 0 && omega0_hidden_lo < omega0_hidden_hi,
            "sweep: omega0_hidden range must satisfy 0 < lo < hi");
    require(candidate_count >= 1, "sweep: candidate_count must be >= 1");
    require(!rung_epochs.empty(), "sweep: need at least one rung");
    for (std::size_t i = 0; i < rung_epochs.size(); ++i) {
      require(rung_epochs[i] >= 1, "sweep: rung epochs must be >= 1");
      require(i == 0 || rung_epochs[i] > rung_epochs[i - 1], "sweep: rung epochs must be strictly increasing");
    }
    require(keep_fraction > 0 && keep_fraction <= 1, "sweep: keep_fraction must be in (0, 1]");
  }
};

struct RunConfig {
  std::string arch_name = "pcinr";  // pcinr | pcinr_wide | pcinr_wr | tcnn
  TrainConfig train;
  std::string dataset;
  std::string out;
  std::size_t checkpoint_every = 100;
  MetricToggles metrics;
  SweepSpace sweep;

  void validate() const {
    train.validate();
    sweep.validate();
    require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  }
};

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "arch", "dataset", "out", "seed", "epochs", "batch_items", "coords_per_item", "lambda_wr", "derivative_term",
      "optimizer", "lr_net", "lr_latent", "latent_init_std", "item_length", "checkpoint_every",
      "hidden_width", "depth", "latent_dim", "omega0_first", "omega0_hidden", "mapping_width", "mapping_depth",
      "tcnn_base_channels", "tcnn_kernel_len", "tcnn_stride", "tcnn_upsample_layers", "tcnn_seed_timesteps",
      "metric_snr", "metric_lsd", "metric_multi_stft",
      "sweep_omega0_first_lo", "sweep_omega0_first_hi", "sweep_omega0_hidden_lo", "sweep_omega0_hidden_hi",
      "sweep_candidates", "sweep_rungs", "sweep_keep_fraction"};
  return keys;
}

/// Defaults for one of the four compared variants.
inline RunConfig arch_preset(const std::string& arch) {
  RunConfig rc;
  rc.arch_name = arch;
  if (arch == "pcinr") {
    rc.train.arch = Arch::pcinr;
  } else if (arch == "pcinr_wide") {
    rc.train.arch = Arch::pcinr_wide;
    rc.train.pcinr = PcinrConfig::wide();
  } else if (arch == "pcinr_wr") {
    rc.train.arch = Arch::pcinr;
    rc.train.lambda_wr = kDefaultWrLambda;
  } else if (arch == "tcnn") {
    rc.train.arch = Arch::tcnn;
  } else {
    throw ConfigError("unknown arch '" + arch + "' (expected pcinr, pcinr_wide, pcinr_wr or tcnn)");
  }
  return rc;
}

namespace detail {

template <class V>
V get_key(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Resolves `layers` (applied in order, later wins) into a validated config.
/// Each layer must be a flat object of known keys.
inline RunConfig resolve_config(const std::vector<nlohmann::json>& layers) {
  nlohmann::json merged = nlohmann::json::object();
  for (const auto& layer : layers) {
    if (!layer.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, value] : layer.items()) {
      if (!known_config_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
      merged[key] = value;
    }
  }
  using detail::get_key;
  RunConfig rc = arch_preset(merged.contains("arch") ? get_key<std::string>(merged, "arch") : "pcinr");
  auto& t = rc.train;
  auto set = [&](const char* key, auto& field) {
    if (merged.contains(key)) field = get_key<std::decay_t<decltype(field)>>(merged, key);
  };
  set("dataset", rc.dataset);
  set("out", rc.out);
  set("seed", t.seed);
  set("epochs", t.epochs);
  set("batch_items", t.batch_items);
  set("coords_per_item", t.coords_per_item);
  set("lambda_wr", t.lambda_wr);
  set("derivative_term", t.derivative_term);
  if (merged.contains("optimizer")) t.optimizer = parse_optimizer(get_key<std::string>(merged, "optimizer"));
  set("lr_net", t.lr_net);
  set("lr_latent", t.lr_latent);
  set("latent_init_std", t.latent_init_std);
  set("item_length", t.item_length);
  set("checkpoint_every", rc.checkpoint_every);
  set("hidden_width", t.pcinr.hidden_width);
  set("depth", t.pcinr.depth);
  if (merged.contains("latent_dim")) {
    t.pcinr.latent_dim = get_key<std::size_t>(merged, "latent_dim");
    t.tcnn.latent_dim = t.pcinr.latent_dim;
  }
  set("omega0_first", t.pcinr.omega0_first);
  set("omega0_hidden", t.pcinr.omega0_hidden);
  set("mapping_width", t.pcinr.mapping_width);
  set("mapping_depth", t.pcinr.mapping_depth);
  set("tcnn_base_channels", t.tcnn.base_channels);
  set("tcnn_kernel_len", t.tcnn.kernel_len);
  set("tcnn_stride", t.tcnn.stride);
  set("tcnn_upsample_layers", t.tcnn.num_upsample_layers);
  set("tcnn_seed_timesteps", t.tcnn.seed_timesteps);
  set("metric_snr", rc.metrics.snr);
  set("metric_lsd", rc.metrics.lsd);
  set("metric_multi_stft", rc.metrics.multi_stft);
  set("sweep_omega0_first_lo", rc.sweep.omega0_first_lo);
  set("sweep_omega0_first_hi", rc.sweep.omega0_first_hi);
  set("sweep_omega0_hidden_lo", rc.sweep.omega0_hidden_lo);
  set("sweep_omega0_hidden_hi", rc.sweep.omega0_hidden_hi);
  set("sweep_candidates", rc.sweep.candidate_count);
  set("sweep_rungs", rc.sweep.rung_epochs);
  set("sweep_keep_fraction", rc.sweep.keep_fraction);
  rc.validate();
  return rc;
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Fully resolved config as a flat object; feeding it back through
/// resolve_config reproduces the same RunConfig.
inline nlohmann::json to_flat_json(const RunConfig& rc) {
  const auto& t = rc.train;
  return {{"arch", rc.arch_name},
          {"dataset", rc.dataset},
          {"out", rc.out},
          {"seed", t.seed},
          {"epochs", t.epochs},
          {"batch_items", t.batch_items},
          {"coords_per_item", t.coords_per_item},
          {"lambda_wr", t.lambda_wr},
          {"derivative_term", t.derivative_term},
          {"optimizer", to_string(t.optimizer)},
          {"lr_net", t.lr_net},
          {"lr_latent", t.lr_latent},
          {"latent_init_std", t.latent_init_std},
          {"item_length", t.item_length},
          {"checkpoint_every", rc.checkpoint_every},
          {"hidden_width", t.pcinr.hidden_width},
          {"depth", t.pcinr.depth},
          {"latent_dim", t.latent_dim()},
          {"omega0_first", t.pcinr.omega0_first},
          {"omega0_hidden", t.pcinr.omega0_hidden},
          {"mapping_width", t.pcinr.mapping_width},
          {"mapping_depth", t.pcinr.mapping_depth},
          {"tcnn_base_channels", t.tcnn.base_channels},
          {"tcnn_kernel_len", t.tcnn.kernel_len},
          {"tcnn_stride", t.tcnn.stride},
          {"tcnn_upsample_layers", t.tcnn.num_upsample_layers},
          {"tcnn_seed_timesteps", t.tcnn.seed_timesteps},
          {"metric_snr", rc.metrics.snr},
          {"metric_lsd", rc.metrics.lsd},
          {"metric_multi_stft", rc.metrics.multi_stft},
          {"sweep_omega0_first_lo", rc.sweep.omega0_first_lo},
          {"sweep_omega0_first_hi", rc.sweep.omega0_first_hi},
          {"sweep_omega0_hidden_lo", rc.sweep.omega0_hidden_lo},
          {"sweep_omega0_hidden_hi", rc.sweep.omega0_hidden_hi},
          {"sweep_candidates", rc.sweep.candidate_count},
          {"sweep_rungs", rc.sweep.rung_epochs},
          {"sweep_keep_fraction", rc.sweep.keep_fraction}};
}

/// Synthetic tone-set spec file (JSON).
inline SynthSetSpec read_synth_spec(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  static const std::set<std::string> keys = {"items", "midi_lo", "midi_hi", "timbres", "duration_s", "sample_rate",
                                             "seed"};
  if (!j.is_object()) throw ConfigError(path.string() + ": spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) throw ConfigError(path.string() + ": unknown spec key '" + key + "'");
  }
  SynthSetSpec s;
  try {
    if (j.contains("items")) s.item_count = j["items"].get<std::size_t>();
    if (j.contains("midi_lo")) s.midi_lo = j["midi_lo"].get<int>();
    if (j.contains("midi_hi")) s.midi_hi = j["midi_hi"].get<int>();
    if (j.contains("duration_s")) s.duration_s = j["duration_s"].get<double>();
    if (j.contains("sample_rate")) s.sample_rate = j["sample_rate"].get<std::uint32_t>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("timbres")) {
      s.timbres.clear();
      for (const auto& t : j["timbres"]) {
        Timbre tb;
        tb.name = t.at("name").get<std::string>();
        tb.harmonics = t.at("harmonics").get<std::vector<double>>();
        tb.decay = t.at("decay").get<double>();
        s.timbres.push_back(std::move(tb));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

}  // namespace pcinr
