#pragma once

// Checkpoint file:
//   "PCNR" | u32 version | u64 metadata length | metadata (UTF-8 JSON)
//   | float32 payload, tensors row-major in manifest order | u64 FNV-1a of payload
// All integers little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "pcinr/audio_io.hpp"
#include "pcinr/error.hpp"
#include "pcinr/training.hpp"

namespace pcinr {

inline constexpr char kCheckpointMagic[4] = {'P', 'C', 'N', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  float* f32 = nullptr;   // exactly one of f32/f64 is set
  double* f64 = nullptr;
  std::size_t size = 0;
};

template <class T>
NamedTensor named(const std::string& name, T* data, std::vector<std::int64_t> shape) {
  NamedTensor t;
  t.name = name;
  t.shape = std::move(shape);
  t.size = 1;
  for (auto d : t.shape) t.size *= static_cast<std::size_t>(d);
  if constexpr (std::is_same_v<T, float>) {
    t.f32 = data;
  } else {
    t.f64 = data;
  }
  return t;
}

/// Every persisted tensor of `s`, in a fixed order. Optimizer moments that
/// have not been allocated yet are sized (zero) first so the layout depends
/// only on the config and item count.
template <class T>
std::vector<NamedTensor> state_tensors(TrainState<T>& s) {
  std::vector<NamedTensor> out;
  std::vector<std::pair<std::string, std::size_t>> net_sizes;
  s.visit_net([&](const std::string& name, auto& t) {
    out.push_back(named(name, t.data(), {static_cast<std::int64_t>(t.rows()), static_cast<std::int64_t>(t.cols())}));
    net_sizes.emplace_back(name, static_cast<std::size_t>(t.size()));
  });
  out.push_back(named("latents", s.latents.data(), {s.latents.rows(), s.latents.cols()}));

  auto& opt = s.net_opt;
  if (opt.first.empty()) {
    for (const auto& [name, n] : net_sizes) {
      opt.first.emplace_back(n, T(0));
      opt.second.emplace_back(n, T(0));
    }
  }
  require_shape(opt.first.size() == net_sizes.size(), "checkpoint: optimizer state does not match network");
  for (std::size_t i = 0; i < net_sizes.size(); ++i) {
    const auto n = static_cast<std::int64_t>(net_sizes[i].second);
    out.push_back(named("opt.m." + net_sizes[i].first, opt.first[i].data(), {n}));
    out.push_back(named("opt.v." + net_sizes[i].first, opt.second[i].data(), {n}));
  }
  const auto d = static_cast<std::size_t>(s.latents.cols());
  for (std::size_t r = 0; r < s.latent_opt.size(); ++r) {
    auto& lo = s.latent_opt[r];
    if (lo.first.empty()) {
      lo.first.emplace_back(d, T(0));
      lo.second.emplace_back(d, T(0));
    }
    out.push_back(named("latent_opt.m." + std::to_string(r), lo.first[0].data(), {static_cast<std::int64_t>(d)}));
    out.push_back(named("latent_opt.v." + std::to_string(r), lo.second[0].data(), {static_cast<std::int64_t>(d)}));
  }
  return out;
}

inline void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

inline void put_f32(std::string& b, float f) { put_u32(b, std::bit_cast<std::uint32_t>(f)); }

}  // namespace detail

/// Serializes `s` to checkpoint bytes. Tensors are stored as 32-bit reals.
template <class T>
std::string encode_checkpoint(const TrainState<T>& state) {
  TrainState<T> s = state;  // moment buffers may need sizing
  const auto tensors = detail::state_tensors(s);

  nlohmann::json meta;
  meta["config"] = to_json(s.config);
  meta["config_hash"] = to_hex(config_hash(s.config));
  meta["dataset_hash"] = to_hex(s.dataset_hash);
  meta["epoch"] = s.epoch;
  meta["items"] = s.item_count();
  meta["rng"] = {{"seed", s.rng.seed()}, {"position", s.rng.position()}};
  meta["net_optimizer"] = {{"kind", to_string(s.net_opt.kind)},     {"lr", s.net_opt.hyper.lr},
                           {"beta1", s.net_opt.hyper.beta1},        {"beta2", s.net_opt.hyper.beta2},
                           {"eps", s.net_opt.hyper.eps},            {"step", s.net_opt.step}};
  std::vector<std::int64_t> steps;
  for (const auto& lo : s.latent_opt) steps.push_back(lo.step);
  meta["latent_optimizer"] = {{"kind", to_string(s.config.optimizer)},
                              {"lr", s.config.lr_latent},
                              {"steps", steps}};
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.size;
  }
  meta["tensors"] = manifest;
  const std::string meta_text = meta.dump();

  std::string payload;
  payload.reserve(offset * 4);
  for (const auto& t : tensors) {
    for (std::size_t i = 0; i < t.size; ++i) {
      detail::put_f32(payload, t.f32 ? t.f32[i] : static_cast<float>(t.f64[i]));
    }
  }
  Fnv1a64 h;
  h.update(std::span(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()));

  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, meta_text.size());
  out += meta_text;
  out += payload;
  detail::put_u64(out, h.value());
  return out;
}

template <class T>
TrainState<T> decode_checkpoint(const std::string& b, const std::string& origin = "checkpoint") {
  if (b.size() < 16 || std::memcmp(b.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(origin + ": not a checkpoint (bad magic or too short)");
  }
  const std::uint32_t version = detail::get_u32(b, 4);
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t meta_len = detail::get_u64(b, 8);
  if (meta_len > b.size() - 16) throw FormatError(origin + ": truncated metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(b.substr(16, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": malformed metadata: " + e.what());
  }

  TrainState<T> s;
  std::size_t payload_floats = 0;
  try {
    const TrainConfig config = train_config_from_json(meta.at("config"));
    if (meta.at("config_hash").get<std::string>() != to_hex(config_hash(config))) {
      throw FormatError(origin + ": config hash mismatch");
    }
    s = init_train_state<T>(config, meta.at("items").get<std::size_t>());
    s.dataset_hash = std::stoull(meta.at("dataset_hash").get<std::string>(), nullptr, 16);
    s.epoch = meta.at("epoch").get<std::size_t>();
    s.rng = Rng(meta.at("rng").at("seed").get<std::uint64_t>(), meta.at("rng").at("position").get<std::uint64_t>());
    const auto& no = meta.at("net_optimizer");
    s.net_opt.kind = parse_optimizer(no.at("kind").get<std::string>());
    s.net_opt.hyper = {no.at("lr").get<double>(), no.at("beta1").get<double>(), no.at("beta2").get<double>(),
                       no.at("eps").get<double>()};
    s.net_opt.step = no.at("step").get<std::int64_t>();
    const auto steps = meta.at("latent_optimizer").at("steps").get<std::vector<std::int64_t>>();
    require_shape(steps.size() == s.latent_opt.size(), "checkpoint: latent optimizer count mismatch");
    for (std::size_t r = 0; r < steps.size(); ++r) s.latent_opt[r].step = steps[r];

    auto tensors = detail::state_tensors(s);
    const auto& manifest = meta.at("tensors");
    if (manifest.size() != tensors.size()) throw FormatError(origin + ": tensor manifest does not match config");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      const auto& e = manifest[i];
      if (e.at("name").get<std::string>() != tensors[i].name ||
          e.at("shape").get<std::vector<std::int64_t>>() != tensors[i].shape ||
          e.at("offset").get<std::size_t>() != payload_floats) {
        throw FormatError(origin + ": tensor manifest entry " + std::to_string(i) + " ('" +
                          e.at("name").get<std::string>() + "') does not match config");
      }
      payload_floats += tensors[i].size;
    }
    const std::size_t payload_at = 16 + meta_len;
    if (b.size() != payload_at + payload_floats * 4 + 8) {
      throw FormatError(origin + ": truncated or oversized payload (" + std::to_string(b.size()) + " bytes, expected " +
                        std::to_string(payload_at + payload_floats * 4 + 8) + ")");
    }
    Fnv1a64 h;
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(b.data() + payload_at), payload_floats * 4));
    if (h.value() != detail::get_u64(b, payload_at + payload_floats * 4)) {
      throw FormatError(origin + ": payload checksum mismatch");
    }
    std::size_t at = payload_at;
    for (auto& t : tensors) {
      for (std::size_t j = 0; j < t.size; ++j, at += 4) {
        const float v = std::bit_cast<float>(detail::get_u32(b, at));
        if (t.f32) {
          t.f32[j] = v;
        } else {
          t.f64[j] = static_cast<double>(v);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": malformed metadata: " + e.what());
  }
  // Moments of never-stepped optimizers carry no information.
  if (s.net_opt.step == 0) {
    s.net_opt.first.clear();
    s.net_opt.second.clear();
  }
  for (auto& lo : s.latent_opt) {
    if (lo.step == 0) {
      lo.first.clear();
      lo.second.clear();
    }
  }
  return s;
}

template <class T>
void save_checkpoint(const TrainState<T>& s, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(s));
}

template <class T = float>
TrainState<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(detail::read_file(path), path.string());
}

}  // namespace pcinr
