#pragma once

// Command implementations behind the `pcinr` executable. Each command
// validates its inputs before computing and removes the files it created
// if it fails.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "pcinr/audio_io.hpp"
#include "pcinr/checkpoint.hpp"
#include "pcinr/config.hpp"
#include "pcinr/error.hpp"
#include "pcinr/metrics.hpp"
#include "pcinr/sweep.hpp"
#include "pcinr/training.hpp"

namespace pcinr {

namespace fs = std::filesystem;

/// Tracks files written by a command; deletes them unless commit() is called.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = paths_.rbegin(); it != paths_.rend(); ++it) fs::remove(*it, ec);
  }
  const fs::path& add(fs::path p) {
    paths_.push_back(std::move(p));
    return paths_.back();
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

inline void write_text(const fs::path& path, const std::string& text) { detail::write_file(path, text); }

/// Creates `dir` if needed and registers it with `guard` when it is new.
inline void ensure_dir(const fs::path& dir, OutputGuard& guard) {
  if (dir.empty() || fs::exists(dir)) return;
  ensure_dir(dir.parent_path(), guard);
  fs::create_directory(dir);
  guard.add(dir);
}

// ---------------------------------------------------------------------------
// Latent files: "PCLT" | u32 version | u32 dim | u32 reserved | float32 x dim
// ---------------------------------------------------------------------------

inline constexpr char kLatentMagic[4] = {'P', 'C', 'L', 'T'};

template <class T>
std::string encode_latent(const Vec<T>& z) {
  std::string b(kLatentMagic, 4);
  detail::put_u32(b, 1);
  detail::put_u32(b, static_cast<std::uint32_t>(z.size()));
  detail::put_u32(b, 0);
  for (Eigen::Index k = 0; k < z.size(); ++k) detail::put_f32(b, static_cast<float>(z(k)));
  return b;
}

inline Vec<float> read_latent(const fs::path& path) {
  const std::string b = detail::read_file(path);
  if (b.size() < 16 || b.compare(0, 4, std::string(kLatentMagic, 4)) != 0) {
    throw FormatError(path.string() + ": not a latent file");
  }
  if (detail::get_u32(b, 4) != 1) throw FormatError(path.string() + ": unsupported latent file version");
  const std::uint32_t dim = detail::get_u32(b, 8);
  if (b.size() != 16 + 4 * static_cast<std::size_t>(dim)) throw FormatError(path.string() + ": truncated latent file");
  Vec<float> z(dim);
  for (std::uint32_t k = 0; k < dim; ++k) z(k) = std::bit_cast<float>(detail::get_u32(b, 16 + 4 * k));
  return z;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct GenDatasetArgs {
  fs::path spec;
  fs::path out;
  std::optional<std::uint64_t> seed;
};

inline fs::path cmd_gen_dataset(const GenDatasetArgs& a) {
  SynthSetSpec spec = read_synth_spec(a.spec);
  if (a.seed) spec.seed = *a.seed;
  require(!a.out.empty(), "gen-dataset: --out is required");
  OutputGuard guard;
  ensure_dir(a.out, guard);
  const fs::path manifest = generate_synth_set(spec, a.out);
  guard.commit();
  return manifest;
}

inline Dataset load_for(const TrainConfig& c, const fs::path& manifest) {
  LoadOptions opt;
  opt.item_length = c.item_length;
  return load_dataset(manifest, opt);
}

struct TrainArgs {
  std::vector<nlohmann::json> config_layers;  // file contents, then flag overrides
  bool quiet = false;
};

struct TrainOutputs {
  fs::path checkpoint;
  fs::path loss_log;
  fs::path config_echo;
};

inline TrainOutputs cmd_train(const TrainArgs& a) {
  const RunConfig rc = resolve_config(a.config_layers);
  require(!rc.dataset.empty(), "train: a dataset manifest is required (--dataset or config key 'dataset')");
  require(!rc.out.empty(), "train: an output directory is required (--out or config key 'out')");
  const Dataset data = load_for(rc.train, rc.dataset);

  OutputGuard guard;
  const fs::path out(rc.out);
  ensure_dir(out, guard);
  TrainOutputs o{out / "checkpoint.pcnr", out / "loss_log.csv", out / "config.json"};
  write_text(guard.add(o.config_echo), to_flat_json(rc).dump(2) + "\n");

  auto state = init_train_state<float>(rc.train, data.items.size(), data.hash);
  std::ofstream log(guard.add(o.loss_log), std::ios::trunc);
  if (!log) throw Error("cannot write " + o.loss_log.string());
  log << "epoch,mse,deriv,wr,total\n";
  guard.add(o.checkpoint);
  char line[200];
  while (state.epoch < rc.train.epochs) {
    const LossBreakdown lb = train_epoch(state, std::span<const Waveform>(data.items));
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g\n", state.epoch, lb.mse_term, lb.derivative_term,
                  lb.wr_term, lb.total);
    log << line << std::flush;
    if (state.epoch % rc.checkpoint_every == 0 || state.epoch == rc.train.epochs) {
      save_checkpoint(state, o.checkpoint);
      if (!a.quiet) std::cerr << "epoch " << state.epoch << "/" << rc.train.epochs << " loss " << lb.total << "\n";
    }
  }
  if (!log) throw Error("write failed for " + o.loss_log.string());
  guard.commit();
  return o;
}

struct SynthArgs {
  std::vector<fs::path> checkpoints;  // several = ensemble
  std::optional<std::size_t> item;
  std::optional<fs::path> latent_file;
  std::size_t samples = kDefaultItemLength;
  double duration_fraction = 1.0;
  fs::path out;
};

/// Sample rate that keeps the trained item duration for `samples` points.
inline std::uint32_t synth_rate(const TrainConfig& c, std::size_t samples) {
  return static_cast<std::uint32_t>(std::llround(static_cast<double>(kDefaultSampleRate) *
                                                 static_cast<double>(samples) /
                                                 static_cast<double>(c.item_length)));
}

inline std::vector<float> cmd_synth(const SynthArgs& a) {
  require(!a.checkpoints.empty(), "synth: a checkpoint is required");
  require(a.item.has_value() != a.latent_file.has_value(), "synth: give exactly one of --item or --latent-file");
  require(!a.out.empty(), "synth: --out is required");
  require(a.duration_fraction > 0 && a.duration_fraction <= 1, "synth: duration fraction must be in (0, 1]");
  std::vector<TrainState<float>> states;
  for (const auto& p : a.checkpoints) states.push_back(load_checkpoint<float>(p));
  std::vector<float> y;
  if (a.latent_file) {
    require(states.size() == 1, "synth: --latent-file cannot be combined with an ensemble");
    const Vec<float> z = read_latent(*a.latent_file);
    require_shape(static_cast<std::size_t>(z.size()) == states[0].config.latent_dim(),
                  "synth: latent file has dimension " + std::to_string(z.size()) + ", model expects " +
                      std::to_string(states[0].config.latent_dim()));
    y = synthesize<float>(states[0], z, a.samples, a.duration_fraction);
  } else if (states.size() == 1) {
    y = synthesize_item(states[0], *a.item, a.samples, a.duration_fraction);
  } else {
    require(a.duration_fraction == 1.0, "synth: ensembles use the full duration");
    std::vector<const TrainState<float>*> ptrs;
    for (const auto& s : states) ptrs.push_back(&s);
    if (*a.item >= states[0].item_count()) throw ConfigError("synth: item out of range");
    y = ensemble_synthesize<float>(ptrs, *a.item, a.samples);
  }
  for (float v : y) {
    if (!std::isfinite(v)) throw NumericError("synth: non-finite output sample");
  }
  OutputGuard guard;
  ensure_dir(a.out.parent_path(), guard);
  Waveform w{y, synth_rate(states[0].config, a.samples)};
  write_wav(w, guard.add(a.out));
  guard.commit();
  return y;
}

struct EncodeArgs {
  fs::path checkpoint;
  fs::path wav;
  std::size_t steps = 1000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  fs::path out;
};

inline EncodeResult<float> cmd_encode(const EncodeArgs& a) {
  require(!a.out.empty(), "encode: --out is required");
  const auto state = load_checkpoint<float>(a.checkpoint);
  if (!state.is_pcinr()) {
    throw ConfigError("encode: checkpoint arch is '" + to_string(state.config.arch) +
                      "'; latent encoding needs a pcinr-family model (tcnn has no coordinate decoder to invert)");
  }
  const Waveform w = read_wav(a.wav);
  auto res = encode_unseen(state, std::span<const float>(w.samples), a.steps, a.lr, a.seed);
  OutputGuard guard;
  ensure_dir(a.out.parent_path(), guard);
  write_text(guard.add(a.out), encode_latent(res.latent));
  guard.commit();
  return res;
}

struct EvalArgs {
  std::vector<fs::path> checkpoints;
  fs::path dataset;
  fs::path out;  // report CSV; the summary goes to <stem>_summary.txt
  bool allow_hash_mismatch = false;
  MetricToggles metrics;
};

inline EvalReport cmd_eval(const EvalArgs& a) {
  require(!a.checkpoints.empty(), "eval: at least one checkpoint is required");
  require(!a.out.empty(), "eval: --out is required");
  std::vector<TrainState<float>> states;
  for (const auto& p : a.checkpoints) states.push_back(load_checkpoint<float>(p));
  const Dataset data = load_for(states[0].config, a.dataset);
  std::vector<const TrainState<float>*> ptrs;
  for (const auto& s : states) ptrs.push_back(&s);
  const EvalReport report = evaluate_checkpoint<float>(ptrs, data, a.allow_hash_mismatch, a.metrics);
  OutputGuard guard;
  ensure_dir(a.out.parent_path(), guard);
  write_text(guard.add(a.out), report_csv(report));
  fs::path summary = a.out;
  summary.replace_filename(a.out.stem().string() + "_summary.txt");
  write_text(guard.add(summary), report_summary(report));
  guard.commit();
  return report;
}

struct SweepArgs {
  std::vector<nlohmann::json> config_layers;
};

inline SweepResult cmd_sweep(const SweepArgs& a) {
  const RunConfig rc = resolve_config(a.config_layers);
  require(!rc.dataset.empty(), "sweep: a dataset manifest is required");
  require(!rc.out.empty(), "sweep: an output directory is required");
  require(rc.train.is_pcinr(), "sweep: activation scaling applies to the pcinr family only");
  const Dataset data = load_for(rc.train, rc.dataset);
  OutputGuard guard;
  const fs::path out(rc.out);
  ensure_dir(out, guard);
  write_text(guard.add(out / "config.json"), to_flat_json(rc).dump(2) + "\n");
  TrainingObjective<float> objective(rc.train, data);
  const SweepResult res = run_sweep(rc.sweep, rc.train.seed, objective);
  write_text(guard.add(out / "leaderboard.csv"), leaderboard_csv(res));
  const auto& w = res.winner();
  const nlohmann::json best = {{"omega0_first", w.omega0_first},
                               {"omega0_hidden", w.omega0_hidden},
                               {"mse", w.score},
                               {"epochs", w.epochs},
                               {"candidate", w.index}};
  write_text(guard.add(out / "best.json"), best.dump(2) + "\n");
  guard.commit();
  return res;
}

}  // namespace pcinr
