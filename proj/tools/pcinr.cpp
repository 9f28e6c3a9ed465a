#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pcinr/cli.hpp"

namespace {

std::vector<std::filesystem::path> split_paths(const std::string& list) {
  std::vector<std::filesystem::path> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.emplace_back(item);
  }
  return out;
}

struct RunFlags {
  std::string config;
  std::string dataset;
  std::string out;
  std::string arch;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lambda_wr;
  std::string optimizer;
  std::optional<std::size_t> coords_per_item;
  std::optional<std::size_t> checkpoint_every;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Flat JSON run config");
    app->add_option("--dataset", dataset, "Dataset manifest (CSV)");
    app->add_option("--out", out, "Output directory");
    app->add_option("--arch", arch, "pcinr | pcinr_wide | pcinr_wr | tcnn");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lambda-wr", lambda_wr, "Weight regularization strength");
    app->add_option("--optimizer", optimizer, "adabelief | adam");
    app->add_option("--coords-per-item", coords_per_item, "Coordinates sampled per item and step (0 = full grid)");
    app->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval in epochs");
  }

  std::vector<nlohmann::json> layers() const {
    std::vector<nlohmann::json> l;
    if (!config.empty()) l.push_back(pcinr::read_config_file(config));
    nlohmann::json o = nlohmann::json::object();
    if (!dataset.empty()) o["dataset"] = dataset;
    if (!out.empty()) o["out"] = out;
    if (!arch.empty()) o["arch"] = arch;
    if (seed) o["seed"] = *seed;
    if (epochs) o["epochs"] = *epochs;
    if (lambda_wr) o["lambda_wr"] = *lambda_wr;
    if (!optimizer.empty()) o["optimizer"] = optimizer;
    if (coords_per_item) o["coords_per_item"] = *coords_per_item;
    if (checkpoint_every) o["checkpoint_every"] = *checkpoint_every;
    l.push_back(o);
    return l;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic conditional implicit neural representations for audio"};
  app.require_subcommand(1);

  pcinr::GenDatasetArgs gen;
  std::string gen_spec, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen_cmd = app.add_subcommand("gen-dataset", "Render a synthetic tone set from a spec file");
  gen_cmd->add_option("spec", gen_spec, "Spec file (JSON)")->required();
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen_seed, "Override the spec seed");

  RunFlags train_flags;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, loss log and config echo");
  train_flags.attach(train_cmd);
  train_cmd->add_flag("--quiet", quiet, "No progress output");

  std::string synth_ckpt, synth_ensemble, synth_latent, synth_out;
  std::optional<std::size_t> synth_item;
  std::size_t synth_samples = pcinr::kDefaultItemLength;
  double synth_fraction = 1.0;
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize a waveform from a checkpoint");
  synth_cmd->add_option("checkpoint", synth_ckpt, "Checkpoint file");
  synth_cmd->add_option("--ensemble", synth_ensemble, "Comma-separated checkpoints to average");
  synth_cmd->add_option("--item", synth_item, "Training item index");
  synth_cmd->add_option("--latent-file", synth_latent, "Latent file written by encode");
  synth_cmd->add_option("--samples", synth_samples, "Output sample count M'");
  synth_cmd->add_option("--duration-fraction", synth_fraction, "Fraction of the coordinate span to render");
  synth_cmd->add_option("--out", synth_out, "Output WAV")->required();

  pcinr::EncodeArgs enc;
  std::string enc_ckpt, enc_wav, enc_out;
  auto* enc_cmd = app.add_subcommand("encode", "Fit a latent for an unseen waveform");
  enc_cmd->add_option("checkpoint", enc_ckpt, "Checkpoint file")->required();
  enc_cmd->add_option("wav", enc_wav, "Waveform to encode")->required();
  enc_cmd->add_option("--steps", enc.steps, "Adam steps")->capture_default_str();
  enc_cmd->add_option("--lr", enc.lr, "Adam learning rate")->capture_default_str();
  enc_cmd->add_option("--seed", enc.seed, "Seed of the latent initialization");
  enc_cmd->add_option("--out", enc_out, "Output latent file")->required();

  std::string eval_ckpt, eval_runs, eval_dataset, eval_out;
  bool eval_allow = false, no_snr = false, no_lsd = false, no_stft = false;
  auto* eval_cmd = app.add_subcommand("eval", "Score reconstructions against a dataset");
  eval_cmd->add_option("checkpoint", eval_ckpt, "Checkpoint file");
  eval_cmd->add_option("--runs", eval_runs, "Comma-separated checkpoints of repeated runs");
  eval_cmd->add_option("--dataset", eval_dataset, "Dataset manifest")->required();
  eval_cmd->add_option("--out", eval_out, "Report CSV")->required();
  eval_cmd->add_flag("--allow-hash-mismatch", eval_allow, "Warn instead of failing on a dataset hash mismatch");
  eval_cmd->add_flag("--no-snr", no_snr, "Skip SNR");
  eval_cmd->add_flag("--no-lsd", no_lsd, "Skip LSD");
  eval_cmd->add_flag("--no-multi-stft", no_stft, "Skip multi-resolution STFT MSE");

  RunFlags sweep_flags;
  auto* sweep_cmd = app.add_subcommand("sweep", "Search activation scaling with successive halving");
  sweep_flags.attach(sweep_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) {
      gen.spec = gen_spec;
      gen.out = gen_out;
      gen.seed = gen_seed;
      std::cout << pcinr::cmd_gen_dataset(gen).string() << "\n";
    } else if (train_cmd->parsed()) {
      const auto o = pcinr::cmd_train({train_flags.layers(), quiet});
      std::cout << o.checkpoint.string() << "\n";
    } else if (synth_cmd->parsed()) {
      pcinr::SynthArgs a;
      if (!synth_ckpt.empty()) a.checkpoints.emplace_back(synth_ckpt);
      for (auto& p : split_paths(synth_ensemble)) a.checkpoints.push_back(p);
      if (!synth_ensemble.empty() && a.checkpoints.size() < 2) {
        throw pcinr::ConfigError("synth: --ensemble needs at least 2 checkpoints");
      }
      a.item = synth_item;
      if (!synth_latent.empty()) a.latent_file = synth_latent;
      a.samples = synth_samples;
      a.duration_fraction = synth_fraction;
      a.out = synth_out;
      pcinr::cmd_synth(a);
      std::cout << a.out.string() << "\n";
    } else if (enc_cmd->parsed()) {
      enc.checkpoint = enc_ckpt;
      enc.wav = enc_wav;
      enc.out = enc_out;
      const auto r = pcinr::cmd_encode(enc);
      std::cout << enc.out.string() << " loss " << r.loss.total << "\n";
    } else if (eval_cmd->parsed()) {
      pcinr::EvalArgs a;
      if (!eval_ckpt.empty()) a.checkpoints.emplace_back(eval_ckpt);
      for (auto& p : split_paths(eval_runs)) a.checkpoints.push_back(p);
      a.dataset = eval_dataset;
      a.out = eval_out;
      a.allow_hash_mismatch = eval_allow;
      a.metrics = {!no_snr, !no_lsd, !no_stft};
      const auto r = pcinr::cmd_eval(a);
      std::cout << pcinr::report_summary(r);
    } else if (sweep_cmd->parsed()) {
      const auto r = pcinr::cmd_sweep({sweep_flags.layers()});
      const auto& w = r.winner();
      std::printf("best omega0_first %.6g omega0_hidden %.6g mse %.6g\n", w.omega0_first, w.omega0_hidden, w.score);
    }
  } catch (const pcinr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
