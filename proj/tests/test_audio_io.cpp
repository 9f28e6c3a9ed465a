#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pcinr/audio_io.hpp"

using namespace pcinr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pcinr_audio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Wav, RoundTripWithinOneCode) {
  Rng r(1);
  Waveform w;
  w.samples.resize(16000);
  for (auto& x : w.samples) x = static_cast<float>(2 * r.next_double() - 1);
  w.samples[0] = 1.0f;
  w.samples[1] = -1.0f;
  const Waveform back = decode_wav(encode_wav(w));
  ASSERT_EQ(back.samples.size(), w.samples.size());
  EXPECT_EQ(back.sample_rate_hz, 16000u);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    EXPECT_LE(std::abs(back.samples[i] - w.samples[i]), 1.0f / 32768.0f) << i;
  }
  EXPECT_EQ(encode_wav(back), encode_wav(decode_wav(encode_wav(back))));
}

TEST(Wav, Quantization) {
  EXPECT_EQ(quantize_pcm16(0.0f), 0);
  EXPECT_EQ(quantize_pcm16(1.0f), 32767);
  EXPECT_EQ(quantize_pcm16(-1.0f), -32768);
  EXPECT_EQ(quantize_pcm16(5.0f), 32767);
  EXPECT_EQ(quantize_pcm16(0.5f), 16384);
}

TEST(Wav, RejectsMalformed) {
  EXPECT_THROW(decode_wav("RIFF"), FormatError);
  Waveform w{std::vector<float>(10, 0.1f), 16000};
  std::string b = encode_wav(w);
  EXPECT_THROW(decode_wav(b.substr(0, b.size() - 4)), FormatError);
  std::string stereo = b;
  stereo[22] = 2;
  EXPECT_THROW(decode_wav(stereo), FormatError);
}

TEST(Manifest, RoundTripAndDuplicates) {
  const auto dir = scratch("manifest");
  DatasetManifest m;
  m.rows = {{"a", "a.wav", 60, "keys"}, {"b", "b.wav", 61, "keys"}};
  write_manifest(m, dir / "m.csv");
  const auto back = read_manifest(dir / "m.csv");
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].item_id, "b");
  EXPECT_EQ(back.rows[1].midi_note, 61);
  std::ofstream(dir / "dup.csv") << kManifestHeader << "\na,a.wav,60,k\na,b.wav,61,k\n";
  EXPECT_THROW(read_manifest(dir / "dup.csv"), FormatError);
}

TEST(Dataset, MissingFileNamesRow) {
  const auto dir = scratch("missing");
  std::ofstream(dir / "m.csv") << kManifestHeader << "\nx,nowhere.wav,60,k\n";
  try {
    load_dataset(dir / "m.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
  }
}

TEST(Dataset, WrongRateRejectedAndLengthNormalized) {
  const auto dir = scratch("rate");
  write_wav({std::vector<float>(100, 0.25f), 8000}, dir / "a.wav");
  write_wav({std::vector<float>(20000, 0.25f), 16000}, dir / "b.wav");
  std::ofstream(dir / "rate.csv") << kManifestHeader << "\na,a.wav,60,k\n";
  EXPECT_THROW(load_dataset(dir / "rate.csv"), FormatError);
  std::ofstream(dir / "len.csv") << kManifestHeader << "\nb,b.wav,60,k\n";
  const auto ds = load_dataset(dir / "len.csv");
  EXPECT_EQ(ds.items[0].samples.size(), 16000u);
  EXPECT_EQ(ds.length_adjustment[0], -4000);
}

TEST(SynthSet, KeyboardLikeSpec) {
  const auto dir = scratch("synth");
  SynthSetSpec spec;
  const auto manifest = generate_synth_set(spec, dir);
  const auto ds = load_dataset(manifest);
  ASSERT_EQ(ds.items.size(), 8u);
  for (const auto& row : ds.manifest.rows) {
    EXPECT_GE(row.midi_note, 60);
    EXPECT_LE(row.midi_note, 64);
  }
  for (const auto& w : ds.items) {
    float peak = 0;
    for (float x : w.samples) peak = std::max(peak, std::abs(x));
    EXPECT_NEAR(peak, 0.9f, 1e-3f);
  }
  const auto again = generate_synth_set(spec, scratch("synth2"));
  EXPECT_EQ(load_dataset(again).hash, ds.hash);
}

TEST(SynthSet, NyquistAndValidation) {
  Timbre t{"t", {1.0, 1.0}, 0.0};
  const auto w = render_note(69, t, 0.1, 1000);  // 880 Hz harmonic dropped at 1 kHz
  std::vector<double> s(w.samples.size());
  double peak = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::sin(2 * std::numbers::pi * 440.0 * static_cast<double>(i) / 1000.0);
    peak = std::max(peak, std::abs(s[i]));
  }
  double err = 0;
  for (std::size_t i = 0; i < s.size(); ++i) err = std::max(err, std::abs(w.samples[i] - 0.9 * s[i] / peak));
  EXPECT_LT(err, 1e-5);
  EXPECT_THROW(render_note(127, Timbre{"t", {1.0}, 0.0}, 0.1, 1000), ConfigError);
  SynthSetSpec bad;
  bad.midi_lo = 70;
  bad.midi_hi = 60;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_NEAR(midi_to_hz(60), 261.6256, 1e-4);
}
