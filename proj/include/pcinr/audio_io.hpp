#pragma once

// PCM16 WAV codec, dataset manifests and a synthetic tone-set generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcinr/error.hpp"
#include "pcinr/numerics.hpp"

namespace pcinr {

inline constexpr std::uint32_t kDefaultSampleRate = 16000;
inline constexpr std::size_t kDefaultItemLength = 16000;

struct Waveform {
  std::vector<float> samples;
  std::uint32_t sample_rate_hz = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
};

namespace detail {

inline void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}
inline std::uint16_t get_u16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace detail

/// Float sample -> PCM16 code: clamp to [-1, 1 - 2^-15], scale by 32768,
/// round to nearest.
inline std::int16_t quantize_pcm16(float x) {
  if (!std::isfinite(x)) throw NumericError("write_wav: non-finite sample");
  const double clamped = std::clamp(static_cast<double>(x), -1.0, 1.0 - 1.0 / 32768.0);
  return static_cast<std::int16_t>(std::lround(clamped * 32768.0));
}

inline std::string encode_wav(const Waveform& wave) {
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::string b;
  b.reserve(44 + data_bytes);
  b += "RIFF";
  detail::put_u32(b, 36 + data_bytes);
  b += "WAVE";
  b += "fmt ";
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, wave.sample_rate_hz);
  detail::put_u32(b, wave.sample_rate_hz * 2);
  detail::put_u16(b, 2);
  detail::put_u16(b, 16);
  b += "data";
  detail::put_u32(b, data_bytes);
  for (float x : wave.samples) detail::put_u16(b, static_cast<std::uint16_t>(quantize_pcm16(x)));
  return b;
}

inline void write_wav(const Waveform& wave, const std::filesystem::path& path) {
  detail::write_file(path, encode_wav(wave));
}

inline Waveform decode_wav(const std::string& b, const std::string& origin = "wav") {
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0) {
    throw FormatError(origin + ": not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::string id = b.substr(at, 4);
    const std::uint32_t len = detail::get_u32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + len > b.size()) throw FormatError(origin + ": truncated '" + id + "' chunk");
    if (id == "fmt ") {
      if (len < 16) throw FormatError(origin + ": fmt chunk too short");
      format = detail::get_u16(b, body);
      channels = detail::get_u16(b, body + 2);
      rate = detail::get_u32(b, body + 4);
      bits = detail::get_u16(b, body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(origin + ": data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw FormatError(origin + ": only PCM 16-bit is supported");
      if (channels != 1) throw FormatError(origin + ": expected mono, found " + std::to_string(channels) + " channels");
      if (len % 2 != 0) throw FormatError(origin + ": odd data length");
      Waveform w;
      w.sample_rate_hz = rate;
      w.samples.resize(len / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto code = static_cast<std::int16_t>(detail::get_u16(b, body + 2 * i));
        w.samples[i] = static_cast<float>(code) / 32768.0f;
      }
      return w;
    }
    at = body + len + (len & 1u);
  }
  throw FormatError(origin + ": no data chunk");
}

inline Waveform read_wav(const std::filesystem::path& path) {
  return decode_wav(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct ManifestRow {
  std::string item_id;
  std::string file_path;  // relative to the manifest's directory unless absolute
  int midi_note = -1;
  std::string instrument;
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;
  std::uint64_t content_hash = 0;  // filled by load_dataset
};

inline constexpr const char* kManifestHeader = "item_id,file_path,midi_note,instrument";

inline std::string encode_manifest(const DatasetManifest& m) {
  std::string s = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.rows) {
    s += r.item_id + "," + r.file_path + "," + std::to_string(r.midi_note) + "," + r.instrument + "\n";
  }
  return s;
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_manifest(m));
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw FormatError(path.string() + ": manifest header must be '" + std::string(kManifestHeader) + "'");
  }
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() == 3 && line.back() == ',') fields.emplace_back();
    if (fields.size() != 4) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
    ManifestRow r;
    r.item_id = fields[0];
    r.file_path = fields[1];
    try {
      r.midi_note = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad midi_note '" + fields[2] + "'");
    }
    r.instrument = fields[3];
    if (!seen.insert(r.item_id).second) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": duplicate item_id '" + r.item_id + "'");
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

/// Order-fixed hash over item lengths and sample bits.
inline std::uint64_t dataset_hash(const std::vector<Waveform>& items) {
  Fnv1a64 h;
  h.update_u64(items.size());
  for (const auto& w : items) {
    h.update_u64(w.samples.size());
    h.update_u64(w.sample_rate_hz);
    for (float x : w.samples) h.update_f32(x);
  }
  return h.value();
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<Waveform> items;
  std::vector<std::ptrdiff_t> length_adjustment;  // +pad / -truncate per item
  std::uint64_t hash = 0;
};

struct LoadOptions {
  std::size_t item_length = kDefaultItemLength;
  std::uint32_t sample_rate = kDefaultSampleRate;
  bool allow_rate_mismatch = false;
};

/// Loads items in manifest order and normalizes every length to
/// `item_length` by truncating or zero-padding at the end.
inline Dataset load_dataset(const std::filesystem::path& manifest_path, const LoadOptions& opt = {}) {
  Dataset ds;
  ds.manifest = read_manifest(manifest_path);
  for (std::size_t i = 0; i < ds.manifest.rows.size(); ++i) {
    const auto& row = ds.manifest.rows[i];
    std::filesystem::path p = row.file_path;
    if (p.is_relative()) p = ds.manifest.base_dir / p;
    if (!std::filesystem::exists(p)) {
      throw Error("manifest row " + std::to_string(i + 1) + " ('" + row.item_id + "'): missing file " + p.string());
    }
    Waveform w = read_wav(p);
    if (w.sample_rate_hz != opt.sample_rate && !opt.allow_rate_mismatch) {
      throw FormatError("manifest row " + std::to_string(i + 1) + " ('" + row.item_id + "'): sample rate " +
                        std::to_string(w.sample_rate_hz) + " Hz, expected " + std::to_string(opt.sample_rate));
    }
    ds.length_adjustment.push_back(static_cast<std::ptrdiff_t>(opt.item_length) -
                                   static_cast<std::ptrdiff_t>(w.samples.size()));
    w.samples.resize(opt.item_length, 0.0f);
    w.sample_rate_hz = opt.sample_rate;
    ds.items.push_back(std::move(w));
  }
  ds.hash = dataset_hash(ds.items);
  ds.manifest.content_hash = ds.hash;
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic tone sets
// ---------------------------------------------------------------------------

struct Timbre {
  std::string name;
  std::vector<double> harmonics;  // amplitude of harmonic h+1
  double decay = 0.0;             // envelope exp(-decay * t), t in seconds
};

struct SynthSetSpec {
  std::size_t item_count = 8;
  int midi_lo = 60;
  int midi_hi = 64;
  std::vector<Timbre> timbres{{"keys", {1.0, 0.5, 0.25}, 1.5}};
  double duration_s = 1.0;
  std::uint32_t sample_rate = kDefaultSampleRate;
  std::uint64_t seed = 0;

  void validate() const {
    require(item_count >= 1, "synth spec: item_count must be >= 1");
    require(0 <= midi_lo && midi_lo <= midi_hi && midi_hi <= 127, "synth spec: need 0 <= midi_lo <= midi_hi <= 127");
    require(!timbres.empty(), "synth spec: at least one timbre is required");
    for (const auto& t : timbres) {
      require(!t.harmonics.empty(), "synth spec: timbre '" + t.name + "' has no harmonics");
      require(t.decay >= 0, "synth spec: decay must be >= 0");
    }
    require(duration_s > 0, "synth spec: duration must be > 0");
    require(sample_rate >= 2, "synth spec: sample rate must be >= 2");
  }
};

inline double midi_to_hz(int midi) { return 440.0 * std::pow(2.0, (midi - 69) / 12.0); }

struct SynthItem {
  ManifestRow row;
  Waveform wave;
};

/// Renders one note: sum of harmonics below Nyquist under an exponential
/// envelope, peak-normalized to 0.9.
inline Waveform render_note(int midi, const Timbre& timbre, double duration_s, std::uint32_t rate) {
  const double f0 = midi_to_hz(midi);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * rate));
  Waveform w;
  w.sample_rate_hz = rate;
  std::vector<double> x(n, 0.0);
  bool any = false;
  for (std::size_t h = 0; h < timbre.harmonics.size(); ++h) {
    const double f = f0 * static_cast<double>(h + 1);
    if (f >= rate / 2.0) continue;  // would alias
    any = true;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += timbre.harmonics[h] * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / rate);
    }
  }
  if (!any) throw ConfigError("synth: every harmonic of MIDI " + std::to_string(midi) + " is above Nyquist");
  double peak = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] *= std::exp(-timbre.decay * static_cast<double>(i) / rate);
    peak = std::max(peak, std::abs(x[i]));
  }
  if (peak == 0) throw ConfigError("synth: rendered note is silent");
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(0.9 * x[i] / peak);
  return w;
}

/// Balanced (note, timbre) assignment: notes cycle; each item takes the
/// least-used timbre overall, then the one least used with its note.
inline std::vector<std::pair<int, std::size_t>> assign_notes(const SynthSetSpec& spec) {
  const int notes = spec.midi_hi - spec.midi_lo + 1;
  const std::size_t nt = spec.timbres.size();
  std::vector<std::size_t> timbre_count(nt, 0);
  std::map<std::pair<int, std::size_t>, std::size_t> pair_count;
  std::vector<std::pair<int, std::size_t>> out;
  for (std::size_t i = 0; i < spec.item_count; ++i) {
    const int midi = spec.midi_lo + static_cast<int>(i % static_cast<std::size_t>(notes));
    std::size_t best = 0;
    for (std::size_t t = 1; t < nt; ++t) {
      const auto key = [&](std::size_t c) { return std::pair(timbre_count[c], pair_count[{midi, c}]); };
      if (key(t) < key(best)) best = t;
    }
    ++timbre_count[best];
    ++pair_count[{midi, best}];
    out.emplace_back(midi, best);
  }
  return out;
}

/// Writes `item_NNN.wav` files plus `manifest.csv` into `out_dir`. The seed
/// permutes which item id receives which (note, timbre) pair. On failure no
/// partial files are left behind.
inline std::filesystem::path generate_synth_set(const SynthSetSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  auto pairs = assign_notes(spec);
  Rng rng(spec.seed);
  const auto order = permutation(rng, pairs.size());

  std::vector<SynthItem> items;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [midi, t] = pairs[order[i]];
    SynthItem it;
    char name[32];
    std::snprintf(name, sizeof(name), "item_%03zu", i);
    it.row = {name, std::string(name) + ".wav", midi, spec.timbres[t].name};
    it.wave = render_note(midi, spec.timbres[t], spec.duration_s, spec.sample_rate);
    items.push_back(std::move(it));
  }

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  try {
    DatasetManifest m;
    for (const auto& it : items) {
      const auto p = out_dir / it.row.file_path;
      write_wav(it.wave, p);
      written.push_back(p);
      m.rows.push_back(it.row);
    }
    const auto manifest_path = out_dir / "manifest.csv";
    write_manifest(m, manifest_path);
    return manifest_path;
  } catch (...) {
    for (const auto& p : written) std::filesystem::remove(p);
    throw;
  }
}

}  // namespace pcinr
