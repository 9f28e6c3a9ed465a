#pragma once

// Reconstruction metrics and evaluation reports. All accumulation is in
// double regardless of the input precision.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pcinr/audio_io.hpp"
#include "pcinr/error.hpp"
#include "pcinr/numerics.hpp"
#include "pcinr/training.hpp"

namespace pcinr {

inline constexpr double kPowerFloor = 1e-10;
inline constexpr std::size_t kLsdWindow = 1024;
inline constexpr std::size_t kLsdHop = 256;
inline constexpr std::size_t kStftWindows[4] = {400, 800, 1600, 3200};

namespace detail {
inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  require_shape(a == b, std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}
}  // namespace detail

template <class A, class B>
double mse(std::span<const A> a, std::span<const B> b) {
  detail::require_same_length(a.size(), b.size(), "mse");
  if (a.empty()) throw ShapeError("mse: empty input");
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

/// 10 log10(sum ref^2 / sum (ref - est)^2); +infinity when est == ref.
template <class A, class B>
double snr_db(std::span<const A> ref, std::span<const B> est) {
  detail::require_same_length(ref.size(), est.size(), "snr_db");
  double sig = 0, err = 0;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    const double r = static_cast<double>(ref[j]);
    const double d = r - static_cast<double>(est[j]);
    sig += r * r;
    err += d * d;
  }
  if (sig == 0) throw NumericError("snr_db: reference is all zeros");
  if (err == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

/// Magnitude spectrogram: frames x bins, row-major.
struct Spectrogram {
  std::size_t window = 0;
  std::size_t hop = 0;
  std::size_t fft_size = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> mag;

  double at(std::size_t frame, std::size_t bin) const { return mag[frame * bins + bin]; }
};

inline std::size_t stft_frame_count(std::size_t len, std::size_t window, std::size_t hop) {
  return 1 + (len - window) / hop;
}

/// Hamming-windowed frames (no centering), each zero-padded to the next
/// power of two. `power` keeps |X|^2 instead of |X|.
template <class U>
Spectrogram stft_mag(std::span<const U> signal, std::size_t window, std::size_t hop, bool power = false) {
  if (window < 2 || hop < 1) throw ConfigError("stft: window must be >= 2 and hop >= 1");
  if (signal.size() < window) {
    throw ShapeError("stft: signal has " + std::to_string(signal.size()) + " samples, window needs " +
                     std::to_string(window));
  }
  Spectrogram s;
  s.window = window;
  s.hop = hop;
  s.fft_size = next_power_of_two(window);
  s.frames = stft_frame_count(signal.size(), window, hop);
  FftPlan<double> plan(s.fft_size);
  s.bins = plan.bins();
  s.mag.resize(s.frames * s.bins);
  const auto w = hamming_window<double>(window);
  std::vector<double> frame(window);
  std::vector<std::complex<double>> spec(s.bins);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t n = 0; n < window; ++n) frame[n] = static_cast<double>(signal[start + n]) * w[n];
    plan.forward(std::span<const double>(frame), std::span<std::complex<double>>(spec));
    for (std::size_t k = 0; k < s.bins; ++k) {
      s.mag[f * s.bins + k] = power ? std::norm(spec[k]) : std::abs(spec[k]);
    }
  }
  return s;
}

/// Mean over frames of the RMS (over bins) of 10 log10(P_ref / P_est).
template <class A, class B>
double lsd(std::span<const A> ref, std::span<const B> est) {
  detail::require_same_length(ref.size(), est.size(), "lsd");
  const auto pr = stft_mag(ref, kLsdWindow, kLsdHop, true);
  const auto pe = stft_mag(est, kLsdWindow, kLsdHop, true);
  double total = 0;
  for (std::size_t f = 0; f < pr.frames; ++f) {
    double acc = 0;
    for (std::size_t k = 0; k < pr.bins; ++k) {
      const double d = 10.0 * std::log10(std::max(pr.at(f, k), kPowerFloor) / std::max(pe.at(f, k), kPowerFloor));
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(pr.bins));
  }
  return total / static_cast<double>(pr.frames);
}

/// Mean over windows {400, 800, 1600, 3200} (hop = window/4) of the mean
/// squared STFT-magnitude difference.
template <class A, class B>
double multi_stft_mse(std::span<const A> a, std::span<const B> b) {
  detail::require_same_length(a.size(), b.size(), "multi_stft_mse");
  double total = 0;
  for (std::size_t window : kStftWindows) {
    const auto sa = stft_mag(a, window, window / 4);
    const auto sb = stft_mag(b, window, window / 4);
    double acc = 0;
    for (std::size_t i = 0; i < sa.mag.size(); ++i) {
      const double d = sa.mag[i] - sb.mag[i];
      acc += d * d;
    }
    total += acc / static_cast<double>(sa.mag.size());
  }
  return total / static_cast<double>(std::size(kStftWindows));
}

inline double multi_stft_mse(const Waveform& a, const Waveform& b) {
  require_shape(a.sample_rate_hz == b.sample_rate_hz, "multi_stft_mse: sample rate mismatch");
  return multi_stft_mse(std::span<const float>(a.samples), std::span<const float>(b.samples));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ItemMetrics {
  std::size_t run = 0;
  std::string item_id;
  double mse = 0;
  double snr_db = 0;
  double lsd = 0;
  double multi_stft_mse = 0;
};

struct MetricSummary {
  double mean = 0;
  double stddev = 0;
};

struct EvalReport {
  std::size_t runs = 0;
  std::vector<ItemMetrics> rows;  // run-major
  MetricSummary mse, snr_db, lsd, multi_stft_mse;
  std::vector<std::string> warnings;
};

/// MSE is always computed; disabled metrics are reported as NaN.
struct MetricToggles {
  bool snr = true;
  bool lsd = true;
  bool multi_stft = true;
};

template <class A, class B>
ItemMetrics item_metrics(std::span<const A> ref, std::span<const B> est, const MetricToggles& on = {}) {
  constexpr double off = std::numeric_limits<double>::quiet_NaN();
  ItemMetrics m;
  m.mse = mse(ref, est);
  m.snr_db = on.snr ? snr_db(ref, est) : off;
  m.lsd = on.lsd ? lsd(ref, est) : off;
  m.multi_stft_mse = on.multi_stft ? multi_stft_mse(ref, est) : off;
  return m;
}

namespace detail {

inline MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

/// Means over all rows; sigma over per-run means when there are several
/// runs, otherwise over items (sample standard deviation in both cases).
inline MetricSummary aggregate(const std::vector<ItemMetrics>& rows, std::size_t runs, double ItemMetrics::*field) {
  std::vector<double> all;
  for (const auto& r : rows) all.push_back(r.*field);
  MetricSummary s = summarize(all);
  if (runs > 1) {
    std::vector<double> per_run(runs, 0.0);
    std::vector<std::size_t> count(runs, 0);
    for (const auto& r : rows) {
      per_run[r.run] += r.*field;
      ++count[r.run];
    }
    for (std::size_t k = 0; k < runs; ++k) per_run[k] /= static_cast<double>(count[k]);
    s.stddev = summarize(per_run).stddev;
  }
  return s;
}

}  // namespace detail

inline void finalize_report(EvalReport& r) {
  r.mse = detail::aggregate(r.rows, r.runs, &ItemMetrics::mse);
  r.snr_db = detail::aggregate(r.rows, r.runs, &ItemMetrics::snr_db);
  r.lsd = detail::aggregate(r.rows, r.runs, &ItemMetrics::lsd);
  r.multi_stft_mse = detail::aggregate(r.rows, r.runs, &ItemMetrics::multi_stft_mse);
}

/// Synthesizes every item on its native grid with each state and scores it
/// against the dataset. A dataset hash mismatch is an error unless
/// `allow_hash_mismatch` is set, in which case it becomes a warning.
template <class T>
EvalReport evaluate_checkpoint(std::span<const TrainState<T>* const> states, const Dataset& data,
                               bool allow_hash_mismatch = false, const MetricToggles& on = {}) {
  if (states.empty()) throw ConfigError("evaluate: no checkpoints given");
  EvalReport report;
  report.runs = states.size();
  for (std::size_t run = 0; run < states.size(); ++run) {
    const auto& s = *states[run];
    if (s.dataset_hash != data.hash) {
      const std::string msg = "run " + std::to_string(run) + ": checkpoint dataset hash " + to_hex(s.dataset_hash) +
                              " differs from dataset " + to_hex(data.hash);
      if (!allow_hash_mismatch) throw ConfigError(msg);
      report.warnings.push_back(msg);
    }
    require_shape(s.item_count() == data.items.size(), "evaluate: checkpoint has " + std::to_string(s.item_count()) +
                                                           " latents, dataset has " +
                                                           std::to_string(data.items.size()) + " items");
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      const auto& ref = data.items[i].samples;
      const auto est = synthesize_item(s, i, ref.size());
      ItemMetrics m = item_metrics(std::span<const float>(ref), std::span<const T>(est), on);
      m.run = run;
      m.item_id = i < data.manifest.rows.size() ? data.manifest.rows[i].item_id : std::to_string(i);
      report.rows.push_back(std::move(m));
    }
  }
  finalize_report(report);
  return report;
}

inline constexpr const char* kReportHeader = "item_id,mse,snr_db,lsd,multi_stft_mse";

namespace detail {
inline std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace detail

inline std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << kReportHeader << '\n';
  for (const auto& row : r.rows) {
    const std::string id = r.runs > 1 ? "run" + std::to_string(row.run) + "/" + row.item_id : row.item_id;
    os << id << ',' << detail::fmt(row.mse) << ',' << detail::fmt(row.snr_db) << ',' << detail::fmt(row.lsd) << ','
       << detail::fmt(row.multi_stft_mse) << '\n';
  }
  return os.str();
}

inline std::string report_summary(const EvalReport& r) {
  std::ostringstream os;
  os << "runs: " << r.runs << "\nitems: " << (r.runs ? r.rows.size() / r.runs : 0) << '\n';
  os << "sigma: " << (r.runs > 1 ? "over per-run means" : "over items") << '\n';
  auto line = [&](const char* name, const MetricSummary& s) {
    os << name << ": mean " << detail::fmt(s.mean) << " sigma " << detail::fmt(s.stddev) << '\n';
  };
  line("mse", r.mse);
  line("snr_db", r.snr_db);
  line("lsd", r.lsd);
  line("multi_stft_mse", r.multi_stft_mse);
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  os << "note: the CDPAM column is omitted (needs a pretrained perceptual model)\n";
  return os.str();
}

}  // namespace pcinr
