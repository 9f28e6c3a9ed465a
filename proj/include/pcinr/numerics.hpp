#pragma once

// Dense numeric kernel: matrix aliases, a counter-based RNG, a radix-2 real
// FFT and window functions.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pcinr/error.hpp"

namespace pcinr {

/// Row-major 2-D array used for every learnable weight matrix.
template <class T>
using Tensor2 = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Column-major work buffer (features x batch).
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <class Derived>
void check_finite(const Eigen::DenseBase<Derived>& values, const std::string& what) {
  if (!values.derived().allFinite()) throw NumericError("non-finite value in " + what);
}

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// SplitMix64 as a counter-based generator: draw i is a pure function of
/// (seed, i), so a stream is fully described by its seed and position.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t position = 0)
      : seed_(seed), position_(position) {}

  std::uint64_t next_u64() {
    ++position_;
    return mix(seed_ + position_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound).
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw ConfigError("Rng::next_below: bound must be positive");
    // Lemire rejection keeps the draw unbiased.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t x = next_u64();
      const unsigned __int128 product = static_cast<unsigned __int128>(x) * bound;
      if (static_cast<std::uint64_t>(product) >= threshold) {
        return static_cast<std::uint64_t>(product >> 64);
      }
    }
  }

  /// Standard normal via Box-Muller (one draw per call, two uniforms consumed).
  double next_normal() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Independent child stream derived from the next draw.
  Rng split() { return Rng(mix(next_u64() ^ 0x5851f42d4c957f2dULL)); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t position_;
};

/// n draws from U[lo, hi).
template <class T = double>
std::vector<T> rng_uniform(Rng& rng, T lo, T hi, std::size_t n) {
  if (!(lo < hi)) throw ConfigError("rng_uniform: lo must be < hi");
  std::vector<T> out(n);
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  for (auto& x : out) {
    T v = static_cast<T>(static_cast<double>(lo) + span * rng.next_double());
    if (!(v < hi)) v = std::nextafter(hi, lo);  // rounding can land on hi at 32-bit
    x = v;
  }
  return out;
}

template <class T = double>
std::vector<T> rng_normal(Rng& rng, T mean, T stddev, std::size_t n) {
  std::vector<T> out(n);
  for (auto& x : out) {
    x = static_cast<T>(static_cast<double>(mean) + static_cast<double>(stddev) * rng.next_normal());
  }
  return out;
}

template <class T>
void fill_uniform(Rng& rng, Eigen::DenseBase<T>& dst, double bound) {
  using Scalar = typename T::Scalar;
  for (Eigen::Index r = 0; r < dst.rows(); ++r) {
    for (Eigen::Index c = 0; c < dst.cols(); ++c) {
      dst(r, c) = static_cast<Scalar>(-bound + 2.0 * bound * rng.next_double());
    }
  }
}

/// Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(p[i - 1], p[rng.next_below(i)]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

inline bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

inline std::size_t next_power_of_two(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

template <class T>
struct ComplexSpectrum {
  std::vector<std::complex<T>> values;

  std::size_t bins() const { return values.size(); }
};

/// Precomputed twiddles and bit-reversal table for one radix-2 size.
template <class T>
class FftPlan {
 public:
  explicit FftPlan(std::size_t fft_size) : size_(fft_size) {
    if (!is_power_of_two(fft_size)) {
      throw ConfigError("fft size " + std::to_string(fft_size) + " is not a power of two");
    }
    twiddle_.resize(size_ / 2);
    for (std::size_t k = 0; k < size_ / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size_);
      twiddle_[k] = {static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle))};
    }
    reversed_.resize(size_);
    const int bits = std::countr_zero(size_);
    for (std::size_t i = 0; i < size_; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      reversed_[i] = r;
    }
    work_.resize(size_);
  }

  std::size_t size() const { return size_; }
  std::size_t bins() const { return size_ / 2 + 1; }

  /// Unnormalized forward DFT of `signal` zero-padded to size(); writes bins() values.
  template <class U>
  void forward(std::span<const U> signal, std::span<std::complex<T>> out) {
    if (signal.size() > size_) throw ShapeError("rfft: signal longer than fft size");
    if (out.size() < bins()) throw ShapeError("rfft: output buffer too small");
    for (std::size_t i = 0; i < size_; ++i) {
      const std::size_t src = reversed_[i];
      work_[i] = {src < signal.size() ? static_cast<T>(signal[src]) : T(0), T(0)};
    }
    for (std::size_t len = 2; len <= size_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = size_ / len;
      for (std::size_t start = 0; start < size_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const std::complex<T> t = twiddle_[k * stride] * work_[start + k + half];
          const std::complex<T> u = work_[start + k];
          work_[start + k] = u + t;
          work_[start + k + half] = u - t;
        }
      }
    }
    for (std::size_t k = 0; k < bins(); ++k) out[k] = work_[k];
  }

 private:
  std::size_t size_;
  std::vector<std::complex<T>> twiddle_;
  std::vector<std::size_t> reversed_;
  std::vector<std::complex<T>> work_;
};

/// Forward real FFT, unnormalized, returning fft_size/2 + 1 bins.
template <class T>
ComplexSpectrum<T> rfft(std::span<const T> signal, std::size_t fft_size) {
  FftPlan<T> plan(fft_size);
  ComplexSpectrum<T> spectrum;
  spectrum.values.resize(plan.bins());
  plan.forward(signal, std::span<std::complex<T>>(spectrum.values));
  return spectrum;
}

/// Symmetric Hamming window: 0.54 - 0.46 cos(2 pi n / (len - 1)).
template <class T = double>
std::vector<T> hamming_window(std::size_t len) {
  if (len < 2) throw ConfigError("hamming_window: length must be >= 2");
  std::vector<T> w(len);
  const double denom = static_cast<double>(len - 1);
  for (std::size_t n = 0; n < len; ++n) {
    w[n] = static_cast<T>(0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

/// Incremental FNV-1a (64-bit).
class Fnv1a64 {
 public:
  void update(std::span<const std::uint8_t> bytes) {
    for (std::uint8_t b : bytes) {
      hash_ ^= b;
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update_u64(std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    update(b);
  }
  void update_f32(float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(bits >> (8 * i));
    update(b);
  }
  void update_string(const std::string& s) {
    update(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::string to_hex(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace pcinr
