// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "driftcal/errors.hpp"

namespace driftcal {

using cplx = std::complex<double>;
using CVector = std::vector<cplx>;

// ---------------------------------------------------------------------------
// Frequency grid
// ---------------------------------------------------------------------------

/// Sampled frequency axis in GHz.
///
/// Points follow f_k = f_start + (f_end - f_start) * (k/N) * (1 + 1/N), so the
/// last point stops short of f_end and the spacing is (f_end - f_start)(N+1)/N^2.
class FrequencyGrid {
 public:
  static FrequencyGrid make(double f_start_ghz, double f_end_ghz, std::size_t n_points) {
    if (n_points < 2) {
      throw DomainError("frequency grid needs at least 2 points, got " + std::to_string(n_points));
    }
    if (!std::isfinite(f_start_ghz) || !std::isfinite(f_end_ghz) || !(f_end_ghz > f_start_ghz)) {
      throw DomainError("frequency grid requires finite f_end > f_start");
    }
    return FrequencyGrid(f_start_ghz, f_end_ghz, n_points);
  }

  double f_start() const noexcept { return f_start_; }
  double f_end() const noexcept { return f_end_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t k) const { return values_[k]; }

  /// Spacing between consecutive points in GHz.
  double spacing() const noexcept {
    const auto n = static_cast<double>(size());
    return (f_end_ - f_start_) * (n + 1.0) / (n * n);
  }

  /// Delay between consecutive impulse-response samples, 1/(N * spacing), in ns.
  double delay_step_ns() const noexcept { return 1.0 / (static_cast<double>(size()) * spacing()); }

  /// Largest representable delay, 1/spacing, in ns.
  double unambiguous_range_ns() const noexcept { return 1.0 / spacing(); }

  bool same_as(const FrequencyGrid& other, double tol_ghz = 1e-9) const noexcept {
    return size() == other.size() && std::abs(f_start_ - other.f_start_) <= tol_ghz &&
           std::abs(f_end_ - other.f_end_) <= tol_ghz;
  }

 private:
  FrequencyGrid(double f_start, double f_end, std::size_t n) : f_start_(f_start), f_end_(f_end), values_(n) {
    const double nd = static_cast<double>(n);
    const double stretch = 1.0 + 1.0 / nd;
    for (std::size_t k = 0; k < n; ++k) {
      values_[k] = f_start + (f_end - f_start) * (static_cast<double>(k) / nd) * stretch;
    }
  }

  double f_start_;
  double f_end_;
  std::vector<double> values_;
};

inline FrequencyGrid make_grid(double f_start_ghz, double f_end_ghz, std::size_t n_points) {
  return FrequencyGrid::make(f_start_ghz, f_end_ghz, n_points);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class SweepRole { foreground, background };

inline const char* to_string(SweepRole r) noexcept {
  return r == SweepRole::foreground ? "foreground" : "background";
}

struct SweepMeta {
  double timestamp_s = 0.0;
  std::optional<double> bistatic_angle_deg;
  std::optional<std::string> polarization;
  SweepRole role = SweepRole::foreground;

  void validate() const {
    if (!std::isfinite(timestamp_s) || timestamp_s < 0.0) {
      throw DomainError("sweep timestamp must be finite and non-negative");
    }
    if (bistatic_angle_deg && !(*bistatic_angle_deg >= 0.0 && *bistatic_angle_deg < 360.0)) {
      throw DomainError("bistatic angle must lie in [0, 360) degrees");
    }
  }
};

/// One complex frequency-domain measurement on a grid.
class Sweep {
 public:
  Sweep(FrequencyGrid grid, CVector samples, SweepMeta meta = {})
      : grid_(std::move(grid)), samples_(std::move(samples)), meta_(std::move(meta)) {
    if (samples_.size() != grid_.size()) {
      throw DomainError("sweep has " + std::to_string(samples_.size()) + " samples for a " +
                        std::to_string(grid_.size()) + "-point grid");
    }
    for (const auto& z : samples_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        throw DomainError("sweep samples must be finite");
      }
    }
    meta_.validate();
  }

  const FrequencyGrid& grid() const noexcept { return grid_; }
  std::span<const cplx> samples() const noexcept { return samples_; }
  const SweepMeta& meta() const noexcept { return meta_; }
  std::size_t size() const noexcept { return samples_.size(); }

  Sweep with_samples(CVector samples) const { return Sweep(grid_, std::move(samples), meta_); }
  Sweep with_meta(SweepMeta meta) const { return Sweep(grid_, samples_, std::move(meta)); }

 private:
  FrequencyGrid grid_;
  CVector samples_;
  SweepMeta meta_;
};

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_pow2(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

// e^{sign * j*2*pi*num/den} with the argument reduced exactly in integers.
inline cplx unit_root(std::uint64_t num, std::uint64_t den, int sign) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(num % den) / static_cast<double>(den);
  return {std::cos(angle), sign * std::sin(angle)};
}

// In-place iterative radix-2 transform, unnormalized: X[n] = sum_k x[k] e^{sign j 2 pi k n / M}.
inline void fft_pow2(std::vector<cplx>& a, int sign) {
  const std::size_t m = a.size();
  for (std::size_t i = 1, j = 0; i < m; ++i) {
    std::size_t bit = m >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  std::vector<cplx> tw(m / 2);
  for (std::size_t i = 0; i < m / 2; ++i) tw[i] = unit_root(i, m, sign);
  for (std::size_t len = 2; len <= m; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = m / len;
    for (std::size_t i = 0; i < m; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const cplx u = a[i + j];
        const cplx v = a[i + j + half] * tw[j * stride];
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
}

inline CVector direct_transform(std::span<const cplx> x, int sign) {
  const std::size_t n = x.size();
  CVector out(n);
  for (std::size_t r = 0; r < n; ++r) {
    cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
      acc += x[k] * unit_root(static_cast<std::uint64_t>(k) * r, n, sign);
    }
    out[r] = acc;
  }
  return out;
}

// Bluestein chirp-z: k*r = (k^2 + r^2 - (r-k)^2) / 2 turns the length-N transform
// into a circular convolution evaluated with power-of-two FFTs.
inline CVector bluestein(std::span<const cplx> x, int sign) {
  const std::size_t n = x.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;

  // chirp[k] = e^{sign j pi k^2 / N}; k^2 reduced mod 2N keeps the angle exact.
  std::vector<cplx> chirp(n);
  const std::uint64_t two_n = 2 * static_cast<std::uint64_t>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % two_n;
    chirp[k] = unit_root(k2, two_n, sign);
  }

  std::vector<cplx> a(m, cplx{0.0, 0.0});
  std::vector<cplx> b(m, cplx{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    b[k] = std::conj(chirp[k]);
    b[m - k] = std::conj(chirp[k]);
  }
  fft_pow2(a, -1);
  fft_pow2(b, -1);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  fft_pow2(a, +1);

  const double inv_m = 1.0 / static_cast<double>(m);
  CVector out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = a[r] * inv_m * chirp[r];
  return out;
}

inline CVector transform(std::span<const cplx> x, int sign) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (is_pow2(n)) {
    CVector a(x.begin(), x.end());
    fft_pow2(a, sign);
    return a;
  }
  if (n <= 16) return direct_transform(x, sign);
  return bluestein(x, sign);
}

inline void check_length(std::size_t got, std::size_t n_points) {
  if (got != n_points) {
    throw DomainError("transform length mismatch: input has " + std::to_string(got) + " samples, expected " +
                      std::to_string(n_points));
  }
}

}  // namespace detail

/// Inverse DFT: out[n] = (1/N) sum_k in[k] e^{+j 2 pi k n / N}. Any N >= 1.
inline CVector idft(std::span<const cplx> spectrum, std::size_t n_points) {
  detail::check_length(spectrum.size(), n_points);
  CVector out = detail::transform(spectrum, +1);
  const double inv_n = 1.0 / static_cast<double>(n_points);
  for (auto& z : out) z *= inv_n;
  return out;
}

inline CVector idft(std::span<const cplx> spectrum) { return idft(spectrum, spectrum.size()); }

/// Forward DFT, the unnormalized inverse of idft: out[k] = sum_n in[n] e^{-j 2 pi k n / N}.
inline CVector dft(std::span<const cplx> time_samples, std::size_t n_points) {
  detail::check_length(time_samples.size(), n_points);
  return detail::transform(time_samples, -1);
}

inline CVector dft(std::span<const cplx> time_samples) { return dft(time_samples, time_samples.size()); }

/// IDFT of `spectrum` evaluated only at sample n, by direct summation (O(N)).
inline cplx idft_at(std::span<const cplx> spectrum, std::size_t n) {
  const std::size_t len = spectrum.size();
  cplx acc{0.0, 0.0};
  for (std::size_t k = 0; k < len; ++k) {
    acc += spectrum[k] * detail::unit_root(static_cast<std::uint64_t>(k) * n, len, +1);
  }
  return acc / static_cast<double>(len);
}

// ---------------------------------------------------------------------------
// Impulse responses
// ---------------------------------------------------------------------------

/// Time-domain view of a sweep. Sample n sits at delay n * delay_step_ns.
class ImpulseResponse {
 public:
  ImpulseResponse(CVector samples, FrequencyGrid source_grid)
      : samples_(std::move(samples)), grid_(std::move(source_grid)) {
    if (samples_.size() != grid_.size()) {
      throw DomainError("impulse response length does not match its source grid");
    }
  }

  std::span<const cplx> samples() const noexcept { return samples_; }
  const FrequencyGrid& source_grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return samples_.size(); }
  double delay_step_ns() const noexcept { return grid_.delay_step_ns(); }
  double delay_ns(std::size_t n) const noexcept { return static_cast<double>(n) * delay_step_ns(); }

 private:
  CVector samples_;
  FrequencyGrid grid_;
};

inline ImpulseResponse to_impulse_response(const Sweep& sweep) {
  return ImpulseResponse(idft(sweep.samples(), sweep.size()), sweep.grid());
}

/// Index of the largest |sample|, lowest index on ties, widened to the circular
/// window p-w .. p+w (indices wrap modulo N). Returned in window order.
inline std::vector<std::size_t> find_peak(std::span<const cplx> samples, std::size_t half_width = 0) {
  if (samples.empty()) throw DomainError("no peak: empty impulse response");
  std::size_t best = 0;
  double best_mag = -1.0;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const double m = std::abs(samples[n]);
    if (m > best_mag) {
      best_mag = m;
      best = n;
    }
  }
  if (!(best_mag > 0.0)) throw DomainError("no peak: impulse response is all zero");

  const std::size_t n = samples.size();
  if (2 * half_width + 1 > n) {
    throw DomainError("peak window of half-width " + std::to_string(half_width) + " exceeds " +
                      std::to_string(n) + " samples");
  }
  std::vector<std::size_t> out;
  out.reserve(2 * half_width + 1);
  for (std::size_t i = 0; i < 2 * half_width + 1; ++i) {
    out.push_back((best + n - half_width + i) % n);
  }
  return out;
}

inline std::vector<std::size_t> find_peak(const ImpulseResponse& ir, std::size_t half_width = 0) {
  return find_peak(ir.samples(), half_width);
}

/// 20 log10 |x|; -infinity for x == 0.
inline double magnitude_db(cplx x) noexcept {
  const double m = std::abs(x);
  if (m == 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(m);
}

inline double magnitude_db(double x) noexcept { return magnitude_db(cplx{x, 0.0}); }

}  // namespace driftcal
