// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations used by the tests. Nothing here calls
// into the transform or model code paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;

/// (1/N) sum_k x[k] exp(+j 2 pi k n / N), evaluated term by term with long double angles.
inline std::vector<cplx> brute_idft(const std::vector<cplx>& x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::complex<long double> acc{0.0L, 0.0L};
    for (std::size_t k = 0; k < n; ++k) {
      const long double ang = 2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * r) % n) /
                              static_cast<long double>(n);
      acc += std::complex<long double>(x[k].real(), x[k].imag()) * std::complex<long double>(std::cos(ang), std::sin(ang));
    }
    out[r] = cplx(static_cast<double>(acc.real() / n), static_cast<double>(acc.imag() / n));
  }
  return out;
}

/// Inner sum of the correction objective at one sample n, straight from the formula:
/// (1/N) sum_k (a + b f_k) exp(-j eps f_k) Z[k] exp(+j 2 pi k n / N).
inline cplx corrected_ir_at(const std::vector<double>& f, const std::vector<cplx>& z, double eps, double a, double b,
                            std::size_t n_sample) {
  const std::size_t n = z.size();
  std::complex<long double> acc{0.0L, 0.0L};
  for (std::size_t k = 0; k < n; ++k) {
    const long double ang = -static_cast<long double>(eps) * f[k] +
                            2.0L * std::numbers::pi_v<long double> * static_cast<long double>((k * n_sample) % n) /
                                static_cast<long double>(n);
    const long double amp = static_cast<long double>(a) + static_cast<long double>(b) * f[k];
    acc += amp * std::complex<long double>(z[k].real(), z[k].imag()) * std::complex<long double>(std::cos(ang), std::sin(ang));
  }
  return cplx(static_cast<double>(acc.real() / n), static_cast<double>(acc.imag() / n));
}

/// Grid points straight from f_k = f0 + (f1 - f0) (k/N)(1 + 1/N).
inline std::vector<double> grid(double f0, double f1, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    v[k] = f0 + (f1 - f0) * (static_cast<double>(k) / static_cast<double>(n)) * (1.0 + 1.0 / static_cast<double>(n));
  }
  return v;
}

inline std::size_t argmax_abs(const std::vector<cplx>& x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (std::abs(x[i]) > std::abs(x[best])) best = i;
  }
  return best;
}

inline std::vector<cplx> random_complex(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<cplx> v(n);
  for (auto& z : v) z = {d(rng), d(rng)};
  return v;
}

/// max_i |a_i - b_i| / max_i |b_i|
inline double rel_error(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return den > 0.0 ? num / den : num;
}

}  // namespace oracle
