// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "driftcal/errors.hpp"
#include "driftcal/spectral.hpp"

namespace driftcal {

inline constexpr double kDegPerRad = 180.0 / std::numbers::pi;

inline double report_degrees(double eps_rad_per_ghz) noexcept { return eps_rad_per_ghz * kDegPerRad; }
inline double to_radians(double eps_deg_per_ghz) noexcept { return eps_deg_per_ghz / kDegPerRad; }

/// Correction triple applied as (a + b f) e^{-j eps f} to a foreground spectrum.
///
/// eps is held in rad/GHz; degrees only appear at I/O boundaries.
struct DriftParams {
  double eps = 0.0;  // rad/GHz
  double a = 1.0;
  double b = 0.0;  // 1/GHz

  static constexpr DriftParams identity() noexcept { return {}; }

  static DriftParams from_degrees(double eps_deg_per_ghz, double a, double b) noexcept {
    return {to_radians(eps_deg_per_ghz), a, b};
  }

  double eps_deg_per_ghz() const noexcept { return report_degrees(eps); }

  bool finite() const noexcept { return std::isfinite(eps) && std::isfinite(a) && std::isfinite(b); }

  // Parameter order used by gradients and Hessians: (eps, a, b).
  std::array<double, 3> as_array() const noexcept { return {eps, a, b}; }
  static DriftParams from_array(const std::array<double, 3>& v) noexcept { return {v[0], v[1], v[2]}; }

  friend bool operator==(const DriftParams&, const DriftParams&) = default;
};

inline constexpr std::size_t kEps = 0;
inline constexpr std::size_t kA = 1;
inline constexpr std::size_t kB = 2;

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

/// kappa over the selected samples; kappa[i] belongs to sample_set[i].
struct Residual {
  CVector kappa;
  std::vector<std::size_t> sample_set;
};

/// Complex partials of kappa at one selected sample. The a/b second partials
/// vanish identically and are not stored.
struct KappaPartials {
  cplx d_eps;
  cplx d_a;
  cplx d_b;
  cplx d_eps_eps;
  cplx d_a_eps;
  cplx d_eps_b;
};

struct ModelDerivatives {
  double objective = 0.0;
  Vec3 gradient{};
  Mat3 hessian{};
};

inline Sweep apply_correction(const Sweep& fg, const DriftParams& p) {
  const auto f = fg.grid().values();
  const auto z = fg.samples();
  CVector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const cplx rot = std::polar(1.0, -p.eps * f[k]);
    out[k] = (p.a + p.b * f[k]) * rot * z[k];
  }
  return fg.with_samples(std::move(out));
}

/// Peak-residue objective restricted to a fixed foreground, background IR and sample set.
///
/// Each "IDFT{...}[n]" is evaluated by direct summation at the selected n only,
/// using rows fg[k] e^{+j 2 pi k n / N} / N cached at construction.
class CorrectionProblem {
 public:
  CorrectionProblem(const Sweep& fg, const ImpulseResponse& bg_ir, std::vector<std::size_t> sample_set)
      : freqs_(fg.grid().values().begin(), fg.grid().values().end()), sample_set_(std::move(sample_set)) {
    if (!fg.grid().same_as(bg_ir.source_grid())) {
      throw DomainError("foreground and background are on different frequency grids");
    }
    const std::size_t n = fg.size();
    for (std::size_t idx : sample_set_) {
      if (idx >= n) {
        throw DomainError("sample index " + std::to_string(idx) + " outside [0, " + std::to_string(n - 1) + "]");
      }
    }
    const auto z = fg.samples();
    rows_.resize(sample_set_.size());
    target_.resize(sample_set_.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < sample_set_.size(); ++i) {
      rows_[i].resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        rows_[i][k] = z[k] * detail::unit_root(static_cast<std::uint64_t>(k) * sample_set_[i], n, +1) * inv_n;
      }
      target_[i] = bg_ir.samples()[sample_set_[i]];
    }
  }

  const std::vector<std::size_t>& sample_set() const noexcept { return sample_set_; }
  std::span<const cplx> background_at_samples() const noexcept { return target_; }
  std::span<const double> frequencies() const noexcept { return freqs_; }

  Residual residual(const DriftParams& p) const {
    const CVector weights = correction_weights(p);
    Residual r{CVector(sample_set_.size()), sample_set_};
    for (std::size_t i = 0; i < sample_set_.size(); ++i) r.kappa[i] = weighted_sum(i, weights) - target_[i];
    return r;
  }

  double objective(const DriftParams& p) const {
    const Residual r = residual(p);
    double acc = 0.0;
    for (const cplx& k : r.kappa) acc += k.real() * k.real() + k.imag() * k.imag();
    return acc;
  }

  std::vector<KappaPartials> partials(const DriftParams& p) const {
    const std::size_t n = freqs_.size();
    const cplx mj{0.0, -1.0};
    // Weighted spectra of the Appendix, without the fg factor already in rows_.
    CVector w_eps(n), w_a(n), w_b(n), w_ee(n), w_ae(n), w_eb(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double f = freqs_[k];
      const cplx rot = std::polar(1.0, -p.eps * f);
      const double amp = p.a + p.b * f;
      w_eps[k] = amp * (mj * f) * rot;
      w_a[k] = rot;
      w_b[k] = f * rot;
      w_ee[k] = amp * (-f * f) * rot;
      w_ae[k] = mj * f * rot;
      w_eb[k] = mj * (f * f) * rot;
    }
    std::vector<KappaPartials> out(sample_set_.size());
    for (std::size_t i = 0; i < sample_set_.size(); ++i) {
      out[i] = {weighted_sum(i, w_eps), weighted_sum(i, w_a),  weighted_sum(i, w_b),
                weighted_sum(i, w_ee),  weighted_sum(i, w_ae), weighted_sum(i, w_eb)};
    }
    return out;
  }

  ModelDerivatives derivatives(const DriftParams& p) const {
    const Residual r = residual(p);
    const auto parts = partials(p);
    ModelDerivatives d;
    for (std::size_t i = 0; i < r.kappa.size(); ++i) {
      const cplx kap = r.kappa[i];
      const KappaPartials& q = parts[i];
      const std::array<cplx, 3> first{q.d_eps, q.d_a, q.d_b};
      // Second partials indexed [p][nu]; zero for (a,a), (b,b), (a,b).
      const std::array<std::array<cplx, 3>, 3> second{{
          {q.d_eps_eps, q.d_a_eps, q.d_eps_b},
          {q.d_a_eps, cplx{}, cplx{}},
          {q.d_eps_b, cplx{}, cplx{}},
      }};
      d.objective += kap.real() * kap.real() + kap.imag() * kap.imag();
      for (std::size_t a = 0; a < 3; ++a) {
        d.gradient[a] += 2.0 * kap.real() * first[a].real() + 2.0 * kap.imag() * first[a].imag();
        for (std::size_t b = a; b < 3; ++b) {
          d.hessian[a][b] += 2.0 * first[b].real() * first[a].real() + 2.0 * kap.real() * second[a][b].real() +
                             2.0 * first[b].imag() * first[a].imag() + 2.0 * kap.imag() * second[a][b].imag();
        }
      }
    }
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < a; ++b) d.hessian[a][b] = d.hessian[b][a];
    }
    return d;
  }

 private:
  CVector correction_weights(const DriftParams& p) const {
    CVector w(freqs_.size());
    for (std::size_t k = 0; k < freqs_.size(); ++k) {
      w[k] = (p.a + p.b * freqs_[k]) * std::polar(1.0, -p.eps * freqs_[k]);
    }
    return w;
  }

  cplx weighted_sum(std::size_t row, const CVector& weights) const {
    const CVector& r = rows_[row];
    cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < r.size(); ++k) acc += weights[k] * r[k];
    return acc;
  }

  std::vector<double> freqs_;
  std::vector<std::size_t> sample_set_;
  std::vector<CVector> rows_;
  CVector target_;
};

inline Residual residual(const Sweep& fg, const ImpulseResponse& bg_ir, const DriftParams& p,
                         std::vector<std::size_t> sample_set) {
  return CorrectionProblem(fg, bg_ir, std::move(sample_set)).residual(p);
}

inline double objective(const Sweep& fg, const ImpulseResponse& bg_ir, const DriftParams& p,
                        std::vector<std::size_t> sample_set) {
  return CorrectionProblem(fg, bg_ir, std::move(sample_set)).objective(p);
}

inline std::vector<KappaPartials> kappa_partials(const Sweep& fg, const DriftParams& p,
                                                 std::vector<std::size_t> sample_set) {
  // Partials do not depend on the background; a zero IR on the same grid stands in.
  const ImpulseResponse zero(CVector(fg.size()), fg.grid());
  return CorrectionProblem(fg, zero, std::move(sample_set)).partials(p);
}

inline ModelDerivatives derivatives(const Sweep& fg, const ImpulseResponse& bg_ir, const DriftParams& p,
                                    std::vector<std::size_t> sample_set) {
  return CorrectionProblem(fg, bg_ir, std::move(sample_set)).derivatives(p);
}

}  // namespace driftcal
