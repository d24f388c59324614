// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "driftcal/drift_model.hpp"
#include "driftcal/errors.hpp"
#include "driftcal/optimizer.hpp"
#include "driftcal/spectral.hpp"

namespace driftcal {

/// Default half-width of the peak window used for fitting. A single complex
/// sample gives two real equations for three unknowns, so the smallest window
/// that pins down (eps, a, b) is the peak and its two neighbours.
inline constexpr std::size_t kDefaultWindow = 1;

/// Foreground/background sweeps taken under the same illumination and
/// observation geometry and polarization.
struct MeasurementPair {
  Sweep fg;
  Sweep bg;

  void validate() const {
    if (!fg.grid().same_as(bg.grid())) throw DomainError("pair sweeps are on different frequency grids");
    const SweepMeta& m1 = fg.meta();
    const SweepMeta& m2 = bg.meta();
    if (m1.bistatic_angle_deg && m2.bistatic_angle_deg && *m1.bistatic_angle_deg != *m2.bistatic_angle_deg) {
      throw DomainError("pair bistatic angles disagree");
    }
    if (m1.polarization && m2.polarization && *m1.polarization != *m2.polarization) {
      throw DomainError("pair polarizations disagree");
    }
  }
};

/// Limits beyond which fitted parameters are treated as implausible.
struct PlausibilityBounds {
  double eps_max_deg_per_ghz = 2.0;
  double a_dev_max = 0.05;  // on |a - 1|
  double b_max_per_ghz = 0.01;

  void validate() const {
    if (!(eps_max_deg_per_ghz > 0.0) || !(a_dev_max > 0.0) || !(b_max_per_ghz > 0.0)) {
      throw DomainError("plausibility bounds must be positive");
    }
  }

  bool contains(const DriftParams& p) const noexcept {
    return p.finite() && std::abs(p.eps_deg_per_ghz()) <= eps_max_deg_per_ghz && std::abs(p.a - 1.0) <= a_dev_max &&
           std::abs(p.b) <= b_max_per_ghz;
  }

  ParamBox box() const noexcept {
    const double e = to_radians(eps_max_deg_per_ghz);
    return {{-e, 1.0 - a_dev_max, -b_max_per_ghz}, {e, 1.0 + a_dev_max, b_max_per_ghz}};
  }
};

enum class SubtractionMode { conventional, phase_only, full };

inline const char* to_string(SubtractionMode m) noexcept {
  switch (m) {
    case SubtractionMode::conventional:
      return "conventional";
    case SubtractionMode::phase_only:
      return "phase-only";
    case SubtractionMode::full:
      return "full";
  }
  return "?";
}

struct ResidueMetrics {
  double peak_residue_db = 0.0;
  // Extension beyond the peak metric: RMS over all N samples, same reference.
  double rms_residue_db = 0.0;
};

/// Residue levels of `residual` relative to the peak magnitude of `bg_ir`.
inline ResidueMetrics residue_metrics(std::span<const cplx> residual, std::span<const cplx> bg_ir) {
  if (residual.size() != bg_ir.size()) throw DomainError("residual and background lengths differ");
  double bg_peak = 0.0;
  for (const cplx& z : bg_ir) bg_peak = std::max(bg_peak, std::abs(z));
  if (!(bg_peak > 0.0)) throw DomainError("degenerate background: zero impulse-response peak");
  double peak = 0.0, energy = 0.0;
  for (const cplx& z : residual) {
    peak = std::max(peak, std::abs(z));
    energy += std::norm(z);
  }
  const double rms = std::sqrt(energy / static_cast<double>(residual.size()));
  return {magnitude_db(peak / bg_peak), magnitude_db(rms / bg_peak)};
}

inline ResidueMetrics residue_metrics(const ImpulseResponse& residual, const ImpulseResponse& bg_ir) {
  return residue_metrics(residual.samples(), bg_ir.samples());
}

/// Conventional residue minus corrected residue; 0 when the two agree (including both -inf).
inline double improvement(double conventional_db, double corrected_db) noexcept {
  if (conventional_db == corrected_db) return 0.0;
  return conventional_db - corrected_db;
}

struct SubtractionReport {
  SubtractionMode mode = SubtractionMode::conventional;
  std::optional<ImpulseResponse> residual_ir;
  std::vector<std::size_t> sample_set;
  // Full impulse response, relative to the background peak.
  double peak_residue_db = 0.0;
  double rms_residue_db = 0.0;
  // Largest residual magnitude over the selected samples only.
  double selected_residue_db = 0.0;
  double conventional_peak_residue_db = 0.0;
  double conventional_selected_residue_db = 0.0;
  double improvement_db = 0.0;
  std::optional<FitResult> fit;
  // Conventional subtraction result, attached when the fit is implausible or did not converge.
  bool fallback = false;
  std::optional<ImpulseResponse> fallback_ir;
  std::optional<std::string> error;

  bool ok() const noexcept { return !error.has_value(); }
  bool plausible() const noexcept { return !fit || fit->plausible; }
  bool converged() const noexcept { return !fit || fit->converged; }
};

namespace detail {

inline double selected_level_db(std::span<const cplx> residual, std::span<const cplx> bg_ir,
                                const std::vector<std::size_t>& set) {
  double bg_peak = 0.0;
  for (const cplx& z : bg_ir) bg_peak = std::max(bg_peak, std::abs(z));
  double m = 0.0;
  for (std::size_t n : set) m = std::max(m, std::abs(residual[n]));
  return magnitude_db(m / bg_peak);
}

inline CVector difference(std::span<const cplx> x, std::span<const cplx> y) {
  CVector d(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) d[k] = x[k] - y[k];
  return d;
}

}  // namespace detail

/// fg - bg without any correction.
inline SubtractionReport subtract_conventional(const MeasurementPair& pair, std::size_t window = kDefaultWindow) {
  pair.validate();
  const ImpulseResponse bg_ir = to_impulse_response(pair.bg);
  ImpulseResponse res_ir(idft(detail::difference(pair.fg.samples(), pair.bg.samples())), pair.bg.grid());
  const ResidueMetrics m = residue_metrics(res_ir, bg_ir);

  SubtractionReport r;
  r.mode = SubtractionMode::conventional;
  r.sample_set = find_peak(bg_ir, window);
  r.peak_residue_db = m.peak_residue_db;
  r.rms_residue_db = m.rms_residue_db;
  r.selected_residue_db = detail::selected_level_db(res_ir.samples(), bg_ir.samples(), r.sample_set);
  r.conventional_peak_residue_db = r.peak_residue_db;
  r.conventional_selected_residue_db = r.selected_residue_db;
  r.improvement_db = 0.0;
  r.residual_ir = std::move(res_ir);
  return r;
}

/// Fits the correction on the background peak sample(s), applies it to the
/// foreground and subtracts. Fit failures come back as a non-converged report
/// with the conventional fallback attached.
inline SubtractionReport subtract_corrected(const MeasurementPair& pair, const FitConfig& config = {},
                                            const PlausibilityBounds& bounds = {}, std::size_t window = kDefaultWindow,
                                            SubtractionMode mode = SubtractionMode::full) {
  if (mode == SubtractionMode::conventional) return subtract_conventional(pair, window);
  pair.validate();
  bounds.validate();

  const ImpulseResponse bg_ir = to_impulse_response(pair.bg);
  ImpulseResponse conv_ir(idft(detail::difference(pair.fg.samples(), pair.bg.samples())), pair.bg.grid());
  const ResidueMetrics conv = residue_metrics(conv_ir, bg_ir);

  SubtractionReport r;
  r.mode = mode;
  r.sample_set = find_peak(bg_ir, window);
  r.conventional_peak_residue_db = conv.peak_residue_db;
  r.conventional_selected_residue_db = detail::selected_level_db(conv_ir.samples(), bg_ir.samples(), r.sample_set);

  FitConfig cfg = config;
  if (mode == SubtractionMode::phase_only) {
    cfg.free = {true, false, false};
    cfg.initial.a = 1.0;
    cfg.initial.b = 0.0;
  }

  FitResult fr;
  try {
    const CorrectionProblem prob(pair.fg, bg_ir, r.sample_set);
    fr = fit(prob, cfg);
  } catch (const std::exception& e) {
    fr = FitResult{};
    fr.params = cfg.initial;
    fr.sample_set = r.sample_set;
    fr.converged = false;
    fr.objective_value = std::numeric_limits<double>::quiet_NaN();
    fr.gradient_norm = std::numeric_limits<double>::quiet_NaN();
    r.error = std::string("fit failed: ") + e.what();
  }
  fr.plausible = bounds.contains(fr.params);

  const Sweep corrected = apply_correction(pair.fg, fr.params);
  ImpulseResponse res_ir(idft(detail::difference(corrected.samples(), pair.bg.samples())), pair.bg.grid());
  const ResidueMetrics m = residue_metrics(res_ir, bg_ir);
  r.peak_residue_db = m.peak_residue_db;
  r.rms_residue_db = m.rms_residue_db;
  r.selected_residue_db = detail::selected_level_db(res_ir.samples(), bg_ir.samples(), r.sample_set);
  r.improvement_db = improvement(r.conventional_peak_residue_db, r.peak_residue_db);
  r.residual_ir = std::move(res_ir);
  if (!fr.plausible || !fr.converged) {
    r.fallback = true;
    r.fallback_ir = std::move(conv_ir);
  }
  r.fit = std::move(fr);
  return r;
}

// ---------------------------------------------------------------------------
// Batch processing
// ---------------------------------------------------------------------------

struct BatchOptions {
  SubtractionMode mode = SubtractionMode::full;
  FitConfig config{};
  PlausibilityBounds bounds{};
  std::size_t window = kDefaultWindow;
  // 0 = hardware concurrency.
  unsigned threads = 1;
  // Impulse responses are large; batch callers that only need metrics can drop them.
  bool keep_impulse_responses = true;
};

enum class TrackKey { time_h, beta_deg };

struct TrackPoint {
  std::size_t index = 0;
  double key = 0.0;
  double eps_deg_per_ghz = std::numeric_limits<double>::quiet_NaN();
  double a = std::numeric_limits<double>::quiet_NaN();
  double b = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  bool plausible = false;
  bool ok = false;
};

struct BatchResult {
  std::vector<SubtractionReport> reports;
  TrackKey key_kind = TrackKey::time_h;
  std::vector<TrackPoint> tracks;
};

/// A report carrying only an error, for pairs that could not be processed.
inline SubtractionReport error_report(SubtractionMode mode, std::string message) {
  SubtractionReport r;
  r.mode = mode;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.peak_residue_db = r.rms_residue_db = r.selected_residue_db = nan;
  r.conventional_peak_residue_db = r.conventional_selected_residue_db = r.improvement_db = nan;
  r.error = std::move(message);
  return r;
}

/// Processes every pair independently; a failing pair becomes an error entry
/// and never stops the batch. Output order follows input order.
inline BatchResult batch_process(const std::vector<MeasurementPair>& dataset, const BatchOptions& opts = {}) {
  if (dataset.empty()) throw DomainError("batch needs at least one measurement pair");
  opts.config.validate();
  opts.bounds.validate();

  BatchResult out;
  out.reports.resize(dataset.size());

  auto process = [&](std::size_t i) {
    try {
      SubtractionReport r = subtract_corrected(dataset[i], opts.config, opts.bounds, opts.window, opts.mode);
      if (!opts.keep_impulse_responses) {
        r.residual_ir.reset();
        r.fallback_ir.reset();
      }
      out.reports[i] = std::move(r);
    } catch (const std::exception& e) {
      out.reports[i] = error_report(opts.mode, e.what());
    }
  };

  unsigned n_threads = opts.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opts.threads;
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, dataset.size()));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < dataset.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    workers.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < dataset.size(); i = next++) process(i);
      });
    }
  }

  const bool by_angle = std::all_of(dataset.begin(), dataset.end(), [](const MeasurementPair& p) {
    return p.fg.meta().bistatic_angle_deg.has_value();
  });
  out.key_kind = by_angle ? TrackKey::beta_deg : TrackKey::time_h;
  out.tracks.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const SweepMeta& meta = dataset[i].fg.meta();
    const SubtractionReport& r = out.reports[i];
    TrackPoint tp;
    tp.index = i;
    tp.key = by_angle ? *meta.bistatic_angle_deg : meta.timestamp_s / 3600.0;
    tp.ok = r.ok();
    const DriftParams p = r.fit ? r.fit->params : DriftParams::identity();
    if (r.ok() || r.fit) {
      tp.eps_deg_per_ghz = p.eps_deg_per_ghz();
      tp.a = p.a;
      tp.b = p.b;
    }
    tp.converged = r.ok() && r.converged();
    tp.plausible = r.ok() && r.plausible();
    out.tracks.push_back(tp);
  }
  return out;
}

}  // namespace driftcal
