// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "driftcal/drift_model.hpp"
#include "driftcal/errors.hpp"
#include "driftcal/pipeline.hpp"
#include "driftcal/spectral.hpp"

namespace driftcal {

/// One propagation path of the simulated chamber.
struct PathSpec {
  double delay_ns = 0.0;
  double amplitude = 0.0;
  double phase_rad = 0.0;
};

struct TrackNode {
  double t_h = 0.0;
  double value = 0.0;
};

/// Piecewise-linear function of measurement time, held constant outside its nodes.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(double constant) : nodes_{{0.0, constant}} {}
  explicit PiecewiseLinear(std::vector<TrackNode> nodes) : nodes_(std::move(nodes)) { validate(); }

  static PiecewiseLinear linear(double t0, double v0, double t1, double v1) {
    return PiecewiseLinear({{t0, v0}, {t1, v1}});
  }

  void validate() const {
    if (nodes_.empty()) throw ValidationError("trajectory needs at least one node");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!std::isfinite(nodes_[i].t_h) || !std::isfinite(nodes_[i].value)) {
        throw ValidationError("trajectory nodes must be finite");
      }
      if (i > 0 && !(nodes_[i].t_h > nodes_[i - 1].t_h)) {
        throw ValidationError("trajectory node times must be strictly increasing");
      }
    }
  }

  double at(double t_h) const {
    if (nodes_.empty()) return 0.0;
    if (t_h <= nodes_.front().t_h) return nodes_.front().value;
    if (t_h >= nodes_.back().t_h) return nodes_.back().value;
    const auto hi = std::upper_bound(nodes_.begin(), nodes_.end(), t_h,
                                     [](double t, const TrackNode& n) { return t < n.t_h; });
    const auto lo = hi - 1;
    const double w = (t_h - lo->t_h) / (hi->t_h - lo->t_h);
    return lo->value + w * (hi->value - lo->value);
  }

  const std::vector<TrackNode>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<TrackNode> nodes_{{0.0, 0.0}};
};

/// Sinusoidal phase modulation over frequency, r(f) = A sin(2 pi f / period),
/// active for run times in [t_start_h, t_end_h].
struct Ripple {
  double amplitude_deg = 0.0;
  double period_ghz = 1.0;
  double t_start_h = 0.0;
  double t_end_h = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(amplitude_deg >= 0.0) || !std::isfinite(amplitude_deg)) throw ValidationError("ripple amplitude must be >= 0");
    if (!(period_ghz > 0.0) || !std::isfinite(period_ghz)) throw ValidationError("ripple period must be positive");
    if (!(t_end_h >= t_start_h)) throw ValidationError("ripple window must have t_end_h >= t_start_h");
  }

  bool active(double t_h) const noexcept { return amplitude_deg > 0.0 && t_h >= t_start_h && t_h <= t_end_h; }

  double phase_rad(double f_ghz) const noexcept {
    return to_radians(amplitude_deg) * std::sin(2.0 * std::numbers::pi * f_ghz / period_ghz);
  }
};

/// Correction parameters over time. The value at time t is the (eps, a, b) that
/// maps the drifted foreground back onto the clean background, i.e. what a fit
/// should recover.
struct DriftTrajectory {
  PiecewiseLinear eps_deg_per_ghz{0.0};
  PiecewiseLinear a{1.0};
  PiecewiseLinear b{0.0};
  std::optional<Ripple> ripple;

  void validate() const {
    eps_deg_per_ghz.validate();
    a.validate();
    b.validate();
    if (ripple) ripple->validate();
  }

  DriftParams at(double t_h) const {
    return DriftParams::from_degrees(eps_deg_per_ghz.at(t_h), a.at(t_h), b.at(t_h));
  }

  bool ripple_active(double t_h) const noexcept { return ripple && ripple->active(t_h); }
};

struct ScenarioSpec {
  FrequencyGrid grid = make_grid(2.0, 18.0, 1601);
  std::vector<PathSpec> paths;
  DriftTrajectory trajectory;
  // Complex white noise, IR-domain RMS relative to the strongest path; none when absent.
  std::optional<double> noise_db;
  std::size_t n_runs = 1;
  std::uint64_t seed = 0;
  double duration_h = 18.0;
  std::optional<double> bistatic_angle_deg;
  std::optional<std::string> polarization;

  void validate() const {
    const double range = grid.unambiguous_range_ns();
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const PathSpec& p = paths[i];
      if (!std::isfinite(p.delay_ns) || p.delay_ns < 0.0 || p.delay_ns >= range) {
        throw ValidationError("paths[" + std::to_string(i) + "]: delay_ns " + std::to_string(p.delay_ns) +
                              " outside unambiguous range [0, " + std::to_string(range) + ")");
      }
      if (!std::isfinite(p.amplitude) || p.amplitude < 0.0) {
        throw ValidationError("paths[" + std::to_string(i) + "]: amplitude must be finite and >= 0");
      }
      if (!std::isfinite(p.phase_rad)) throw ValidationError("paths[" + std::to_string(i) + "]: phase_rad must be finite");
    }
    trajectory.validate();
    if (noise_db && (!std::isfinite(*noise_db) || *noise_db > 0.0)) {
      throw ValidationError("noise_db must be <= 0 dB");
    }
    if (n_runs < 1) throw ValidationError("n_runs must be at least 1");
    if (!std::isfinite(duration_h) || duration_h < 0.0) throw ValidationError("duration_h must be >= 0");
    if (bistatic_angle_deg && !(*bistatic_angle_deg >= 0.0 && *bistatic_angle_deg < 360.0)) {
      throw ValidationError("bistatic_angle_deg must lie in [0, 360)");
    }
  }

  double reference_amplitude() const noexcept {
    double m = 0.0;
    for (const PathSpec& p : paths) m = std::max(m, p.amplitude);
    return m;
  }
};

/// Chamber resembling a static long-term measurement: direct path near 20 ns at
/// -10 dB, weak clutter between 35 and 90 ns, noise at -120 dB.
inline ScenarioSpec default_scenario() {
  ScenarioSpec s;
  s.paths = {
      {20.0, std::pow(10.0, -10.0 / 20.0), 0.0},
      {35.0, std::pow(10.0, -60.0 / 20.0), 0.7},
      {52.5, std::pow(10.0, -70.0 / 20.0), 2.1},
      {71.0, std::pow(10.0, -75.0 / 20.0), -1.3},
      {90.0, std::pow(10.0, -80.0 / 20.0), 0.4},
  };
  s.noise_db = -120.0;
  return s;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

enum class NoiseStream : std::uint32_t { background = 0, foreground = 1 };

inline std::mt19937_64 run_rng(std::uint64_t seed, std::size_t run, NoiseStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(static_cast<std::uint64_t>(run) >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

inline void add_noise(CVector& z, const ScenarioSpec& spec, std::size_t run, NoiseStream stream) {
  if (!spec.noise_db) return;
  const double n = static_cast<double>(z.size());
  const double sigma = spec.reference_amplitude() * std::pow(10.0, *spec.noise_db / 20.0) * std::sqrt(n);
  if (sigma == 0.0) return;
  auto rng = run_rng(spec.seed, run, stream);
  std::normal_distribution<double> dist(0.0, sigma / std::numbers::sqrt2);
  for (auto& v : z) {
    const double re = dist(rng);
    const double im = dist(rng);
    v += cplx{re, im};
  }
}

}  // namespace detail

/// Noise-free background: sum over paths of A e^{j phi} e^{-j 2 pi f_k tau}.
inline CVector clean_background(const ScenarioSpec& spec) {
  const auto f = spec.grid.values();
  CVector z(f.size(), cplx{0.0, 0.0});
  for (const PathSpec& p : spec.paths) {
    for (std::size_t k = 0; k < f.size(); ++k) {
      // Reduce f*tau to its fractional part before scaling by 2 pi.
      const double cycles = f[k] * p.delay_ns;
      const double frac = cycles - std::floor(cycles);
      z[k] += std::polar(p.amplitude, p.phase_rad - 2.0 * std::numbers::pi * frac);
    }
  }
  return z;
}

/// Drifts a spectrum so that apply_correction(result, p) restores it:
/// z[k] e^{+j eps f_k} / (a + b f_k).
inline CVector inject_drift(std::span<const cplx> z, std::span<const double> f, const DriftParams& p) {
  CVector out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double amp = p.a + p.b * f[k];
    if (amp == 0.0) throw DomainError("drift amplitude a + b f vanishes inside the band");
    out[k] = z[k] * std::polar(1.0, p.eps * f[k]) / amp;
  }
  return out;
}

inline Sweep inject_drift(const Sweep& s, const DriftParams& p) {
  return s.with_samples(inject_drift(s.samples(), s.grid().values(), p));
}

inline SweepMeta scenario_meta(const ScenarioSpec& spec, double t_h, SweepRole role) {
  SweepMeta m;
  m.timestamp_s = t_h * 3600.0;
  m.bistatic_angle_deg = spec.bistatic_angle_deg;
  m.polarization = spec.polarization;
  m.role = role;
  return m;
}

/// Background sweep for a run, with that run's background noise draw.
inline Sweep synth_background(const ScenarioSpec& spec, std::size_t run = 0) {
  spec.validate();
  CVector z = clean_background(spec);
  detail::add_noise(z, spec, run, detail::NoiseStream::background);
  return Sweep(spec.grid, std::move(z), scenario_meta(spec, 0.0, SweepRole::background));
}

struct SynthRun {
  MeasurementPair pair;
  DriftParams truth;
  double t_h = 0.0;
  bool ripple = false;
};

/// Foreground/background pair at time t_h. The foreground is the clean
/// background drifted by the trajectory value at t_h, optionally rippled, plus an
/// independent noise draw.
inline SynthRun synth_run(const ScenarioSpec& spec, double t_h, std::size_t run = 0) {
  spec.validate();
  const CVector clean = clean_background(spec);
  const DriftParams truth = spec.trajectory.at(t_h);
  const auto f = spec.grid.values();

  CVector fg = inject_drift(clean, f, truth);
  const bool ripple = spec.trajectory.ripple_active(t_h);
  if (ripple) {
    for (std::size_t k = 0; k < fg.size(); ++k) fg[k] *= std::polar(1.0, -spec.trajectory.ripple->phase_rad(f[k]));
  }
  detail::add_noise(fg, spec, run, detail::NoiseStream::foreground);

  CVector bg = clean;
  detail::add_noise(bg, spec, run, detail::NoiseStream::background);

  SynthRun out{MeasurementPair{Sweep(spec.grid, std::move(fg), scenario_meta(spec, t_h, SweepRole::foreground)),
                               Sweep(spec.grid, std::move(bg), scenario_meta(spec, 0.0, SweepRole::background))},
               truth, t_h, ripple};
  return out;
}

struct TruthRow {
  std::size_t index = 0;
  double t_h = 0.0;
  DriftParams params;
  bool ripple = false;
};

struct SynthDataset {
  std::vector<MeasurementPair> pairs;
  std::vector<TruthRow> truth;
};

inline double run_time_h(const ScenarioSpec& spec, std::size_t i) {
  if (spec.n_runs <= 1) return 0.0;
  return static_cast<double>(i) * (spec.duration_h / static_cast<double>(spec.n_runs - 1));
}

/// n_runs pairs at t_i = i * duration / (n_runs - 1). The first run's background
/// is shared by every pair.
inline SynthDataset synth_dataset(const ScenarioSpec& spec) {
  spec.validate();
  SynthDataset ds;
  ds.pairs.reserve(spec.n_runs);
  ds.truth.reserve(spec.n_runs);
  const Sweep shared_bg = synth_background(spec, 0);
  for (std::size_t i = 0; i < spec.n_runs; ++i) {
    const double t = run_time_h(spec, i);
    SynthRun run = synth_run(spec, t, i);
    ds.pairs.push_back(MeasurementPair{std::move(run.pair.fg), shared_bg});
    ds.truth.push_back({i, t, run.truth, run.ripple});
  }
  return ds;
}

}  // namespace driftcal
