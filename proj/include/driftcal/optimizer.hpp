// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "driftcal/drift_model.hpp"
#include "driftcal/errors.hpp"
#include "driftcal/spectral.hpp"

namespace driftcal {

struct FitConfig {
  DriftParams initial = DriftParams::identity();
  // Stop when |grad| <= grad_tol * objective scale (see FitResult::objective_scale).
  double grad_tol = 1e-12;
  int max_iters = 100;
  // Relative residual for the inner CG solve.
  double cg_tol = 1e-8;
  // Starting Levenberg factor when CG meets non-positive curvature; escalates x10.
  double damping = 1e-4;
  // Which of (eps, a, b) are optimized; frozen ones stay at their initial value.
  std::array<bool, 3> free{true, true, true};

  static FitConfig phase_only() {
    FitConfig c;
    c.free = {true, false, false};
    return c;
  }

  void validate() const {
    if (!(grad_tol > 0.0) || !(cg_tol > 0.0) || !(damping > 0.0)) {
      throw DomainError("fit tolerances and damping must be positive");
    }
    if (max_iters < 1) throw DomainError("max_iters must be at least 1");
    if (!initial.finite()) throw DomainError("initial parameters must be finite");
  }
};

enum class StopReason {
  // |grad| <= grad_tol * objective_scale.
  gradient,
  // The Newton step predicts a decrease below the objective's rounding level.
  rounding_floor,
  max_iters,
  // No descent found along the Newton or steepest-descent direction.
  line_search,
};

struct FitResult {
  DriftParams params;
  double objective_value = 0.0;
  int iterations = 0;
  // True for StopReason::gradient and StopReason::rounding_floor.
  bool converged = false;
  StopReason stop_reason = StopReason::max_iters;
  double gradient_norm = 0.0;
  // stop_reason == gradient implies gradient_norm <= grad_tol * objective_scale, where
  // the scale is max(sum of |z_bg|^2 over the sample set, initial objective).
  double objective_scale = 1.0;
  std::vector<std::size_t> sample_set;
  bool plausible = true;
  // Objective after each accepted outer iteration, starting with the initial point.
  std::vector<double> objective_history;
};

namespace detail {

// Internal coordinates: x = (p - reference) / characteristic scale.
inline constexpr Vec3 kParamScale{0.02, 0.01, 0.001};
inline constexpr Vec3 kParamReference{0.0, 1.0, 0.0};

inline Vec3 to_internal(const DriftParams& p) {
  const Vec3 v = p.as_array();
  Vec3 x{};
  for (std::size_t i = 0; i < 3; ++i) x[i] = (v[i] - kParamReference[i]) / kParamScale[i];
  return x;
}

inline DriftParams from_internal(const Vec3& x) {
  Vec3 v{};
  for (std::size_t i = 0; i < 3; ++i) v[i] = kParamReference[i] + x[i] * kParamScale[i];
  return DriftParams::from_array(v);
}

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

inline Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  Vec3 out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = dot(m[i], v);
  return out;
}

// CG on H d = -g restricted to the free coordinates. Returns false on
// non-positive curvature.
inline bool conjugate_gradient(const Mat3& h, const Vec3& g, const std::array<bool, 3>& free, double tol,
                               Vec3& d) {
  d = {0.0, 0.0, 0.0};
  Vec3 r{};
  for (std::size_t i = 0; i < 3; ++i) r[i] = free[i] ? -g[i] : 0.0;
  const double r0 = std::sqrt(dot(r, r));
  if (r0 == 0.0) return true;
  double h_scale = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (free[i]) h_scale = std::max(h_scale, std::abs(h[i][i]));
  }
  Vec3 dir = r;
  double rr = dot(r, r);
  // A 3x3 system needs at most 3 steps in exact arithmetic; a few extra absorb rounding.
  for (int it = 0; it < 10; ++it) {
    Vec3 hd = mat_vec(h, dir);
    for (std::size_t i = 0; i < 3; ++i) {
      if (!free[i]) hd[i] = 0.0;
    }
    const double curv = dot(dir, hd);
    if (!(curv > 1e-14 * h_scale * dot(dir, dir))) return false;
    const double alpha = rr / curv;
    for (std::size_t i = 0; i < 3; ++i) {
      d[i] += alpha * dir[i];
      r[i] -= alpha * hd[i];
    }
    const double rr_new = dot(r, r);
    if (std::sqrt(rr_new) <= tol * r0) return true;
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < 3; ++i) dir[i] = r[i] + beta * dir[i];
  }
  return true;
}

struct ScaledEval {
  double f = 0.0;
  Vec3 g{};  // w.r.t. internal coordinates
  Mat3 h{};
  Vec3 g_physical{};
};

inline ScaledEval evaluate_scaled(const CorrectionProblem& prob, const DriftParams& p, double norm) {
  const ModelDerivatives d = prob.derivatives(p);
  ScaledEval e;
  e.f = d.objective / norm;
  for (std::size_t i = 0; i < 3; ++i) {
    e.g_physical[i] = d.gradient[i] / norm;
    e.g[i] = e.g_physical[i] * kParamScale[i];
    for (std::size_t j = 0; j < 3; ++j) e.h[i][j] = d.hessian[i][j] / norm * kParamScale[i] * kParamScale[j];
  }
  return e;
}

inline double free_norm(const Vec3& g, const std::array<bool, 3>& free) {
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (free[i]) acc += g[i] * g[i];
  }
  return std::sqrt(acc);
}

}  // namespace detail

/// Newton-CG minimization of the peak-residue objective with Armijo backtracking.
///
/// The objective is normalized internally by the background energy at the
/// selected samples so that a common complex gain on fg and bg leaves the
/// iterates unchanged. Never throws once the inputs pass validation; a fit that
/// stalls returns its best point with converged = false.
inline FitResult fit(const CorrectionProblem& prob, const FitConfig& config = {}) {
  config.validate();
  if (prob.sample_set().empty()) throw DomainError("fit needs a non-empty sample set");

  double bg_energy = 0.0;
  for (const cplx& z : prob.background_at_samples()) bg_energy += std::norm(z);
  const double norm = bg_energy > 0.0 ? bg_energy : 1.0;

  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 60;
  constexpr double kKappaRounding = 1e-14;

  DriftParams p = config.initial;
  Vec3 x = detail::to_internal(p);
  detail::ScaledEval cur = detail::evaluate_scaled(prob, p, norm);
  if (!std::isfinite(cur.f)) throw DomainError("objective is not finite at the initial point");

  FitResult res;
  res.sample_set = prob.sample_set();
  res.objective_scale = norm * std::max(1.0, cur.f);
  res.objective_history.push_back(cur.f * norm);
  const double stop = config.grad_tol * std::max(1.0, cur.f);

  double gnorm = detail::free_norm(cur.g_physical, config.free);
  auto finish = [&](StopReason why) {
    res.stop_reason = why;
    res.converged = why == StopReason::gradient || why == StopReason::rounding_floor;
  };
  while (true) {
    if (gnorm <= stop) {
      finish(StopReason::gradient);
      break;
    }
    if (res.iterations >= config.max_iters) {
      finish(StopReason::max_iters);
      break;
    }

    Vec3 step{};
    bool ok = detail::conjugate_gradient(cur.h, cur.g, config.free, config.cg_tol, step);
    double mu = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      if (config.free[i]) mu = std::max(mu, std::abs(cur.h[i][i]));
    }
    if (mu == 0.0) mu = 1.0;
    for (double lambda = config.damping; !ok && lambda <= 1e12; lambda *= 10.0) {
      Mat3 damped = cur.h;
      for (std::size_t i = 0; i < 3; ++i) damped[i][i] += lambda * mu;
      ok = detail::conjugate_gradient(damped, cur.g, config.free, config.cg_tol, step);
    }
    if (!ok) {
      for (std::size_t i = 0; i < 3; ++i) step[i] = config.free[i] ? -cur.g[i] / mu : 0.0;
    }

    double slope = detail::dot(cur.g, step);
    if (!(slope < 0.0)) {
      for (std::size_t i = 0; i < 3; ++i) step[i] = config.free[i] ? -cur.g[i] / mu : 0.0;
      slope = detail::dot(cur.g, step);
      if (!(slope < 0.0)) {
        finish(StopReason::line_search);
        break;
      }
    }
    // kappa carries an absolute rounding error of roughly kKappaRounding (normalized
    // units), so f is only resolved to about 2 sqrt(f) kKappaRounding.
    if (ok && -slope <= 4.0 * std::sqrt(cur.f) * kKappaRounding + kKappaRounding * kKappaRounding) {
      finish(StopReason::rounding_floor);
      break;
    }

    double alpha = 1.0;
    bool accepted = false;
    Vec3 trial{};
    double f_trial = 0.0;
    for (int h = 0; h <= kMaxHalvings; ++h, alpha *= 0.5) {
      for (std::size_t i = 0; i < 3; ++i) trial[i] = x[i] + alpha * step[i];
      f_trial = prob.objective(detail::from_internal(trial)) / norm;
      if (std::isfinite(f_trial) && f_trial <= cur.f + kArmijo * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      finish(StopReason::line_search);
      break;
    }

    x = trial;
    p = detail::from_internal(x);
    // Frozen coordinates are restored exactly, untouched by the x round trip.
    const Vec3 init = config.initial.as_array();
    Vec3 pv = p.as_array();
    for (std::size_t i = 0; i < 3; ++i) {
      if (!config.free[i]) pv[i] = init[i];
    }
    p = DriftParams::from_array(pv);
    cur = detail::evaluate_scaled(prob, p, norm);
    gnorm = detail::free_norm(cur.g_physical, config.free);
    ++res.iterations;
    res.objective_history.push_back(cur.f * norm);
  }

  res.params = p;
  res.objective_value = cur.f * norm;
  res.gradient_norm = gnorm * norm;
  return res;
}

inline FitResult fit(const Sweep& fg, const Sweep& bg, std::vector<std::size_t> sample_set,
                     const FitConfig& config = {}) {
  if (!fg.grid().same_as(bg.grid())) throw DomainError("foreground and background are on different frequency grids");
  if (sample_set.empty()) throw DomainError("fit needs a non-empty sample set");
  const CorrectionProblem prob(fg, to_impulse_response(bg), std::move(sample_set));
  return fit(prob, config);
}

// ---------------------------------------------------------------------------
// Derivative self-check
// ---------------------------------------------------------------------------

struct DerivativeCheck {
  Vec3 analytic_gradient{};
  Vec3 numeric_gradient{};
  Mat3 analytic_hessian{};
  Mat3 numeric_hessian{};
  double max_rel_gradient_error = 0.0;
  double max_rel_hessian_error = 0.0;
  double max_abs_gradient_error = 0.0;
  double max_abs_hessian_error = 0.0;
};

/// Central finite differences of the objective (for the gradient) and of the
/// analytic gradient (for the Hessian). The step for parameter i is
/// step * max(1, |p_i|). Relative errors are taken against the larger of the two
/// values, floored at 1e-8 of the largest entry of the same order.
inline DerivativeCheck verify_derivatives(const CorrectionProblem& prob, const DriftParams& params, double step) {
  if (!(step > 0.0)) throw DomainError("finite-difference step must be positive");
  DerivativeCheck out;
  const ModelDerivatives d0 = prob.derivatives(params);
  out.analytic_gradient = d0.gradient;
  out.analytic_hessian = d0.hessian;

  const Vec3 base = params.as_array();
  for (std::size_t i = 0; i < 3; ++i) {
    const double h = step * std::max(1.0, std::abs(base[i]));
    Vec3 up = base, dn = base;
    up[i] += h;
    dn[i] -= h;
    const DriftParams pu = DriftParams::from_array(up);
    const DriftParams pd = DriftParams::from_array(dn);
    out.numeric_gradient[i] = (prob.objective(pu) - prob.objective(pd)) / (2.0 * h);
    const ModelDerivatives du = prob.derivatives(pu);
    const ModelDerivatives dd = prob.derivatives(pd);
    for (std::size_t j = 0; j < 3; ++j) out.numeric_hessian[j][i] = (du.gradient[j] - dd.gradient[j]) / (2.0 * h);
  }

  double g_scale = 0.0, h_scale = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    g_scale = std::max({g_scale, std::abs(out.analytic_gradient[i]), std::abs(out.numeric_gradient[i])});
    for (std::size_t j = 0; j < 3; ++j) {
      h_scale = std::max({h_scale, std::abs(out.analytic_hessian[i][j]), std::abs(out.numeric_hessian[i][j])});
    }
  }
  auto rel = [](double a, double n, double floor) {
    const double den = std::max({std::abs(a), std::abs(n), floor});
    return den > 0.0 ? std::abs(a - n) / den : 0.0;
  };
  for (std::size_t i = 0; i < 3; ++i) {
    const double ga = out.analytic_gradient[i], gn = out.numeric_gradient[i];
    out.max_abs_gradient_error = std::max(out.max_abs_gradient_error, std::abs(ga - gn));
    out.max_rel_gradient_error = std::max(out.max_rel_gradient_error, rel(ga, gn, 1e-8 * g_scale));
    for (std::size_t j = 0; j < 3; ++j) {
      const double ha = out.analytic_hessian[i][j], hn = out.numeric_hessian[i][j];
      out.max_abs_hessian_error = std::max(out.max_abs_hessian_error, std::abs(ha - hn));
      out.max_rel_hessian_error = std::max(out.max_rel_hessian_error, rel(ha, hn, 1e-8 * h_scale));
    }
  }
  return out;
}

inline DerivativeCheck verify_derivatives(const Sweep& fg, const Sweep& bg, const DriftParams& params,
                                          std::vector<std::size_t> sample_set, double step) {
  const CorrectionProblem prob(fg, to_impulse_response(bg), std::move(sample_set));
  return verify_derivatives(prob, params, step);
}

// ---------------------------------------------------------------------------
// Exhaustive lattice search (test oracle)
// ---------------------------------------------------------------------------

/// Axis-aligned box in (eps [rad/GHz], a, b [1/GHz]).
struct ParamBox {
  Vec3 lo{};
  Vec3 hi{};
};

struct LatticeMinimum {
  DriftParams params;
  double objective = std::numeric_limits<double>::infinity();
};

/// Evaluates the objective at every node of a steps^3 lattice spanning `bounds`
/// and returns the best node (first one found on ties, eps-major order).
inline LatticeMinimum grid_search_oracle(const CorrectionProblem& prob, const ParamBox& bounds, std::size_t steps) {
  if (steps < 3) throw DomainError("grid search needs at least 3 steps per axis");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!std::isfinite(bounds.lo[i]) || !std::isfinite(bounds.hi[i]) || bounds.hi[i] < bounds.lo[i]) {
      throw DomainError("grid search bounds must be finite with lo <= hi");
    }
  }
  auto node = [&](std::size_t axis, std::size_t i) {
    return bounds.lo[axis] + (bounds.hi[axis] - bounds.lo[axis]) * static_cast<double>(i) /
                                 static_cast<double>(steps - 1);
  };
  LatticeMinimum best;
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < steps; ++j) {
      for (std::size_t k = 0; k < steps; ++k) {
        const DriftParams p{node(0, i), node(1, j), node(2, k)};
        const double f = prob.objective(p);
        if (f < best.objective) best = {p, f};
      }
    }
  }
  return best;
}

inline LatticeMinimum grid_search_oracle(const Sweep& fg, const Sweep& bg, std::vector<std::size_t> sample_set,
                                         const ParamBox& bounds, std::size_t steps) {
  const CorrectionProblem prob(fg, to_impulse_response(bg), std::move(sample_set));
  return grid_search_oracle(prob, bounds, steps);
}

}  // namespace driftcal
