// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "driftcal/optimizer.hpp"
#include "driftcal/pipeline.hpp"
#include "oracles.hpp"

using namespace driftcal;

namespace {

// Direct path at 20 ns plus weak clutter, no noise.
Sweep path_background(const FrequencyGrid& g, double scale = 1.0) {
  CVector z(g.size());
  const double tau[] = {20.0, 35.0, 52.5};
  const double amp[] = {0.316, 1e-3, 3e-4};
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (int i = 0; i < 3; ++i) z[k] += scale * amp[i] * std::polar(1.0, -2.0 * std::numbers::pi * g[k] * tau[i]);
  }
  return Sweep(g, z);
}

// fg such that apply_correction(fg, p) == bg up to rounding.
Sweep drifted(const Sweep& bg, const DriftParams& p) {
  const auto& g = bg.grid();
  CVector z(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) z[k] = bg.samples()[k] * std::polar(1.0, p.eps * g[k]) / (p.a + p.b * g[k]);
  return bg.with_samples(z);
}

Sweep random_sweep(std::mt19937_64& rng, const FrequencyGrid& g) {
  const auto v = oracle::random_complex(rng, g.size());
  return Sweep(g, CVector(v.begin(), v.end()));
}

std::vector<std::size_t> peak_window(const Sweep& bg, std::size_t w = 1) {
  return find_peak(to_impulse_response(bg), w);
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

const DriftParams kTruth = DriftParams::from_degrees(0.5, 1.002, 0.0005);

}  // namespace

TEST(FitConfig, Validation) {
  FitConfig c;
  EXPECT_NO_THROW(c.validate());
  c.grad_tol = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.initial.eps = std::nan("");
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Fit, AlreadyOptimalPair) {
  const auto g = make_grid(2.0, 18.0, 1601);
  const Sweep bg = path_background(g);
  const FitResult r = fit(bg, bg, peak_window(bg));
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 1);
  EXPECT_NEAR(r.params.eps, 0.0, 1e-12);
  EXPECT_NEAR(r.params.a, 1.0, 1e-12);
  EXPECT_NEAR(r.params.b, 0.0, 1e-12);
  EXPECT_LE(r.objective_value, 1e-25);
}

TEST(Fit, RecoversNoiseFreeDriftOnTableOneGrid) {
  const auto g = make_grid(2.0, 18.0, 1601);
  const Sweep bg = path_background(g);
  const Sweep fg = drifted(bg, kTruth);
  const FitResult r = fit(fg, bg, peak_window(bg));
  ASSERT_TRUE(r.converged);
  EXPECT_LE(rel(r.params.eps, kTruth.eps), 1e-6);
  EXPECT_LE(rel(r.params.a, kTruth.a), 1e-6);
  EXPECT_LE(rel(r.params.b, kTruth.b), 1e-6);
}

TEST(Fit, SameAnswerFromIdentityAndFromTruth) {
  const auto g = make_grid(2.0, 18.0, 1601);
  const Sweep bg = path_background(g);
  const Sweep fg = drifted(bg, kTruth);
  const FitResult r1 = fit(fg, bg, peak_window(bg));
  FitConfig c;
  c.initial = kTruth;
  const FitResult r2 = fit(fg, bg, peak_window(bg), c);
  EXPECT_NEAR(r1.params.eps, r2.params.eps, 1e-8 * std::abs(kTruth.eps));
  EXPECT_NEAR(r1.params.a, r2.params.a, 1e-8);
  EXPECT_NEAR(r1.params.b, r2.params.b, 1e-8 * std::abs(kTruth.b));
}

TEST(Fit, InputErrors) {
  const auto g = make_grid(2.0, 18.0, 64);
  const Sweep bg = path_background(g);
  EXPECT_THROW(fit(bg, bg, {}), DomainError);
  const Sweep other = path_background(make_grid(2.0, 17.0, 64));
  EXPECT_THROW(fit(bg, other, {0}), DomainError);
  FitConfig c;
  c.initial = {1e300, 1e300, 1e300};
  EXPECT_THROW(fit(bg, bg, {0}, c), DomainError);
}

TEST(Fit, FrozenCoordinatesStayPut) {
  const auto g = make_grid(2.0, 18.0, 1601);
  const Sweep bg = path_background(g);
  const Sweep fg = drifted(bg, kTruth);
  FitConfig c = FitConfig::phase_only();
  const FitResult r = fit(fg, bg, peak_window(bg), c);
  EXPECT_EQ(r.params.a, 1.0);
  EXPECT_EQ(r.params.b, 0.0);
  EXPECT_TRUE(r.converged);
  // Phase-only moves eps toward the truth.
  EXPECT_LT(std::abs(r.params.eps - kTruth.eps), std::abs(kTruth.eps));
}

TEST(Fit, ConvergedImpliesGradientBound) {
  std::mt19937_64 rng(31);
  const auto g = make_grid(2.0, 18.0, 256);
  for (int i = 0; i < 20; ++i) {
    const Sweep bg = path_background(g);
    const Sweep noise = random_sweep(rng, g);
    CVector z(g.size());
    const Sweep fg0 = drifted(bg, kTruth);
    for (std::size_t k = 0; k < g.size(); ++k) z[k] = fg0.samples()[k] + 1e-4 * noise.samples()[k];
    const FitResult r = fit(fg0.with_samples(z), bg, peak_window(bg, 2));
    ASSERT_TRUE(r.converged);
    if (r.stop_reason == StopReason::gradient) {
      EXPECT_LE(r.gradient_norm, FitConfig{}.grad_tol * r.objective_scale);
    } else {
      EXPECT_EQ(r.stop_reason, StopReason::rounding_floor);
      // Stalled only where kappa's rounding dominates; the gradient is still tiny.
      EXPECT_LE(r.gradient_norm, 1e-6 * r.objective_scale);
    }
  }
}

TEST(Fit, MaxItersReportsNotConverged) {
  const auto g = make_grid(2.0, 18.0, 1601);
  const Sweep bg = path_background(g);
  const Sweep fg = drifted(bg, DriftParams::from_degrees(1.5, 0.97, 0.004));
  FitConfig c;
  c.max_iters = 1;
  const FitResult r = fit(fg, bg, peak_window(bg), c);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.stop_reason, StopReason::max_iters);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.params.finite());
}

// --- verify_derivatives ------------------------------------------------------------

TEST(VerifyDerivatives, RandomInstance) {
  std::mt19937_64 rng(32);
  const auto g = make_grid(2.0, 18.0, 64);
  const DerivativeCheck c =
      verify_derivatives(random_sweep(rng, g), random_sweep(rng, g), {0.01, 1.01, -0.001}, {3, 4}, 1e-6);
  EXPECT_LE(c.max_rel_gradient_error, 1e-6);
  EXPECT_THROW(verify_derivatives(random_sweep(rng, g), random_sweep(rng, g), {}, {3}, 0.0), DomainError);
}

TEST(VerifyDerivatives, StationaryPoint) {
  const auto g = make_grid(2.0, 18.0, 1601);
  const Sweep bg = path_background(g);
  const Sweep fg = drifted(bg, kTruth);
  const DerivativeCheck c = verify_derivatives(fg, bg, kTruth, peak_window(bg), 1e-6);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_LE(std::abs(c.analytic_gradient[i]), 1e-10);
    EXPECT_LE(std::abs(c.numeric_gradient[i]), 1e-10);
  }
  EXPECT_LE(c.max_abs_gradient_error, 1e-10);
}

// kappa is linear in (a, b), so a single Newton step with eps frozen lands on the
// 2x2 least-squares solution.
TEST(VerifyDerivatives, NewtonStepInABMatchesNormalEquations) {
  std::mt19937_64 rng(33);
  const auto g = make_grid(2.0, 18.0, 64);
  const Sweep fg = random_sweep(rng, g);
  const Sweep bg = random_sweep(rng, g);
  const std::vector<std::size_t> set{2, 7, 30};
  const double eps = 0.02;

  const std::vector<double> f(g.values().begin(), g.values().end());
  const std::vector<oracle::cplx> z(fg.samples().begin(), fg.samples().end());
  const auto bg_ir = oracle::brute_idft({bg.samples().begin(), bg.samples().end()});
  double m00 = 0, m01 = 0, m11 = 0, r0 = 0, r1 = 0;
  for (std::size_t n : set) {
    const cplx A = oracle::corrected_ir_at(f, z, eps, 1.0, 0.0, n);
    const cplx B = oracle::corrected_ir_at(f, z, eps, 0.0, 1.0, n);
    const cplx t = bg_ir[n];
    m00 += std::norm(A);
    m11 += std::norm(B);
    m01 += (std::conj(A) * B).real();
    r0 += (std::conj(A) * t).real();
    r1 += (std::conj(B) * t).real();
  }
  const double det = m00 * m11 - m01 * m01;
  const double a_ref = (r0 * m11 - r1 * m01) / det;
  const double b_ref = (m00 * r1 - m01 * r0) / det;

  FitConfig c;
  c.initial = {eps, 1.0, 0.0};
  c.free = {false, true, true};
  c.max_iters = 1;
  c.cg_tol = 1e-14;
  const FitResult r = fit(fg, bg, set, c);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.params.eps, eps);
  EXPECT_NEAR(r.params.a, a_ref, 1e-10 * std::max(1.0, std::abs(a_ref)));
  EXPECT_NEAR(r.params.b, b_ref, 1e-10 * std::max(1.0, std::abs(b_ref)));
}

// --- grid_search_oracle -------------------------------------------------------------

TEST(GridSearchOracle, FindsTruthOnLatticeNode) {
  const auto g = make_grid(2.0, 18.0, 32);
  const Sweep bg = path_background(g);
  const ParamBox box{{-0.02, 0.98, -0.002}, {0.02, 1.02, 0.002}};
  // Node (i=7, j=11, k=3) of an 11-step lattice.
  const auto node = [&](std::size_t ax, std::size_t i) { return box.lo[ax] + (box.hi[ax] - box.lo[ax]) * double(i) / 10.0; };
  const DriftParams truth{node(0, 7), node(1, 6), node(2, 3)};
  const Sweep fg = drifted(bg, truth);
  const LatticeMinimum m = grid_search_oracle(fg, bg, peak_window(bg), box, 11);
  EXPECT_EQ(m.params, truth);
  EXPECT_LE(m.objective, 1e-25);
}

TEST(GridSearchOracle, FitBeatsLattice) {
  const auto g = make_grid(2.0, 18.0, 32);
  const Sweep bg = path_background(g);
  const Sweep fg = drifted(bg, DriftParams::from_degrees(0.37, 1.013, -0.0007));
  const CorrectionProblem prob(fg, to_impulse_response(bg), peak_window(bg));
  const LatticeMinimum m = grid_search_oracle(prob, PlausibilityBounds{}.box(), 21);
  const FitResult r = fit(prob);
  EXPECT_LE(r.objective_value, m.objective);
}

TEST(GridSearchOracle, EscapesFromBoxExcludingTruth) {
  const auto g = make_grid(2.0, 18.0, 32);
  const Sweep bg = path_background(g);
  const DriftParams truth = DriftParams::from_degrees(0.5, 1.002, 0.0005);
  const Sweep fg = drifted(bg, truth);
  const ParamBox box{{-0.02, 0.96, -0.004}, {-0.01, 0.99, -0.002}};
  const CorrectionProblem prob(fg, to_impulse_response(bg), peak_window(bg));
  const LatticeMinimum m = grid_search_oracle(prob, box, 11);
  // Best node sits on the box face nearest the truth.
  EXPECT_EQ(m.params.eps, box.hi[0]);
  FitConfig c;
  c.initial = m.params;
  const FitResult r = fit(prob, c);
  ASSERT_TRUE(r.converged);
  EXPECT_LE(rel(r.params.eps, truth.eps), 1e-6);
  EXPECT_LE(rel(r.params.a, truth.a), 1e-6);
}

TEST(GridSearchOracle, BadArguments) {
  const auto g = make_grid(2.0, 18.0, 32);
  const Sweep bg = path_background(g);
  const CorrectionProblem prob(bg, to_impulse_response(bg), {0});
  EXPECT_THROW(grid_search_oracle(prob, PlausibilityBounds{}.box(), 2), DomainError);
  EXPECT_THROW(grid_search_oracle(prob, ParamBox{{1, 1, 1}, {0, 0, 0}}, 5), DomainError);
}

// --- properties ----------------------------------------------------------------------

TEST(FitProperties, MonotoneDescent) {
  std::mt19937_64 rng(34);
  for (int i = 0; i < 10; ++i) {
    const auto g = make_grid(2.0, 18.0, 128);
    const CorrectionProblem prob(random_sweep(rng, g), to_impulse_response(random_sweep(rng, g)), {1, 2, 3});
    const FitResult r = fit(prob);
    ASSERT_EQ(r.objective_history.size(), static_cast<std::size_t>(r.iterations) + 1);
    for (std::size_t k = 1; k < r.objective_history.size(); ++k) {
      ASSERT_LE(r.objective_history[k], r.objective_history[k - 1]);
    }
  }
}

TEST(FitProperties, ScaleRobustness) {
  const auto g = make_grid(2.0, 18.0, 1601);
  std::mt19937_64 rng(35);
  const Sweep bg0 = path_background(g);
  const Sweep noise = random_sweep(rng, g);
  CVector zb(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) zb[k] = bg0.samples()[k] + 1e-5 * noise.samples()[k];
  const Sweep bg = bg0.with_samples(zb);
  const Sweep fg = drifted(bg0, kTruth);
  const auto set = peak_window(bg);
  const FitResult ref = fit(fg, bg, set);
  for (double mag : {1e-3, 1.0, 1e3}) {
    const cplx c = std::polar(mag, 0.7);
    CVector zf(g.size()), zb2(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      zf[k] = c * fg.samples()[k];
      zb2[k] = c * bg.samples()[k];
    }
    const FitResult r = fit(fg.with_samples(zf), bg.with_samples(zb2), set);
    EXPECT_NEAR(r.params.eps, ref.params.eps, 1e-8 * std::abs(ref.params.eps)) << mag;
    EXPECT_NEAR(r.params.a, ref.params.a, 1e-8) << mag;
    EXPECT_NEAR(r.params.b, ref.params.b, 1e-8 * std::abs(ref.params.b)) << mag;
    EXPECT_NEAR(r.objective_value / (mag * mag), ref.objective_value, 1e-6 * ref.objective_value + 1e-30);
  }
}

TEST(FitProperties, Deterministic) {
  std::mt19937_64 rng(36);
  const auto g = make_grid(2.0, 18.0, 1601);
  const Sweep fg = random_sweep(rng, g), bg = random_sweep(rng, g);
  const FitResult a = fit(fg, bg, {5, 6, 7});
  const FitResult b = fit(fg, bg, {5, 6, 7});
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.objective_value, b.objective_value);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.gradient_norm, b.gradient_norm);
  EXPECT_EQ(a.objective_history, b.objective_history);
}

TEST(FitProperties, NeverThrowsOnHardInstances) {
  std::mt19937_64 rng(37);
  for (int i = 0; i < 30; ++i) {
    const auto g = make_grid(2.0, 18.0, 16);
    const Sweep fg = random_sweep(rng, g), bg = random_sweep(rng, g);
    FitConfig c;
    c.initial = {std::uniform_real_distribution<double>(-5, 5)(rng), 0.0, 0.0};
    FitResult r;
    ASSERT_NO_THROW(r = fit(fg, bg, {0}, c));
    EXPECT_TRUE(r.params.finite());
    EXPECT_LE(r.objective_value, r.objective_history.front());
  }
}
