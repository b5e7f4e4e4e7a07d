#pragma once

#include <vector>

#include "sp4d/core.hpp"

// Time-evolving, view-dependent color: a separable basis of real spherical
// harmonics times temporal sinusoids,
//   Z[n,l,m](t, dir) = Y[l,m](dir) * f_n(t),
// with f_0 = 1 and f_n(t) = sin(2*pi*n*t/T + phase_n) for n >= 1. Color is
// rgb_c = max(0, 0.5 + sum_k coeff * Z).

namespace sp4d {

inline constexpr int kMaxShDegree = 3;

struct AppearanceConfig {
    int sh_degree = 3;      // L, spherical truncation
    int temporal_bands = 2; // N_t, sinusoid count beyond the DC band
    double period = 1.0;    // T, in normalized-time units

    int basis_per_band() const { return (sh_degree + 1) * (sh_degree + 1); }
    int coeff_count() const { return (temporal_bands + 1) * basis_per_band(); }
};

// Per-Gaussian appearance parameters. k is laid out [band][lm][rgb],
// phases has one entry per band n >= 1 (shared across l, m and channels).
struct AppearanceCoeffs {
    std::vector<double> k;
    std::vector<double> phases;

    static AppearanceCoeffs zeros(const AppearanceConfig& cfg) {
        AppearanceCoeffs c;
        c.k.assign(static_cast<size_t>(cfg.coeff_count()) * 3, 0.0);
        c.phases.assign(cfg.temporal_bands, 0.0);
        return c;
    }
};

// Real spherical harmonic Y_l^m of a unit direction, l <= 3.
// Throws std::invalid_argument for l > 3, |m| > l, or a non-unit direction.
double eval_sh(int l, int m, const Vec3& dir);

// All (degree+1)^2 values in (l, m) order; out must hold that many.
void eval_sh_basis(int degree, const Vec3& dir, double* out);
// Same plus d(value)/d(x,y,z) of the cartesian polynomials.
void eval_sh_basis_grad(int degree, const Vec3& dir, double* out, Vec3* grad);

// One spherindrical basis function Z_{nl}^m(t, dir).
double eval_basis(const AppearanceConfig& cfg, int n, int l, int m, double t,
                  const Vec3& dir, const double* phases);

// rgb = max(0, 0.5 + sum coeffs * Z), evaluated up to active_degree
// (bands beyond degree `active_degree` contribute nothing).
Vec3 eval_color(const AppearanceConfig& cfg, const AppearanceCoeffs& coeffs, double t,
                const Vec3& dir, int active_degree = kMaxShDegree);

// Accumulates dL/dk, dL/dphases and dL/ddir for a given dL/drgb. The clamp
// gate is re-derived from the forward value.
void eval_color_backward(const AppearanceConfig& cfg, const AppearanceCoeffs& coeffs,
                         double t, const Vec3& dir, int active_degree, const Vec3& d_rgb,
                         double* d_k, double* d_phases, Vec3& d_dir);

}  // namespace sp4d
