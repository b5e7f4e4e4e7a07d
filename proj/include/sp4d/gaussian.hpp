#pragma once

#include <cstdint>
#include <vector>

#include "sp4d/appearance.hpp"
#include "sp4d/core.hpp"
#include "sp4d/rotor.hpp"

// The primitive cloud: 4D anisotropic Gaussians over (x, y, z, t) with
// t normalized to [0,1]. Conditioning on time yields a 3D Gaussian plus an
// unnormalized temporal marginal weight that scales opacity.

namespace sp4d {

struct Gaussian4D {
    Vec4 mu;                 // xyz in scene units, t normalized
    Rotor4 rotor;
    Scales4 scales;
    double opacity_logit = 0.0;
    AppearanceCoeffs sh;

    // densification bookkeeping (mean screen-space gradient magnitude)
    double grad2d_accum = 0.0;
    double grad2d_count = 0.0;

    double opacity() const { return sigmoid(opacity_logit); }
    Sym4 cov4() const { return build_cov4(rotor, scales); }
};

struct GaussianCloud {
    AppearanceConfig appearance;
    std::vector<Gaussian4D> gaussians;

    size_t size() const { return gaussians.size(); }
};

struct ConditionedGaussian3D {
    Vec3 mu3;
    Sym3 cov3;
    double temporal_weight = 1.0; // exp(-(t - mu_t)^2 / (2 Sigma_tt)), in (0, 1]
    uint32_t parent_index = 0;
};

// Extra forward state kept for the backward pass.
struct ConditionCache {
    Mat4 cov4;       // floored 4D covariance
    Vec3 k;          // Sigma_xt / Sigma_tt (mean regression slope)
    double sigma_tt = 0;
    double dt = 0;   // t - mu_t
};

ConditionedGaussian3D condition_at_time(const Gaussian4D& g, double t,
                                        uint32_t parent_index = 0,
                                        ConditionCache* cache = nullptr);

// sigmoid(opacity_logit) * temporal_weight, in (0, 1).
double effective_opacity(const Gaussian4D& g, double t);

// Indices of Gaussians whose temporal weight at t is >= threshold.
// threshold must lie in (0, 1).
std::vector<uint32_t> cull_by_time(const GaussianCloud& cloud, double t, double threshold);

// Backward through condition_at_time: given dL/dmu3, dL/dcov3 (full-matrix
// convention) and dL/d(temporal_weight), accumulate the gradient w.r.t. the
// full 4D covariance and w.r.t. mu. The cov3 clamp is ignored (inactive for
// healthy covariances).
void condition_backward(const ConditionedGaussian3D& cg, const ConditionCache& cache,
                        const Vec3& d_mu3, const Mat3& d_cov3, double d_weight,
                        Vec4& d_mu, Mat4& d_cov4);

}  // namespace sp4d
