#pragma once

#include <string>
#include <vector>

#include "sp4d/camera.hpp"
#include "sp4d/gaussian.hpp"
#include "sp4d/image.hpp"
#include "sp4d/renderer.hpp"

// Training objectives: photometric rendering loss (L1 + D-SSIM, optional
// masked depth L1) plus the normal-alignment term comparing depth-derived
// normals with composited Gaussian normals, and the analytic backward pass
// through the whole pipeline.

namespace sp4d {

struct LossWeights {
    double lambda_ssim = 0.2;
    double lambda_enac = 0.05;
    double lambda_depth = 0.1;
    double eps_alpha = 0.5;      // alpha validity threshold for normal masks
    bool enac_detach_depth = false;

    void validate() const;
};

struct FrameTargets {
    ImageF rgb;                // H x W x 3 in [0, 1]
    ImageF depth;              // H x W, 0 = invalid; empty when absent
    Image<uint8_t> tool_mask;  // nonzero = tool (excluded); empty when absent
};

// Per-Gaussian gradient (and Adam moment) storage, group-major.
struct GradientBuffer {
    size_t count = 0;
    int coeffs = 0; // per-gaussian sh scalar count (3 * coeff_count)
    int bands = 0;  // per-gaussian phase count
    std::vector<double> mu;      // 4 per gaussian
    std::vector<double> rotor;   // 8 per gaussian (q_left wxyz, q_right wxyz)
    std::vector<double> log_s;   // 4 per gaussian
    std::vector<double> opacity; // 1 per gaussian
    std::vector<double> sh;      // coeffs per gaussian
    std::vector<double> phases;  // bands per gaussian

    static GradientBuffer zeros(const GaussianCloud& cloud);
    void set_zero();
    // Throws std::runtime_error naming the first offending Gaussian.
    void check_finite() const;
};

// Camera-space normals from a depth map by central differences of
// back-projected points. Pixels on the border, with invalid own depth or
// any invalid 4-neighbor, are masked out.
void normals_from_depth(const ImageF& depth, const Camera& cam, ImageF& normals,
                        Image<uint8_t>& valid);

// Adjoint of normals_from_depth: scatters d(normal) into d(depth).
void normals_from_depth_backward(const ImageF& depth, const Camera& cam,
                                 const ImageF& normals, const Image<uint8_t>& valid,
                                 const ImageF& d_normals, ImageF& d_depth);

// Mean over masked pixels of the per-pixel 3-component L1 difference.
double enac_loss(const ImageF& n_depth, const ImageF& n_gauss, const Image<uint8_t>& mask);

struct LossBreakdown {
    double total = 0;
    double l1 = 0;       // raw color L1
    double ssim = 0;     // SSIM value (not yet 1 - ssim)
    double depth_l1 = 0; // raw masked depth L1
    double enac = 0;     // raw normal alignment term
};

// (1-l_ssim)*L1 + l_ssim*(1-SSIM) + l_depth*depth L1, tool pixels excluded.
double render_loss(const RenderBuffers& rendered, const FrameTargets& targets,
                   const LossWeights& weights, LossBreakdown* breakdown = nullptr);

inline double total_loss(double render, double enac, double lambda_enac) {
    return render + lambda_enac * enac;
}

// Forward-only total loss (render + enac terms), no gradients.
LossBreakdown loss_forward(const GaussianCloud& cloud, const Camera& cam,
                           const FrameTargets& targets, const LossWeights& weights,
                           const RenderOptions& opts = {});

struct BackwardResult {
    LossBreakdown loss;
    GradientBuffer grads;
    // |dL/d(mean2)| per gaussian for this frame (0 when not rendered),
    // feeding the densification statistics.
    std::vector<double> screen_grad_norm;
    std::vector<uint8_t> visible;
};

// Analytic gradients of the total loss w.r.t. every learnable field.
BackwardResult backward(const GaussianCloud& cloud, const Camera& cam,
                        const FrameTargets& targets, const LossWeights& weights,
                        const RenderOptions& opts = {});

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0;
    size_t argmax_gaussian = 0;
    int argmax_component = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    bool passed(double tol = 1e-3) const {
        for (const auto& g : groups)
            if (!(g.max_rel_err <= tol)) return false;
        return true;
    }
};

// Central finite differences (step h) against backward() for every
// parameter group. Relative error uses a 1e-4 denominator clamp so the
// 1e-3 gate carries a 1e-7 absolute floor. `corrupt_group` (when >= 0)
// perturbs one analytic entry of that group, for fault-injection tests.
GradCheckReport check_gradients(GaussianCloud cloud, const Camera& cam,
                                const FrameTargets& targets, const LossWeights& weights,
                                double h = 1e-4, const RenderOptions& opts = {},
                                int corrupt_group = -1);

}  // namespace sp4d
