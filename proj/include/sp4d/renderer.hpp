#pragma once

#include <optional>
#include <vector>

#include "sp4d/camera.hpp"
#include "sp4d/eig3.hpp"
#include "sp4d/gaussian.hpp"
#include "sp4d/image.hpp"

// Forward rendering: condition the 4D cloud at the camera timestamp,
// project each conditioned Gaussian to a screen-space splat (EWA local
// affine approximation), depth-sort, and alpha-composite color, expected
// depth, normal and alpha front to back.

namespace sp4d {

// anti-aliasing dilation added to the 2D covariance diagonal (px^2)
inline constexpr double kAaDilation = 0.3;
// per-sample weight ceiling and transmittance early-out
inline constexpr double kWeightMax = 0.99;
inline constexpr double kTransmittanceStop = 1e-4;
// Gaussian falloff cutoff: pixel/splat pairs below this weight are dropped
// in *both* the tiled and the naive path, so tile binning is lossless.
inline constexpr double kMinFalloff = 1e-12;
// alpha below this leaves depth/normal at zero
inline constexpr double kAlphaGuard = 1e-4;
inline constexpr int kTileSize = 16;

struct Splat2D {
    Vec2 mean2;          // pixel-center coordinates
    Sym2 cov2;           // dilated screen-space covariance (px^2)
    Sym2 inv_cov2;
    double depth = 0;    // camera-space z
    Vec3 color;
    Vec3 normal_cam;     // unit, camera frame, facing the camera
    double eff_opacity = 0;
    uint32_t parent_index = 0;
};

struct RenderBuffers {
    ImageF color;  // H x W x 3
    ImageF depth;  // H x W, 0 where alpha <= kAlphaGuard
    ImageF normal; // H x W x 3, camera frame
    ImageF alpha;  // H x W

    static RenderBuffers zeros(int width, int height) {
        RenderBuffers b;
        b.color = ImageF(width, height, 3);
        b.depth = ImageF(width, height, 1);
        b.normal = ImageF(width, height, 3);
        b.alpha = ImageF(width, height, 1);
        return b;
    }
};

struct RenderOptions {
    int threads = 1;
    double time_cull_threshold = 1e-4;
    int active_sh_degree = kMaxShDegree;
    bool naive = false; // brute-force all-pairs compositing (oracle path)
};

// Per-splat forward state kept for the backward pass.
struct SplatCache {
    ConditionedGaussian3D cg;
    ConditionCache cond;
    Mat3 cov3;          // floored conditioned covariance
    Eig3 eig;           // of cov3
    double normal_sign = 1.0;
    bool normal_tie = false;
    Vec3 p_cam;         // camera-space mean
    Vec3 view_dir;      // unit, world frame (camera center -> mu3)
    double view_dist = 0;
    double alpha = 0;   // sigmoid(opacity_logit)
};

// EWA projection of one conditioned Gaussian. Empty when the camera-space
// depth is outside (near, far) or the 3-sigma footprint misses the image.
std::optional<Splat2D> project(const ConditionedGaussian3D& cg, const Camera& cam,
                               const Vec3& color, const Vec3& normal_cam,
                               double eff_opacity, SplatCache* cache = nullptr);

// Unit normal of a conditioned Gaussian in the camera frame: eigenvector of
// the smallest cov3 eigenvalue, flipped toward the camera. A (near-)isotropic
// covariance deterministically yields the negated view direction.
Vec3 gaussian_normal(const ConditionedGaussian3D& cg, const Camera& cam);

struct FrameForward {
    RenderBuffers buffers;
    std::vector<Splat2D> splats;      // visible, depth-sorted
    std::vector<SplatCache> caches;   // parallel to splats
    std::vector<std::vector<uint32_t>> tile_lists;
    int tiles_x = 0, tiles_y = 0;
    Image<double> final_t;     // per-pixel final transmittance
    Image<int32_t> n_contrib;  // per-pixel count of candidate entries consumed
    Image<double> normal_norm; // per-pixel |sum w T n| before normalization
    bool naive = false;
};

// Depth-sorts and composites already-projected splats.
RenderBuffers rasterize(const std::vector<Splat2D>& splats, const Camera& cam,
                        const RenderOptions& opts = {});

// Full pipeline: condition -> cull -> color -> project -> rasterize.
RenderBuffers render(const GaussianCloud& cloud, const Camera& cam,
                     const RenderOptions& opts = {});

// Same, retaining everything the backward pass needs.
FrameForward render_forward(const GaussianCloud& cloud, const Camera& cam,
                            const RenderOptions& opts = {});

// Per-splat gradients out of the rasterizer.
struct SplatGrad {
    Vec2 d_mean2;
    double d_conic_xx = 0, d_conic_xy = 0, d_conic_yy = 0; // vs inv_cov2
    double d_alpha_eff = 0;
    Vec3 d_color;
    double d_depth = 0;  // vs camera-space z payload
    Vec3 d_normal;       // vs per-splat camera-frame normal
};

// Backpropagates buffer gradients through the compositing. d_depth/d_normal
// are gradients w.r.t. the *exposed* (normalized) buffers; conversion to the
// raw accumulators happens inside. Deterministic for any thread count.
std::vector<SplatGrad> rasterize_backward(const FrameForward& fwd, const ImageF& d_color,
                                          const ImageF& d_alpha, const ImageF& d_depth,
                                          const ImageF& d_normal, int threads = 1);

}  // namespace sp4d
