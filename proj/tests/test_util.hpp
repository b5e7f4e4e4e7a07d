#pragma once

#include <random>

#include "sp4d/camera.hpp"
#include "sp4d/gaussian.hpp"
#include "sp4d/renderer.hpp"

// Shared fixture builders for the test suites.

namespace sp4d::testing {

inline Quat random_unit_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return Quat{n(rng), n(rng), n(rng), n(rng)}.normalized();
}

inline Rotor4 random_rotor(std::mt19937_64& rng) {
    return {random_unit_quat(rng), random_unit_quat(rng)};
}

// Gaussians spread around the origin with healthy scales and temporal
// support near t ~ 0.5, suitable for rendering and gradient checks.
inline GaussianCloud random_cloud(int n, uint64_t seed,
                                  const AppearanceConfig& app = AppearanceConfig{}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianCloud cloud;
    cloud.appearance = app;
    for (int i = 0; i < n; ++i) {
        Gaussian4D g;
        g.mu = {0.8 * (u(rng) - 0.5), 0.8 * (u(rng) - 0.5), 0.8 * (u(rng) - 0.5),
                0.3 + 0.4 * u(rng)};
        g.rotor = random_rotor(rng);
        g.scales.log_s = {std::log(0.1 + 0.2 * u(rng)), std::log(0.1 + 0.2 * u(rng)),
                          std::log(0.05 + 0.1 * u(rng)), std::log(0.4 + 0.4 * u(rng))};
        g.opacity_logit = 2.0 * u(rng) - 1.0;
        g.sh = AppearanceCoeffs::zeros(app);
        for (size_t k = 0; k < g.sh.k.size(); ++k)
            g.sh.k[k] = (k < 3 ? 1.0 : 0.4) * (u(rng) - 0.5);
        for (double& p : g.sh.phases) p = u(rng) - 0.5;
        cloud.gaussians.push_back(std::move(g));
    }
    return cloud;
}

inline Camera test_camera(int size = 16, double time = 0.45) {
    Camera cam = look_at({0.12, -0.2, -2.3}, {0, 0, 0}, {0, 1, 0}, 1.2 * size, 1.2 * size,
                         size, size);
    cam.near = 0.05;
    cam.far = 50.0;
    cam.time = time;
    return cam;
}

inline double max_abs_diff(const ImageF& a, const ImageF& b) {
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double max_abs_diff(const RenderBuffers& a, const RenderBuffers& b) {
    return std::max({max_abs_diff(a.color, b.color), max_abs_diff(a.depth, b.depth),
                     max_abs_diff(a.normal, b.normal), max_abs_diff(a.alpha, b.alpha)});
}

inline bool bitwise_equal(const ImageF& a, const ImageF& b) {
    return a.data == b.data;
}

inline bool bitwise_equal(const RenderBuffers& a, const RenderBuffers& b) {
    return bitwise_equal(a.color, b.color) && bitwise_equal(a.depth, b.depth) &&
           bitwise_equal(a.normal, b.normal) && bitwise_equal(a.alpha, b.alpha);
}

}  // namespace sp4d::testing
