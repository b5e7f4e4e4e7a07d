#pragma once

#include "sp4d/core.hpp"

namespace sp4d {

// Pinhole camera. Extrinsics map world to camera space (x_cam = R x + t)
// with x right, y down, z forward; pixel (i, j) is sampled at its center
// (i + 0.5, j + 0.5).
struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 rotation = Mat3::identity(); // world -> camera
    Vec3 translation{0, 0, 0};
    double near = 0.01, far = 100.0;
    double time = 0.0; // normalized timestamp in [0, 1]

    Vec3 center() const {
        // camera origin in world coordinates: -R^T t
        Mat3 rt = rotation.transposed();
        return rt * (-translation);
    }
    Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }

    // Throws std::invalid_argument when intrinsics/extrinsics are malformed.
    void validate() const;
};

// Camera looking from `eye` toward `target`, `up` approximately up in world.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
               int width, int height);

}  // namespace sp4d
