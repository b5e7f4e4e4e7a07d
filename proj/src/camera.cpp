#include "sp4d/camera.hpp"

#include <stdexcept>

namespace sp4d {

void Camera::validate() const {
    if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
    if (!(near > 0) || !(far > near)) throw std::invalid_argument("camera: need 0 < near < far");
    Mat3 should_be_identity = rotation * rotation.transposed();
    if ((should_be_identity - Mat3::identity()).max_abs() > 1e-6)
        throw std::invalid_argument("camera: rotation is not orthonormal");
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
               int width, int height) {
    Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up).normalized();
    Vec3 down = fwd.cross(right); // y axis points down in camera space

    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width * 0.5;
    cam.cy = height * 0.5;
    cam.width = width;
    cam.height = height;
    for (int c = 0; c < 3; ++c) {
        cam.rotation(0, c) = right[c];
        cam.rotation(1, c) = down[c];
        cam.rotation(2, c) = fwd[c];
    }
    cam.translation = -(cam.rotation * eye);
    return cam;
}

}  // namespace sp4d
