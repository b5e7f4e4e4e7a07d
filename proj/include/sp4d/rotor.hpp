#pragma once

#include "sp4d/core.hpp"

// SO(4) rotations as a pair of unit quaternions (isoclinic decomposition):
// R4 = L(q_left) * R(q_right), with L/R the left/right quaternion
// multiplication matrices. Covariances are Sigma4 = R4 diag(s^2) R4^T.

namespace sp4d {

struct Rotor4 {
    Quat q_left;
    Quat q_right;

    static Rotor4 identity() { return {Quat{1, 0, 0, 0}, Quat{1, 0, 0, 0}}; }
};

// Matrix of p -> q*p under quaternion multiplication.
Mat4 quat_left_matrix(const Quat& q);
// Matrix of p -> p*q.
Mat4 quat_right_matrix(const Quat& q);

// R4 = L(q_left)*R(q_right); quaternions are normalized internally.
// Throws std::invalid_argument on non-finite or zero-norm input.
Mat4 rotor_to_matrix(const Rotor4& r);

struct Scales4 {
    Vec4 log_s{0, 0, 0, 0};

    Vec4 s() const {
        return {std::exp(log_s.x), std::exp(log_s.y), std::exp(log_s.z), std::exp(log_s.w)};
    }
};

// Sigma4 = R4 diag(s^2) R4^T with kCovEps added to the diagonal.
Sym4 build_cov4(const Rotor4& r, const Scales4& s);

// Backward through build_cov4. d_sigma is dL/dSigma4 as a full (not
// necessarily symmetric) matrix; outputs add into the provided buffers.
// d_qleft/d_qright are gradients w.r.t. the *stored* (pre-normalization)
// quaternion components.
void build_cov4_backward(const Rotor4& r, const Scales4& s, const Mat4& d_sigma,
                         Quat& d_qleft, Quat& d_qright, Vec4& d_log_s);

}  // namespace sp4d
