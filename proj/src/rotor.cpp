#include "sp4d/rotor.hpp"

namespace sp4d {

// Both act on 4-vectors ordered (x, y, z, w) with the quaternion scalar
// mapped to the last component, matching the (x, y, z, t) state layout.
// The pair (q, conj(q)) then fixes the t axis and rotates space by the
// ordinary 3D rotation of q.
Mat4 quat_left_matrix(const Quat& q) {
    Mat4 m;
    m.m = { q.w, -q.z,  q.y, q.x,
            q.z,  q.w, -q.x, q.y,
           -q.y,  q.x,  q.w, q.z,
           -q.x, -q.y, -q.z, q.w};
    return m;
}

Mat4 quat_right_matrix(const Quat& q) {
    Mat4 m;
    m.m = { q.w,  q.z, -q.y, q.x,
           -q.z,  q.w,  q.x, q.y,
            q.y, -q.x,  q.w, q.z,
           -q.x, -q.y, -q.z, q.w};
    return m;
}

Mat4 rotor_to_matrix(const Rotor4& r) {
    if (!r.q_left.finite() || !r.q_right.finite())
        throw std::invalid_argument("rotor_to_matrix: non-finite quaternion");
    return quat_left_matrix(r.q_left.normalized()) * quat_right_matrix(r.q_right.normalized());
}

Sym4 build_cov4(const Rotor4& r, const Scales4& sc) {
    Mat4 rot = rotor_to_matrix(r);
    Vec4 s = sc.s();
    Mat4 cov;
    // R diag(s^2) R^T
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += rot(i, k) * rot(j, k) * s[k] * s[k];
            cov(i, j) = acc;
            cov(j, i) = acc;
        }
    for (int i = 0; i < 4; ++i) cov(i, i) += kCovEps;
    return Sym4::from_mat(cov);
}

void build_cov4_backward(const Rotor4& r, const Scales4& sc, const Mat4& d_sigma,
                         Quat& d_qleft, Quat& d_qright, Vec4& d_log_s) {
    Quat ql = r.q_left.normalized();
    Quat qr = r.q_right.normalized();
    Mat4 lm = quat_left_matrix(ql);
    Mat4 rm = quat_right_matrix(qr);
    Mat4 rot = lm * rm;
    Vec4 s = sc.s();

    // Sigma = R D R^T, D = diag(s^2):
    //   dL/dD_kk = (R^T G R)_kk,  dL/dR = (G + G^T) R D
    Mat4 gsym = d_sigma + d_sigma.transposed();
    Mat4 rtg = rot.transposed() * d_sigma * rot;
    for (int k = 0; k < 4; ++k) d_log_s[k] += 2.0 * s[k] * s[k] * rtg(k, k);

    Mat4 d_rot;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k) acc += gsym(i, k) * rot(k, j) * s[j] * s[j];
            d_rot(i, j) = acc;
        }

    // R4 is bilinear in (q_left, q_right): dq_i = <dR4, L(e_i) R(q_right)> etc.
    Quat d_qln, d_qrn;
    for (int i = 0; i < 4; ++i) {
        Quat e{0, 0, 0, 0};
        e[i] = 1.0;
        Mat4 bl = quat_left_matrix(e) * rm;
        Mat4 br = lm * quat_right_matrix(e);
        double al = 0, ar = 0;
        for (int k = 0; k < 16; ++k) {
            al += d_rot.m[k] * bl.m[k];
            ar += d_rot.m[k] * br.m[k];
        }
        d_qln[i] = al;
        d_qrn[i] = ar;
    }

    // Chain through normalization: d_raw = (I - n n^T)/|q| d_n.
    auto project = [](const Quat& raw, const Quat& n, const Quat& dn, Quat& out) {
        double nr = raw.norm();
        double dot = n.w * dn.w + n.x * dn.x + n.y * dn.y + n.z * dn.z;
        for (int i = 0; i < 4; ++i) out[i] += (dn[i] - n[i] * dot) / nr;
    };
    project(r.q_left, ql, d_qln, d_qleft);
    project(r.q_right, qr, d_qrn, d_qright);
}

}  // namespace sp4d
