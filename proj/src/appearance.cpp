#include "sp4d/appearance.hpp"

#include <stdexcept>

namespace sp4d {

namespace {

constexpr double kPi = 3.14159265358979323846;

constexpr double SH_C0 = 0.28209479177387814;
constexpr double SH_C1 = 0.4886025119029199;
constexpr double SH_C2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                             -1.0925484305920792, 0.5462742152960396};
constexpr double SH_C3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                             0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                             -0.5900435899266435};

void check_dir(const Vec3& d) {
    if (std::abs(d.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("eval_sh: direction must be unit length");
}

}  // namespace

void eval_sh_basis(int degree, const Vec3& d, double* out) {
    const double x = d.x, y = d.y, z = d.z;
    out[0] = SH_C0;
    if (degree < 1) return;
    out[1] = -SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = -SH_C1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = SH_C2[0] * x * y;
    out[5] = SH_C2[1] * y * z;
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    out[7] = SH_C2[3] * x * z;
    out[8] = SH_C2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = SH_C3[0] * y * (3.0 * xx - yy);
    out[10] = SH_C3[1] * x * y * z;
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = SH_C3[5] * z * (xx - yy);
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy);
}

void eval_sh_basis_grad(int degree, const Vec3& d, double* out, Vec3* grad) {
    eval_sh_basis(degree, d, out);
    const double x = d.x, y = d.y, z = d.z;
    grad[0] = {0, 0, 0};
    if (degree < 1) return;
    grad[1] = {0, -SH_C1, 0};
    grad[2] = {0, 0, SH_C1};
    grad[3] = {-SH_C1, 0, 0};
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    grad[4] = Vec3{y, x, 0} * SH_C2[0];
    grad[5] = Vec3{0, z, y} * SH_C2[1];
    grad[6] = Vec3{-2.0 * x, -2.0 * y, 4.0 * z} * SH_C2[2];
    grad[7] = Vec3{z, 0, x} * SH_C2[3];
    grad[8] = Vec3{2.0 * x, -2.0 * y, 0} * SH_C2[4];
    if (degree < 3) return;
    grad[9] = Vec3{6.0 * x * y, 3.0 * xx - 3.0 * yy, 0} * SH_C3[0];
    grad[10] = Vec3{y * z, x * z, x * y} * SH_C3[1];
    grad[11] = Vec3{-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z} * SH_C3[2];
    grad[12] = Vec3{-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy} * SH_C3[3];
    grad[13] = Vec3{4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z} * SH_C3[4];
    grad[14] = Vec3{2.0 * x * z, -2.0 * y * z, xx - yy} * SH_C3[5];
    grad[15] = Vec3{3.0 * xx - 3.0 * yy, -6.0 * x * y, 0} * SH_C3[6];
}

double eval_sh(int l, int m, const Vec3& dir) {
    if (l < 0 || l > kMaxShDegree)
        throw std::invalid_argument("eval_sh: degree out of range (max 3)");
    if (m < -l || m > l) throw std::invalid_argument("eval_sh: order |m| must be <= l");
    check_dir(dir);
    double vals[16];
    eval_sh_basis(l, dir, vals);
    return vals[l * (l + 1) + m];
}

double eval_basis(const AppearanceConfig& cfg, int n, int l, int m, double t,
                  const Vec3& dir, const double* phases) {
    if (n < 0 || n > cfg.temporal_bands)
        throw std::invalid_argument("eval_basis: temporal band out of range");
    double y = eval_sh(l, m, dir);
    if (n == 0) return y;
    double omega = 2.0 * kPi * n / cfg.period;
    return y * std::sin(omega * t + phases[n - 1]);
}

Vec3 eval_color(const AppearanceConfig& cfg, const AppearanceCoeffs& coeffs, double t,
                const Vec3& dir, int active_degree) {
    const int deg = std::min(active_degree, cfg.sh_degree);
    const int nb = (deg + 1) * (deg + 1);
    const int stride = cfg.basis_per_band();
    double sh[16];
    eval_sh_basis(deg, dir, sh);

    Vec3 acc{0.5, 0.5, 0.5};
    for (int n = 0; n <= cfg.temporal_bands; ++n) {
        double f = 1.0;
        if (n > 0) f = std::sin(2.0 * kPi * n * t / cfg.period + coeffs.phases[n - 1]);
        const double* band = coeffs.k.data() + static_cast<size_t>(n) * stride * 3;
        for (int i = 0; i < nb; ++i) {
            double zy = f * sh[i];
            acc.x += band[i * 3 + 0] * zy;
            acc.y += band[i * 3 + 1] * zy;
            acc.z += band[i * 3 + 2] * zy;
        }
    }
    return {std::max(0.0, acc.x), std::max(0.0, acc.y), std::max(0.0, acc.z)};
}

void eval_color_backward(const AppearanceConfig& cfg, const AppearanceCoeffs& coeffs,
                         double t, const Vec3& dir, int active_degree, const Vec3& d_rgb,
                         double* d_k, double* d_phases, Vec3& d_dir) {
    const int deg = std::min(active_degree, cfg.sh_degree);
    const int nb = (deg + 1) * (deg + 1);
    const int stride = cfg.basis_per_band();
    double sh[16];
    Vec3 shg[16];
    eval_sh_basis_grad(deg, dir, sh, shg);

    // Clamp gates from the un-clamped forward value.
    Vec3 pre{0.5, 0.5, 0.5};
    for (int n = 0; n <= cfg.temporal_bands; ++n) {
        double f = 1.0;
        if (n > 0) f = std::sin(2.0 * kPi * n * t / cfg.period + coeffs.phases[n - 1]);
        const double* band = coeffs.k.data() + static_cast<size_t>(n) * stride * 3;
        for (int i = 0; i < nb; ++i) {
            pre.x += band[i * 3 + 0] * f * sh[i];
            pre.y += band[i * 3 + 1] * f * sh[i];
            pre.z += band[i * 3 + 2] * f * sh[i];
        }
    }
    Vec3 g{pre.x > 0 ? d_rgb.x : 0.0, pre.y > 0 ? d_rgb.y : 0.0, pre.z > 0 ? d_rgb.z : 0.0};

    for (int n = 0; n <= cfg.temporal_bands; ++n) {
        double f = 1.0, dfdphi = 0.0;
        if (n > 0) {
            double arg = 2.0 * kPi * n * t / cfg.period + coeffs.phases[n - 1];
            f = std::sin(arg);
            dfdphi = std::cos(arg);
        }
        const double* band = coeffs.k.data() + static_cast<size_t>(n) * stride * 3;
        double* dband = d_k + static_cast<size_t>(n) * stride * 3;
        double phase_acc = 0;
        for (int i = 0; i < nb; ++i) {
            double kdotg = band[i * 3 + 0] * g.x + band[i * 3 + 1] * g.y + band[i * 3 + 2] * g.z;
            dband[i * 3 + 0] += f * sh[i] * g.x;
            dband[i * 3 + 1] += f * sh[i] * g.y;
            dband[i * 3 + 2] += f * sh[i] * g.z;
            d_dir += shg[i] * (f * kdotg);
            phase_acc += sh[i] * kdotg;
        }
        if (n > 0) d_phases[n - 1] += dfdphi * phase_acc;
    }
}

}  // namespace sp4d
