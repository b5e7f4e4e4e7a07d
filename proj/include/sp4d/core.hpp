#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

// Fixed-size linear algebra for dimensions 2/3/4. Row-major matrices,
// value semantics throughout. Nothing here allocates.

namespace sp4d {

struct Vec2 {
    double x = 0, y = 0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 0};
    }
};

struct Vec4 {
    double x = 0, y = 0, z = 0, w = 0;

    Vec4() = default;
    Vec4(double x_, double y_, double z_, double w_) : x(x_), y(y_), z(z_), w(w_) {}

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec4 operator+(const Vec4& o) const { return {x + o.x, y + o.y, z + o.z, w + o.w}; }
    Vec4 operator-(const Vec4& o) const { return {x - o.x, y - o.y, z - o.z, w - o.w}; }
    Vec4 operator*(double s) const { return {x * s, y * s, z * s, w * s}; }
    double dot(const Vec4& o) const { return x * o.x + y * o.y + z * o.z + w * o.w; }
    double norm() const { return std::sqrt(dot(*this)); }

    Vec3 xyz() const { return {x, y, z}; }
};

// Row-major square matrices.
template <int N>
struct Mat {
    std::array<double, N * N> m{};

    double& operator()(int r, int c) { return m[r * N + c]; }
    double operator()(int r, int c) const { return m[r * N + c]; }

    static Mat identity() {
        Mat out;
        for (int i = 0; i < N; ++i) out(i, i) = 1.0;
        return out;
    }

    Mat operator+(const Mat& o) const {
        Mat out;
        for (int i = 0; i < N * N; ++i) out.m[i] = m[i] + o.m[i];
        return out;
    }
    Mat operator-(const Mat& o) const {
        Mat out;
        for (int i = 0; i < N * N; ++i) out.m[i] = m[i] - o.m[i];
        return out;
    }
    Mat operator*(double s) const {
        Mat out;
        for (int i = 0; i < N * N; ++i) out.m[i] = m[i] * s;
        return out;
    }
    Mat operator*(const Mat& o) const {
        Mat out;
        for (int r = 0; r < N; ++r)
            for (int c = 0; c < N; ++c) {
                double acc = 0;
                for (int k = 0; k < N; ++k) acc += (*this)(r, k) * o(k, c);
                out(r, c) = acc;
            }
        return out;
    }
    Mat transposed() const {
        Mat out;
        for (int r = 0; r < N; ++r)
            for (int c = 0; c < N; ++c) out(c, r) = (*this)(r, c);
        return out;
    }
    double max_abs() const {
        double v = 0;
        for (double e : m) v = std::max(v, std::abs(e));
        return v;
    }
};

using Mat2 = Mat<2>;
using Mat3 = Mat<3>;
using Mat4 = Mat<4>;

inline Vec3 operator*(const Mat3& a, const Vec3& v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
            a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
            a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

inline Vec4 operator*(const Mat4& a, const Vec4& v) {
    Vec4 out;
    for (int r = 0; r < 4; ++r) {
        double acc = 0;
        for (int c = 0; c < 4; ++c) acc += a(r, c) * v[c];
        out[r] = acc;
    }
    return out;
}

// Packed symmetric matrices (upper triangle, row-major order).
struct Sym2 {
    double xx = 0, xy = 0, yy = 0;

    Mat2 to_mat() const {
        Mat2 m;
        m(0, 0) = xx; m(0, 1) = xy;
        m(1, 0) = xy; m(1, 1) = yy;
        return m;
    }
    static Sym2 from_mat(const Mat2& m) { return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)}; }

    double det() const { return xx * yy - xy * xy; }
    Sym2 inverse() const {
        double d = det();
        return {yy / d, -xy / d, xx / d};
    }
};

struct Sym3 {
    // order: xx, xy, xz, yy, yz, zz
    std::array<double, 6> a{};

    double& operator[](int i) { return a[i]; }
    double operator[](int i) const { return a[i]; }

    Mat3 to_mat() const {
        Mat3 m;
        m(0, 0) = a[0]; m(0, 1) = a[1]; m(0, 2) = a[2];
        m(1, 0) = a[1]; m(1, 1) = a[3]; m(1, 2) = a[4];
        m(2, 0) = a[2]; m(2, 1) = a[4]; m(2, 2) = a[5];
        return m;
    }
    static Sym3 from_mat(const Mat3& m) {
        Sym3 s;
        s.a = {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
               m(1, 1), 0.5 * (m(1, 2) + m(2, 1)), m(2, 2)};
        return s;
    }
};

struct Sym4 {
    // order: 00,01,02,03, 11,12,13, 22,23, 33
    std::array<double, 10> a{};

    double& operator[](int i) { return a[i]; }
    double operator[](int i) const { return a[i]; }

    Mat4 to_mat() const {
        Mat4 m;
        int k = 0;
        for (int r = 0; r < 4; ++r)
            for (int c = r; c < 4; ++c) {
                m(r, c) = a[k];
                m(c, r) = a[k];
                ++k;
            }
        return m;
    }
    static Sym4 from_mat(const Mat4& m) {
        Sym4 s;
        int k = 0;
        for (int r = 0; r < 4; ++r)
            for (int c = r; c < 4; ++c) s.a[k++] = 0.5 * (m(r, c) + m(c, r));
        return s;
    }
};

struct Quat {
    // (w, x, y, z), scalar first
    double w = 1, x = 0, y = 0, z = 0;

    Quat() = default;
    Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    double& operator[](int i) { return (&w)[i]; }
    double operator[](int i) const { return (&w)[i]; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quat normalized() const {
        double n = norm();
        if (!(n > 0) || !std::isfinite(n))
            throw std::invalid_argument("quaternion has zero or non-finite norm");
        return {w / n, x / n, y / n, z / n};
    }
    bool finite() const {
        return std::isfinite(w) && std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double inv_sigmoid(double y) { return std::log(y / (1.0 - y)); }
inline double sqr(double x) { return x * x; }

// Diagonal floor for constructed covariances; keeps near-degenerate
// splats invertible. Added for Sigma4, clamped for conditioned cov3.
inline constexpr double kCovEps = 1e-9;

}  // namespace sp4d
