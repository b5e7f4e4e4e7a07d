#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "sp4d/eig3.hpp"
#include "sp4d/rotor.hpp"
#include "test_util.hpp"

using namespace sp4d;

namespace {

// Independent determinant oracle: cofactor expansion along the first row.
double det3(const Mat4& m, int skip_r, int skip_c) {
    double v[3][3];
    int rr = 0;
    for (int r = 0; r < 4; ++r) {
        if (r == skip_r) continue;
        int cc = 0;
        for (int c = 0; c < 4; ++c) {
            if (c == skip_c) continue;
            v[rr][cc++] = m(r, c);
        }
        ++rr;
    }
    return v[0][0] * (v[1][1] * v[2][2] - v[1][2] * v[2][1]) -
           v[0][1] * (v[1][0] * v[2][2] - v[1][2] * v[2][0]) +
           v[0][2] * (v[1][0] * v[2][1] - v[1][1] * v[2][0]);
}

double det4_cofactor(const Mat4& m) {
    double acc = 0;
    for (int c = 0; c < 4; ++c)
        acc += ((c % 2) ? -1.0 : 1.0) * m(0, c) * det3(m, 0, c);
    return acc;
}

double orthogonality_residual(const Mat4& r) {
    Mat4 rtr = r.transposed() * r;
    return (rtr - Mat4::identity()).max_abs();
}

}  // namespace

TEST_CASE("identity rotor maps to the identity matrix") {
    Mat4 r = rotor_to_matrix(Rotor4::identity());
    CHECK((r - Mat4::identity()).max_abs() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("conjugate pair gives an orthogonal rotation fixing one plane") {
    const double phi = 0.7;
    Rotor4 r{{std::cos(phi), std::sin(phi), 0, 0}, {std::cos(phi), -std::sin(phi), 0, 0}};
    Mat4 m = rotor_to_matrix(r);
    CHECK(orthogonality_residual(m) < 1e-7);
    // (q, conj q) fixes the t axis
    CHECK(m(3, 3) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(m(0, 3)) < 1e-12);
    CHECK(std::abs(m(3, 0)) < 1e-12);
}

TEST_CASE("random rotors are orthogonal with determinant one") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        Mat4 m = rotor_to_matrix(testing::random_rotor(rng));
        CHECK(orthogonality_residual(m) < 1e-7);
        CHECK(det4_cofactor(m) == doctest::Approx(1.0).epsilon(1e-7));
    }
}

TEST_CASE("non-finite quaternions are rejected") {
    Rotor4 bad = Rotor4::identity();
    bad.q_left.x = std::nan("");
    CHECK_THROWS_AS(rotor_to_matrix(bad), std::invalid_argument);
    Rotor4 zero = Rotor4::identity();
    zero.q_right = {0, 0, 0, 0};
    CHECK_THROWS_AS(rotor_to_matrix(zero), std::invalid_argument);
}

TEST_CASE("quaternions are normalized before use") {
    std::mt19937_64 rng(5);
    Rotor4 r = testing::random_rotor(rng);
    Rotor4 scaled = r;
    for (int i = 0; i < 4; ++i) {
        scaled.q_left[i] *= 3.7;
        scaled.q_right[i] *= 0.2;
    }
    Mat4 a = rotor_to_matrix(r);
    Mat4 b = rotor_to_matrix(scaled);
    CHECK((a - b).max_abs() < 1e-12);
}

TEST_CASE("build_cov4: identity rotor and unit scales give the identity") {
    Sym4 cov = build_cov4(Rotor4::identity(), Scales4{});
    Mat4 m = cov.to_mat();
    CHECK((m - Mat4::identity()).max_abs() < 1e-8);
}

TEST_CASE("build_cov4: diagonal case squares the scales") {
    Scales4 s;
    s.log_s = {std::log(2.0), 0.0, 0.0, std::log(3.0)};
    Mat4 m = build_cov4(Rotor4::identity(), s).to_mat();
    CHECK(m(0, 0) == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(m(1, 1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m(2, 2) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m(3, 3) == doctest::Approx(9.0).epsilon(1e-9));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (r != c) CHECK(std::abs(m(r, c)) < 1e-12);
}

TEST_CASE("build_cov4: eigenvalues match squared scales (Eigen oracle)") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.2, 0.6);
    for (int trial = 0; trial < 100; ++trial) {
        Rotor4 r = testing::random_rotor(rng);
        Scales4 s;
        for (int i = 0; i < 4; ++i) s.log_s[i] = u(rng);
        Mat4 cov = build_cov4(r, s).to_mat();

        Eigen::Matrix4d em;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) em(i, j) = cov(i, j);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(em);
        std::array<double, 4> expect;
        Vec4 sv = s.s();
        for (int i = 0; i < 4; ++i) expect[i] = sv[i] * sv[i];
        std::sort(expect.begin(), expect.end());
        for (int i = 0; i < 4; ++i) {
            CHECK(es.eigenvalues()[i] ==
                  doctest::Approx(expect[i]).epsilon(1e-8).scale(std::max(expect[i], 1e-4)));
            CHECK(es.eigenvalues()[i] > 0.0); // SPD
        }
    }
}

TEST_CASE("eig_sym3: axis-aligned diagonal") {
    Sym3 m;
    m.a = {3, 0, 0, 1, 0, 2};
    Eig3 e = eig_sym3(m);
    CHECK(e.values.x == doctest::Approx(1.0));
    CHECK(e.values.y == doctest::Approx(2.0));
    CHECK(e.values.z == doctest::Approx(3.0));
    // eigenvectors are (signed) coordinate axes
    CHECK(std::abs(e.vectors(1, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(e.vectors(2, 1)) == doctest::Approx(1.0));
    CHECK(std::abs(e.vectors(0, 2)) == doctest::Approx(1.0));
}

TEST_CASE("eig_sym3: identity has unit eigenvalues") {
    Sym3 m;
    m.a = {1, 0, 0, 1, 0, 1};
    Eig3 e = eig_sym3(m);
    for (int i = 0; i < 3; ++i) CHECK(e.values[i] == doctest::Approx(1.0));
}

TEST_CASE("eig_sym3: reconstruction residual below 1e-8 on random SPD") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.2, 0.6);
    for (int trial = 0; trial < 200; ++trial) {
        Rotor4 r = testing::random_rotor(rng);
        Scales4 s;
        for (int i = 0; i < 4; ++i) s.log_s[i] = u(rng);
        Mat4 cov4 = build_cov4(r, s).to_mat();
        Mat3 m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = cov4(i, j); // spatial block
        Eig3 e = eig_sym3(Sym3::from_mat(m));

        CHECK(e.values.x <= e.values.y);
        CHECK(e.values.y <= e.values.z);
        Mat3 rec;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0;
                for (int k = 0; k < 3; ++k)
                    acc += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
                rec(i, j) = acc;
            }
        CHECK((rec - m).max_abs() < 1e-8 * std::max(m.max_abs(), 1e-12));
        // orthonormal columns
        Mat3 vtv = e.vectors.transposed() * e.vectors;
        CHECK((vtv - Mat3::identity()).max_abs() < 1e-10);
    }
}

TEST_CASE("eig_sym3: deterministic sign convention") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Sym3 m;
        for (int i = 0; i < 6; ++i) m[i] = u(rng);
        m[0] += 2;
        m[3] += 2;
        m[5] += 2;
        Eig3 a = eig_sym3(m);
        Eig3 b = eig_sym3(m);
        CHECK(a.vectors.m == b.vectors.m);
        for (int c = 0; c < 3; ++c) {
            for (int r = 0; r < 3; ++r) {
                if (std::abs(a.vectors(r, c)) > 1e-12) {
                    CHECK(a.vectors(r, c) > 0);
                    break;
                }
            }
        }
    }
}
